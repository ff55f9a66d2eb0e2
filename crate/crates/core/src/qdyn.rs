//! Finite quantum dynamical systems `(𝒪_𝒦, τ, ω)`: Heisenberg and
//! Schrödinger evolution, analytically continued correlation functions,
//! KMS verification and time reversal.

use crate::error::{QthermError, Result};
use crate::linalg::{self, eig_hermitian, trace_product, CMat, HermitianEig, C64};
use crate::qstate::{DensityMatrix, MAX_EXPONENT};

/// Hamiltonian `H` generating `τ^t(A) = e^{itH} A e^{−itH}` together with a
/// reference state `ω`.
#[derive(Debug, Clone)]
pub struct FiniteQDS {
    h: CMat,
    h_eig: HermitianEig,
    omega: DensityMatrix,
}

impl FiniteQDS {
    pub fn new(h: CMat, omega: DensityMatrix) -> Result<Self> {
        let h = linalg::hermitian_part_checked(&h)?;
        if h.nrows() != omega.dim() {
            return Err(QthermError::ShapeMismatch(format!(
                "Hamiltonian is {}-dimensional but the state is {}-dimensional",
                h.nrows(),
                omega.dim()
            )));
        }
        let h_eig = eig_hermitian(&h)?;
        Ok(FiniteQDS { h, h_eig, omega })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn hamiltonian(&self) -> &CMat {
        &self.h
    }

    pub fn hamiltonian_eig(&self) -> &HermitianEig {
        &self.h_eig
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.omega
    }

    pub fn with_state(&self, omega: DensityMatrix) -> Result<Self> {
        if omega.dim() != self.dim() {
            return Err(QthermError::ShapeMismatch("state dimension changed".into()));
        }
        Ok(FiniteQDS {
            h: self.h.clone(),
            h_eig: self.h_eig.clone(),
            omega,
        })
    }

    /// `e^{itH}`.
    pub fn propagator(&self, t: f64) -> CMat {
        linalg::unitary_propagator(&self.h_eig, t)
    }

    /// `τ^t(A) = e^{itH} A e^{−itH}`.
    pub fn evolve_heisenberg(&self, a: &CMat, t: f64) -> CMat {
        let u = self.propagator(t);
        &u * a * u.adjoint()
    }

    /// Density matrix of `ω_t = ω∘τ^t`, i.e. `e^{−itH} ω e^{itH}`.
    pub fn evolved_state(&self, t: f64) -> Result<DensityMatrix> {
        let u = self.propagator(-t);
        let m = &u * self.omega.matrix() * u.adjoint();
        DensityMatrix::from_unnormalized(m)
    }

    /// `ω(A τ^z(B)) = tr(ω A e^{izH} B e^{−izH})` for complex `z`.
    pub fn correlation(&self, a: &CMat, b: &CMat, z: C64) -> Result<C64> {
        let growth = z.im.abs() * self.h_eig.spread();
        if growth > MAX_EXPONENT {
            return Err(QthermError::ExponentOverflow(format!(
                "|Im z| * spread(H) = {growth:.1} exceeds {MAX_EXPONENT}"
            )));
        }
        let e = &self.h_eig.values;
        let bt = self.h_eig.to_eigenbasis(b);
        let n = self.dim();
        let i = C64::new(0.0, 1.0);
        let bz = CMat::from_fn(n, n, |j, k| bt[(j, k)] * (i * z * (e[j] - e[k])).exp());
        let bz = self.h_eig.from_eigenbasis(&bz);
        Ok(trace_product(&(self.omega.matrix() * a), &bz))
    }

    /// Largest KMS defect `|ω(A τ^{t+iβ}(B)) − ω(τ^t(B) A)|` over `t_grid`.
    /// Both sides are evaluated in the eigenbasis of `H`, so each grid point
    /// costs `O(d²)` after a fixed number of basis changes.
    pub fn kms_check(&self, beta: f64, a: &CMat, b: &CMat, t_grid: &[f64]) -> Result<f64> {
        let growth = beta.abs() * self.h_eig.spread();
        if growth > MAX_EXPONENT {
            return Err(QthermError::ExponentOverflow(format!(
                "|beta| * spread(H) = {growth:.1} exceeds {MAX_EXPONENT}"
            )));
        }
        let e = &self.h_eig.values;
        let w = self.omega.matrix();
        let bt = self.h_eig.to_eigenbasis(b);
        let left = self.h_eig.to_eigenbasis(&(w * a));
        let right = self.h_eig.to_eigenbasis(&(a * w));
        let n = self.dim();
        let i = C64::new(0.0, 1.0);
        let mut worst: f64 = 0.0;
        for &t in t_grid {
            let z = C64::new(t, beta);
            let mut lhs = C64::new(0.0, 0.0);
            let mut rhs = C64::new(0.0, 0.0);
            for j in 0..n {
                for k in 0..n {
                    let gap = e[j] - e[k];
                    lhs += left[(k, j)] * bt[(j, k)] * (i * z * gap).exp();
                    rhs += right[(k, j)] * bt[(j, k)] * (i * t * gap).exp();
                }
            }
            worst = worst.max((lhs - rhs).norm());
        }
        Ok(worst)
    }
}

/// Antiunitary time reversal `Θ(A) = U Ā U†` (conjugation in the
/// computational basis, then a unitary).
#[derive(Debug, Clone)]
pub struct TimeReversal {
    u: CMat,
}

impl TimeReversal {
    /// Requires `U` unitary and `U Ū = 1` so that `Θ` is an involution.
    pub fn new(u: CMat) -> Result<Self> {
        let d = u.nrows();
        let id = linalg::identity(d);
        let unit = linalg::frobenius(&(&u * u.adjoint() - &id));
        if unit > 1e-10 {
            return Err(QthermError::InvalidArgument(format!(
                "time-reversal matrix is not unitary (defect {unit:.3e})"
            )));
        }
        let inv = linalg::frobenius(&(&u * u.conjugate() - &id));
        if inv > 1e-10 {
            return Err(QthermError::InvalidArgument(format!(
                "U conj(U) != 1 (defect {inv:.3e}); the time reversal would not be an involution"
            )));
        }
        Ok(TimeReversal { u })
    }

    /// Plain complex conjugation in the computational basis.
    pub fn conjugation(d: usize) -> Self {
        TimeReversal {
            u: linalg::identity(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn unitary(&self) -> &CMat {
        &self.u
    }

    pub fn apply(&self, a: &CMat) -> CMat {
        &self.u * a.conjugate() * self.u.adjoint()
    }
}

/// Outcome of a time-reversal invariance test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriReport {
    pub is_tri: bool,
    /// `max |ω(Θ(A)) − ω(A*)|` over the Hermitian generating set.
    pub state_defect: f64,
    /// `‖Θ(H) − H‖_F`.
    pub hamiltonian_defect: f64,
}

/// Tolerance shared by the TRI tests.
pub const TRI_TOL: f64 = 1e-10;

/// Hermitian basis `{E_kk, E_jk + E_kj, i(E_jk − E_kj)}` of `𝒪_𝒦`.
pub fn hermitian_basis(d: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(d * d);
    for j in 0..d {
        let mut e = CMat::zeros(d, d);
        e[(j, j)] = C64::new(1.0, 0.0);
        out.push(e);
        for k in (j + 1)..d {
            let mut s = CMat::zeros(d, d);
            s[(j, k)] = C64::new(1.0, 0.0);
            s[(k, j)] = C64::new(1.0, 0.0);
            out.push(s);
            let mut a = CMat::zeros(d, d);
            a[(j, k)] = C64::new(0.0, 1.0);
            a[(k, j)] = C64::new(0.0, -1.0);
            out.push(a);
        }
    }
    out
}

/// Checks `Θ∘τ^t = τ^{−t}∘Θ` (error otherwise), then `ω∘Θ = ω(·*)` and
/// `Θ(H) = H`.
pub fn is_tri(sys: &FiniteQDS, theta: &TimeReversal) -> Result<TriReport> {
    if theta.dim() != sys.dim() {
        return Err(QthermError::ShapeMismatch(
            "time reversal and system dimensions differ".into(),
        ));
    }
    let h = sys.hamiltonian();
    let diff = theta.apply(h) - h;
    // Θ reverses the dynamics iff Θ(H) − H is a multiple of the identity
    let shift = linalg::trace(&diff) / sys.dim() as f64;
    let traceless = &diff - linalg::identity(sys.dim()) * shift;
    let scale = linalg::frobenius(h).max(1.0);
    let dyn_defect = linalg::frobenius(&traceless);
    if dyn_defect > TRI_TOL * scale {
        return Err(QthermError::IncompatibleTimeReversal { defect: dyn_defect });
    }
    let omega = sys.state();
    let state_defect = hermitian_basis(sys.dim())
        .iter()
        .map(|a| (omega.expect(&theta.apply(a)) - omega.expect(&a.adjoint())).norm())
        .fold(0.0, f64::max);
    let hamiltonian_defect = linalg::frobenius(&diff);
    Ok(TriReport {
        is_tri: state_defect <= TRI_TOL && hamiltonian_defect <= TRI_TOL * scale,
        state_defect,
        hamiltonian_defect,
    })
}
