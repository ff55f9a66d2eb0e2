//! Density matrices, Gibbs states, von Neumann and relative entropies, and
//! the finite Gibbs variational principle.
//!
//! Relative entropy follows the non-positive orientation
//! `Ent(ν|ρ) = tr(ν(log ρ − log ν)) ≤ 0`, with `−∞` when the support of `ν`
//! is not contained in the support of `ρ`.

use std::fmt;

use crate::error::{QthermError, Result};
use crate::linalg::{self, eig_hermitian, trace, trace_product, CMat, HermitianEig, C64};

/// Eigenvalues at or below this are treated as exact zeros.
pub const CLIP: f64 = 1e-12;

/// Real number extended with ±∞, kept as an explicit tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    NegInfinity,
    PosInfinity,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Panics on an infinite value; for call sites that already established
    /// absolute continuity.
    pub fn unwrap_finite(self) -> f64 {
        self.finite().expect("extended real is infinite")
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::NegInfinity => f64::NEG_INFINITY,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::NegInfinity => write!(f, "-inf"),
            ExtReal::PosInfinity => write!(f, "+inf"),
        }
    }
}

/// Positive semidefinite unit-trace matrix with its spectral decomposition.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: CMat,
    eig: HermitianEig,
}

impl DensityMatrix {
    /// Validates Hermiticity, positivity (eigenvalues ≥ −1e−12, clipped to
    /// zero) and unit trace (within 1e−12).
    pub fn new(mat: CMat) -> Result<Self> {
        let mat = linalg::hermitian_part_checked(&mat)?;
        let tr = trace(&mat);
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(QthermError::InvalidArgument(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        Self::from_hermitian(mat)
    }

    /// Normalizes a positive semidefinite matrix by its trace.
    pub fn from_unnormalized(mat: CMat) -> Result<Self> {
        let mat = linalg::hermitian_part_checked(&mat)?;
        let tr = trace(&mat).re;
        if !(tr > 0.0) {
            return Err(QthermError::InvalidArgument(format!(
                "cannot normalize a matrix with trace {tr}"
            )));
        }
        Self::from_hermitian(mat.unscale(tr))
    }

    fn from_hermitian(mat: CMat) -> Result<Self> {
        let mut eig = eig_hermitian(&mat)?;
        if let Some(&min) = eig.values.first() {
            if min < -CLIP {
                return Err(QthermError::InvalidArgument(format!(
                    "density matrix has negative eigenvalue {min:e}"
                )));
            }
        }
        for v in eig.values.iter_mut() {
            if *v < CLIP {
                *v = v.max(0.0);
            }
        }
        Ok(DensityMatrix { mat, eig })
    }

    /// Pure state `|ψ⟩⟨ψ|` (ψ is normalized here).
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let v = linalg::CVec::from_column_slice(psi);
        Self::from_unnormalized(&v * v.adjoint())
    }

    /// The tracial state `1/d`.
    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix::new(linalg::identity(d).unscale(d as f64)).expect("valid state")
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn eig(&self) -> &HermitianEig {
        &self.eig
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig.values.first().copied().unwrap_or(0.0)
    }

    pub fn is_faithful(&self) -> bool {
        self.min_eigenvalue() > CLIP
    }

    /// Errors with [`QthermError::Faithfulness`] unless all eigenvalues
    /// exceed the clipping threshold.
    pub fn require_faithful(&self) -> Result<()> {
        if self.is_faithful() {
            Ok(())
        } else {
            Err(QthermError::Faithfulness {
                min_eig: self.min_eigenvalue(),
            })
        }
    }

    /// `ν(A) = tr(ν A)`.
    pub fn expect(&self, a: &CMat) -> C64 {
        trace_product(&self.mat, a)
    }

    /// `log ν` restricted to the support (zero on the kernel).
    pub fn log_on_support(&self) -> CMat {
        self.eig.map(|x| if x > CLIP { x.ln() } else { 0.0 })
    }

    /// `log ν` for a faithful state.
    pub fn log(&self) -> Result<CMat> {
        self.require_faithful()?;
        Ok(self.log_on_support())
    }

    /// `ν^p` on the support, for real `p`.
    pub fn power(&self, p: f64) -> CMat {
        self.eig.map(|x| if x > CLIP { x.powf(p) } else { 0.0 })
    }

    /// `ν^z = e^{z log ν}` on the support, for complex `z`.
    pub fn power_complex(&self, z: C64) -> CMat {
        self.eig.map_complex(|x| {
            if x > CLIP {
                (z * x.ln()).exp()
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Projection onto the support.
    pub fn support_projector(&self) -> CMat {
        let first = self.eig.values.iter().position(|&x| x > CLIP);
        match first {
            Some(k) => self.eig.projector(k..self.dim()),
            None => linalg::zeros(self.dim()),
        }
    }

    /// `U ν U†`.
    pub fn conjugate(&self, u: &CMat) -> Result<Self> {
        DensityMatrix::from_unnormalized(u * &self.mat * u.adjoint())
    }
}

/// Hamiltonian and inverse temperature of a Gibbs state.
#[derive(Debug, Clone)]
pub struct GibbsSpec {
    pub hamiltonian: CMat,
    pub beta: f64,
}

impl GibbsSpec {
    pub fn new(hamiltonian: CMat, beta: f64) -> Result<Self> {
        let hamiltonian = linalg::hermitian_part_checked(&hamiltonian)?;
        Ok(GibbsSpec { hamiltonian, beta })
    }
}

/// Largest `β·spread(H)` for which every Boltzmann weight stays a normal
/// floating point number after shifting the exponent.
pub const MAX_EXPONENT: f64 = 700.0;

fn shifted_weights(eig: &HermitianEig, beta: f64) -> Result<(Vec<f64>, f64)> {
    let spread = beta.abs() * eig.spread();
    if spread > MAX_EXPONENT {
        return Err(QthermError::ExponentOverflow(format!(
            "beta * spread(H) = {spread:.1} exceeds {MAX_EXPONENT}"
        )));
    }
    // shift so the exponent is ≤ 0
    let shift = if beta >= 0.0 {
        eig.values.first().copied().unwrap_or(0.0)
    } else {
        eig.values.last().copied().unwrap_or(0.0)
    };
    let w: Vec<f64> = eig
        .values
        .iter()
        .map(|&e| (-beta * (e - shift)).exp())
        .collect();
    Ok((w, shift))
}

/// `log tr e^{−βH}`.
pub fn pressure(spec: &GibbsSpec) -> Result<f64> {
    let eig = eig_hermitian(&spec.hamiltonian)?;
    pressure_from_eig(&eig, spec.beta)
}

pub fn pressure_from_eig(eig: &HermitianEig, beta: f64) -> Result<f64> {
    let (w, shift) = shifted_weights(eig, beta)?;
    Ok(w.iter().sum::<f64>().ln() - beta * shift)
}

/// `ω_β = e^{−βH} / tr e^{−βH}`.
pub fn gibbs(spec: &GibbsSpec) -> Result<DensityMatrix> {
    let eig = eig_hermitian(&spec.hamiltonian)?;
    gibbs_from_eig(&eig, spec.beta)
}

/// Gibbs state reusing a precomputed eigendecomposition of `H`.
pub fn gibbs_from_eig(eig: &HermitianEig, beta: f64) -> Result<DensityMatrix> {
    let (w, _) = shifted_weights(eig, beta)?;
    let z: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / z).collect();
    let mut scaled = eig.vectors.clone();
    for (j, p) in probs.iter().enumerate() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= *p;
        }
    }
    let rho = &scaled * eig.vectors.adjoint();
    let rho = (&rho + rho.adjoint()).scale(0.5);
    // the eigenvectors of H are those of ω_β; reuse them directly
    let vals: Vec<(f64, usize)> = probs.iter().copied().zip(0..).collect();
    let mut order: Vec<(f64, usize)> = vals;
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = probs.len();
    let vectors = CMat::from_fn(n, n, |r, col| eig.vectors[(r, order[col].1)]);
    let values = order.iter().map(|x| x.0).collect();
    Ok(DensityMatrix {
        mat: rho,
        eig: HermitianEig { values, vectors },
    })
}

/// `S(ν) = −tr(ν log ν)` in nats.
pub fn von_neumann_entropy(nu: &DensityMatrix) -> f64 {
    let s: f64 = nu
        .eigenvalues()
        .iter()
        .filter(|&&x| x > CLIP)
        .map(|&x| -x * x.ln())
        .sum();
    s.clamp(0.0, (nu.dim() as f64).ln())
}

/// `Ent(ν|ρ) = tr(ν(log ρ − log ν))`, `−∞` when `supp ν ⊄ supp ρ`.
pub fn relative_entropy(nu: &DensityMatrix, rho: &DensityMatrix) -> ExtReal {
    assert_eq!(nu.dim(), rho.dim(), "relative entropy of states of different dimension");
    let rho_eig = rho.eig();
    let nu_in_rho = rho_eig.to_eigenbasis(nu.matrix());
    let mut cross = 0.0;
    for (k, &r) in rho_eig.values.iter().enumerate() {
        let w = nu_in_rho[(k, k)].re;
        if r > CLIP {
            cross += w * r.ln();
        } else if w > CLIP {
            return ExtReal::NegInfinity;
        }
    }
    let self_term: f64 = nu
        .eigenvalues()
        .iter()
        .filter(|&&x| x > CLIP)
        .map(|&x| x * x.ln())
        .sum();
    ExtReal::Finite((cross - self_term).min(0.0))
}

/// Terms of the finite Gibbs variational principle
/// `S(ν) − βν(H) ≤ P(β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalCheck {
    /// `S(ν) − β ν(H)`.
    pub lhs: f64,
    /// `P(β) = log tr e^{−βH}`.
    pub pressure: f64,
    /// `P(β) − lhs`; zero exactly at the Gibbs state.
    pub gap: f64,
}

pub fn gibbs_variational_check(spec: &GibbsSpec, nu: &DensityMatrix) -> Result<VariationalCheck> {
    let p = pressure(spec)?;
    let lhs = von_neumann_entropy(nu) - spec.beta * nu.expect(&spec.hamiltonian).re;
    Ok(VariationalCheck {
        lhs,
        pressure: p,
        gap: p - lhs,
    })
}
