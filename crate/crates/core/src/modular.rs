//! Standard representation of a faithful finite-dimensional state on the
//! Hilbert–Schmidt space `ℂ^{d²}`: modular operator and conjugation, natural
//! cone, relative modular operators, Connes cocycles, standard and
//! C-Liouvilleans and Araki's perturbation of KMS states.
//!
//! Vectors of the GNS space are column-stacked `d×d` matrices. Every
//! operator on it is a dense `d²×d²` matrix, so memory grows as `16·d⁴` bytes.

use crate::error::{QthermError, Result};
use crate::linalg::{
    self, dagger, eig_hermitian, left_mul_super, right_mul_super, sandwich_super, unvectorize,
    vectorize, CMat, CVec, C64,
};
use crate::qdyn::FiniteQDS;
use crate::qstate::{relative_entropy, DensityMatrix, ExtReal, CLIP};

/// GNS triple of a faithful state `ω`: `Ω = ω^{1/2}`, `π(A)X = AX`,
/// `JX = X†`, `Δ X = ω X ω^{−1}`.
#[derive(Debug, Clone)]
pub struct StandardRep {
    omega: DensityMatrix,
    log_omega: CMat,
}

pub fn build_standard_rep(omega: &DensityMatrix) -> Result<StandardRep> {
    omega.require_faithful()?;
    Ok(StandardRep {
        log_omega: omega.log()?,
        omega: omega.clone(),
    })
}

impl StandardRep {
    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.omega
    }

    /// `vec(ω^{1/2})`.
    pub fn omega_vector(&self) -> CVec {
        vectorize(&self.omega.power(0.5))
    }

    /// `π(A) = 1 ⊗ A`.
    pub fn pi(&self, a: &CMat) -> CMat {
        left_mul_super(a)
    }

    /// `J v = vec(unvec(v)†)`.
    pub fn j_apply(&self, v: &CVec) -> CVec {
        vectorize(&dagger(&unvectorize(v, self.dim())))
    }

    /// `J M J`, a linear operator: `P M̄ P` with `P` the transpose permutation.
    pub fn j_conjugate(&self, m: &CMat) -> CMat {
        let p = linalg::transpose_permutation(self.dim());
        &p * m.map(|z| z.conj()) * &p
    }

    /// `log Δ = L(log ω) − R(log ω)`.
    pub fn log_delta(&self) -> CMat {
        left_mul_super(&self.log_omega) - right_mul_super(&self.log_omega)
    }

    /// `Δ^z X = ω^z X ω^{−z}`.
    pub fn delta_power(&self, z: C64) -> CMat {
        sandwich_super(&self.omega.power_complex(z), &self.omega.power_complex(-z))
    }

    /// Modular group `ς^t(A) = ω^{it} A ω^{−it}`.
    pub fn modular_group(&self, a: &CMat, t: f64) -> CMat {
        let u = self.omega.power_complex(C64::new(0.0, t));
        &u * a * dagger(&u)
    }

    /// Modular dynamics as a finite system with Hamiltonian `log ω`; `ω` is
    /// KMS for it at `β = −1`.
    pub fn modular_system(&self) -> Result<FiniteQDS> {
        FiniteQDS::new(self.log_omega.clone(), self.omega.clone())
    }

    /// `v ∈ ℋ₊` iff `unvec(v)` is positive semidefinite (up to `tol`).
    pub fn in_natural_cone(&self, v: &CVec, tol: f64) -> bool {
        in_natural_cone(v, self.dim(), tol)
    }

    /// Distance of a `d²×d²` operator from `π(ℳ) = {1 ⊗ A}` in Frobenius
    /// norm, via the orthogonal projection `A = (1/d) Σ_k M_{kk}` on blocks.
    pub fn left_algebra_residual(&self, m: &CMat) -> f64 {
        let d = self.dim();
        let mut a = CMat::zeros(d, d);
        for k in 0..d {
            a += m.view((k * d, k * d), (d, d));
        }
        a /= C64::new(d as f64, 0.0);
        linalg::frobenius(&(m - left_mul_super(&a)))
    }
}

pub fn in_natural_cone(v: &CVec, d: usize, tol: f64) -> bool {
    let x = unvectorize(v, d);
    if linalg::hermitian_defect(&x) > tol {
        return false;
    }
    let h = (&x + dagger(&x)).scale(0.5);
    match eig_hermitian(&h) {
        Ok(e) => e.values.first().is_none_or(|&m| m >= -tol),
        Err(_) => false,
    }
}

/// `log Δ_{ν|ρ}: X ↦ (log ν) X − X (log ρ)` on `supp ν · ℂ^{d×d} · supp ρ`,
/// zero on the complement.
#[derive(Debug, Clone)]
pub struct RelativeModular {
    pub log_delta: CMat,
    spectrum: Vec<f64>,
}

impl RelativeModular {
    /// `{log ν_i − log ρ_j}` over support pairs, sorted.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }
}

pub fn relative_modular(nu: &DensityMatrix, rho: &DensityMatrix) -> Result<RelativeModular> {
    if nu.dim() != rho.dim() {
        return Err(QthermError::ShapeMismatch("states of different dimension".into()));
    }
    let (pn, pr) = (nu.support_projector(), rho.support_projector());
    let gen = left_mul_super(&nu.log_on_support()) - right_mul_super(&rho.log_on_support());
    let support = sandwich_super(&pn, &pr);
    let log_delta = &support * gen * &support;
    let mut spectrum = Vec::new();
    for &a in nu.eigenvalues().iter().filter(|&&x| x > CLIP) {
        for &b in rho.eigenvalues().iter().filter(|&&x| x > CLIP) {
            spectrum.push(a.ln() - b.ln());
        }
    }
    spectrum.sort_by(f64::total_cmp);
    Ok(RelativeModular { log_delta, spectrum })
}

/// Araki relative entropy `⟨Ω_ν, log Δ_{ρ|ν} Ω_ν⟩`; `−∞` when
/// `supp ν ⊄ supp ρ`.
pub fn araki_relative_entropy(nu: &DensityMatrix, rho: &DensityMatrix) -> Result<ExtReal> {
    if nu.dim() != rho.dim() {
        return Err(QthermError::ShapeMismatch("states of different dimension".into()));
    }
    // mass of ν outside supp ρ
    let leak = (nu.expect(&(linalg::identity(nu.dim()) - rho.support_projector()))).re;
    if leak > CLIP {
        return Ok(ExtReal::NegInfinity);
    }
    let rm = relative_modular(rho, nu)?;
    let omega = vectorize(&nu.power(0.5));
    let val = omega.dotc(&(&rm.log_delta * &omega)).re;
    Ok(ExtReal::Finite(val.min(0.0)))
}

/// `[Dν:Dρ]_z = ν^z ρ^{−z}` for complex `z`; the Connes cocycle at time `t`
/// is `z = it`.
pub fn connes_cocycle_at(nu: &DensityMatrix, rho: &DensityMatrix, z: C64) -> Result<CMat> {
    nu.require_faithful()?;
    rho.require_faithful()?;
    if nu.dim() != rho.dim() {
        return Err(QthermError::ShapeMismatch("states of different dimension".into()));
    }
    Ok(nu.power_complex(z) * rho.power_complex(-z))
}

/// `[Dν:Dρ]_{it} = ν^{it} ρ^{−it}`.
pub fn connes_cocycle(nu: &DensityMatrix, rho: &DensityMatrix, t: f64) -> Result<CMat> {
    connes_cocycle_at(nu, rho, C64::new(0.0, t))
}

/// `ℒ X = HX − XH`, so that `e^{itℒ} π(A) e^{−itℒ} = π(τ^t(A))`.
pub fn standard_liouvillean(sys: &FiniteQDS) -> CMat {
    let h = sys.hamiltonian();
    left_mul_super(h) - right_mul_super(h)
}

/// Distance of `ω` from invariance under `τ`, `‖[H, ω]‖_F`.
fn invariance_defect(h: &CMat, omega: &DensityMatrix) -> f64 {
    linalg::frobenius(&linalg::commutator(h, omega.matrix()))
}

/// `K_V = ℒ_fr + V − J ς_ω^{−i/2}(V) J`, acting as
/// `X ↦ [H_fr, X] + VX − X ω^{−1/2} V ω^{1/2}`. Not normal in general.
pub fn c_liouvillean(h_fr: &CMat, v: &CMat, omega: &DensityMatrix) -> Result<CMat> {
    omega.require_faithful()?;
    let h_fr = linalg::hermitian_part_checked(h_fr)?;
    let v = linalg::hermitian_part_checked(v)?;
    let defect = invariance_defect(&h_fr, omega);
    if defect > 1e-10 * (1.0 + linalg::frobenius(&h_fr)) {
        return Err(QthermError::NotInvariant { defect });
    }
    let twisted = omega.power(-0.5) * &v * omega.power(0.5);
    Ok(left_mul_super(&h_fr) - right_mul_super(&h_fr) + left_mul_super(&v)
        - right_mul_super(&twisted))
}

/// State of `e^{−β(ℒ + π(V))/2} Ω / ‖·‖`, where `ℒ` is the standard
/// Liouvillean of `H` and `Ω` the vector of `ω`. For `ω` the `(τ, β)`-KMS
/// state this is the Gibbs state of `H + V`.
pub fn araki_perturbation(sys: &FiniteQDS, v: &CMat, beta: f64) -> Result<DensityMatrix> {
    let v = linalg::hermitian_part_checked(v)?;
    if v.nrows() != sys.dim() {
        return Err(QthermError::ShapeMismatch("perturbation dimension".into()));
    }
    let gen = standard_liouvillean(sys) + left_mul_super(&v);
    let eig = eig_hermitian(&gen)?;
    // shift by the smallest exponent before normalising
    let top = eig
        .values
        .iter()
        .map(|&e| -beta * e / 2.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let prop = eig.map(|e| (-beta * e / 2.0 - top).exp());
    let psi = prop * vectorize(&sys.state().power(0.5));
    let norm = psi.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(QthermError::ExponentOverflow("perturbed vector vanished".into()));
    }
    let x = unvectorize(&(psi / C64::new(norm, 0.0)), sys.dim());
    DensityMatrix::from_unnormalized(&x * dagger(&x))
}

/// Both sides of `Ent(ν∘τ_U|ω) = Ent(ν|ω) − i ν(U* δ_ω(U))` with
/// `τ_U(A) = U* A U` and `δ_ω(U) = i[log ω, U]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitaryBalance {
    pub lhs: f64,
    pub rhs: f64,
    pub defect: f64,
}

pub fn entropy_balance_unitary(
    nu: &DensityMatrix,
    omega: &DensityMatrix,
    u: &CMat,
) -> Result<UnitaryBalance> {
    let log_w = omega.log()?;
    let d = omega.dim();
    let unit = linalg::frobenius(&(dagger(u) * u - linalg::identity(d)));
    if unit > 1e-10 {
        return Err(QthermError::InvalidArgument(format!(
            "U is not unitary (defect {unit:.2e})"
        )));
    }
    let moved = nu.conjugate(u)?;
    let lhs = relative_entropy(&moved, omega).unwrap_finite();
    let delta_u = linalg::commutator(&log_w, u) * C64::new(0.0, 1.0);
    let corr = C64::new(0.0, -1.0) * nu.expect(&(dagger(u) * delta_u));
    let rhs = relative_entropy(nu, omega).unwrap_finite() + corr.re;
    Ok(UnitaryBalance {
        lhs,
        rhs,
        defect: (lhs - rhs).abs() + corr.im.abs(),
    })
}
