//! Entropy-production statistics of a finite system `(H, ω)`: the
//! two-time measurement law `Q_t`, its characteristic function, fluctuation
//! relations, the BMV functional, the ancilla reconstruction of `𝔉_t`, and
//! the cocycle `ℓ_{ω_t|ω}`, `c^t`, `σ`.
//!
//! Sign convention: an outcome pair `(a, a′)` carries
//! `s = log λ_a − log λ_{a′}`, which makes `∫ s dQ_t = −Ent(ω_t|ω) ≥ 0` and
//! `Σ e^{−αs} Q_t(s) = tr(ω_{−t}^α ω^{1−α})`.

use crate::error::{QthermError, Result};
use crate::linalg::{self, dagger, eig_hermitian, kron, pauli, CMat, C64};
use crate::modular::relative_modular;
use crate::qdyn::{FiniteQDS, TimeReversal};
use crate::qstate::{relative_entropy, DensityMatrix};

/// Outcomes closer than this are merged into one atom.
pub const ATOM_MERGE_TOL: f64 = 1e-9;
/// Relative tolerance for grouping degenerate eigenvalues of `ω`.
pub const EIG_CLUSTER_TOL: f64 = 1e-10;

/// Discrete probability measure on `ℝ`, atoms sorted by position.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMeasure {
    atoms: Vec<(f64, f64)>,
}

impl OutcomeMeasure {
    /// Sorts, merges atoms within [`ATOM_MERGE_TOL`] and drops atoms of
    /// (numerically) zero weight. Total mass must be 1 within `1e−10`.
    pub fn from_atoms(mut raw: Vec<(f64, f64)>) -> Result<Self> {
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for (s, p) in raw {
            match atoms.last_mut() {
                Some(last) if (s - last.0).abs() <= ATOM_MERGE_TOL => {
                    let w = last.1 + p;
                    if w > 0.0 {
                        last.0 = (last.0 * last.1 + s * p) / w;
                    }
                    last.1 = w;
                }
                _ => atoms.push((s, p)),
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(QthermError::InvalidArgument(format!(
                "outcome weights sum to {total}"
            )));
        }
        atoms.retain(|a| a.1 > 1e-15);
        Ok(OutcomeMeasure { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(s, p)| s * p).sum()
    }

    /// `Σ e^{−αs} Q(s)`.
    pub fn laplace(&self, alpha: C64) -> C64 {
        self.atoms.iter().map(|&(s, p)| (-alpha * s).exp() * p).sum()
    }

    /// Weight of the atom at `s` (0 if absent).
    pub fn mass_at(&self, s: f64) -> f64 {
        self.atoms
            .iter()
            .find(|a| (a.0 - s).abs() <= ATOM_MERGE_TOL)
            .map_or(0.0, |a| a.1)
    }
}

/// Spectral projections of `ω` (degenerate eigenvalues grouped) with their
/// logarithms.
fn state_blocks(omega: &DensityMatrix) -> Result<Vec<(f64, CMat)>> {
    omega.require_faithful()?;
    let eig = omega.eig();
    Ok(eig
        .clusters(EIG_CLUSTER_TOL)
        .into_iter()
        .map(|r| {
            let mean = eig.values[r.clone()].iter().map(|x| x.ln()).sum::<f64>() / r.len() as f64;
            (mean, eig.projector(r))
        })
        .collect())
}

/// `Q_t(s) = Σ_{s(a,a′)=s} tr(e^{−itH} P_a ω P_a e^{itH} P_{a′})`.
pub fn ttmep_law(sys: &FiniteQDS, t: f64) -> Result<OutcomeMeasure> {
    let blocks = state_blocks(sys.state())?;
    let u = sys.propagator(-t);
    let w = sys.state().matrix();
    let mut raw = Vec::with_capacity(blocks.len() * blocks.len());
    for (la, pa) in &blocks {
        let moved = &u * (pa * w * pa) * dagger(&u);
        for (lb, pb) in &blocks {
            raw.push((la - lb, linalg::trace_product(&moved, pb).re));
        }
    }
    OutcomeMeasure::from_atoms(raw)
}

/// `𝔉_t(α) = tr(ω_{−t}^α ω^{1−α})`.
pub fn ttmep_charfn(sys: &FiniteQDS, t: f64, alpha: C64) -> Result<C64> {
    let w = sys.state();
    w.require_faithful()?;
    let back = sys.evolved_state(-t)?;
    Ok(linalg::trace_product(
        &back.power_complex(alpha),
        &w.power_complex(C64::new(1.0, 0.0) - alpha),
    ))
}

/// `⟨Ω, Δ_{ω_{−t}|ω}^α Ω⟩` on the standard representation.
pub fn ttmep_charfn_modular(sys: &FiniteQDS, t: f64, alpha: C64) -> Result<C64> {
    let w = sys.state();
    w.require_faithful()?;
    let back = sys.evolved_state(-t)?;
    let rm = relative_modular(&back, w)?;
    let power = linalg::mat_fn_complex(&rm.log_delta, |x| (alpha * x).exp())?;
    let omega = linalg::vectorize(&w.power(0.5));
    Ok(omega.dotc(&(power * &omega)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationReport {
    /// `max_s |Q_t(−s) − e^{−s} Q_t(s)|`.
    pub max_defect_measure: f64,
    /// `max_α |𝔉(α) − 𝔉(1−α)|` on the real grid.
    pub max_defect_charfn: f64,
}

fn require_tri(sys: &FiniteQDS, theta: &TimeReversal) -> Result<()> {
    let rep = crate::qdyn::is_tri(sys, theta)?;
    if rep.is_tri {
        Ok(())
    } else {
        Err(QthermError::NotTri {
            defect: rep.state_defect.max(rep.hamiltonian_defect),
        })
    }
}

pub fn fluctuation_relation_check(
    sys: &FiniteQDS,
    theta: &TimeReversal,
    t: f64,
    alpha_grid: &[f64],
) -> Result<FluctuationReport> {
    require_tri(sys, theta)?;
    let q = ttmep_law(sys, t)?;
    let max_defect_measure = q
        .atoms()
        .iter()
        .map(|&(s, p)| (q.mass_at(-s) - (-s).exp() * p).abs())
        .fold(0.0, f64::max);
    let mut max_defect_charfn: f64 = 0.0;
    for &a in alpha_grid {
        let f = ttmep_charfn(sys, t, C64::new(a, 0.0))?;
        let g = ttmep_charfn(sys, t, C64::new(1.0 - a, 0.0))?;
        max_defect_charfn = max_defect_charfn.max((f - g).norm());
    }
    Ok(FluctuationReport {
        max_defect_measure,
        max_defect_charfn,
    })
}

/// `ℓ_{ω_t|ω} = log ω_t − log ω`, `c^t = τ^t(ℓ) = log ω − τ^t(log ω)` and
/// `σ = i[log ω, H]` (equal to `i[log ω, V]` when `[log ω, H_fr] = 0`).
#[derive(Debug, Clone)]
pub struct EPCocycle {
    pub ell: CMat,
    pub c: CMat,
    pub sigma: CMat,
}

pub fn entropy_production_observable(sys: &FiniteQDS) -> Result<CMat> {
    let log_w = sys.state().log()?;
    Ok(linalg::commutator(&log_w, sys.hamiltonian()) * C64::new(0.0, 1.0))
}

/// `c^t = log ω − τ^t(log ω)`.
pub fn c_cocycle(sys: &FiniteQDS, t: f64) -> Result<CMat> {
    let log_w = sys.state().log()?;
    Ok(&log_w - sys.evolve_heisenberg(&log_w, t))
}

pub fn ep_cocycle(sys: &FiniteQDS, t: f64) -> Result<EPCocycle> {
    let log_w = sys.state().log()?;
    let ell = sys.evolved_state(t)?.log()? - &log_w;
    let c = sys.evolve_heisenberg(&ell, t);
    Ok(EPCocycle {
        ell,
        c,
        sigma: entropy_production_observable(sys)?,
    })
}

/// `𝔉^{BMV}_t(α) = tr exp(log ω − α c^t)`.
pub fn bmv_charfn(sys: &FiniteQDS, t: f64, alpha: C64) -> Result<C64> {
    let log_w = sys.state().log()?;
    let c = c_cocycle(sys, t)?;
    let k = log_w.map(|z| z) - c * alpha;
    if alpha.im == 0.0 {
        // Hermitian exponent
        let e = eig_hermitian(&k.map(|z| z))?;
        Ok(C64::new(e.values.iter().map(|x| x.exp()).sum(), 0.0))
    } else {
        Ok(linalg::trace(&linalg::expm(&k)))
    }
}

/// `∂_α 𝔉^{BMV}_t` at `α = 0` by fourth-order central differences.
pub fn bmv_derivative_at_zero(sys: &FiniteQDS, t: f64, h: f64) -> Result<f64> {
    let f = |a: f64| bmv_charfn(sys, t, C64::new(a, 0.0)).map(|z| z.re);
    Ok((8.0 * (f(h)? - f(-h)?) - (f(2.0 * h)? - f(-2.0 * h)?)) / (12.0 * h))
}

pub const BMV_FD_STEP: f64 = 1e-3;

/// One row of the TTMEP/BMV comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharfnRow {
    pub alpha: f64,
    pub ttmep: f64,
    pub bmv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmvComparison {
    pub rows: Vec<CharfnRow>,
    /// `|∂𝔉^{ttm}(0) − ∂𝔉^{BMV}(0)|`, both by central differences.
    pub derivative_defect: f64,
    /// `max(|𝔉^{ttm} − 𝔉^{BMV}|)` at `α ∈ {0, 1}`.
    pub endpoint_defect: f64,
}

pub fn bmv_vs_ttmep(sys: &FiniteQDS, t: f64, alpha_grid: &[f64]) -> Result<BmvComparison> {
    let rows = alpha_grid
        .iter()
        .map(|&a| {
            let al = C64::new(a, 0.0);
            Ok(CharfnRow {
                alpha: a,
                ttmep: ttmep_charfn(sys, t, al)?.re,
                bmv: bmv_charfn(sys, t, al)?.re,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let h = BMV_FD_STEP;
    let ftt = |a: f64| ttmep_charfn(sys, t, C64::new(a, 0.0)).map(|z| z.re);
    let d_ttm = (8.0 * (ftt(h)? - ftt(-h)?) - (ftt(2.0 * h)? - ftt(-2.0 * h)?)) / (12.0 * h);
    let d_bmv = bmv_derivative_at_zero(sys, t, h)?;
    let mut endpoint_defect: f64 = 0.0;
    for a in [0.0, 1.0] {
        let al = C64::new(a, 0.0);
        endpoint_defect = endpoint_defect
            .max((ttmep_charfn(sys, t, al)? - bmv_charfn(sys, t, al)?).norm());
    }
    Ok(BmvComparison {
        rows,
        derivative_defect: (d_ttm - d_bmv).abs(),
        endpoint_defect,
    })
}

/// Reconstructs `𝔉_t(α)` for imaginary `α` from a qubit ancilla: evolve
/// `ω ⊗ ρ_a` with `Ĥ_α = e^{(α/2) log ω⊗σ_z}(H⊗1)e^{−(α/2) log ω⊗σ_z}` and
/// read off `tr(ρ(t)(1⊗|v₋⟩⟨v₊|)) / ⟨v₊, ρ_a v₋⟩`.
pub fn ancilla_tomography(sys: &FiniteQDS, rho_a: &DensityMatrix, t: f64, alpha: C64) -> Result<C64> {
    if alpha.re != 0.0 {
        return Err(QthermError::InvalidArgument(
            "ancilla protocol needs purely imaginary alpha".into(),
        ));
    }
    if rho_a.dim() != 2 {
        return Err(QthermError::ShapeMismatch("ancilla must be a qubit".into()));
    }
    let coherence = rho_a.matrix()[(0, 1)];
    if coherence.norm() < 1e-12 {
        return Err(QthermError::ZeroCoherence);
    }
    let log_w = sys.state().log()?;
    let gen = kron(&log_w, &pauli::z())?;
    let half = alpha * 0.5;
    let g_eig = eig_hermitian(&gen)?;
    let left = g_eig.map_complex(|x| (half * x).exp());
    let right = g_eig.map_complex(|x| (-half * x).exp());
    let h_hat = &left * kron(sys.hamiltonian(), &linalg::identity(2))? * &right;
    let h_hat = linalg::hermitian_part_checked(&h_hat)?;
    let u = linalg::unitary_propagator(&eig_hermitian(&h_hat)?, -t);
    let state = kron(sys.state().matrix(), rho_a.matrix())?;
    let evolved = &u * state * dagger(&u);
    // N = |v₋⟩⟨v₊| with v₊ = |0⟩, v₋ = |1⟩
    let mut n = CMat::zeros(2, 2);
    n[(1, 0)] = C64::new(1.0, 0.0);
    let obs = kron(&linalg::identity(sys.dim()), &n)?;
    Ok(linalg::trace_product(&evolved, &obs) / coherence)
}

/// `max|𝔉^{ttm}_t(α) − ancilla(α)|` for two independent pipelines.
pub fn ancilla_defect(sys: &FiniteQDS, rho_a: &DensityMatrix, t: f64, alpha: C64) -> Result<f64> {
    Ok((ancilla_tomography(sys, rho_a, t, alpha)? - ttmep_charfn(sys, t, alpha)?).norm())
}

/// Relative entropy drift `Ent(ω_t|ω)`.
pub fn entropy_drift(sys: &FiniteQDS, t: f64) -> Result<f64> {
    Ok(relative_entropy(&sys.evolved_state(t)?, sys.state()).unwrap_finite())
}
