//! Open systems: a small system coupled to finite reservoir blocks.
//! Entropy production observable and fluxes, entropy balance, NESS as the
//! Cesàro limit, Ruelle's decomposition, canonical (Duhamel) correlations,
//! finite-time Green–Kubo and Onsager diagnostics.

use nalgebra::DMatrix;

use crate::error::{QthermError, Result};
use crate::linalg::{self, dagger, eig_hermitian, embed, partial_trace, CMat, HermitianEig, C64};
use crate::qdyn::{is_tri, FiniteQDS, TimeReversal};
use crate::qstate::{gibbs, gibbs_from_eig, relative_entropy, DensityMatrix, GibbsSpec};
use crate::quad::{adaptive_simpson, adaptive_simpson_vec, QuadSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartKind {
    /// The small system, in the reference state `1/dim` unless overridden.
    System,
    /// A reservoir block in its Gibbs state at inverse temperature `beta`.
    Reservoir { beta: f64 },
}

/// A block of tensor factors with its local Hamiltonian.
#[derive(Debug, Clone)]
pub struct Part {
    pub label: String,
    /// Ascending factor indices.
    pub factors: Vec<usize>,
    /// Hamiltonian on the listed factors.
    pub hamiltonian: CMat,
    pub kind: PartKind,
}

impl Part {
    pub fn system(label: &str, factors: Vec<usize>, hamiltonian: CMat) -> Self {
        Part {
            label: label.into(),
            factors,
            hamiltonian,
            kind: PartKind::System,
        }
    }

    pub fn reservoir(label: &str, factors: Vec<usize>, hamiltonian: CMat, beta: f64) -> Self {
        Part {
            label: label.into(),
            factors,
            hamiltonian,
            kind: PartKind::Reservoir { beta },
        }
    }
}

/// Interaction term acting on the listed factors (in that tensor order).
#[derive(Debug, Clone)]
pub struct Coupling {
    pub factors: Vec<usize>,
    pub op: CMat,
}

impl Coupling {
    pub fn new(factors: Vec<usize>, op: CMat) -> Self {
        Coupling { factors, op }
    }
}

/// Assembled open system: `H = H_fr + V` with `H_fr = Σ_a H_a`,
/// `V = Σ_j V_j` and reference state `ω = ⊗_a ω_a`.
#[derive(Debug, Clone)]
pub struct OpenSystem {
    dims: Vec<usize>,
    parts: Vec<Part>,
    part_ops: Vec<CMat>,
    part_states: Vec<DensityMatrix>,
    couplings: Vec<CMat>,
    h_fr: CMat,
    v: CMat,
    qds: FiniteQDS,
}

impl OpenSystem {
    pub fn new(dims: Vec<usize>, parts: Vec<Part>, couplings: Vec<Coupling>) -> Result<Self> {
        Self::with_system_state(dims, parts, couplings, None)
    }

    /// As [`OpenSystem::new`] but with an explicit faithful state for the
    /// `System` part instead of the normalized trace.
    pub fn with_system_state(
        dims: Vec<usize>,
        parts: Vec<Part>,
        couplings: Vec<Coupling>,
        system_state: Option<DensityMatrix>,
    ) -> Result<Self> {
        let mut owner = vec![None; dims.len()];
        for (k, p) in parts.iter().enumerate() {
            if p.factors.is_empty() || p.factors.windows(2).any(|w| w[0] >= w[1]) {
                return Err(QthermError::InvalidArgument(format!(
                    "part '{}' needs nonempty ascending factor indices",
                    p.label
                )));
            }
            for &f in &p.factors {
                match owner.get(f) {
                    Some(None) => owner[f] = Some(k),
                    _ => {
                        return Err(QthermError::InvalidArgument(format!(
                            "factor {f} of part '{}' is out of range or already owned",
                            p.label
                        )))
                    }
                }
            }
        }
        if let Some(f) = owner.iter().position(Option::is_none) {
            return Err(QthermError::InvalidArgument(format!("factor {f} belongs to no part")));
        }
        if parts.iter().filter(|p| p.kind == PartKind::System).count() > 1 {
            return Err(QthermError::InvalidArgument("more than one system part".into()));
        }
        let total: usize = dims.iter().product();
        let mut h_fr = CMat::zeros(total, total);
        let mut omega = linalg::identity(total);
        let mut part_ops = Vec::new();
        let mut part_states = Vec::new();
        for p in &parts {
            let h = linalg::hermitian_part_checked(&p.hamiltonian)?;
            let local_dim: usize = p.factors.iter().map(|&f| dims[f]).product();
            let state = match p.kind {
                PartKind::Reservoir { beta } => gibbs(&GibbsSpec::new(h.clone(), beta)?)?,
                PartKind::System => match &system_state {
                    Some(s) => {
                        s.require_faithful()?;
                        if s.dim() != local_dim {
                            return Err(QthermError::ShapeMismatch("system state dimension".into()));
                        }
                        s.clone()
                    }
                    None => DensityMatrix::maximally_mixed(local_dim),
                },
            };
            let big = embed(&h, &dims, &p.factors)?;
            h_fr += &big;
            // embedded operators on disjoint factors commute
            omega = omega * embed(state.matrix(), &dims, &p.factors)?;
            part_ops.push(big);
            part_states.push(state);
        }
        let mut v = CMat::zeros(total, total);
        let mut coupling_ops = Vec::new();
        for c in &couplings {
            let op = linalg::hermitian_part_checked(&c.op)?;
            let big = embed(&op, &dims, &c.factors)?;
            v += &big;
            coupling_ops.push(big);
        }
        let qds = FiniteQDS::new(&h_fr + &v, DensityMatrix::from_unnormalized(omega)?)?;
        Ok(OpenSystem {
            dims,
            parts,
            part_ops,
            part_states,
            couplings: coupling_ops,
            h_fr,
            v,
            qds,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.qds.dim()
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    /// Embedded local Hamiltonian of part `k`.
    pub fn part_hamiltonian(&self, k: usize) -> &CMat {
        &self.part_ops[k]
    }

    pub fn part_state(&self, k: usize) -> &DensityMatrix {
        &self.part_states[k]
    }

    /// Indices of the reservoir parts, in declaration order.
    pub fn reservoirs(&self) -> Vec<usize> {
        (0..self.parts.len())
            .filter(|&k| matches!(self.parts[k].kind, PartKind::Reservoir { .. }))
            .collect()
    }

    pub fn reservoir_betas(&self) -> Vec<f64> {
        self.parts
            .iter()
            .filter_map(|p| match p.kind {
                PartKind::Reservoir { beta } => Some(beta),
                PartKind::System => None,
            })
            .collect()
    }

    /// Embedded coupling terms `V_j`.
    pub fn couplings(&self) -> &[CMat] {
        &self.couplings
    }

    pub fn free_hamiltonian(&self) -> &CMat {
        &self.h_fr
    }

    pub fn interaction(&self) -> &CMat {
        &self.v
    }

    pub fn hamiltonian(&self) -> &CMat {
        self.qds.hamiltonian()
    }

    pub fn state(&self) -> &DensityMatrix {
        self.qds.state()
    }

    pub fn qds(&self) -> &FiniteQDS {
        &self.qds
    }
}

/// Frobenius distance of `a` from `tr_rest(a)/d_rest ⊗ 1_rest`: zero iff `a`
/// acts only on `factors`.
pub fn support_defect(a: &CMat, dims: &[usize], factors: &[usize]) -> Result<f64> {
    let mut keep = factors.to_vec();
    keep.sort_unstable();
    let reduced = partial_trace(a, dims, &keep)?;
    let rest: usize = dims.iter().product::<usize>() / reduced.nrows();
    let back = embed(&reduced.unscale(rest as f64), dims, &keep)?;
    Ok(linalg::frobenius(&(a - back)))
}

/// Entropy production observable and energy fluxes.
#[derive(Debug, Clone)]
pub struct FluxSet {
    /// `σ = i[log ω, V]`.
    pub sigma: CMat,
    /// `J_j = i[H_j, V]` for each reservoir, in declaration order.
    pub fluxes: Vec<CMat>,
    pub betas: Vec<f64>,
}

pub fn build_fluxes(sys: &OpenSystem) -> Result<FluxSet> {
    let i = C64::new(0.0, 1.0);
    let log_w = sys.state().log()?;
    let sigma = linalg::commutator(&log_w, sys.interaction()) * i;
    let fluxes = sys
        .reservoirs()
        .into_iter()
        .map(|k| linalg::commutator(sys.part_hamiltonian(k), sys.interaction()) * i)
        .collect();
    Ok(FluxSet {
        sigma,
        fluxes,
        betas: sys.reservoir_betas(),
    })
}

impl FluxSet {
    /// `−Σ β_j J_j`, equal to `σ` when the system part is in the tracial state.
    pub fn phenomenological_sigma(&self) -> CMat {
        let d = self.sigma.nrows();
        self.fluxes
            .iter()
            .zip(&self.betas)
            .fold(CMat::zeros(d, d), |acc, (j, &b)| acc - j.scale(b))
    }
}

/// Expectations `ω_s(X) = tr(e^{−isH} ω e^{isH} X)` evaluated in the
/// eigenbasis of `H` at `O(d²)` cost per time.
struct EigenFrame {
    energies: Vec<f64>,
    state: CMat,
}

impl EigenFrame {
    fn new(eig: &HermitianEig, omega: &CMat) -> Self {
        EigenFrame {
            energies: eig.values.clone(),
            state: eig.to_eigenbasis(omega),
        }
    }

    fn expect(&self, x_in_basis: &CMat, s: f64) -> C64 {
        let n = self.energies.len();
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                let phase = C64::from_polar(1.0, -s * (self.energies[a] - self.energies[b]));
                acc += phase * self.state[(a, b)] * x_in_basis[(b, a)];
            }
        }
        acc
    }
}

/// Entropy balance `Ent(ω_t|ω) = −∫_0^t ω_s(σ) ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBalance {
    /// `Ent(ω_t|ω) ≤ 0`.
    pub ent: f64,
    /// `∫_0^t ω_s(σ) ds ≥ 0`.
    pub integral: f64,
    pub defect: f64,
}

pub fn entropy_balance(sys: &OpenSystem, t: f64, quad: &QuadSpec) -> Result<EntropyBalance> {
    if !t.is_finite() {
        return Err(QthermError::InvalidArgument("time must be finite".into()));
    }
    let fl = build_fluxes(sys)?;
    let eig = sys.qds().hamiltonian_eig();
    let frame = EigenFrame::new(eig, sys.state().matrix());
    let sigma = eig.to_eigenbasis(&fl.sigma);
    let integral = adaptive_simpson(|s| frame.expect(&sigma, s).re, 0.0, t, quad)?;
    let ent = relative_entropy(&sys.qds().evolved_state(t)?, sys.state()).unwrap_finite();
    Ok(EntropyBalance {
        ent,
        integral,
        defect: (ent + integral).abs(),
    })
}

/// Spectral clusters of `H` used for pinching; relative tolerance.
pub const CLUSTER_TOL: f64 = 1e-9;

/// `Σ_k P_k ρ P_k` over the spectral projections of `H`.
pub fn pinch(eig: &HermitianEig, rho: &CMat) -> CMat {
    let mut in_basis = eig.to_eigenbasis(rho);
    let clusters = eig.clusters(CLUSTER_TOL);
    let mut label = vec![0; eig.dim()];
    for (k, r) in clusters.iter().enumerate() {
        for i in r.clone() {
            label[i] = k;
        }
    }
    for i in 0..eig.dim() {
        for j in 0..eig.dim() {
            if label[i] != label[j] {
                in_basis[(i, j)] = C64::new(0.0, 0.0);
            }
        }
    }
    eig.from_eigenbasis(&in_basis)
}

/// Cesàro limit of `ω∘τ^t`, i.e. the pinching of `ω` in the eigenbasis of `H`.
pub fn ness_dephase(sys: &OpenSystem) -> Result<DensityMatrix> {
    DensityMatrix::from_unnormalized(pinch(sys.qds().hamiltonian_eig(), sys.state().matrix()))
}

/// `ω₊(σ)`. In finite dimension this is `lim_T −Ent(ω_T|ω)/T = 0`.
pub fn ness_entropy_production(sys: &OpenSystem) -> Result<f64> {
    let fl = build_fluxes(sys)?;
    Ok(ness_dephase(sys)?.expect(&fl.sigma).re)
}

/// `−Ent(ω_t|ω) = ΔS(t) + ΔΣ(t)` with the decoupled state
/// `ω_t^dec = ⊗_a tr_{≠a} ω_t` over the parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuelleReport {
    pub total: f64,
    /// `−Ent(ω_t|ω_t^dec)`.
    pub delta_s: f64,
    /// `−Ent(ω_t^dec|ω)`.
    pub delta_sigma: f64,
    pub defect: f64,
}

pub fn decoupled_state(sys: &OpenSystem, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let mut out = linalg::identity(sys.dim());
    for p in sys.parts() {
        let local = partial_trace(rho.matrix(), sys.dims(), &p.factors)?;
        out = out * embed(&local, sys.dims(), &p.factors)?;
    }
    DensityMatrix::from_unnormalized(out)
}

pub fn ruelle_decomposition(sys: &OpenSystem, t: f64) -> Result<RuelleReport> {
    let wt = sys.qds().evolved_state(t)?;
    let dec = decoupled_state(sys, &wt)?;
    let total = -relative_entropy(&wt, sys.state()).unwrap_finite();
    let delta_s = -relative_entropy(&wt, &dec).unwrap_finite();
    let delta_sigma = -relative_entropy(&dec, sys.state()).unwrap_finite();
    Ok(RuelleReport {
        total,
        delta_s,
        delta_sigma,
        defect: (total - delta_s - delta_sigma).abs(),
    })
}

/// `(x − y)/(log x − log y)`, continuous at `x = y`.
fn log_mean(x: f64, y: f64) -> f64 {
    let u = y.ln() - x.ln();
    if u.abs() < 1e-300 {
        x
    } else {
        x * u.exp_m1() / u
    }
}

/// Canonical correlation `⟨A|B⟩_ω = ∫_0^1 ω(A σ_ω^{−iθ}(B)) dθ`, evaluated in
/// the eigenbasis of `ω` as `Σ A_ij B_ji L(ω_i, ω_j)`.
#[derive(Debug, Clone)]
pub struct Duhamel {
    eig: HermitianEig,
    kernel: DMatrix<f64>,
}

impl Duhamel {
    pub fn new(omega: &DensityMatrix) -> Result<Self> {
        omega.require_faithful()?;
        let eig = omega.eig().clone();
        let w = &eig.values;
        let kernel = DMatrix::from_fn(w.len(), w.len(), |i, j| log_mean(w[i], w[j]));
        Ok(Duhamel { eig, kernel })
    }

    pub fn eval(&self, a: &CMat, b: &CMat) -> C64 {
        let (a, b) = (self.eig.to_eigenbasis(a), self.eig.to_eigenbasis(b));
        let n = self.kernel.nrows();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += a[(i, j)] * b[(j, i)] * self.kernel[(i, j)];
            }
        }
        acc
    }
}

pub fn duhamel_correlation(sys: &FiniteQDS, a: &CMat, b: &CMat) -> Result<C64> {
    Ok(Duhamel::new(sys.state())?.eval(a, b))
}

/// Both sides of the finite-time Green–Kubo formula for the family
/// `ω_X ∝ exp(−βH + Σ_j X_j H_j)` (reservoir `j` at `β − X_j`, `ω_0` the
/// Gibbs state of the coupled system).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenKubo {
    /// `∂_{X_j} ω_X(τ^t(A))` at `X = 0` by Richardson-extrapolated central
    /// differences.
    pub lhs_fd: f64,
    /// `∫_0^t ⟨τ^s(A)|Φ_j⟩_ω ds`.
    pub rhs_int: f64,
    pub defect: f64,
}

/// Default finite-difference step.
pub const GK_STEP: f64 = 1e-3;

fn thermal_family_value(sys: &OpenSystem, beta: f64, hj: &CMat, x: f64, a_t: &CMat) -> Result<f64> {
    let k = sys.hamiltonian().scale(beta) - hj.scale(x);
    let eig = eig_hermitian(&k)?;
    Ok(gibbs_from_eig(&eig, 1.0)?.expect(a_t).re)
}

/// Canonical-correlation frame of the coupled Gibbs state, in the eigenbasis
/// of `H` where both `τ^s` and `ω` are diagonal.
struct ThermalFrame {
    energies: Vec<f64>,
    eig: HermitianEig,
    kernel: DMatrix<f64>,
}

impl ThermalFrame {
    fn new(sys: &OpenSystem, beta: f64) -> Result<Self> {
        let eig = sys.qds().hamiltonian_eig().clone();
        let w = gibbs_from_eig(&eig, beta)?;
        // eigenvalues of ω in the H eigenbasis
        let diag = eig.to_eigenbasis(w.matrix());
        let n = eig.dim();
        let p: Vec<f64> = (0..n).map(|i| diag[(i, i)].re).collect();
        if p.iter().any(|&x| x <= 0.0) {
            return Err(QthermError::Faithfulness {
                min_eig: p.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
        let kernel = DMatrix::from_fn(n, n, |i, j| log_mean(p[i], p[j]));
        Ok(ThermalFrame {
            energies: eig.values.clone(),
            eig,
            kernel,
        })
    }

    /// `⟨τ^s(A)|B⟩_ω` for operators already in the eigenbasis.
    fn correlation(&self, a: &CMat, b: &CMat, s: f64) -> C64 {
        let n = self.energies.len();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let phase = C64::from_polar(1.0, s * (self.energies[i] - self.energies[j]));
                acc += phase * a[(i, j)] * b[(j, i)] * self.kernel[(i, j)];
            }
        }
        acc
    }
}

/// Energy flux `Φ_j = i[H_j, V]` of the `j`-th reservoir.
fn flux_of(sys: &OpenSystem, j: usize) -> Result<CMat> {
    let res = sys.reservoirs();
    let k = *res
        .get(j)
        .ok_or_else(|| QthermError::InvalidArgument(format!("no reservoir with index {j}")))?;
    Ok(linalg::commutator(sys.part_hamiltonian(k), sys.interaction()) * C64::new(0.0, 1.0))
}

pub fn green_kubo_check(
    sys: &OpenSystem,
    beta: f64,
    a: &CMat,
    j: usize,
    t: f64,
    h: f64,
    quad: &QuadSpec,
) -> Result<GreenKubo> {
    let phi = flux_of(sys, j)?;
    let hj = sys.part_hamiltonian(sys.reservoirs()[j]).clone();
    let a_t = sys.qds().evolve_heisenberg(a, t);
    let f = |x: f64| thermal_family_value(sys, beta, &hj, x, &a_t);
    let central = |step: f64| -> Result<f64> { Ok((f(step)? - f(-step)?) / (2.0 * step)) };
    let (d1, d2) = (central(h)?, central(h / 2.0)?);
    let lhs_fd = (4.0 * d2 - d1) / 3.0;

    let frame = ThermalFrame::new(sys, beta)?;
    let (ab, pb) = (frame.eig.to_eigenbasis(a), frame.eig.to_eigenbasis(&phi));
    let rhs_int = adaptive_simpson(|s| frame.correlation(&ab, &pb, s).re, 0.0, t, quad)?;
    Ok(GreenKubo {
        lhs_fd,
        rhs_int,
        defect: (lhs_fd - rhs_int).abs(),
    })
}

/// Finite-time kinetic coefficients `L_{jk}(t) = ∫_0^t ⟨τ^s(Φ_k)|Φ_j⟩ ds`
/// and their asymmetry along a time grid.
#[derive(Debug, Clone)]
pub struct OnsagerReport {
    /// `L(t_max)`, row `j`, column `k`.
    pub l: DMatrix<f64>,
    /// `max_{j,k} |L_{jk}(t_max) − L_{kj}(t_max)|`.
    pub asymmetry: f64,
    /// `(t, max_{j,k} |L_{jk}(t) − L_{kj}(t)|)` on a uniform grid.
    pub history: Vec<(f64, f64)>,
}

pub fn onsager_check(
    sys: &OpenSystem,
    beta: f64,
    theta: &TimeReversal,
    t_max: f64,
    steps: usize,
    quad: &QuadSpec,
) -> Result<OnsagerReport> {
    let eq = sys
        .qds()
        .with_state(gibbs_from_eig(sys.qds().hamiltonian_eig(), beta)?)?;
    let tri = is_tri(&eq, theta)?;
    if !tri.is_tri {
        return Err(QthermError::NotTri {
            defect: tri.state_defect.max(tri.hamiltonian_defect),
        });
    }
    let m = sys.reservoirs().len();
    let frame = ThermalFrame::new(sys, beta)?;
    let phis: Vec<CMat> = (0..m)
        .map(|j| flux_of(sys, j).map(|p| frame.eig.to_eigenbasis(&p)))
        .collect::<Result<_>>()?;
    let integrand = |s: f64| -> Vec<C64> {
        let mut out = Vec::with_capacity(m * m);
        for k in 0..m {
            for j in 0..m {
                out.push(frame.correlation(&phis[k], &phis[j], s));
            }
        }
        out
    };
    let steps = steps.max(1);
    let mut history = Vec::with_capacity(steps);
    let mut acc = vec![C64::new(0.0, 0.0); m * m];
    let mut l = DMatrix::zeros(m, m);
    let dt = t_max / steps as f64;
    for n in 0..steps {
        let piece = adaptive_simpson_vec(integrand, n as f64 * dt, (n + 1) as f64 * dt, quad)?;
        for (x, y) in acc.iter_mut().zip(piece) {
            *x += y;
        }
        // acc index k*m + j holds L_{jk}
        l = DMatrix::from_fn(m, m, |j, k| acc[k * m + j].re);
        let asym = (0..m)
            .flat_map(|j| (0..m).map(move |k| (j, k)))
            .map(|(j, k)| (l[(j, k)] - l[(k, j)]).abs())
            .fold(0.0, f64::max);
        history.push(((n + 1) as f64 * dt, asym));
    }
    let asymmetry = history.last().map_or(0.0, |h| h.1);
    Ok(OnsagerReport {
        l,
        asymmetry,
        history,
    })
}

/// `(1/T) ∫_0^T ω_t dt` in closed form; oracle for the Cesàro limit.
pub fn time_average(sys: &FiniteQDS, t_end: f64) -> CMat {
    let eig = sys.hamiltonian_eig();
    let mut m = eig.to_eigenbasis(sys.state().matrix());
    let e = &eig.values;
    for i in 0..e.len() {
        for j in 0..e.len() {
            let w = e[i] - e[j];
            let x = -w * t_end;
            if x.abs() > 1e-12 {
                // (1/T)∫ e^{−iwt} dt
                let f = (C64::new(0.0, x).exp() - 1.0) / C64::new(0.0, x);
                m[(i, j)] *= f;
            }
        }
    }
    let out = eig.from_eigenbasis(&m);
    (&out + dagger(&out)).scale(0.5)
}
