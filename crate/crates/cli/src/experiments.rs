//! Experiment runners: each turns a validated [`Config`] into a
//! [`ResultSet`] of tables, diagnostics and threshold checks.

use qtherm::epstats;
use qtherm::fermi;
use qtherm::instruments::{self, Instrument};
use qtherm::lattice::{self, Interaction, LocalOp, OpenLatticePartition};
use qtherm::lindblad::{self, LindbladGen, Picture, WeakCouplingModel};
use qtherm::linalg::{self, pauli, CMat, C64};
use qtherm::modular;
use qtherm::openqs::{self, Coupling, OpenSystem, Part};
use qtherm::par;
use qtherm::qdyn::{self, FiniteQDS, TimeReversal};
use qtherm::qstate::{self, DensityMatrix, GibbsSpec};
use qtherm::quad::QuadSpec;
use qtherm::random;
use qtherm::{QthermError, Result};

use crate::config::{Config, ConfigError, Experiment, InstrumentKind, PartKindCfg, Term};
use crate::ops;
use crate::output::{self, Metadata, ResultSet, Table};

/// Fixed threshold for identities that hold to round-off regardless of the
/// configured tolerance.
const STRICT: f64 = 1e-10;

/// Trajectories kept in the instruments dump.
const TRAJECTORY_DUMP: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration ({} problem(s))", .0.len())]
    Config(Vec<ConfigError>),
    #[error("{experiment}: {source}")]
    Numerical {
        experiment: &'static str,
        #[source]
        source: QthermError,
    },
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Resource(_) => 4,
            RunError::Numerical {
                source: QthermError::Overflow { .. },
                ..
            } => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_dim: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_dim: linalg::DEFAULT_MAX_DIM,
        }
    }
}

pub fn run(cfg: &Config, opts: &RunOptions) -> std::result::Result<ResultSet, RunError> {
    let d = cfg.hilbert_dim();
    if d > opts.max_dim {
        return Err(RunError::Resource(format!(
            "{} needs Hilbert dimension {d}, above the cap {}",
            cfg.experiment.name(),
            opts.max_dim
        )));
    }
    let mut rs = ResultSet::new(Metadata {
        experiment: cfg.experiment.name().into(),
        config_hash: output::config_hash(&cfg.to_toml()),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.run.seed,
        parallel: par::is_parallel(),
        timestamp: output::timestamp(),
    });
    let res = match cfg.experiment {
        Experiment::Gibbs => gibbs_exp(cfg, &mut rs),
        Experiment::Kms => kms_exp(cfg, &mut rs),
        Experiment::Modular => modular_exp(cfg, &mut rs),
        Experiment::OpenqsBalance => balance_exp(cfg, &mut rs),
        Experiment::Ruelle => ruelle_exp(cfg, &mut rs),
        Experiment::Ttmep => ttmep_exp(cfg, &mut rs),
        Experiment::Bmv => bmv_exp(cfg, &mut rs),
        Experiment::Ancilla => ancilla_exp(cfg, &mut rs),
        Experiment::Lattice => lattice_exp(cfg, &mut rs),
        Experiment::Lindblad => lindblad_exp(cfg, &mut rs),
        Experiment::WeakCoupling => weak_coupling_exp(cfg, &mut rs),
        Experiment::Fermi => fermi_exp(cfg, &mut rs),
        Experiment::Instruments => instruments_exp(cfg, &mut rs),
    };
    res.map_err(|source| RunError::Numerical {
        experiment: cfg.experiment.name(),
        source,
    })?;
    Ok(rs)
}

fn term_op(t: &Term) -> Result<CMat> {
    let op = match (&t.pauli, &t.matrix) {
        (Some(p), _) => ops::parse_pauli(p),
        (None, Some(m)) => ops::dense_from_literal(m),
        (None, None) => Err("term without operator".into()),
    }
    .map_err(QthermError::InvalidArgument)?;
    Ok(op.scale(t.coeff))
}

/// Site lists the term is placed on: the listed sites, plus every shift
/// that fits in the chain when `translate` is set.
fn placements(t: &Term, n_sites: usize) -> Vec<Vec<usize>> {
    if !t.translate {
        return vec![t.sites.clone()];
    }
    let span = t.sites.iter().copied().max().unwrap_or(0);
    (0..n_sites.saturating_sub(span))
        .map(|x| t.sites.iter().map(|s| s + x).collect())
        .collect()
}

/// `Σ coeff · op` over all placements, on `n_sites` factors of `local_dim`.
pub fn assemble(terms: &[Term], n_sites: usize, local_dim: usize) -> Result<CMat> {
    let d = local_dim.pow(n_sites as u32);
    let mut h = CMat::zeros(d, d);
    for t in terms {
        let op = term_op(t)?;
        for sites in placements(t, n_sites) {
            h += ops::embed_term(&op, &sites, n_sites, local_dim)?;
        }
    }
    Ok(h)
}

/// Terms restricted to a block of sites, on the block's own factors.
fn assemble_on(terms: &[Term], block: &[usize], n_sites: usize, local_dim: usize) -> Result<CMat> {
    let d = local_dim.pow(block.len() as u32);
    let mut h = CMat::zeros(d, d);
    for t in terms {
        let op = term_op(t)?;
        for sites in placements(t, n_sites) {
            let local: Option<Vec<usize>> =
                sites.iter().map(|s| block.iter().position(|b| b == s)).collect();
            let local = local.ok_or_else(|| {
                QthermError::InvalidArgument(format!("term on {sites:?} leaves the block {block:?}"))
            })?;
            h += ops::embed_term(&op, &local, block.len(), local_dim)?;
        }
    }
    Ok(h)
}

fn hamiltonian(cfg: &Config) -> Result<CMat> {
    assemble(&cfg.model.hamiltonian, cfg.model.sites, cfg.model.local_dim)
}

fn gibbs_state(h: &CMat, beta: f64) -> Result<DensityMatrix> {
    qstate::gibbs(&GibbsSpec::new(h.clone(), beta)?)
}

fn open_system(cfg: &Config) -> Result<OpenSystem> {
    let m = &cfg.model;
    let parts = m
        .parts
        .iter()
        .map(|p| {
            let h = assemble_on(&p.hamiltonian, &p.sites, m.sites, m.local_dim)?;
            Ok(match p.kind {
                PartKindCfg::System => Part::system(&p.label, p.sites.clone(), h),
                PartKindCfg::Reservoir => Part::reservoir(&p.label, p.sites.clone(), h, p.beta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut couplings = Vec::new();
    for t in &m.couplings {
        let op = term_op(t)?;
        for sites in placements(t, m.sites) {
            couplings.push(Coupling::new(sites, op.clone()));
        }
    }
    OpenSystem::new(vec![m.local_dim; m.sites], parts, couplings)
}

/// Open system when parts are declared, otherwise `H` in its Gibbs state.
fn dynamical_system(cfg: &Config) -> Result<FiniteQDS> {
    if cfg.model.parts.is_empty() {
        let h = hamiltonian(cfg)?;
        let omega = gibbs_state(&h, cfg.model.beta)?;
        FiniteQDS::new(h, omega)
    } else {
        Ok(open_system(cfg)?.qds().clone())
    }
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

fn min_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, f64::min)
}

fn gibbs_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let h = hamiltonian(cfg)?;
    let d = h.nrows();
    let tol = cfg.run.tolerance;
    let betas = &cfg.run.betas;
    let rows = par::try_map_range(betas.len(), |k| {
        let spec = GibbsSpec::new(h.clone(), betas[k])?;
        let at = qstate::gibbs_variational_check(&spec, &qstate::gibbs(&spec)?)?;
        let mut rng = random::seeded(cfg.run.seed.wrapping_add(k as u64));
        let mut min_gap = f64::INFINITY;
        for _ in 0..cfg.run.samples {
            let nu = DensityMatrix::from_unnormalized(random::density(d, &mut rng))?;
            min_gap = min_gap.min(qstate::gibbs_variational_check(&spec, &nu)?.gap);
        }
        Ok::<_, QthermError>((at.pressure, at.gap, min_gap))
    })?;
    rs.table(
        Table::new("variational")
            .col("beta", "1/energy", betas.clone())
            .col("pressure", "1", rows.iter().map(|r| r.0).collect())
            .col("gibbs_gap", "1", rows.iter().map(|r| r.1).collect())
            .col("min_random_gap", "1", rows.iter().map(|r| r.2).collect()),
    );
    rs.check_le("max_abs_gibbs_gap", max_of(rows.iter().map(|r| r.1.abs())), tol);
    if cfg.run.samples > 0 {
        let worst = min_of(rows.iter().map(|r| r.2));
        rs.check_ge("min_random_gap", worst, -tol);
        rs.check("random_states_strictly_suboptimal", worst, tol, worst > tol);
    }
    Ok(())
}

fn random_pairs(d: usize, pairs: usize, seed: u64) -> Vec<(CMat, CMat)> {
    let mut rng = random::seeded(seed);
    (0..pairs)
        .map(|_| {
            let a = random::normalized(random::matrix(d, &mut rng));
            let b = random::normalized(random::matrix(d, &mut rng));
            (a, b)
        })
        .collect()
}

fn kms_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let h = hamiltonian(cfg)?;
    let beta = cfg.model.beta;
    let sys = FiniteQDS::new(h.clone(), gibbs_state(&h, beta)?)?;
    let mismatched = sys.with_state(gibbs_state(&h, beta + 1.0)?)?;
    let pairs = random_pairs(h.nrows(), cfg.run.pairs, cfg.run.seed);
    let times = &cfg.run.times;
    let rows = par::try_map_range(times.len(), |k| {
        let t = [times[k]];
        let mut worst: f64 = 0.0;
        let mut worst_mismatch: f64 = 0.0;
        for (a, b) in &pairs {
            worst = worst.max(sys.kms_check(beta, a, b, &t)?);
            worst_mismatch = worst_mismatch.max(mismatched.kms_check(beta, a, b, &t)?);
        }
        Ok::<_, QthermError>((worst, worst_mismatch))
    })?;
    rs.table(
        Table::new("kms")
            .col("t", "time", times.clone())
            .col("defect", "1", rows.iter().map(|r| r.0).collect())
            .col("mismatched_defect", "1", rows.iter().map(|r| r.1).collect()),
    );
    rs.diag("mismatched_beta", beta + 1.0);
    rs.check_le("max_defect", max_of(rows.iter().map(|r| r.0)), cfg.run.tolerance);
    if !pairs.is_empty() && !times.is_empty() {
        rs.check_ge("mismatched_min_defect", min_of(rows.iter().map(|r| r.1)), 1e-2);
    }
    Ok(())
}

fn modular_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let h = hamiltonian(cfg)?;
    let d = h.nrows();
    let beta = cfg.model.beta;
    let tol = cfg.run.tolerance;
    let omega = gibbs_state(&h, beta)?;
    let sys = FiniteQDS::new(h.clone(), omega.clone())?;
    let rep = modular::build_standard_rep(&omega)?;
    let mut rng = random::seeded(cfg.run.seed);
    let nu = DensityMatrix::new(random::faithful_density(d, 0.05, &mut rng))?;
    let mu = DensityMatrix::new(random::faithful_density(d, 0.05, &mut rng))?;
    let a = random::normalized(random::hermitian(d, &mut rng));
    let v = random::normalized(random::hermitian(d, &mut rng)).scale(0.3);
    let s = 0.7;
    let times = &cfg.run.times;
    let rows = par::try_map_range(times.len(), |k| {
        let t = times[k];
        let group = linalg::max_abs(&(rep.modular_group(&a, t) - sys.evolve_heisenberg(&a, -beta * t)));
        let u_t = modular::connes_cocycle(&nu, &omega, t)?;
        let u_s = modular::connes_cocycle(&nu, &omega, s)?;
        let u_ts = modular::connes_cocycle(&nu, &omega, t + s)?;
        let cocycle = linalg::max_abs(&(&u_ts - &u_t * rep.modular_group(&u_s, t)));
        let chain = modular::connes_cocycle(&nu, &mu, t)? * modular::connes_cocycle(&mu, &omega, t)?;
        let chain = linalg::max_abs(&(chain - &u_t));
        let nu_t = nu.power_complex(C64::new(0.0, t));
        let lhs = &nu_t * &a * linalg::dagger(&nu_t);
        let rhs = &u_t * rep.modular_group(&a, t) * linalg::dagger(&u_t);
        let intertwining = linalg::max_abs(&(lhs - rhs));
        let kv = modular::c_liouvillean(&h, &v, &omega)?;
        let gen = kv.scale(-1.0) * C64::new(0.0, 1.0);
        let evolved = linalg::expm(&gen.scale(-t)) * rep.pi(&a) * linalg::expm(&gen.scale(t));
        let perturbed = FiniteQDS::new(&h + &v, omega.clone())?;
        let tau_v = linalg::max_abs(&(evolved - rep.pi(&perturbed.evolve_heisenberg(&a, t))));
        Ok::<_, QthermError>([group, cocycle, chain, intertwining, tau_v])
    })?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    rs.table(
        Table::new("modular")
            .col("t", "time", times.clone())
            .col("modular_group_defect", "1", col(0))
            .col("cocycle_defect", "1", col(1))
            .col("chain_rule_defect", "1", col(2))
            .col("intertwining_defect", "1", col(3))
            .col("c_liouvillean_dynamics_defect", "1", col(4)),
    );
    for (j, name) in ["modular_group", "cocycle", "chain_rule", "intertwining", "c_liouvillean_dynamics"]
        .iter()
        .enumerate()
    {
        rs.check_le(&format!("max_{name}_defect"), max_of(col(j)), tol);
    }
    let araki = modular::araki_perturbation(&sys, &v, beta)?;
    let target = gibbs_state(&(&h + &v), beta)?;
    let pert = linalg::trace_norm(&(araki.matrix() - target.matrix()));
    rs.diag("araki_perturbation_defect", pert);
    rs.check_le("araki_perturbation_defect", pert, tol);
    let kv = modular::c_liouvillean(&h, &v, &omega)?;
    let annihilation = (&kv * rep.omega_vector()).norm();
    rs.diag("c_liouvillean_omega_norm", annihilation);
    rs.check_le("c_liouvillean_omega_norm", annihilation, tol);
    let ent_araki = modular::araki_relative_entropy(&nu, &omega)?.to_f64();
    let ent_direct = qstate::relative_entropy(&nu, &omega).to_f64();
    rs.diag("relative_entropy", ent_direct);
    rs.check_le("relative_entropy_defect", (ent_araki - ent_direct).abs(), tol);
    let cone = rep.in_natural_cone(&rep.omega_vector(), STRICT);
    rs.check("omega_in_natural_cone", f64::from(u8::from(cone)), 1.0, cone);
    Ok(())
}

fn balance_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let sys = open_system(cfg)?;
    let quad = QuadSpec::with_tol(cfg.run.quad_tol);
    let times = &cfg.run.times;
    let rows = par::try_map_range(times.len(), |k| openqs::entropy_balance(&sys, times[k], &quad))?;
    rs.table(
        Table::new("balance")
            .col("t", "time", times.clone())
            .col("relative_entropy", "nat", rows.iter().map(|r| r.ent).collect())
            .col("integrated_ep", "nat", rows.iter().map(|r| r.integral).collect())
            .col("defect", "nat", rows.iter().map(|r| r.defect).collect()),
    );
    rs.diag("ness_entropy_production", openqs::ness_entropy_production(&sys)?);
    rs.check_le("max_defect", max_of(rows.iter().map(|r| r.defect)), cfg.run.tolerance);
    rs.check_ge("min_integrated_ep", min_of(rows.iter().map(|r| r.integral)), -cfg.run.tolerance);
    Ok(())
}

fn ruelle_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let sys = open_system(cfg)?;
    let times = &cfg.run.times;
    let rows = par::try_map_range(times.len(), |k| openqs::ruelle_decomposition(&sys, times[k]))?;
    rs.table(
        Table::new("ruelle")
            .col("t", "time", times.clone())
            .col("total", "nat", rows.iter().map(|r| r.total).collect())
            .col("delta_s", "nat", rows.iter().map(|r| r.delta_s).collect())
            .col("delta_sigma", "nat", rows.iter().map(|r| r.delta_sigma).collect())
            .col("defect", "nat", rows.iter().map(|r| r.defect).collect()),
    );
    rs.check_le("max_defect", max_of(rows.iter().map(|r| r.defect)), cfg.run.tolerance);
    let min_part = min_of(rows.iter().flat_map(|r| [r.delta_s, r.delta_sigma]));
    rs.check_ge("min_part", min_part, -STRICT);
    Ok(())
}

fn ttmep_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let sys = dynamical_system(cfg)?;
    let tol = cfg.run.tolerance;
    let times = &cfg.run.times;
    let alphas = &cfg.run.alphas;
    let per_t = par::try_map_range(times.len(), |k| {
        let t = times[k];
        let law = epstats::ttmep_law(&sys, t)?;
        let drift = epstats::entropy_drift(&sys, t)?;
        let charfn = alphas
            .iter()
            .map(|&a| {
                let z = C64::new(a, 0.0);
                let atoms = law.laplace(z);
                let modular = epstats::ttmep_charfn_modular(&sys, t, z)?;
                Ok((atoms.re, modular.re, (atoms - modular).norm()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok::<_, QthermError>((law, drift, charfn))
    })?;

    let mut atoms = (Vec::new(), Vec::new(), Vec::new());
    let mut cf = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut mean_defects = Vec::new();
    for (k, (law, drift, charfn)) in per_t.iter().enumerate() {
        for &(s, p) in law.atoms() {
            atoms.0.push(times[k]);
            atoms.1.push(s);
            atoms.2.push(p);
        }
        for (j, row) in charfn.iter().enumerate() {
            cf.0.push(times[k]);
            cf.1.push(alphas[j]);
            cf.2.push(row.0);
            cf.3.push(row.1);
            cf.4.push(row.2);
        }
        mean_defects.push((law.mean() + drift).abs());
    }
    rs.table(
        Table::new("atoms")
            .col("t", "time", atoms.0)
            .col("s", "nat", atoms.1)
            .col("probability", "1", atoms.2),
    );
    rs.table(
        Table::new("summary")
            .col("t", "time", times.clone())
            .col("mean", "nat", per_t.iter().map(|r| r.0.mean()).collect())
            .col("relative_entropy", "nat", per_t.iter().map(|r| r.1).collect())
            .col("atom_count", "1", per_t.iter().map(|r| r.0.atoms().len() as f64).collect())
            .col("mean_defect", "nat", mean_defects.clone()),
    );
    rs.table(
        Table::new("charfn")
            .col("t", "time", cf.0)
            .col("alpha", "1", cf.1)
            .col("atom_sum", "1", cf.2)
            .col("modular", "1", cf.3)
            .col("defect", "1", cf.4.clone()),
    );
    rs.check_le("max_mean_defect", max_of(mean_defects), tol);
    rs.check_le("max_charfn_defect", max_of(cf.4), tol);
    let theta = TimeReversal::conjugation(sys.dim());
    let fr = par::map_slice(times, |&t| epstats::fluctuation_relation_check(&sys, &theta, t, alphas));
    match fr.into_iter().collect::<Result<Vec<_>>>() {
        Ok(reports) => {
            rs.diag("tri", 1.0);
            let m = max_of(reports.iter().map(|r| r.max_defect_measure));
            let c = max_of(reports.iter().map(|r| r.max_defect_charfn));
            rs.check_le("fluctuation_relation_measure", m, tol);
            rs.check_le("fluctuation_relation_charfn", c, tol);
        }
        Err(QthermError::NotTri { defect }) => {
            rs.diag("tri", 0.0);
            rs.diag("tri_defect", defect);
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn is_tri(sys: &FiniteQDS) -> Result<bool> {
    Ok(qdyn::is_tri(sys, &TimeReversal::conjugation(sys.dim()))?.is_tri)
}

fn bmv_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let sys = dynamical_system(cfg)?;
    let times = &cfg.run.times;
    let alphas = &cfg.run.alphas;
    let tri = is_tri(&sys)?;
    let per_t = par::try_map_range(times.len(), |k| {
        let t = times[k];
        let cmp = epstats::bmv_vs_ttmep(&sys, t, alphas)?;
        let drift = epstats::entropy_drift(&sys, t)?;
        let symmetry = if tri {
            let mut worst: f64 = 0.0;
            for row in &cmp.rows {
                let mirror = epstats::bmv_charfn(&sys, t, C64::new(1.0 - row.alpha, 0.0))?;
                worst = worst.max((row.bmv - mirror.re).abs());
            }
            worst
        } else {
            f64::NAN
        };
        Ok::<_, QthermError>((cmp, drift, symmetry))
    })?;
    let mut cols = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, (cmp, _, _)) in per_t.iter().enumerate() {
        for row in &cmp.rows {
            cols.0.push(times[k]);
            cols.1.push(row.alpha);
            cols.2.push(row.ttmep);
            cols.3.push(row.bmv);
        }
    }
    rs.table(
        Table::new("charfn")
            .col("t", "time", cols.0)
            .col("alpha", "1", cols.1)
            .col("ttmep", "1", cols.2)
            .col("bmv", "1", cols.3),
    );
    rs.table(
        Table::new("derivative")
            .col("t", "time", times.clone())
            .col("relative_entropy", "nat", per_t.iter().map(|r| r.1).collect())
            .col("derivative_defect", "nat", per_t.iter().map(|r| r.0.derivative_defect).collect())
            .col("endpoint_defect", "1", per_t.iter().map(|r| r.0.endpoint_defect).collect())
            .col("symmetry_defect", "1", per_t.iter().map(|r| r.2).collect()),
    );
    rs.diag("tri", f64::from(u8::from(tri)));
    rs.diag("fd_step", epstats::BMV_FD_STEP);
    rs.check_le(
        "max_derivative_defect",
        max_of(per_t.iter().map(|r| r.0.derivative_defect)),
        cfg.run.tolerance,
    );
    rs.check_le("max_endpoint_defect", max_of(per_t.iter().map(|r| r.0.endpoint_defect)), STRICT);
    if tri {
        rs.check_le("max_symmetry_defect", max_of(per_t.iter().map(|r| r.2)), STRICT);
    }
    Ok(())
}

fn ancilla_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let sys = dynamical_system(cfg)?;
    let rho_a = DensityMatrix::new(CMat::from_row_slice(
        2,
        2,
        &[C64::new(0.5, 0.0), C64::new(0.3, 0.2), C64::new(0.3, -0.2), C64::new(0.5, 0.0)],
    ))?;
    let times = &cfg.run.times;
    let alphas = &cfg.run.alphas;
    let grid: Vec<(f64, f64)> = times.iter().flat_map(|&t| alphas.iter().map(move |&a| (t, a))).collect();
    let rows = par::try_map_range(grid.len(), |k| {
        let (t, a) = grid[k];
        let z = C64::new(0.0, a);
        let anc = epstats::ancilla_tomography(&sys, &rho_a, t, z)?;
        let direct = epstats::ttmep_charfn(&sys, t, z)?;
        Ok::<_, QthermError>((anc, direct))
    })?;
    rs.table(
        Table::new("ancilla")
            .col("t", "time", grid.iter().map(|g| g.0).collect())
            .col("alpha_im", "1", grid.iter().map(|g| g.1).collect())
            .col("re_ancilla", "1", rows.iter().map(|r| r.0.re).collect())
            .col("im_ancilla", "1", rows.iter().map(|r| r.0.im).collect())
            .col("re_direct", "1", rows.iter().map(|r| r.1.re).collect())
            .col("im_direct", "1", rows.iter().map(|r| r.1.im).collect())
            .col("defect", "1", rows.iter().map(|r| (r.0 - r.1).norm()).collect()),
    );
    rs.check_le(
        "max_defect",
        max_of(rows.iter().map(|r| (r.0 - r.1).norm())),
        cfg.run.tolerance,
    );
    Ok(())
}

fn interaction(cfg: &Config) -> Result<Interaction> {
    let m = &cfg.model;
    let mut phi = Interaction::new(m.sites, m.local_dim);
    for t in &m.hamiltonian {
        let op = term_op(t)?;
        if t.translate {
            phi.add_translates(&t.sites, &op)?;
        } else {
            phi.add_term(&t.sites, &op)?;
        }
    }
    Ok(phi)
}

fn lattice_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let m = &cfg.model;
    let tol = cfg.run.tolerance;
    let phi = interaction(cfg)?;
    let pressures = lattice::pressure_sequence(&phi, m.beta, &cfg.run.sizes)?;
    let increments: Vec<f64> = pressures
        .iter()
        .enumerate()
        .map(|(k, p)| if k == 0 { f64::NAN } else { p.1 - pressures[k - 1].1 })
        .collect();
    rs.table(
        Table::new("pressure")
            .col("size", "sites", pressures.iter().map(|p| p.0 as f64).collect())
            .col("pressure", "1/site", pressures.iter().map(|p| p.1).collect())
            .col("increment", "1/site", increments),
    );

    let a_op = if m.local_dim == 2 {
        pauli::x()
    } else {
        random::normalized(random::hermitian(m.local_dim, &mut random::seeded(cfg.run.seed)))
    };
    let a = LocalOp::new(vec![0], a_op)?;
    let lambda = 1.0;
    let bounds = (1..=3)
        .map(|n| lattice::derivative_bound_check(&phi, lambda, &a, n))
        .collect::<Result<Vec<_>>>()?;
    rs.table(
        Table::new("derivative")
            .col("order", "1", (1..=3).map(f64::from).collect())
            .col("norm", "energy^n", bounds.iter().map(|b| b.lhs).collect())
            .col("bound", "energy^n", bounds.iter().map(|b| b.bound).collect()),
    );
    rs.diag("sr_norm", lattice::sr_norm(&phi, lambda)?);
    let ok = bounds.iter().all(|b| b.ok);
    rs.check("derivative_bounds", max_of(bounds.iter().map(|b| b.lhs / b.bound)), 1.0, ok);

    if m.parts.is_empty() {
        return Ok(());
    }
    let system = m
        .parts
        .iter()
        .find(|p| p.kind == PartKindCfg::System)
        .map_or(Vec::new(), |p| p.sites.clone());
    let res: Vec<_> = m.parts.iter().filter(|p| p.kind == PartKindCfg::Reservoir).collect();
    let part = OpenLatticePartition {
        system,
        reservoirs: res.iter().map(|p| p.sites.clone()).collect(),
        betas: res.iter().map(|p| p.beta).collect(),
    };
    let quad = QuadSpec::with_tol(cfg.run.quad_tol);
    let times = &cfg.run.times;
    let eps = par::try_map_range(times.len(), |k| lattice::open_lattice_ep(&phi, &part, times[k], &quad))?;
    rs.table(
        Table::new("ep")
            .col("t", "time", times.clone())
            .col("relative_entropy", "nat", eps.iter().map(|e| e.balance.ent).collect())
            .col("integrated_ep", "nat", eps.iter().map(|e| e.balance.integral).collect())
            .col("defect", "nat", eps.iter().map(|e| e.balance.defect).collect()),
    );
    rs.check_le("max_balance_defect", max_of(eps.iter().map(|e| e.balance.defect)), tol);
    if let Some(first) = eps.first() {
        rs.check_le("sigma_form_defect", first.form_defect, tol);
        let open = lattice::to_open_system(&phi, &part)?;
        let cross = linalg::max_abs(&(&first.sigma - openqs::build_fluxes(&open)?.sigma));
        rs.check_le("sigma_cross_module_defect", cross, STRICT);
    }
    Ok(())
}

fn lindblad_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let m = &cfg.model;
    let tol = cfg.run.tolerance;
    let gen = if m.jumps.is_empty() && m.hamiltonian.is_empty() && m.sites == 1 && m.local_dim == 2 {
        rs.diag("default_thermal_qubit", 1.0);
        lindblad::thermal_qubit(m.beta, 1.0, 1.0)?
    } else {
        let upsilon = hamiltonian(cfg)?;
        let mut jumps = Vec::new();
        for t in &m.jumps {
            let op = term_op(t)?;
            for sites in placements(t, m.sites) {
                jumps.push(ops::embed_term(&op, &sites, m.sites, m.local_dim)?);
            }
        }
        LindbladGen::new(upsilon, jumps)?
    };
    let heis = lindblad::lindblad_to_super(&gen, Picture::Heisenberg);
    let times = &cfg.run.times;
    let cps = par::try_map_range(times.len(), |k| lindblad::cp_check(&heis.exp(times[k])))?;
    rs.table(
        Table::new("cp")
            .col("t", "time", times.clone())
            .col("choi_min_eig", "1", cps.iter().map(|c| c.choi_min_eig).collect())
            .col("unital_defect", "1", cps.iter().map(|c| c.unital_defect).collect())
            .col("trace_defect", "1", cps.iter().map(|c| c.trace_defect).collect()),
    );
    rs.check_ge("min_choi_eig", min_of(cps.iter().map(|c| c.choi_min_eig)), -tol);
    rs.check_le("max_unital_defect", max_of(cps.iter().map(|c| c.unital_defect)), tol);

    let (rho, residual) = lindblad::invariant_state(&gen)?;
    rs.check_le("invariant_residual", residual, 1e-8);
    let dbc = lindblad::detailed_balance_check(&gen, &rho)?;
    rs.diag("invariance_defect", dbc.invariance_defect);
    rs.diag("dbc_defect", dbc.dbc_defect);
    rs.diag("dbc1_defect", dbc.dbc1_defect);
    let thermal = dbc.dbc_defect <= tol && dbc.dbc1_defect <= tol;
    rs.diag("detailed_balance", f64::from(u8::from(thermal)));
    let rd = rho.eigenvalues().to_vec();
    rs.table(
        Table::new("invariant_state")
            .col("index", "1", (0..rd.len()).map(|k| k as f64).collect())
            .col("eigenvalue", "1", rd),
    );
    if !linalg::max_abs(gen.upsilon()).eq(&0.0) {
        let g = gibbs_state(gen.upsilon(), m.beta)?;
        rs.diag("gibbs_distance", linalg::trace_norm(&(rho.matrix() - g.matrix())));
    }
    Ok(())
}

fn weak_coupling_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let m = &cfg.model;
    let n = m.mode_energies.len();
    let model = WeakCouplingModel {
        k: pauli::z(),
        reservoir_h: linalg::from_real_diag(&m.mode_energies),
        couplings: vec![(pauli::x(), vec![C64::new(0.5, 0.0); n])],
        beta: m.beta,
    };
    let t = cfg.run.times[0];
    let rep = lindblad::weak_coupling_extract(&model, &cfg.run.lambdas, t)?;
    rs.table(
        Table::new("generators")
            .col("lambda", "1", rep.lambdas.clone())
            .col("generator_norm", "energy", rep.generators.iter().map(|g| linalg::frobenius(g.matrix())).collect())
            .col("dbc_defect", "energy", rep.dbc_defects.clone())
            .col("dbc1_defect", "energy", rep.dbc1_defects.clone())
            .col("free_commutator", "energy^2", rep.free_commutators.clone()),
    );
    rs.table(
        Table::new("cauchy")
            .col("lambda_a", "1", rep.lambdas.iter().take(rep.cauchy.len()).copied().collect())
            .col("lambda_b", "1", rep.lambdas.iter().skip(1).copied().collect())
            .col("distance", "energy", rep.cauchy.clone()),
    );
    rs.diag("rescaled_time", t);
    let ratio = |xs: &[f64]| {
        xs.windows(2)
            .map(|w| w[1] / w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    if rep.cauchy.len() >= 2 {
        let r = ratio(&rep.cauchy);
        rs.check("cauchy_decreasing", r, 1.0, r < 1.0);
    }
    if rep.dbc_defects.len() >= 2 {
        let r = ratio(&rep.dbc_defects);
        rs.check("dbc_decreasing", r, 1.0, r < 1.0);
    }
    Ok(())
}

fn fermi_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let m = &cfg.model;
    let n = m.modes;
    let tol = cfg.run.tolerance;
    let h = CMat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(m.mode_energies[i], 0.0)
        } else if i.abs_diff(j) == 1 {
            C64::new(m.hopping, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let alg = fermi::jordan_wigner(n)?;
    let symbol = fermi::fermi_dirac(&h, m.beta)?;
    let state = fermi::quasi_free_state(&alg, &symbol)?;
    rs.diag("car_defect", alg.car_defect());

    let mut rng = random::seeded(cfg.run.seed);
    let us: Vec<CMat> = (0..cfg.run.samples).map(|_| random::unitary(n, &mut rng)).collect();
    let cf = par::try_map_range(us.len(), |k| {
        let det = fermi::characteristic_fn(&state, &us[k]);
        let direct = fermi::characteristic_fn_direct(&alg, &state, &us[k])?;
        Ok::<_, QthermError>((det, (det - direct).norm()))
    })?;
    rs.table(
        Table::new("charfn")
            .col("sample", "1", (0..cf.len()).map(|k| k as f64).collect())
            .col("re", "1", cf.iter().map(|c| c.0.re).collect())
            .col("im", "1", cf.iter().map(|c| c.0.im).collect())
            .col("defect", "1", cf.iter().map(|c| c.1).collect()),
    );
    rs.check_le("max_charfn_defect", max_of(cf.iter().map(|c| c.1)), tol);

    let mut wick = Vec::new();
    for order in [2usize, 4, 6] {
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let fs: Vec<Vec<C64>> = (0..order).map(|_| random::unit_vector(n, &mut rng)).collect();
            worst = worst.max(fermi::wick_defect(&alg, &state, &fs)?);
        }
        wick.push((order as f64, worst));
    }
    rs.table(
        Table::new("wick")
            .col("order", "1", wick.iter().map(|w| w.0).collect())
            .col("defect", "1", wick.iter().map(|w| w.1).collect()),
    );
    rs.check_le("max_wick_defect", max_of(wick.iter().map(|w| w.1)), tol);

    let times = &cfg.run.times;
    let dyn_rows = par::try_map_range(times.len(), |k| {
        fermi::quasi_free_dynamics_check(&alg, &h, times[k], Some(m.beta))
    })?;
    rs.table(
        Table::new("dynamics")
            .col("t", "time", times.clone())
            .col("bogoliubov_defect", "1", dyn_rows.iter().map(|r| r.bogoliubov_defect).collect())
            .col("kms_defect", "1", dyn_rows.iter().map(|r| r.kms_defect.unwrap_or(f64::NAN)).collect()),
    );
    rs.check_le("max_bogoliubov_defect", max_of(dyn_rows.iter().map(|r| r.bogoliubov_defect)), tol);
    rs.check_le(
        "max_kms_defect",
        max_of(dyn_rows.iter().filter_map(|r| r.kms_defect)),
        tol,
    );
    if n <= 3 {
        let aw = fermi::araki_wyss_rep(&symbol)?;
        let d = aw.modular_defect()?;
        rs.check_le("araki_wyss_modular_defect", d, tol);
    }
    Ok(())
}

fn build_instrument(cfg: &Config) -> Result<Instrument> {
    let m = &cfg.model;
    let ic = &m.instrument;
    let d = m.local_dim.pow(m.sites as u32);
    match ic.kind {
        InstrumentKind::Coin => Instrument::coin(&ic.probs, d),
        InstrumentKind::Lueders => {
            let obs = assemble(&ic.observable, m.sites, m.local_dim)?;
            let eig = linalg::eig_hermitian(&obs)?;
            let clusters = eig.clusters(1e-9);
            let labels = clusters.iter().map(|r| output::fmt_f64(eig.values[r.start])).collect();
            let projectors = clusters.into_iter().map(|r| eig.projector(r)).collect();
            Instrument::lueders(labels, projectors)
        }
        InstrumentKind::Kraus => {
            let labels = ic.outcomes.iter().map(|o| o.label.clone()).collect();
            let kraus = ic
                .outcomes
                .iter()
                .map(|o| {
                    o.kraus
                        .iter()
                        .map(|t| assemble(std::slice::from_ref(t), m.sites, m.local_dim))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Instrument::from_kraus(labels, kraus)
        }
    }
}

fn instruments_exp(cfg: &Config, rs: &mut ResultSet) -> Result<()> {
    let inst = build_instrument(cfg)?;
    let theta = &cfg.model.instrument.theta;
    let n = cfg.run.horizon;
    let (rho, residual) = inst.invariant_state()?;
    rs.diag("invariant_residual", residual);
    let seq = instruments::ep_sequence(&inst, &rho, theta, n)?;
    let eps: Vec<f64> = seq.iter().map(|e| e.to_f64()).collect();
    rs.table(
        Table::new("ep")
            .col("n", "steps", (1..=n).map(|k| k as f64).collect())
            .col("ep", "nat", eps.clone())
            .col("ep_per_step", "nat", eps.iter().enumerate().map(|(k, e)| e / (k + 1) as f64).collect()),
    );
    rs.check_ge("min_ep", eps.iter().copied().fold(f64::INFINITY, f64::min), -STRICT);

    if n >= 2 {
        let ud = instruments::upper_decoupling_check(&inst, &rho, n, None)?;
        rs.diag("ud_best_c", ud.best_c);
    }

    if cfg.run.samples > 0 {
        let mc = instruments::ep_monte_carlo(
            &inst,
            &rho,
            theta,
            n,
            cfg.run.samples,
            cfg.run.seed,
            cfg.run.bootstrap,
        )?;
        rs.diag("mc_mean", mc.mean);
        rs.diag("mc_std_error", mc.std_error);
        rs.diag("mc_infinite_hits", mc.infinite_hits as f64);
        let exact = eps[n - 1];
        if exact.is_finite() && mc.mean.is_finite() {
            let z = (exact - mc.mean).abs() / mc.std_error.max(f64::MIN_POSITIVE);
            let pass = (exact - mc.mean).abs() <= cfg.run.tolerance * mc.std_error + 1e-12;
            rs.check("mc_vs_exact_std_errors", z, cfg.run.tolerance, pass);
        }
        let keep = cfg.run.samples.min(TRAJECTORY_DUMP);
        let paths = instruments::sample_paths(&inst, &rho, n, keep, cfg.run.seed)?;
        let mut buf = Vec::new();
        instruments::write_trajectories(&mut buf, inst.labels(), &paths)
            .map_err(|e| QthermError::InvalidArgument(e.to_string()))?;
        rs.attachments
            .push(("trajectories.jsonl".into(), String::from_utf8_lossy(&buf).into_owned()));
    }
    Ok(())
}
