//! Acceptance suite: thirteen property checks at desk scale, one printed
//! pass/fail line each. Runs as a plain binary so the lines always show.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use qtherm::epstats;
use qtherm::fermi;
use qtherm::instruments::{self, Instrument};
use qtherm::lattice::{self, Interaction, LocalOp, OpenLatticePartition};
use qtherm::lindblad::{self, LindbladGen, Picture, WeakCouplingModel};
use qtherm::linalg::{self, dagger, eig_hermitian, from_real_diag, identity, kron, max_abs, pauli, CMat, C64};
use qtherm::modular;
use qtherm::openqs::{self, Coupling, OpenSystem, Part};
use qtherm::qdyn::{FiniteQDS, TimeReversal};
use qtherm::qstate::{self, DensityMatrix, GibbsSpec};
use qtherm::quad::QuadSpec;
use qtherm::random;
use rand::Rng;

fn dm(m: CMat) -> DensityMatrix {
    DensityMatrix::from_unnormalized(m).unwrap()
}

fn gibbs(h: &CMat, beta: f64) -> DensityMatrix {
    qstate::gibbs(&GibbsSpec::new(h.clone(), beta).unwrap()).unwrap()
}

fn z() -> C64 {
    C64::new(0.0, 0.0)
}

/// Outcome of one criterion: pass flag and a short measured summary.
type Verdict = (bool, String);

struct Criterion {
    id: usize,
    name: &'static str,
    budget_secs: Option<f64>,
    run: fn() -> Verdict,
}

/// Random element of the unit sphere of the algebra (operator norm).
fn unit_op(d: usize, rng: &mut impl Rng) -> CMat {
    let a = random::matrix(d, rng);
    let n = linalg::op_norm(&a);
    a.scale(1.0 / n)
}

fn c1_kms() -> Verdict {
    let mut rng = random::seeded(101);
    let grid: Vec<f64> = (0..25).map(|k| -6.0 + 0.5 * k as f64).collect();
    let mut worst: f64 = 0.0;
    let mut weakest_mismatch = f64::INFINITY;
    for d in [2usize, 4, 8] {
        let h = random::hermitian(d, &mut rng);
        for beta in [0.5, 1.0, 2.0] {
            let sys = FiniteQDS::new(h.clone(), gibbs(&h, beta)).unwrap();
            for _ in 0..50 {
                let a = unit_op(d, &mut rng);
                let b = unit_op(d, &mut rng);
                worst = worst.max(sys.kms_check(beta, &a, &b, &grid).unwrap());
                for wrong in [beta - 0.5, beta + 0.5, beta + 1.0] {
                    let m = sys.kms_check(wrong, &a, &b, &grid).unwrap();
                    weakest_mismatch = weakest_mismatch.min(m);
                }
            }
        }
    }
    (
        worst <= 1e-9 && weakest_mismatch >= 1e-2,
        format!("max defect {worst:.2e} (<= 1e-9), min mismatched defect {weakest_mismatch:.2e} (>= 1e-2)"),
    )
}

fn c2_variational() -> Verdict {
    let mut rng = random::seeded(202);
    let mut min_gap = f64::INFINITY;
    let mut max_gibbs_gap: f64 = 0.0;
    let mut min_random_gap = f64::INFINITY;
    for d in [2usize, 4, 8] {
        let h = random::hermitian(d, &mut rng);
        for beta in [0.5, 1.0, 2.0] {
            let spec = GibbsSpec::new(h.clone(), beta).unwrap();
            let g = qstate::gibbs_variational_check(&spec, &gibbs(&h, beta)).unwrap().gap;
            max_gibbs_gap = max_gibbs_gap.max(g.abs());
            for k in 0..1000 {
                let nu = if k % 10 == 0 {
                    let v = random::unit_vector(d, &mut rng);
                    DensityMatrix::pure(&v).unwrap()
                } else {
                    dm(random::density(d, &mut rng))
                };
                let gap = qstate::gibbs_variational_check(&spec, &nu).unwrap().gap;
                min_gap = min_gap.min(gap);
                min_random_gap = min_random_gap.min(gap);
            }
        }
    }
    (
        min_gap >= -1e-10 && max_gibbs_gap <= 1e-10 && min_random_gap > 1e-10,
        format!(
            "min gap {min_gap:.2e} (>= -1e-10), |gap| at Gibbs {max_gibbs_gap:.2e} (<= 1e-10), min gap off Gibbs {min_random_gap:.2e} (> 1e-10)"
        ),
    )
}

fn two_qubit_open(seed: u64) -> OpenSystem {
    let mut rng = random::seeded(seed);
    let parts = vec![
        Part::system("S", vec![0], random::hermitian(2, &mut rng)),
        Part::reservoir("R", vec![1], random::hermitian(2, &mut rng), 1.3),
    ];
    let v = random::hermitian(4, &mut rng).scale(0.5);
    OpenSystem::new(vec![2, 2], parts, vec![Coupling::new(vec![0, 1], v)]).unwrap()
}

fn three_qubit_open(seed: u64) -> OpenSystem {
    let mut rng = random::seeded(seed);
    let parts = vec![
        Part::reservoir("L", vec![0], random::hermitian(2, &mut rng), 0.5),
        Part::system("S", vec![1], random::hermitian(2, &mut rng)),
        Part::reservoir("R", vec![2], random::hermitian(2, &mut rng), 2.0),
    ];
    let couplings = vec![
        Coupling::new(vec![0, 1], random::hermitian(4, &mut rng).scale(0.4)),
        Coupling::new(vec![1, 2], random::hermitian(4, &mut rng).scale(0.4)),
    ];
    OpenSystem::new(vec![2, 2, 2], parts, couplings).unwrap()
}

fn c3_entropy_balance() -> Verdict {
    let quad = QuadSpec::with_tol(1e-10);
    let mut worst: f64 = 0.0;
    let mut min_ent = f64::INFINITY;
    for sys in [two_qubit_open(301), three_qubit_open(302)] {
        for t in [0.5, 2.0, 5.0] {
            let b = openqs::entropy_balance(&sys, t, &quad).unwrap();
            worst = worst.max(b.defect);
            min_ent = min_ent.min(-b.ent);
        }
    }
    (
        worst <= 1e-7,
        format!("max |Ent + integral| {worst:.2e} (<= 1e-7); smallest -Ent {min_ent:.3e}"),
    )
}

fn c4_ruelle() -> Verdict {
    let mut rng = random::seeded(404);
    let mut worst: f64 = 0.0;
    let mut min_part = f64::INFINITY;
    for _ in 0..20 {
        let beta_a = rng.random_range(0.2..2.5);
        let beta_b = rng.random_range(0.2..2.5);
        let parts = vec![
            Part::reservoir("A", vec![0], random::hermitian(2, &mut rng), beta_a),
            Part::reservoir("B", vec![1, 2], random::hermitian(4, &mut rng), beta_b),
        ];
        let v = random::hermitian(8, &mut rng).scale(0.5);
        let sys = OpenSystem::new(vec![2, 2, 2], parts, vec![Coupling::new(vec![0, 1, 2], v)]).unwrap();
        let t = rng.random_range(0.5..5.0);
        let r = openqs::ruelle_decomposition(&sys, t).unwrap();
        worst = worst.max(r.defect);
        min_part = min_part.min(r.delta_s).min(r.delta_sigma);
    }
    (
        worst <= 1e-9 && min_part >= -1e-10,
        format!("max |total - dS - dSigma| {worst:.2e} (<= 1e-9), min part {min_part:.2e} (>= -1e-10)"),
    )
}

/// TRI two-qubit model: real Hamiltonian, product Gibbs reference state.
fn tri_model() -> FiniteQDS {
    let h = kron(&pauli::z(), &identity(2)).unwrap()
        + kron(&identity(2), &pauli::z()).unwrap().scale(0.7)
        + kron(&pauli::x(), &pauli::x()).unwrap().scale(0.5);
    let w1 = gibbs(&pauli::z(), 0.5);
    let w2 = gibbs(&pauli::z().scale(0.7), 2.0);
    FiniteQDS::new(h, dm(kron(w1.matrix(), w2.matrix()).unwrap())).unwrap()
}

fn generic_model(seed: u64, d: usize) -> FiniteQDS {
    let mut rng = random::seeded(seed);
    let h = random::hermitian(d, &mut rng);
    FiniteQDS::new(h, dm(random::faithful_density(d, 0.05, &mut rng))).unwrap()
}

fn c5_ttmep() -> Verdict {
    let alphas: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let mut mean_defect: f64 = 0.0;
    let mut charfn_defect: f64 = 0.0;
    let models = [tri_model(), generic_model(501, 4), generic_model(502, 3)];
    for sys in &models {
        for t in [0.5, 2.0, 5.0] {
            let law = epstats::ttmep_law(sys, t).unwrap();
            let drift = epstats::entropy_drift(sys, t).unwrap();
            mean_defect = mean_defect.max((law.mean() + drift).abs());
            for &a in &alphas {
                let al = C64::new(a, 0.0);
                let atoms = law.laplace(al);
                let modular = epstats::ttmep_charfn_modular(sys, t, al).unwrap();
                let trace = epstats::ttmep_charfn(sys, t, al).unwrap();
                charfn_defect = charfn_defect.max((atoms - modular).norm()).max((atoms - trace).norm());
            }
        }
    }
    let sys = &models[0];
    let theta = TimeReversal::conjugation(4);
    let mut fr: f64 = 0.0;
    for t in [0.5, 2.0, 5.0] {
        let r = epstats::fluctuation_relation_check(sys, &theta, t, &alphas).unwrap();
        fr = fr.max(r.max_defect_measure);
    }
    let not_tri = epstats::fluctuation_relation_check(&models[1], &TimeReversal::conjugation(4), 1.0, &alphas).is_err();
    (
        mean_defect <= 1e-9 && charfn_defect <= 1e-10 && fr <= 1e-10 && not_tri,
        format!(
            "mean defect {mean_defect:.2e} (<= 1e-9), charfn defect {charfn_defect:.2e} (<= 1e-10), \
             max|Q(-s) - e^-s Q(s)| {fr:.2e} (<= 1e-10), non-TRI rejected: {not_tri}"
        ),
    )
}

fn c6_ancilla() -> Verdict {
    let mut rng = random::seeded(606);
    let rho_a = dm(CMat::from_row_slice(
        2,
        2,
        &[C64::new(0.6, 0.0), C64::new(0.25, 0.3), C64::new(0.25, -0.3), C64::new(0.4, 0.0)],
    ));
    let mut worst: f64 = 0.0;
    for sys in [generic_model(601, 4), tri_model()] {
        let alphas: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        for t in [0.5, 1.0, 2.0] {
            for &a in &alphas {
                let al = C64::new(0.0, a);
                let anc = epstats::ancilla_tomography(&sys, &rho_a, t, al).unwrap();
                let direct = epstats::ttmep_charfn(&sys, t, al).unwrap();
                worst = worst.max((anc - direct).norm());
            }
        }
    }
    (worst <= 1e-9, format!("max |ancilla - direct| {worst:.2e} (<= 1e-9)"))
}

fn c7_modular() -> Verdict {
    let mut rng = random::seeded(707);
    let mut cocycle: f64 = 0.0;
    for d in [2usize, 3, 4] {
        for _ in 0..5 {
            let nu = dm(random::faithful_density(d, 0.05, &mut rng));
            let mu = dm(random::faithful_density(d, 0.05, &mut rng));
            let rho = dm(random::faithful_density(d, 0.05, &mut rng));
            let a = random::normalized(random::matrix(d, &mut rng));
            let sigma = |w: &DensityMatrix, x: &CMat, t: f64| {
                let u = w.power_complex(C64::new(0.0, t));
                &u * x * dagger(&u)
            };
            for (t, s) in [(0.3, -1.1), (1.7, 0.4), (-2.2, 2.9)] {
                let u = |x: &DensityMatrix, y: &DensityMatrix, t: f64| modular::connes_cocycle(x, y, t).unwrap();
                let chain = max_abs(&(u(&nu, &mu, t) * u(&mu, &rho, t) - u(&nu, &rho, t)));
                let rel = max_abs(&(u(&nu, &rho, t + s) - u(&nu, &rho, t) * sigma(&rho, &u(&nu, &rho, s), t)));
                let ut = u(&nu, &rho, t);
                let inter = max_abs(&(sigma(&nu, &a, t) - &ut * sigma(&rho, &a, t) * dagger(&ut)));
                cocycle = cocycle.max(chain).max(rel).max(inter);
            }
        }
    }

    let mut araki: f64 = 0.0;
    let mut annihilate: f64 = 0.0;
    let mut dynamics: f64 = 0.0;
    for d in [2usize, 3, 4] {
        let h = random::hermitian(d, &mut rng);
        let v = random::hermitian(d, &mut rng).scale(0.6);
        let beta = rng.random_range(0.3..2.0);
        let omega = gibbs(&h, beta);
        let sys = FiniteQDS::new(h.clone(), omega.clone()).unwrap();
        let pert = modular::araki_perturbation(&sys, &v, beta).unwrap();
        araki = araki.max(linalg::trace_norm(&(pert.matrix() - gibbs(&(&h + &v), beta).matrix())));

        let rep = modular::build_standard_rep(&omega).unwrap();
        let k = modular::c_liouvillean(&h, &v, &omega).unwrap();
        annihilate = annihilate.max((&k * rep.omega_vector()).norm());
        let perturbed = FiniteQDS::new(&h + &v, omega.clone()).unwrap();
        let a = random::normalized(random::matrix(d, &mut rng));
        let i = C64::new(0.0, 1.0);
        for t in [-5.0, -2.5, -0.8, 0.6, 2.5, 5.0] {
            let fwd = linalg::expm(&(&k * (i * t)));
            let bwd = linalg::expm(&(&k * (-i * t)));
            let lhs = fwd * rep.pi(&a) * bwd;
            let rhs = rep.pi(&perturbed.evolve_heisenberg(&a, t));
            dynamics = dynamics.max(max_abs(&(lhs - rhs)));
        }
    }
    (
        cocycle <= 1e-10 && araki <= 1e-9 && annihilate <= 1e-9 && dynamics <= 1e-8,
        format!(
            "cocycle identities {cocycle:.2e} (<= 1e-10), Araki perturbation {araki:.2e} (<= 1e-9), \
             K Omega {annihilate:.2e} (<= 1e-9), tau_V {dynamics:.2e} (<= 1e-8)"
        ),
    )
}

fn c8_bmv() -> Verdict {
    let mut at_zero: f64 = 0.0;
    let mut derivative: f64 = 0.0;
    for sys in [tri_model(), generic_model(801, 4), generic_model(802, 3)] {
        for t in [0.5, 2.0, 5.0] {
            let f0 = epstats::bmv_charfn(&sys, t, z()).unwrap();
            at_zero = at_zero.max((f0 - C64::new(1.0, 0.0)).norm());
            let d = epstats::bmv_derivative_at_zero(&sys, t, epstats::BMV_FD_STEP).unwrap();
            derivative = derivative.max((d - epstats::entropy_drift(&sys, t).unwrap()).abs());
        }
    }
    let sys = tri_model();
    let mut symmetry: f64 = 0.0;
    for t in [0.5, 2.0, 5.0] {
        for k in 0..=20 {
            let a = -0.5 + k as f64 * 0.1;
            let f = epstats::bmv_charfn(&sys, t, C64::new(a, 0.0)).unwrap();
            let g = epstats::bmv_charfn(&sys, t, C64::new(1.0 - a, 0.0)).unwrap();
            symmetry = symmetry.max((f - g).norm());
        }
    }
    (
        at_zero <= 1e-13 && derivative <= 1e-6 && symmetry <= 1e-10,
        format!(
            "|F(0) - 1| {at_zero:.2e} (<= 1e-13), |F'(0) - Ent| {derivative:.2e} (<= 1e-6), \
             max|F(a) - F(1-a)| {symmetry:.2e} (<= 1e-10)"
        ),
    )
}

fn random_symbol(n: usize, rng: &mut impl Rng) -> CMat {
    let u = random::unitary(n, rng);
    let occ: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    &u * from_real_diag(&occ) * dagger(&u)
}

fn c9_fermions() -> Verdict {
    let mut rng = random::seeded(909);
    let mut charfn: f64 = 0.0;
    let mut wick: f64 = 0.0;
    let mut kms: f64 = 0.0;
    for n in [1usize, 2, 4, 6] {
        let alg = fermi::jordan_wigner(n).unwrap();
        let t_sym = random_symbol(n, &mut rng);
        let state = fermi::quasi_free_state(&alg, &t_sym).unwrap();
        for _ in 0..20 {
            let u = random::unitary(n, &mut rng);
            let det = fermi::characteristic_fn(&state, &u);
            let direct = fermi::characteristic_fn_direct(&alg, &state, &u).unwrap();
            charfn = charfn.max((det - direct).norm());
        }
        if n >= 2 {
            for order in [4usize, 6] {
                for _ in 0..5 {
                    let fs: Vec<Vec<C64>> = (0..order).map(|_| random::unit_vector(n, &mut rng)).collect();
                    wick = wick.max(fermi::wick_defect(&alg, &state, &fs).unwrap());
                }
            }
        }
        let h = random::hermitian(n, &mut rng);
        for beta in [0.5, 2.0] {
            for t in [0.4, 1.3] {
                let r = fermi::quasi_free_dynamics_check(&alg, &h, t, Some(beta)).unwrap();
                kms = kms.max(r.kms_defect.unwrap()).max(r.bogoliubov_defect);
            }
        }
    }
    (
        charfn <= 1e-9 && wick <= 1e-9 && kms <= 1e-9,
        format!("det vs trace {charfn:.2e} (<= 1e-9), Wick 4/6-point {wick:.2e} (<= 1e-9), Fermi-Dirac KMS {kms:.2e} (<= 1e-9)"),
    )
}

fn random_generator(d: usize, jumps: usize, rng: &mut impl Rng) -> LindbladGen {
    let upsilon = random::hermitian(d, rng);
    let ls = (0..jumps).map(|_| random::matrix(d, rng).scale(0.5)).collect();
    LindbladGen::new(upsilon, ls).unwrap()
}

fn c10_lindblad() -> Verdict {
    let mut rng = random::seeded(1010);
    let mut min_eig = f64::INFINITY;
    for k in 0..50 {
        let d = 2 + k % 3;
        let gen = random_generator(d, 1 + k % 3, &mut rng);
        let m = lindblad::lindblad_to_super(&gen, Picture::Heisenberg);
        for t in [0.3, 1.0, 3.0] {
            min_eig = min_eig.min(lindblad::cp_check(&m.exp(t)).unwrap().choi_min_eig);
        }
    }
    let mut dbc: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for beta in [0.3, 1.0, 2.0] {
        let gen = lindblad::thermal_qubit(beta, 0.8, 1.0).unwrap();
        let r = lindblad::detailed_balance_check(&gen, &gibbs(&pauli::z(), beta)).unwrap();
        dbc = dbc.max(r.dbc_defect).max(r.dbc1_defect).max(r.invariance_defect);
        let (rho, res) = lindblad::invariant_state(&gen).unwrap();
        residual = residual.max(res).max(linalg::trace_norm(&(rho.matrix() - gibbs(&pauli::z(), beta).matrix())));
    }
    let broken = lindblad::thermal_qubit(1.0, 0.8, 1.7).unwrap();
    let r = lindblad::detailed_balance_check(&broken, &gibbs(&pauli::z(), 1.0)).unwrap();
    let control = r.dbc_defect.max(r.invariance_defect) > 1e-3;
    (
        min_eig >= -1e-10 && dbc <= 1e-10 && residual <= 1e-8 && control,
        format!(
            "min Choi eigenvalue {min_eig:.2e} (>= -1e-10), thermal dbc/dbc1 {dbc:.2e} (<= 1e-10), \
             invariant residual {residual:.2e} (<= 1e-8), mismatched rates rejected: {control}"
        ),
    )
}

fn c11_weak_coupling() -> Verdict {
    let rep = lindblad::weak_coupling_extract(&WeakCouplingModel::standard(1.0), &lindblad::WEAK_COUPLING_LAMBDAS, 1.0)
        .unwrap();
    let decreasing = |xs: &[f64]| xs.windows(2).all(|w| w[1] < w[0]);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let anchored = rep
        .cauchy
        .iter()
        .zip(lindblad::WEAK_COUPLING_CAUCHY)
        .chain(rep.dbc_defects.iter().zip(lindblad::WEAK_COUPLING_DBC))
        .all(|(&x, a)| rel(x, a) <= 1e-6);
    (
        decreasing(&rep.cauchy) && decreasing(&rep.dbc_defects) && anchored,
        format!(
            "generator distances {:?}, dbc defects {:?}; monotone and matching anchors (rel 1e-6): {anchored}",
            rep.cauchy.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            rep.dbc_defects.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()
        ),
    )
}

/// Amplitude damping, a rotation about x, then a σ_z readout.
fn damped_readout() -> Instrument {
    let g: f64 = 0.3;
    let mut lower = CMat::zeros(2, 2);
    lower[(0, 1)] = C64::new(g.sqrt(), 0.0);
    let damp = [from_real_diag(&[1.0, (1.0 - g).sqrt()]), lower];
    let u = linalg::unitary_propagator(&eig_hermitian(&pauli::x()).unwrap(), -0.4);
    let p = [from_real_diag(&[1.0, 0.0]), from_real_diag(&[0.0, 1.0])];
    let kraus = p.iter().map(|p| damp.iter().map(|e| p * &u * e).collect()).collect();
    Instrument::from_kraus(vec!["+".into(), "-".into()], kraus).unwrap()
}

fn random_instrument(d: usize, k: usize, rng: &mut impl Rng) -> Instrument {
    let raw: Vec<CMat> = (0..k).map(|_| random::matrix(d, rng)).collect();
    let s = raw.iter().fold(CMat::zeros(d, d), |acc, m| acc + dagger(m) * m);
    let s_inv_half = eig_hermitian(&s).unwrap().map(|x| x.powf(-0.5));
    let kraus = raw.iter().map(|m| vec![m * &s_inv_half]).collect();
    Instrument::from_kraus((0..k).map(|a| a.to_string()).collect(), kraus).unwrap()
}

fn is_palindromic(law: &instruments::PathLaw) -> bool {
    let n = law.horizon();
    (0..law.probs().len()).all(|i| {
        let mut w = law.word_of(i);
        w.reverse();
        (law.probs()[i] - law.prob(&w)).abs() <= 1e-14
    }) && n > 0
}

fn c12_instruments() -> Verdict {
    let mut rng = random::seeded(1212);
    let mut min_ep = f64::INFINITY;
    let mut candidates = vec![damped_readout()];
    for k in [2usize, 3] {
        candidates.push(random_instrument(2, k, &mut rng));
        candidates.push(random_instrument(3, k, &mut rng));
    }
    for inst in &candidates {
        let (rho, _) = inst.invariant_state().unwrap();
        let k = inst.alphabet_size();
        let id: Vec<usize> = (0..k).collect();
        let swap: Vec<usize> = (0..k).map(|a| if a < 2 { 1 - a } else { a }).collect();
        for theta in [id, swap] {
            for e in instruments::ep_sequence(inst, &rho, &theta, 5).unwrap() {
                min_ep = min_ep.min(e.to_f64());
            }
        }
    }

    let mut palindromic_ep: f64 = 0.0;
    let mut all_palindromic = true;
    let coin = Instrument::coin(&[0.2, 0.5, 0.3], 2).unwrap();
    let zmeas = Instrument::lueders(vec!["+".into(), "-".into()], vec![from_real_diag(&[1.0, 0.0]), from_real_diag(&[0.0, 1.0])]).unwrap();
    let cases = [(coin, vec![0usize, 1, 2]), (zmeas, vec![0, 1])];
    for (inst, theta) in &cases {
        let (rho, _) = inst.invariant_state().unwrap();
        for n in 1..=5 {
            let law = instruments::path_law(inst, &rho, n).unwrap();
            all_palindromic &= is_palindromic(&law);
            palindromic_ep = palindromic_ep.max(instruments::ep_n(&law, theta).unwrap().to_f64().abs());
        }
    }

    let inst = damped_readout();
    let (rho, _) = inst.invariant_state().unwrap();
    let theta = [1, 0];
    let exact = instruments::ep_n(&instruments::path_law(&inst, &rho, 4).unwrap(), &theta)
        .unwrap()
        .to_f64();
    let mc = instruments::ep_monte_carlo(&inst, &rho, &theta, 4, 100_000, 1234, 200).unwrap();
    let z_score = (mc.mean - exact).abs() / mc.std_error;

    let mut ud_c: f64 = 0.0;
    for probs in [vec![0.3, 0.7], vec![0.2, 0.5, 0.3]] {
        let iid = Instrument::coin(&probs, 2).unwrap();
        let r = instruments::upper_decoupling_check(&iid, &DensityMatrix::maximally_mixed(2), 4, Some(1.0)).unwrap();
        ud_c = ud_c.max((r.best_c - 1.0).abs());
        if !r.violations.is_empty() {
            ud_c = f64::INFINITY;
        }
    }
    (
        min_ep >= 0.0 && all_palindromic && palindromic_ep <= 1e-12 && z_score <= 3.0 && ud_c <= 1e-12,
        format!(
            "min Ep {min_ep:.2e} (>= 0), palindromic Ep {palindromic_ep:.2e} (<= 1e-12), \
             MC {:.5} +- {:.5} vs exact {exact:.5} ({z_score:.2} SE <= 3), |C - 1| for i.i.d. {ud_c:.1e}",
            mc.mean, mc.std_error
        ),
    )
}

fn c13_lattice() -> Verdict {
    let mut phi = Interaction::new(4, 2);
    let zz = kron(&pauli::z(), &pauli::z()).unwrap();
    let xy = kron(&pauli::x(), &pauli::y()).unwrap().scale(0.3);
    phi.add_translates(&[0, 1], &zz).unwrap();
    phi.add_translates(&[0, 1], &xy).unwrap();
    phi.add_translates(&[0], &pauli::x().scale(0.7)).unwrap();
    let mut bounds_ok = true;
    let mut worst_ratio: f64 = 0.0;
    let ops = [
        LocalOp::new(vec![0], pauli::x()).unwrap(),
        LocalOp::new(vec![1, 2], kron(&pauli::y(), &pauli::z()).unwrap()).unwrap(),
    ];
    for a in &ops {
        for lambda in [0.5, 1.0, 2.0] {
            for n in 1..=3 {
                let b = lattice::derivative_bound_check(&phi, lambda, a, n).unwrap();
                bounds_ok &= b.ok;
                worst_ratio = worst_ratio.max(b.lhs / b.bound);
            }
        }
    }
    let part = OpenLatticePartition {
        system: vec![1, 2],
        reservoirs: vec![vec![0], vec![3]],
        betas: vec![0.5, 2.0],
    };
    let quad = QuadSpec::with_tol(1e-10);
    let open = lattice::to_open_system(&phi, &part).unwrap();
    let flux_sigma = openqs::build_fluxes(&open).unwrap().sigma;
    let mut cross: f64 = 0.0;
    let mut balance: f64 = 0.0;
    for t in [0.5, 2.0, 5.0] {
        let ep = lattice::open_lattice_ep(&phi, &part, t, &quad).unwrap();
        cross = cross.max(max_abs(&(&ep.sigma - &flux_sigma)));
        balance = balance.max(ep.balance.defect);
    }
    (
        bounds_ok && cross <= 1e-10 && balance <= 1e-7,
        format!(
            "derivative bounds hold (max lhs/bound {worst_ratio:.3}), sigma cross-module {cross:.2e} (<= 1e-10), \
             entropy balance {balance:.2e} (<= 1e-7)"
        ),
    )
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "KMS characterization", budget_secs: Some(5.0), run: c1_kms },
        Criterion { id: 2, name: "Gibbs variational principle", budget_secs: Some(10.0), run: c2_variational },
        Criterion { id: 3, name: "entropy balance", budget_secs: Some(30.0), run: c3_entropy_balance },
        Criterion { id: 4, name: "Ruelle identity", budget_secs: None, run: c4_ruelle },
        Criterion { id: 5, name: "two-time measurement entropy production", budget_secs: None, run: c5_ttmep },
        Criterion { id: 6, name: "ancilla tomography", budget_secs: None, run: c6_ancilla },
        Criterion { id: 7, name: "modular suite", budget_secs: None, run: c7_modular },
        Criterion { id: 8, name: "BMV functional", budget_secs: None, run: c8_bmv },
        Criterion { id: 9, name: "quasi-free fermions", budget_secs: None, run: c9_fermions },
        Criterion { id: 10, name: "Lindblad semigroups", budget_secs: None, run: c10_lindblad },
        Criterion { id: 11, name: "weak coupling", budget_secs: Some(120.0), run: c11_weak_coupling },
        Criterion { id: 12, name: "repeated-measurement instruments", budget_secs: None, run: c12_instruments },
        Criterion { id: 13, name: "lattice", budget_secs: None, run: c13_lattice },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let secs = start.elapsed().as_secs_f64();
        let (mut pass, mut detail) = outcome.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        if let Some(budget) = c.budget_secs {
            if secs >= budget {
                pass = false;
                detail.push_str(&format!("; over the {budget} s budget"));
            }
        }
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] criterion {:>2} {}: {} ({secs:.2} s)",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
