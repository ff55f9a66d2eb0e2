//! Repeated quantum measurements on a finite system: instruments over a
//! finite alphabet, the laws `P_n` of outcome paths, their time reversal,
//! entropy production `Ep(P_n, θ)` and the upper decoupling constant.
//!
//! `Ep` is returned as the classical divergence `Σ P log(P/P̂) ≥ 0`, the
//! opposite orientation from the quantum relative entropy in
//! [`crate::qstate`].

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{QthermError, Result};
use crate::lindblad::{self, cp_check, Picture, Superoperator};
use crate::linalg::{self, dagger, sandwich_super, CMat, C64};
use crate::qstate::{DensityMatrix, ExtReal};

/// Largest dense path table (`|A|^n` entries).
pub const DENSE_TABLE_CAP: usize = 1_000_000;
/// Probabilities at or below this count as zero in divergences.
pub const ZERO_PROB: f64 = 1e-14;
pub const UNITAL_TOL: f64 = 1e-11;
pub const INVARIANCE_TOL: f64 = 1e-9;
const MC_CHUNK: usize = 4096;

/// Finite family `J_a` of CP maps (Heisenberg picture) with unital sum.
#[derive(Debug, Clone)]
pub struct Instrument {
    labels: Vec<String>,
    maps: Vec<Superoperator>,
    duals: Vec<CMat>,
}

impl Instrument {
    pub fn new(labels: Vec<String>, maps: Vec<Superoperator>) -> Result<Self> {
        if labels.is_empty() || labels.len() != maps.len() {
            return Err(QthermError::InvalidArgument(
                "instrument needs one map per label and at least one label".into(),
            ));
        }
        let d = maps[0].dim();
        let mut phi = CMat::zeros(d * d, d * d);
        for (label, m) in labels.iter().zip(&maps) {
            if m.dim() != d || m.picture() != Picture::Heisenberg {
                return Err(QthermError::InvalidArgument(format!(
                    "map for {label:?} must be a Heisenberg superoperator on M_{d}"
                )));
            }
            let cp = cp_check(m)?;
            if !cp.is_cp() {
                return Err(QthermError::InvalidArgument(format!(
                    "map for {label:?} is not completely positive (Choi eigenvalue {:.3e})",
                    cp.choi_min_eig
                )));
            }
            phi += m.matrix();
        }
        let phi = Superoperator::new(d, phi, Picture::Heisenberg)?;
        let id = linalg::identity(d);
        let defect = linalg::max_abs(&(phi.apply(&id) - &id));
        if defect > UNITAL_TOL {
            return Err(QthermError::InvalidArgument(format!(
                "sum of the instrument is not unital (defect {defect:.3e})"
            )));
        }
        let duals = maps.iter().map(|m| m.dual().matrix().clone()).collect();
        Ok(Instrument { labels, maps, duals })
    }

    /// `J_a(X) = Σ_k K_{a,k}† X K_{a,k}`.
    pub fn from_kraus(labels: Vec<String>, kraus: Vec<Vec<CMat>>) -> Result<Self> {
        let maps = kraus
            .iter()
            .map(|ks| {
                let d = ks.first().map_or(0, |k| k.nrows());
                let m = ks
                    .iter()
                    .fold(CMat::zeros(d * d, d * d), |acc, k| acc + sandwich_super(&dagger(k), k));
                Superoperator::new(d, m, Picture::Heisenberg)
            })
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(labels, maps)
    }

    /// Lüders instrument `J_a(X) = P_a X P_a`.
    pub fn lueders(labels: Vec<String>, projectors: Vec<CMat>) -> Result<Self> {
        Instrument::from_kraus(labels, projectors.into_iter().map(|p| vec![p]).collect())
    }

    /// Classical coin `J_a = p_a · id` on `M_d`.
    pub fn coin(probs: &[f64], d: usize) -> Result<Self> {
        let labels = (0..probs.len()).map(|k| k.to_string()).collect();
        let maps = probs
            .iter()
            .map(|&p| Superoperator::new(d, linalg::identity(d * d).scale(p), Picture::Heisenberg))
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(labels, maps)
    }

    pub fn dim(&self) -> usize {
        self.maps[0].dim()
    }

    pub fn alphabet_size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn maps(&self) -> &[Superoperator] {
        &self.maps
    }

    /// `Φ = Σ_a J_a`.
    pub fn phi(&self) -> Superoperator {
        let d = self.dim();
        let m = self
            .maps
            .iter()
            .fold(CMat::zeros(d * d, d * d), |acc, j| acc + j.matrix());
        Superoperator::new(d, m, Picture::Heisenberg).expect("sizes checked at construction")
    }

    /// `‖Φ_#(ρ) − ρ‖₁`.
    pub fn invariance_defect(&self, rho: &DensityMatrix) -> f64 {
        let img = self.phi().dual().apply(rho.matrix());
        linalg::trace_norm(&(img - rho.matrix()))
    }

    /// A `Φ_#`-invariant state (ergodic projection of `1/d`) and its residual.
    pub fn invariant_state(&self) -> Result<(DensityMatrix, f64)> {
        let d = self.dim();
        let m = self.phi().dual().matrix() - linalg::identity(d * d);
        lindblad::kernel_state(&m, d)
    }

    fn step(&self, a: usize, state: &nalgebra::DVector<C64>) -> nalgebra::DVector<C64> {
        &self.duals[a] * state
    }

    fn trace_vec(&self, v: &nalgebra::DVector<C64>) -> f64 {
        let d = self.dim();
        (0..d).map(|i| v[i + i * d].re).sum()
    }

    /// `P_n(w) = tr(J_{w_n#} ∘ ⋯ ∘ J_{w_1#}(ρ))` for one word.
    pub fn word_probability(&self, rho: &DensityMatrix, word: &[usize]) -> f64 {
        let mut v = linalg::vectorize(rho.matrix());
        for &a in word {
            v = self.step(a, &v);
        }
        self.trace_vec(&v)
    }
}

/// Law of the first `n` outcomes, stored densely with `w_1` most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLaw {
    k: usize,
    n: usize,
    probs: Vec<f64>,
}

impl PathLaw {
    pub fn from_table(k: usize, n: usize, probs: Vec<f64>) -> Result<Self> {
        if k.checked_pow(n as u32) != Some(probs.len()) {
            return Err(QthermError::ShapeMismatch(format!(
                "table of {} entries for {k}^{n} words",
                probs.len()
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(QthermError::InvalidArgument(format!("path law sums to {total}")));
        }
        Ok(PathLaw { k, n, probs })
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, word: &[usize]) -> usize {
        word.iter().fold(0, |acc, &a| acc * self.k + a)
    }

    pub fn word_of(&self, mut index: usize) -> Vec<usize> {
        let mut w = vec![0; self.n];
        for slot in w.iter_mut().rev() {
            *slot = index % self.k;
            index /= self.k;
        }
        w
    }

    pub fn prob(&self, word: &[usize]) -> f64 {
        self.probs[self.index_of(word)]
    }

    /// Law of `(w_1, …, w_{n−1})`.
    pub fn drop_last(&self) -> PathLaw {
        let probs = self.probs.chunks(self.k).map(|c| c.iter().sum()).collect();
        PathLaw {
            k: self.k,
            n: self.n - 1,
            probs,
        }
    }

    /// Law of `(w_2, …, w_n)`.
    pub fn drop_first(&self) -> PathLaw {
        let block = self.probs.len() / self.k;
        let probs = (0..block)
            .map(|i| (0..self.k).map(|a| self.probs[a * block + i]).sum())
            .collect();
        PathLaw {
            k: self.k,
            n: self.n - 1,
            probs,
        }
    }

    /// Law of the first `m ≤ n` outcomes.
    pub fn prefix(&self, m: usize) -> PathLaw {
        let mut law = self.clone();
        while law.n > m {
            law = law.drop_last();
        }
        law
    }

    pub fn max_abs_diff(&self, other: &PathLaw) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn table_size(k: usize, n: usize) -> Result<usize> {
    match k.checked_pow(n as u32) {
        Some(s) if s <= DENSE_TABLE_CAP => Ok(s),
        _ => Err(QthermError::Overflow {
            dim: k.saturating_pow(n as u32),
            max: DENSE_TABLE_CAP,
        }),
    }
}

pub fn path_law(inst: &Instrument, rho: &DensityMatrix, n: usize) -> Result<PathLaw> {
    if n == 0 {
        return Err(QthermError::InvalidArgument("horizon must be at least 1".into()));
    }
    if rho.dim() != inst.dim() {
        return Err(QthermError::ShapeMismatch("state and instrument differ in size".into()));
    }
    let defect = inst.invariance_defect(rho);
    if defect > INVARIANCE_TOL {
        return Err(QthermError::NotInvariant { defect });
    }
    let k = inst.alphabet_size();
    let size = table_size(k, n)?;
    let block = size / k;
    let start = linalg::vectorize(rho.matrix());
    // one depth-first walk per first outcome
    let parts = crate::par::map_range(k, |a| {
        let mut out = vec![0.0; block];
        let v = inst.step(a, &start);
        fill(inst, &v, n - 1, 0, &mut out);
        out
    });
    PathLaw::from_table(k, n, parts.concat())
}

fn fill(inst: &Instrument, v: &nalgebra::DVector<C64>, remaining: usize, index: usize, out: &mut [f64]) {
    if remaining == 0 {
        out[index] = inst.trace_vec(v);
        return;
    }
    let k = inst.alphabet_size();
    for a in 0..k {
        fill(inst, &inst.step(a, v), remaining - 1, index * k + a, out);
    }
}

fn check_involution(theta: &[usize], k: usize) -> Result<()> {
    if theta.len() != k || theta.iter().any(|&t| t >= k) {
        return Err(QthermError::InvalidArgument("theta must map the alphabet to itself".into()));
    }
    if (0..k).any(|a| theta[theta[a]] != a) {
        return Err(QthermError::InvalidArgument("theta is not an involution".into()));
    }
    Ok(())
}

fn reverse_word(word: &[usize], theta: &[usize]) -> Vec<usize> {
    word.iter().rev().map(|&a| theta[a]).collect()
}

/// `P̂_n(w_1, …, w_n) = P_n(θ(w_n), …, θ(w_1))`.
pub fn reversed_law(law: &PathLaw, theta: &[usize]) -> Result<PathLaw> {
    check_involution(theta, law.k)?;
    let probs = (0..law.probs.len())
        .map(|i| law.prob(&reverse_word(&law.word_of(i), theta)))
        .collect();
    Ok(PathLaw {
        k: law.k,
        n: law.n,
        probs,
    })
}

/// `Ep(P_n, θ) = Σ_w P(w) log(P(w)/P̂(w))`, `+∞` when `P ≪ P̂` fails.
pub fn ep_n(law: &PathLaw, theta: &[usize]) -> Result<ExtReal> {
    let rev = reversed_law(law, theta)?;
    let mut total = 0.0;
    for (&p, &q) in law.probs.iter().zip(&rev.probs) {
        if p <= ZERO_PROB {
            continue;
        }
        if q <= ZERO_PROB {
            return Ok(ExtReal::PosInfinity);
        }
        total += p * (p / q).ln();
    }
    Ok(ExtReal::Finite(total.max(0.0)))
}

/// `Ep(P_n, θ)` for `n = 1, …, n_max` from one table at `n_max`.
pub fn ep_sequence(inst: &Instrument, rho: &DensityMatrix, theta: &[usize], n_max: usize) -> Result<Vec<ExtReal>> {
    let top = path_law(inst, rho, n_max)?;
    let mut laws = vec![top];
    while laws.last().expect("nonempty").n > 1 {
        let next = laws.last().expect("nonempty").drop_last();
        laws.push(next);
    }
    laws.iter().rev().map(|l| ep_n(l, theta)).collect()
}

/// Least-squares slope of `Ep(P_n, θ)` against `n` over the given horizons.
pub fn ep_rate(seq: &[ExtReal], horizons: std::ops::RangeInclusive<usize>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = horizons
        .filter_map(|n| seq.get(n - 1).and_then(|e| e.finite()).map(|v| (n as f64, v)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UdViolation {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UdReport {
    /// Smallest `C` with `P(A ∩ φ^{−n}B) ≤ C P(A)P(B)` over the scanned events.
    pub best_c: f64,
    /// Atom pairs exceeding the candidate constant (first 100).
    pub violations: Vec<UdViolation>,
}

/// Scans cylinder events `A ∈ ℱ_n`, `B ∈ ℱ_m` with `n + m ≤ n_max`. Ratios
/// of unions of atoms are weighted averages of atomic ratios, so atoms
/// suffice.
pub fn upper_decoupling_check(
    inst: &Instrument,
    rho: &DensityMatrix,
    n_max: usize,
    candidate: Option<f64>,
) -> Result<UdReport> {
    if n_max < 2 {
        return Err(QthermError::InvalidArgument("n_max must be at least 2".into()));
    }
    let top = path_law(inst, rho, n_max)?;
    let mut laws: Vec<PathLaw> = vec![top];
    while laws.last().expect("nonempty").n > 1 {
        let next = laws.last().expect("nonempty").drop_last();
        laws.push(next);
    }
    laws.reverse(); // laws[j] has horizon j + 1
    let mut best_c: f64 = 0.0;
    let mut violations = Vec::new();
    for total in 2..=n_max {
        let joint = &laws[total - 1];
        for n in 1..total {
            let (pa, pb) = (&laws[n - 1], &laws[total - n - 1]);
            let block = pb.probs.len();
            for (i, &p_u) in pa.probs.iter().enumerate() {
                for (j, &p_v) in pb.probs.iter().enumerate() {
                    let denom = p_u * p_v;
                    if denom <= ZERO_PROB * ZERO_PROB {
                        continue;
                    }
                    let ratio = joint.probs[i * block + j] / denom;
                    best_c = best_c.max(ratio);
                    if let Some(c) = candidate {
                        if ratio > c * (1.0 + 1e-12) && violations.len() < 100 {
                            violations.push(UdViolation {
                                first: pa.word_of(i),
                                second: pb.word_of(j),
                                ratio,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(UdReport { best_c, violations })
}

/// One sampled path per call; `rng` drives the sequential conditional rule.
fn sample_path<R: Rng>(inst: &Instrument, rho: &DensityMatrix, n: usize, rng: &mut R) -> Vec<usize> {
    let k = inst.alphabet_size();
    let mut v = linalg::vectorize(rho.matrix());
    let mut path = Vec::with_capacity(n);
    for _ in 0..n {
        let mut cands: Vec<_> = (0..k).map(|a| inst.step(a, &v)).collect();
        let weights: Vec<f64> = cands.iter().map(|c| inst.trace_vec(c).max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut choice = k - 1;
        for (a, w) in weights.iter().enumerate() {
            if u < *w {
                choice = a;
                break;
            }
            u -= w;
        }
        let w = weights[choice];
        v = cands.swap_remove(choice).unscale(w);
        path.push(choice);
    }
    path
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// `samples` paths of length `n`; chunk `c` uses stream `c` of the seeded
/// ChaCha generator, so results do not depend on the thread count.
pub fn sample_paths(inst: &Instrument, rho: &DensityMatrix, n: usize, samples: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let defect = inst.invariance_defect(rho);
    if defect > INVARIANCE_TOL {
        return Err(QthermError::NotInvariant { defect });
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts = crate::par::map_range(chunks, |c| {
        let mut rng = chunk_rng(seed, c as u64);
        let count = MC_CHUNK.min(samples - c * MC_CHUNK);
        (0..count).map(|_| sample_path(inst, rho, n, &mut rng)).collect::<Vec<_>>()
    });
    Ok(parts.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Sampled paths whose reversal has probability zero.
    pub infinite_hits: usize,
}

/// Monte Carlo estimate of `Ep(P_n, θ) = E_P[log P(w)/P̂(w)]`: paths are
/// drawn sequentially, each path's likelihood ratio is evaluated exactly,
/// and the standard error comes from a bootstrap over the per-path values.
pub fn ep_monte_carlo(
    inst: &Instrument,
    rho: &DensityMatrix,
    theta: &[usize],
    n: usize,
    samples: usize,
    seed: u64,
    bootstrap: usize,
) -> Result<McEstimate> {
    check_involution(theta, inst.alphabet_size())?;
    if samples == 0 {
        return Err(QthermError::InvalidArgument("need at least one sample".into()));
    }
    let paths = sample_paths(inst, rho, n, samples, seed)?;
    let logs: Vec<Option<f64>> = crate::par::map_slice(&paths, |w| {
        let p = inst.word_probability(rho, w);
        let q = inst.word_probability(rho, &reverse_word(w, theta));
        (q > ZERO_PROB).then(|| (p / q).ln())
    });
    let infinite_hits = logs.iter().filter(|l| l.is_none()).count();
    if infinite_hits > 0 {
        return Ok(McEstimate {
            mean: f64::INFINITY,
            std_error: 0.0,
            samples,
            infinite_hits,
        });
    }
    let vals: Vec<f64> = logs.into_iter().map(|l| l.expect("checked finite")).collect();
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let mut rng = chunk_rng(seed, u64::MAX);
    let boots: Vec<f64> = (0..bootstrap)
        .map(|_| (0..vals.len()).map(|_| vals[rng.random_range(0..vals.len())]).sum::<f64>() / m)
        .collect();
    let std_error = if boots.len() > 1 {
        let bm = boots.iter().sum::<f64>() / boots.len() as f64;
        (boots.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error,
        samples,
        infinite_hits,
    })
}

#[derive(Serialize)]
struct TrajectoryRecord<'a> {
    trajectory: usize,
    step: usize,
    label: &'a str,
}

/// Writes one JSON object per line: `{"trajectory", "step", "label"}`,
/// steps counted from 1.
pub fn write_trajectories<W: Write>(out: &mut W, labels: &[String], paths: &[Vec<usize>]) -> std::io::Result<()> {
    for (t, path) in paths.iter().enumerate() {
        for (s, &a) in path.iter().enumerate() {
            let rec = TrajectoryRecord {
                trajectory: t,
                step: s + 1,
                label: &labels[a],
            };
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
