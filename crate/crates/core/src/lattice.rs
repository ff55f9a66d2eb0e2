//! Quantum spin systems on a finite lattice `G = {0, …, n−1}`: interactions
//! `Φ: X ↦ Φ(X)`, local Hamiltonians, the norm `‖Φ‖_λ`, the derivation
//! `δ_Φ`, finite-volume pressure and entropy production of an open lattice.
//!
//! The pressure carries the inverse temperature explicitly:
//! `(1/|Λ|) log tr e^{−βH_Λ(Φ)}`, i.e. `P_Λ(βΦ)` with β folded into the interaction.

use std::collections::BTreeMap;

use crate::error::{QthermError, Result};
use crate::linalg::{self, eig_hermitian, embed, CMat, C64, DEFAULT_MAX_DIM};
use crate::openqs::{Coupling, EntropyBalance, OpenSystem, Part};
use crate::qstate::{pressure_from_eig, relative_entropy};
use crate::quad::{adaptive_simpson, QuadSpec};

/// Interaction on `n_sites` sites with common onsite dimension.
#[derive(Debug, Clone)]
pub struct Interaction {
    n_sites: usize,
    site_dim: usize,
    terms: BTreeMap<Vec<usize>, CMat>,
}

impl Interaction {
    pub fn new(n_sites: usize, site_dim: usize) -> Self {
        Interaction {
            n_sites,
            site_dim,
            terms: BTreeMap::new(),
        }
    }

    /// Adds `op` to `Φ(X)`. `sites` may be given in any order; the operator's
    /// tensor order follows `sites`.
    pub fn add_term(&mut self, sites: &[usize], op: &CMat) -> Result<()> {
        let op = linalg::hermitian_part_checked(op)?;
        let mut sorted = sites.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sites.len() || sorted.is_empty() {
            return Err(QthermError::InvalidArgument(format!("bad site set {sites:?}")));
        }
        if sorted.iter().any(|&x| x >= self.n_sites) {
            return Err(QthermError::InvalidArgument(format!(
                "site set {sites:?} leaves the lattice of {} sites",
                self.n_sites
            )));
        }
        let want = self.site_dim.pow(sites.len() as u32);
        if op.nrows() != want {
            return Err(QthermError::ShapeMismatch(format!(
                "term on {} sites must be {want}x{want}",
                sites.len()
            )));
        }
        // reorder to ascending sites
        let dims = vec![self.site_dim; sites.len()];
        let positions: Vec<usize> = sites
            .iter()
            .map(|s| sorted.iter().position(|x| x == s).unwrap_or(0))
            .collect();
        let reordered = embed(&op, &dims, &positions)?;
        let slot = self
            .terms
            .entry(sorted)
            .or_insert_with(|| CMat::zeros(want, want));
        *slot += reordered;
        Ok(())
    }

    /// Same term on every translate of `offsets` that fits in the chain.
    pub fn add_translates(&mut self, offsets: &[usize], op: &CMat) -> Result<()> {
        let span = offsets.iter().copied().max().unwrap_or(0);
        for x in 0..self.n_sites.saturating_sub(span) {
            let sites: Vec<usize> = offsets.iter().map(|o| x + o).collect();
            self.add_term(&sites, op)?;
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &CMat)> {
        self.terms.iter()
    }

    /// Restriction of `Φ` to subsets of `region`.
    pub fn restrict(&self, region: &[usize]) -> Interaction {
        Interaction {
            n_sites: self.n_sites,
            site_dim: self.site_dim,
            terms: self
                .terms
                .iter()
                .filter(|(x, _)| x.iter().all(|s| region.contains(s)))
                .map(|(x, op)| (x.clone(), op.clone()))
                .collect(),
        }
    }
}

/// Operator on the sites `sites` (ascending, tensor order follows them).
#[derive(Debug, Clone)]
pub struct LocalOp {
    pub sites: Vec<usize>,
    pub op: CMat,
}

impl LocalOp {
    pub fn new(sites: Vec<usize>, op: CMat) -> Result<Self> {
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QthermError::InvalidArgument("sites must be ascending".into()));
        }
        Ok(LocalOp { sites, op })
    }

    /// Same operator on a larger ascending site set.
    pub fn extend_to(&self, sites: &[usize], site_dim: usize) -> Result<CMat> {
        let positions: Vec<usize> = self
            .sites
            .iter()
            .map(|s| {
                sites.iter().position(|x| x == s).ok_or_else(|| {
                    QthermError::InvalidArgument(format!("site {s} missing from target support"))
                })
            })
            .collect::<Result<_>>()?;
        if sites.is_empty() {
            return Ok(self.op.clone());
        }
        embed(&self.op, &vec![site_dim; sites.len()], &positions)
    }
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

fn check_cap(site_dim: usize, n: usize) -> Result<()> {
    let dim = (site_dim as u128).pow(n as u32);
    if dim > DEFAULT_MAX_DIM as u128 {
        return Err(QthermError::Overflow {
            dim: usize::try_from(dim).unwrap_or(usize::MAX),
            max: DEFAULT_MAX_DIM,
        });
    }
    Ok(())
}

/// `H_Λ(Φ) = Σ_{X ⊆ Λ} Φ(X)` on `⊗_{x∈Λ} 𝔥_x` (Λ sorted internally).
pub fn local_hamiltonian(phi: &Interaction, region: &[usize]) -> Result<CMat> {
    let mut lam = region.to_vec();
    lam.sort_unstable();
    lam.dedup();
    if lam.iter().any(|&x| x >= phi.n_sites) {
        return Err(QthermError::InvalidArgument("region leaves the lattice".into()));
    }
    check_cap(phi.site_dim, lam.len())?;
    let dim = phi.site_dim.pow(lam.len() as u32);
    let mut h = CMat::zeros(dim, dim);
    for (x, op) in &phi.terms {
        if x.iter().all(|s| lam.contains(s)) {
            h += LocalOp::new(x.clone(), op.clone())?.extend_to(&lam, phi.site_dim)?;
        }
    }
    Ok(h)
}

/// Largest absolute eigenvalue of a Hermitian matrix.
fn herm_norm(a: &CMat) -> Result<f64> {
    let e = eig_hermitian(a)?;
    Ok(e.values.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// `‖Φ‖_λ = Σ_{n≥0} e^{λn} sup_x Σ_{X∋x, |X|=n+1} ‖Φ(X)‖`.
pub fn sr_norm(phi: &Interaction, lambda: f64) -> Result<f64> {
    let mut per_size: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (x, op) in &phi.terms {
        let norm = herm_norm(op)?;
        let row = per_size
            .entry(x.len() - 1)
            .or_insert_with(|| vec![0.0; phi.n_sites]);
        for &s in x {
            row[s] += norm;
        }
    }
    Ok(per_size
        .iter()
        .map(|(&n, row)| (lambda * n as f64).exp() * row.iter().fold(0.0, |m: f64, &v| m.max(v)))
        .sum())
}

/// `δ_Φ(A) = i Σ_{X∩Λ_A≠∅} [Φ(X), A]`, supported on `Λ_A` together with the
/// contributing `X`.
pub fn derivation(phi: &Interaction, a: &LocalOp) -> Result<LocalOp> {
    let contributing: Vec<(&Vec<usize>, &CMat)> = phi
        .terms
        .iter()
        .filter(|(x, _)| x.iter().any(|s| a.sites.contains(s)))
        .collect();
    let support = contributing
        .iter()
        .fold(a.sites.clone(), |u, (x, _)| sorted_union(&u, x));
    check_cap(phi.site_dim, support.len())?;
    let a_big = a.extend_to(&support, phi.site_dim)?;
    let dim = a_big.nrows();
    let mut out = CMat::zeros(dim, dim);
    for (x, op) in contributing {
        let term = LocalOp::new(x.clone(), op.clone())?.extend_to(&support, phi.site_dim)?;
        out += linalg::commutator(&term, &a_big);
    }
    LocalOp::new(support, out * C64::new(0.0, 1.0))
}

/// `δ_Φ^n(A)`.
pub fn derivation_power(phi: &Interaction, a: &LocalOp, n: usize) -> Result<LocalOp> {
    (0..n).try_fold(a.clone(), |acc, _| derivation(phi, &acc))
}

/// `‖δ_Φ^n(A)‖ ≤ (2^n n!/λ^n) e^{λ|Λ_A|} ‖Φ‖_λ^n ‖A‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBound {
    pub lhs: f64,
    pub bound: f64,
    pub ok: bool,
}

pub const MAX_DERIVATIVE_ORDER: usize = 4;

pub fn derivative_bound_check(
    phi: &Interaction,
    lambda: f64,
    a: &LocalOp,
    n: usize,
) -> Result<DerivativeBound> {
    if n > MAX_DERIVATIVE_ORDER {
        return Err(QthermError::InvalidArgument(format!(
            "derivative order {n} exceeds {MAX_DERIVATIVE_ORDER}"
        )));
    }
    if lambda <= 0.0 {
        return Err(QthermError::InvalidArgument("lambda must be positive".into()));
    }
    let lhs = linalg::op_norm(&derivation_power(phi, a, n)?.op);
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let bound = 2f64.powi(n as i32) * fact / lambda.powi(n as i32)
        * (lambda * a.sites.len() as f64).exp()
        * sr_norm(phi, lambda)?.powi(n as i32)
        * linalg::op_norm(&a.op);
    Ok(DerivativeBound {
        lhs,
        bound,
        ok: lhs <= bound * (1.0 + 1e-9),
    })
}

/// `(1/|Λ|) log tr e^{−βH_Λ(Φ)}`.
pub fn finite_pressure(phi: &Interaction, region: &[usize], beta: f64) -> Result<f64> {
    if region.is_empty() {
        return Err(QthermError::InvalidArgument("pressure of the empty region".into()));
    }
    let h = local_hamiltonian(phi, region)?;
    Ok(pressure_from_eig(&eig_hermitian(&h)?, beta)? / region.len() as f64)
}

/// Finite-volume pressures on the growing boxes `{0, …, k−1}`; successive
/// differences are the convergence diagnostic.
pub fn pressure_sequence(phi: &Interaction, beta: f64, sizes: &[usize]) -> Result<Vec<(usize, f64)>> {
    sizes
        .iter()
        .map(|&k| {
            let region: Vec<usize> = (0..k).collect();
            Ok((k, finite_pressure(phi, &region, beta)?))
        })
        .collect()
}

/// Finite system `S` and reservoirs `R_j` at inverse temperatures `β_j`.
#[derive(Debug, Clone)]
pub struct OpenLatticePartition {
    pub system: Vec<usize>,
    pub reservoirs: Vec<Vec<usize>>,
    pub betas: Vec<f64>,
}

impl OpenLatticePartition {
    /// `Λ = S ∪ ⋃ R_j`, ascending.
    pub fn region(&self) -> Vec<usize> {
        self.reservoirs
            .iter()
            .fold(self.system.clone(), |u, r| sorted_union(&u, r))
    }

    pub fn validate(&self, phi: &Interaction) -> Result<()> {
        if self.reservoirs.len() != self.betas.len() {
            return Err(QthermError::InvalidArgument("one beta per reservoir".into()));
        }
        let total = self.system.len() + self.reservoirs.iter().map(Vec::len).sum::<usize>();
        let region = self.region();
        if region.len() != total {
            return Err(QthermError::InvalidArgument("partition blocks overlap".into()));
        }
        if region.iter().any(|&x| x >= phi.n_sites) {
            return Err(QthermError::InvalidArgument("partition leaves the lattice".into()));
        }
        for (x, _) in &phi.terms {
            let touched = self
                .reservoirs
                .iter()
                .filter(|r| x.iter().any(|s| r.contains(s)))
                .count();
            if touched > 1 {
                return Err(QthermError::InvalidArgument(format!(
                    "term on {x:?} couples two reservoirs"
                )));
            }
        }
        Ok(())
    }

    fn index_in_region(&self, sites: &[usize]) -> Vec<usize> {
        let region = self.region();
        sites
            .iter()
            .map(|s| region.iter().position(|x| x == s).unwrap_or(usize::MAX))
            .collect()
    }
}

/// The open lattice as an [`OpenSystem`]: factors are the sites of `Λ`,
/// parts are `S` and the `R_j` with Hamiltonians `H_S`, `H_{Λ_j}(Φ_j)`,
/// couplings are the remaining terms inside `Λ`.
pub fn to_open_system(phi: &Interaction, part: &OpenLatticePartition) -> Result<OpenSystem> {
    part.validate(phi)?;
    let region = part.region();
    let dims = vec![phi.site_dim; region.len()];
    let mut parts = Vec::new();
    if !part.system.is_empty() {
        let mut s = part.system.clone();
        s.sort_unstable();
        parts.push(Part::system("S", part.index_in_region(&s), local_hamiltonian(phi, &s)?));
    }
    for (j, (r, &b)) in part.reservoirs.iter().zip(&part.betas).enumerate() {
        let mut r = r.clone();
        r.sort_unstable();
        parts.push(Part::reservoir(
            &format!("R{}", j + 1),
            part.index_in_region(&r),
            local_hamiltonian(phi, &r)?,
            b,
        ));
    }
    let blocks: Vec<&Vec<usize>> = std::iter::once(&part.system).chain(&part.reservoirs).collect();
    let mut couplings = Vec::new();
    for (x, op) in &phi.terms {
        let inside = x.iter().all(|s| region.contains(s));
        let within_block = blocks.iter().any(|b| x.iter().all(|s| b.contains(s)));
        if inside && !within_block {
            couplings.push(Coupling::new(part.index_in_region(x), op.clone()));
        }
    }
    OpenSystem::new(dims, parts, couplings)
}

/// Entropy production observable of the open lattice and its entropy
/// balance at time `t`.
#[derive(Debug, Clone)]
pub struct LatticeEp {
    /// `σ_Λ = i Σ_j β_j [H_Λ(Φ), H_{Λ_j}(Φ_j)]`.
    pub sigma: CMat,
    /// `|σ_Λ + i Σ_j β_j [H_{Λ_j}, V_{j,Λ}]|_F`.
    pub form_defect: f64,
    pub balance: EntropyBalance,
}

pub fn open_lattice_ep(
    phi: &Interaction,
    part: &OpenLatticePartition,
    t: f64,
    quad: &QuadSpec,
) -> Result<LatticeEp> {
    part.validate(phi)?;
    let region = part.region();
    let h = local_hamiltonian(phi, &region)?;
    let i = C64::new(0.0, 1.0);
    let d = h.nrows();
    let mut sigma = CMat::zeros(d, d);
    let mut second = CMat::zeros(d, d);
    for (r, &b) in part.reservoirs.iter().zip(&part.betas) {
        let mut r = r.clone();
        r.sort_unstable();
        let hj = LocalOp::new(r.clone(), local_hamiltonian(phi, &r)?)?.extend_to(&region, phi.site_dim)?;
        sigma += linalg::commutator(&h, &hj) * (i * b);
        // V_{j,Λ}: terms inside Λ meeting R_j but not contained in it
        let mut vj = CMat::zeros(d, d);
        for (x, op) in &phi.terms {
            let inside = x.iter().all(|s| region.contains(s));
            let meets = x.iter().any(|s| r.contains(s));
            let within = x.iter().all(|s| r.contains(s));
            if inside && meets && !within {
                vj += LocalOp::new(x.clone(), op.clone())?.extend_to(&region, phi.site_dim)?;
            }
        }
        second -= linalg::commutator(&hj, &vj) * (i * b);
    }
    let form_defect = linalg::frobenius(&(&sigma - &second));

    let sys = to_open_system(phi, part)?;
    let eig = sys.qds().hamiltonian_eig();
    let w0 = eig.to_eigenbasis(sys.state().matrix());
    let sig = eig.to_eigenbasis(&sigma);
    let e = &eig.values;
    let integrand = |s: f64| {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..d {
            for b in 0..d {
                acc += C64::from_polar(1.0, -s * (e[a] - e[b])) * w0[(a, b)] * sig[(b, a)];
            }
        }
        acc.re
    };
    let integral = adaptive_simpson(integrand, 0.0, t, quad)?;
    let ent = relative_entropy(&sys.qds().evolved_state(t)?, sys.state()).unwrap_finite();
    Ok(LatticeEp {
        sigma,
        form_defect,
        balance: EntropyBalance {
            ent,
            integral,
            defect: (ent + integral).abs(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, from_real_diag, identity, kron, pauli};
    use crate::openqs::build_fluxes;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ising(n: usize, j: f64, h: f64) -> Interaction {
        let mut phi = Interaction::new(n, 2);
        let zz = kron(&pauli::z(), &pauli::z()).unwrap().scale(j);
        phi.add_translates(&[0, 1], &zz).unwrap();
        if h != 0.0 {
            phi.add_translates(&[0], &pauli::z().scale(h)).unwrap();
        }
        phi
    }

    fn xy_chain(n: usize) -> Interaction {
        let mut phi = Interaction::new(n, 2);
        let hop = (kron(&pauli::x(), &pauli::x()).unwrap() + kron(&pauli::y(), &pauli::y()).unwrap())
            .scale(0.5);
        phi.add_translates(&[0, 1], &hop).unwrap();
        for x in 0..n {
            phi.add_term(&[x], &pauli::z().scale(0.5 + 0.2 * x as f64)).unwrap();
        }
        phi
    }

    #[test]
    fn local_hamiltonian_examples() {
        let phi = ising(3, 1.0, 0.0);
        let h0 = local_hamiltonian(&phi, &[]).unwrap();
        assert_eq!((h0.nrows(), h0[(0, 0)]), (1, C64::new(0.0, 0.0)));

        let mut field = Interaction::new(3, 2);
        field.add_translates(&[0], &pauli::z()).unwrap();
        let h = local_hamiltonian(&field, &[0, 1, 2]).unwrap();
        let want = linalg::embed(&pauli::z(), &[2, 2, 2], &[0]).unwrap()
            + linalg::embed(&pauli::z(), &[2, 2, 2], &[1]).unwrap()
            + linalg::embed(&pauli::z(), &[2, 2, 2], &[2]).unwrap();
        assert!(frobenius(&(h - want)) < 1e-15);

        // σ_zσ_z pairs on a 3-chain: s0 s1 + s1 s2 with s = ±1 (bit 0 ↦ +1)
        let h = local_hamiltonian(&phi, &[0, 1, 2]).unwrap();
        let diag: Vec<f64> = (0..8)
            .map(|k| {
                let s = |b: usize| if (k >> (2 - b)) & 1 == 0 { 1.0 } else { -1.0 };
                s(0) * s(1) + s(1) * s(2)
            })
            .collect();
        assert!(frobenius(&(h - from_real_diag(&diag))) < 1e-15);
        assert_eq!(&diag[..4], &[2.0, 0.0, -2.0, 0.0]);

        // monotone assembly: H_Λ = H_Λ' ⊗ 1 + cross terms
        let big = local_hamiltonian(&phi, &[0, 1, 2]).unwrap();
        let small = kron(&local_hamiltonian(&phi, &[0, 1]).unwrap(), &identity(2)).unwrap();
        let cross = linalg::embed(&kron(&pauli::z(), &pauli::z()).unwrap(), &[2, 2, 2], &[1, 2]).unwrap();
        assert!(frobenius(&(big - small - cross)) < 1e-15);
    }

    #[test]
    fn unordered_term_sites_are_reordered() {
        let mut a = Interaction::new(2, 2);
        a.add_term(&[1, 0], &kron(&pauli::x(), &pauli::z()).unwrap()).unwrap();
        let mut b = Interaction::new(2, 2);
        b.add_term(&[0, 1], &kron(&pauli::z(), &pauli::x()).unwrap()).unwrap();
        let ha = local_hamiltonian(&a, &[0, 1]).unwrap();
        let hb = local_hamiltonian(&b, &[0, 1]).unwrap();
        assert!(frobenius(&(ha - hb)) < 1e-15);
        assert!(a.add_term(&[0, 5], &identity(4)).is_err());
        assert!(a.add_term(&[0, 1], &identity(2)).is_err());
    }

    #[test]
    fn dimension_cap() {
        let phi = Interaction::new(13, 2);
        let all: Vec<usize> = (0..13).collect();
        assert!(matches!(local_hamiltonian(&phi, &all), Err(QthermError::Overflow { .. })));
    }

    #[test]
    fn sr_norm_examples() {
        assert_eq!(sr_norm(&Interaction::new(4, 2), 1.0).unwrap(), 0.0);
        let mut field = Interaction::new(4, 2);
        field.add_translates(&[0], &pauli::z()).unwrap();
        for l in [0.1, 1.0, 3.0] {
            assert!((sr_norm(&field, l).unwrap() - 1.0).abs() < 1e-14);
        }
        let j: f64 = -0.7;
        let phi = ising(5, j, 0.0);
        let got = sr_norm(&phi, 1.0).unwrap();
        assert!((got - 1f64.exp() * 2.0 * j.abs()).abs() < 1e-13);
        assert!(sr_norm(&phi, 2.0).unwrap() > got);
    }

    #[test]
    fn derivation_examples() {
        let mut field = Interaction::new(2, 2);
        field.add_translates(&[0], &pauli::z()).unwrap();
        let a = LocalOp::new(vec![0], pauli::x()).unwrap();
        let d = derivation(&field, &a).unwrap();
        assert_eq!(d.sites, vec![0]);
        assert!(frobenius(&(d.op - pauli::y().scale(-2.0))) < 1e-15);

        let z = LocalOp::new(vec![1], pauli::z()).unwrap();
        assert!(frobenius(&derivation(&ising(3, 1.0, 0.5), &z).unwrap().op) < 1e-15);

        let phi = xy_chain(4);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = LocalOp::new(vec![1, 2], random::matrix(4, &mut rng)).unwrap();
        let b = LocalOp::new(vec![1, 2], random::matrix(4, &mut rng)).unwrap();
        let ab = LocalOp::new(vec![1, 2], &a.op * &b.op).unwrap();
        let dab = derivation(&phi, &ab).unwrap();
        let (da, db) = (derivation(&phi, &a).unwrap(), derivation(&phi, &b).unwrap());
        let sup = dab.sites.clone();
        let ext = |o: &LocalOp| o.extend_to(&sup, 2).unwrap();
        let leibniz = ext(&da) * ext(&b) + ext(&a) * ext(&db);
        assert!(frobenius(&(ext(&dab) - leibniz)) < 1e-11);
        // δ(A)† = δ(A†)
        let adag = LocalOp::new(vec![1, 2], a.op.adjoint()).unwrap();
        let lhs = derivation(&phi, &a).unwrap().op.adjoint();
        assert!(frobenius(&(lhs - derivation(&phi, &adag).unwrap().op)) < 1e-12);
    }

    #[test]
    fn derivative_bounds() {
        let a = LocalOp::new(vec![1], pauli::x()).unwrap();
        let phi = ising(4, 1.0, 0.3);
        let r0 = derivative_bound_check(&phi, 1.0, &a, 0).unwrap();
        assert!(r0.ok && (r0.lhs - 1.0).abs() < 1e-14 && (r0.bound - 1f64.exp()).abs() < 1e-14);
        let zero = Interaction::new(4, 2);
        for n in 1..=3 {
            let r = derivative_bound_check(&zero, 1.0, &a, n).unwrap();
            assert!(r.ok && r.lhs == 0.0 && r.bound == 0.0);
        }
        let r = derivative_bound_check(&phi, 1.0, &a, 2).unwrap();
        assert!(r.ok && r.lhs > 0.0, "{r:?}");
        for n in 1..=3 {
            for lambda in [0.5, 1.0, 2.0] {
                assert!(derivative_bound_check(&xy_chain(4), lambda, &a, n).unwrap().ok);
            }
        }
        assert!(derivative_bound_check(&phi, 1.0, &a, 5).is_err());
    }

    #[test]
    fn taylor_series_within_analyticity_radius() {
        let phi = xy_chain(4);
        let lambda = 1.0;
        let radius = lambda / (2.0 * sr_norm(&phi, lambda).unwrap());
        let t = 0.4 * radius;
        let a = LocalOp::new(vec![1], pauli::x()).unwrap();
        let all: Vec<usize> = (0..4).collect();
        let h = local_hamiltonian(&phi, &all).unwrap();
        let u = linalg::unitary_propagator(&eig_hermitian(&h).unwrap(), t);
        let a_full = a.extend_to(&all, 2).unwrap();
        let exact = &u * &a_full * u.adjoint();
        let mut sum = CMat::zeros(16, 16);
        let mut term = a.clone();
        let mut fact = 1.0;
        for n in 0..=8 {
            if n > 0 {
                fact *= n as f64;
                term = derivation(&phi, &term).unwrap();
            }
            sum += term.extend_to(&all, 2).unwrap().scale(t.powi(n) / fact);
        }
        assert!(linalg::op_norm(&(sum - exact)) < 1e-4);
    }

    #[test]
    fn pressure_examples() {
        let zero = Interaction::new(3, 2);
        assert!((finite_pressure(&zero, &[0, 1, 2], 1.3).unwrap() - 2f64.ln()).abs() < 1e-14);
        let (h, beta): (f64, f64) = (0.8, 1.7);
        let mut field = Interaction::new(3, 2);
        field.add_translates(&[0], &pauli::z().scale(h)).unwrap();
        let got = finite_pressure(&field, &[0, 1, 2], beta).unwrap();
        assert!((got - (2.0 * (beta * h).cosh()).ln()).abs() < 1e-13);

        // transfer-matrix oracle for the open Ising chain
        let (j, n) = (0.6, 6);
        let phi = ising(n, j, 0.0);
        let region: Vec<usize> = (0..n).collect();
        let tm = nalgebra::Matrix2::new(
            (-beta * j).exp(),
            (beta * j).exp(),
            (beta * j).exp(),
            (-beta * j).exp(),
        );
        let ones = nalgebra::Vector2::new(1.0, 1.0);
        let z = ones.dot(&(tm.pow((n - 1) as u32) * ones));
        let got = finite_pressure(&phi, &region, beta).unwrap();
        assert!((got - z.ln() / n as f64).abs() < 1e-13);

        let seq = pressure_sequence(&ising(8, j, 0.0), beta, &[2, 4, 6, 8]).unwrap();
        let diffs: Vec<f64> = seq.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
        assert!(diffs.windows(2).all(|d| d[1] <= d[0] + 1e-14));
    }

    fn three_chain_partition() -> OpenLatticePartition {
        OpenLatticePartition {
            system: vec![1],
            reservoirs: vec![vec![0], vec![2]],
            betas: vec![0.5, 2.0],
        }
    }

    #[test]
    fn open_lattice_examples() {
        let q = QuadSpec::with_tol(1e-10);
        let mut uncoupled = Interaction::new(3, 2);
        uncoupled.add_translates(&[0], &pauli::z()).unwrap();
        let r = open_lattice_ep(&uncoupled, &three_chain_partition(), 1.0, &q).unwrap();
        assert!(frobenius(&r.sigma) < 1e-15);

        let phi = xy_chain(3);
        let part = three_chain_partition();
        let r = open_lattice_ep(&phi, &part, 2.0, &q).unwrap();
        assert!(linalg::hermitian_defect(&r.sigma) < 1e-14);
        assert!(r.form_defect < 1e-11);
        assert!(r.balance.defect < 1e-7, "{:?}", r.balance);
        assert!(r.balance.integral > 1e-4);

        // cross-module oracle
        let sys = to_open_system(&phi, &part).unwrap();
        let fl = build_fluxes(&sys).unwrap();
        assert!(frobenius(&(fl.sigma - &r.sigma)) < 1e-10);

        // equilibrium: mean of σ in the coupled Gibbs state vanishes
        let eq = OpenLatticePartition {
            betas: vec![1.0, 1.0],
            ..part.clone()
        };
        let r = open_lattice_ep(&phi, &eq, 1.0, &q).unwrap();
        let h = local_hamiltonian(&phi, &[0, 1, 2]).unwrap();
        let g = crate::qstate::gibbs(&crate::qstate::GibbsSpec::new(h, 1.0).unwrap()).unwrap();
        assert!(g.expect(&r.sigma).norm() < 1e-13);
    }

    #[test]
    fn partition_validation() {
        let mut phi = xy_chain(3);
        let overlapping = OpenLatticePartition {
            system: vec![1],
            reservoirs: vec![vec![0, 1]],
            betas: vec![1.0],
        };
        assert!(overlapping.validate(&phi).is_err());
        phi.add_term(&[0, 2], &kron(&pauli::z(), &pauli::z()).unwrap()).unwrap();
        assert!(three_chain_partition().validate(&phi).is_err());
    }

    #[test]
    fn sigma_stabilizes_for_range_one() {
        let phi = xy_chain(6);
        let small = OpenLatticePartition {
            system: vec![3],
            reservoirs: vec![vec![1, 2], vec![4, 5]],
            betas: vec![0.5, 2.0],
        };
        let big = OpenLatticePartition {
            system: vec![3],
            reservoirs: vec![vec![0, 1, 2], vec![4, 5]],
            betas: vec![0.5, 2.0],
        };
        let q = QuadSpec::with_tol(1e-6);
        let s_small = open_lattice_ep(&phi, &small, 0.0, &q).unwrap().sigma;
        let s_big = open_lattice_ep(&phi, &big, 0.0, &q).unwrap().sigma;
        let lifted = LocalOp::new(small.region(), s_small)
            .unwrap()
            .extend_to(&big.region(), 2)
            .unwrap();
        assert!(frobenius(&(s_big - lifted)) < 1e-12);
    }
}
