//! Fermions at finite mode count: Jordan–Wigner CAR algebra, gauge-invariant
//! quasi-free states, characteristic functions and the Araki–Wyss doubled
//! representation.
//!
//! Conventions: `a_k = σ_z ⊗ … ⊗ σ_z ⊗ |1⟩⟨0| ⊗ 1 ⊗ …` (so the vacuum is
//! `|1…1⟩` and `σ_z^{(k)} = 2a_k†a_k − 1`), `a(f) = Σ f̄_k a_k` is antilinear
//! in `f`, `a†(f) = Σ f_k a_k†` and `dΓ(h) = Σ h_ij a_i† a_j`. With these,
//! `ω_T(a†(f)a(g)) = (g|Tf)` and `Γ(e^h) = e^{dΓ(h)}`.

use crate::error::{QthermError, Result};
use crate::linalg::{self, dagger, eig_hermitian, CMat, C64};
use crate::qdyn::FiniteQDS;
use crate::qstate::{von_neumann_entropy, DensityMatrix};
use nalgebra::DVector;

pub const MAX_MODES: usize = 12;
/// Symbol eigenvalues must lie in `[−SYMBOL_TOL, 1 + SYMBOL_TOL]`.
pub const SYMBOL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FermionAlgebra {
    n: usize,
    a: Vec<CMat>,
}

pub fn jordan_wigner(n: usize) -> Result<FermionAlgebra> {
    if n == 0 || n > MAX_MODES {
        return Err(QthermError::Overflow {
            dim: 1usize << n.min(63),
            max: 1 << MAX_MODES,
        });
    }
    let lower = {
        let mut m = CMat::zeros(2, 2);
        m[(1, 0)] = C64::new(1.0, 0.0);
        m
    };
    let z = linalg::pauli::z();
    let id = linalg::identity(2);
    let a = (0..n)
        .map(|k| {
            let factors: Vec<CMat> = (0..n)
                .map(|j| match j.cmp(&k) {
                    std::cmp::Ordering::Less => z.clone(),
                    std::cmp::Ordering::Equal => lower.clone(),
                    std::cmp::Ordering::Greater => id.clone(),
                })
                .collect();
            linalg::kron_all(&factors)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FermionAlgebra { n, a })
}

impl FermionAlgebra {
    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn fock_dim(&self) -> usize {
        1 << self.n
    }

    pub fn annihilators(&self) -> &[CMat] {
        &self.a
    }

    pub fn a(&self, k: usize) -> &CMat {
        &self.a[k]
    }

    pub fn a_dag(&self, k: usize) -> CMat {
        dagger(&self.a[k])
    }

    fn check_vec(&self, f: &[C64]) -> Result<()> {
        if f.len() != self.n {
            return Err(QthermError::ShapeMismatch(format!(
                "mode vector of length {} for {} modes",
                f.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// `a(f) = Σ f̄_k a_k`.
    pub fn a_of(&self, f: &[C64]) -> Result<CMat> {
        self.check_vec(f)?;
        let d = self.fock_dim();
        Ok(f.iter()
            .zip(&self.a)
            .fold(CMat::zeros(d, d), |acc, (fk, ak)| acc + ak * fk.conj()))
    }

    pub fn a_dag_of(&self, f: &[C64]) -> Result<CMat> {
        Ok(dagger(&self.a_of(f)?))
    }

    /// Field operator `φ(f) = (a(f) + a†(f))/√2`.
    pub fn field(&self, f: &[C64]) -> Result<CMat> {
        let a = self.a_of(f)?;
        Ok((&a + dagger(&a)).unscale(std::f64::consts::SQRT_2))
    }

    /// `dΓ(h) = Σ h_ij a_i† a_j`.
    pub fn second_quantize(&self, h: &CMat) -> Result<CMat> {
        if h.nrows() != self.n || h.ncols() != self.n {
            return Err(QthermError::ShapeMismatch("one-particle operator has wrong size".into()));
        }
        let d = self.fock_dim();
        let mut out = CMat::zeros(d, d);
        for i in 0..self.n {
            let ai_dag = self.a_dag(i);
            for j in 0..self.n {
                if h[(i, j)] != C64::new(0.0, 0.0) {
                    out += &ai_dag * &self.a[j] * h[(i, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn number_operator(&self) -> CMat {
        self.second_quantize(&linalg::identity(self.n))
            .expect("identity has the mode dimension")
    }

    /// `Γ(u) = exp(dΓ(log u))` for invertible `u`.
    pub fn gamma(&self, u: &CMat) -> Result<CMat> {
        Ok(linalg::expm(&self.second_quantize(&linalg::logm(u)?)?))
    }

    /// `|1…1⟩`, annihilated by every `a_k`.
    pub fn vacuum(&self) -> DVector<C64> {
        let mut v = DVector::zeros(self.fock_dim());
        v[self.fock_dim() - 1] = C64::new(1.0, 0.0);
        v
    }

    /// Largest CAR defect over all pairs.
    pub fn car_defect(&self) -> f64 {
        let d = self.fock_dim();
        let id = linalg::identity(d);
        let mut worst: f64 = 0.0;
        for j in 0..self.n {
            for k in 0..self.n {
                let aa = linalg::anticommutator(&self.a[j], &self.a[k]);
                let mut ad = linalg::anticommutator(&self.a[j], &self.a_dag(k));
                if j == k {
                    ad -= &id;
                }
                worst = worst.max(linalg::max_abs(&aa)).max(linalg::max_abs(&ad));
            }
        }
        worst
    }

    /// `max_k ‖σ_z^{(k)} − (2a_k†a_k − 1)‖`.
    pub fn inversion_defect(&self) -> Result<f64> {
        let d = self.fock_dim();
        let dims = vec![2; self.n];
        let mut worst: f64 = 0.0;
        for k in 0..self.n {
            let z = linalg::embed(&linalg::pauli::z(), &dims, &[k])?;
            let rebuilt = (self.a_dag(k) * &self.a[k]).scale(2.0) - linalg::identity(d);
            worst = worst.max(linalg::max_abs(&(z - rebuilt)));
        }
        Ok(worst)
    }
}

fn check_symbol(t: &CMat, n: usize) -> Result<linalg::HermitianEig> {
    if t.nrows() != n || t.ncols() != n {
        return Err(QthermError::ShapeMismatch("symbol has wrong size".into()));
    }
    let eig = eig_hermitian(t)?;
    let (lo, hi) = (eig.values[0], eig.values[n - 1]);
    if lo < -SYMBOL_TOL || hi > 1.0 + SYMBOL_TOL {
        return Err(QthermError::SymbolRange(format!(
            "spectrum [{lo:.3e}, {hi:.3e}] not in [0, 1]"
        )));
    }
    Ok(eig)
}

#[derive(Debug, Clone)]
pub struct QuasiFreeState {
    symbol: CMat,
    rho: DensityMatrix,
}

impl QuasiFreeState {
    pub fn symbol(&self) -> &CMat {
        &self.symbol
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn expect(&self, a: &CMat) -> C64 {
        self.rho.expect(a)
    }

    /// `ω(a†(f)a(g))`.
    pub fn two_point(&self, alg: &FermionAlgebra, f: &[C64], g: &[C64]) -> Result<C64> {
        Ok(self.expect(&(alg.a_dag_of(f)? * alg.a_of(g)?)))
    }
}

/// Density matrix of `ω_T`. Eigenvalues of `T` equal to 0 or 1 (within
/// [`SYMBOL_TOL`]) give pure factors built directly in the eigenmodes of `T`.
pub fn quasi_free_state(alg: &FermionAlgebra, t: &CMat) -> Result<QuasiFreeState> {
    let n = alg.n_modes();
    let eig = check_symbol(t, n)?;
    // ρ = Π_k ((1−t_k) b_k b_k† + t_k b_k† b_k) in the eigenmode operators b_k
    let d = alg.fock_dim();
    let id = linalg::identity(d);
    let mut rho = id.clone();
    for k in 0..n {
        let fk: Vec<C64> = eig.vectors.column(k).iter().copied().collect();
        let b = alg.a_of(&fk)?;
        let bd = dagger(&b);
        let occ = &bd * &b;
        let tk = eig.values[k].clamp(0.0, 1.0);
        let factor = (&id - &occ).scale(1.0 - tk) + occ.scale(tk);
        rho = rho * factor;
    }
    let rho = linalg::hermitian_part_checked(&rho)?;
    Ok(QuasiFreeState {
        symbol: t.clone(),
        rho: DensityMatrix::new(rho)?,
    })
}

/// Same state through `exp(dΓ(s))/Z`, `s = log(T(1−T)^{−1})`; needs `0 < T < 1`.
pub fn quasi_free_state_exponential(alg: &FermionAlgebra, t: &CMat) -> Result<DensityMatrix> {
    let eig = check_symbol(t, alg.n_modes())?;
    if eig.values[0] <= 0.0 || eig.values[alg.n_modes() - 1] >= 1.0 {
        return Err(QthermError::SymbolRange("exponential form needs 0 < T < 1".into()));
    }
    let s = eig.map(|x| (x / (1.0 - x)).ln());
    let ds = linalg::hermitian_part_checked(&alg.second_quantize(&s)?)?;
    DensityMatrix::from_unnormalized(linalg::mat_fn(&ds, f64::exp)?)
}

/// `E(u) = det(1 + (u − 1)T)`.
pub fn characteristic_fn(state: &QuasiFreeState, u: &CMat) -> C64 {
    let n = state.symbol.nrows();
    let m = linalg::identity(n) + (u - linalg::identity(n)) * &state.symbol;
    m.determinant()
}

/// `ω(Γ(u))` by a Fock-space trace.
pub fn characteristic_fn_direct(alg: &FermionAlgebra, state: &QuasiFreeState, u: &CMat) -> Result<C64> {
    Ok(state.expect(&alg.gamma(u)?))
}

/// `T = (1 + e^{βh})^{−1}`.
pub fn fermi_dirac(h: &CMat, beta: f64) -> Result<CMat> {
    linalg::mat_fn(h, |x| 1.0 / (1.0 + (beta * x).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsReport {
    /// `max_k ‖e^{itH}a_k e^{−itH} − a(e^{ith}e_k)‖`.
    pub bogoliubov_defect: f64,
    /// KMS defect of `ω_T` under `dΓ(h)` when `T` is a Fermi–Dirac symbol.
    pub kms_defect: Option<f64>,
}

/// Bogoliubov covariance of `dΓ(h)`; with `beta` given, also checks that the
/// Fermi–Dirac state is `β`-KMS on the mode operators.
pub fn quasi_free_dynamics_check(
    alg: &FermionAlgebra,
    h: &CMat,
    t: f64,
    beta: Option<f64>,
) -> Result<DynamicsReport> {
    let n = alg.n_modes();
    let big_h = linalg::hermitian_part_checked(&alg.second_quantize(h)?)?;
    let big_eig = eig_hermitian(&big_h)?;
    let big_u = linalg::unitary_propagator(&big_eig, t);
    let small_u = linalg::unitary_propagator(&eig_hermitian(h)?, t);
    let mut bogoliubov_defect: f64 = 0.0;
    for k in 0..n {
        let moved = &big_u * alg.a(k) * dagger(&big_u);
        let fk: Vec<C64> = small_u.column(k).iter().copied().collect();
        bogoliubov_defect = bogoliubov_defect.max(linalg::max_abs(&(moved - alg.a_of(&fk)?)));
    }
    let kms_defect = match beta {
        None => None,
        Some(b) => {
            let state = quasi_free_state(alg, &fermi_dirac(h, b)?)?;
            let sys = FiniteQDS::new(big_h.clone(), state.density().clone())?;
            let grid = [-1.0, 0.0, 0.5, 1.5];
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let ai_dag = alg.a_dag(i);
                    worst = worst.max(sys.kms_check(b, &ai_dag, alg.a(j), &grid)?);
                    worst = worst.max(sys.kms_check(b, alg.a(i), &alg.a_dag(j), &grid)?);
                }
            }
            Some(worst)
        }
    };
    Ok(DynamicsReport {
        bogoliubov_defect,
        kms_defect,
    })
}

/// Signed sum over perfect pairings `Σ_π sgn(π) Π ω(φ_i φ_j)` of the given
/// two-point matrix (only `i < j` entries are read).
pub fn pairing_sum(two_point: &CMat) -> C64 {
    fn rec(two: &CMat, rest: &mut Vec<usize>) -> C64 {
        if rest.is_empty() {
            return C64::new(1.0, 0.0);
        }
        let first = rest.remove(0);
        let mut total = C64::new(0.0, 0.0);
        for pos in 0..rest.len() {
            let partner = rest.remove(pos);
            // crossing `pos` earlier elements gives sign (−1)^pos
            let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
            total += two[(first, partner)] * rec(two, rest) * sign;
            rest.insert(pos, partner);
        }
        rest.insert(0, first);
        total
    }
    let m = two_point.nrows();
    if m % 2 == 1 {
        return C64::new(0.0, 0.0);
    }
    rec(two_point, &mut (0..m).collect())
}

/// `|ω(φ(f_1)⋯φ(f_m)) − pairing sum|` for a quasi-free state.
pub fn wick_defect(alg: &FermionAlgebra, state: &QuasiFreeState, fs: &[Vec<C64>]) -> Result<f64> {
    let fields = fs.iter().map(|f| alg.field(f)).collect::<Result<Vec<_>>>()?;
    let m = fields.len();
    let mut two = CMat::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            two[(i, j)] = state.expect(&(&fields[i] * &fields[j]));
        }
    }
    let d = alg.fock_dim();
    let product = fields.iter().fold(linalg::identity(d), |acc, f| acc * f);
    Ok((state.expect(&product) - pairing_sum(&two)).norm())
}

/// Entropy gap `max_ε S(ρ_ε) − S(ρ_T)` for two modes with diagonal `T`,
/// where `ρ_ε` adds correlations `ε(+1,−1,−1,+1)` on the occupation basis
/// without changing the occupations. Nonpositive values are consistent with
/// maximal entropy of the quasi-free state.
pub fn max_entropy_gap(t_diag: [f64; 2], eps_grid: &[f64]) -> Result<f64> {
    let alg = jordan_wigner(2)?;
    let state = quasi_free_state(&alg, &linalg::from_real_diag(&t_diag))?;
    let s0 = von_neumann_entropy(state.density());
    let n0 = alg.a_dag(0) * alg.a(0);
    let n1 = alg.a_dag(1) * alg.a(1);
    let id = linalg::identity(4);
    let parity = (&id - n0.scale(2.0)) * (&id - n1.scale(2.0));
    let mut worst = f64::NEG_INFINITY;
    for &eps in eps_grid {
        let m = state.density().matrix() + parity.scale(eps);
        if let Ok(rho) = DensityMatrix::new(m) {
            worst = worst.max(von_neumann_entropy(&rho) - s0);
        }
    }
    Ok(worst)
}

/// Araki–Wyss representation of the CAR algebra over `n` modes on `2n`
/// Jordan–Wigner modes, `π_T(a(f)) = a(√(1−T)f ⊕ 0) + a†(0 ⊕ conj(√T f))`
/// with the vacuum as cyclic vector. Complex conjugation is taken in the
/// computational basis.
#[derive(Debug, Clone)]
pub struct ArakiWyss {
    n: usize,
    doubled: FermionAlgebra,
    pi_a: Vec<CMat>,
    s: CMat,
}

pub fn araki_wyss_rep(t: &CMat) -> Result<ArakiWyss> {
    let n = t.nrows();
    let eig = check_symbol(t, n)?;
    if eig.values[0] <= 0.0 || eig.values[n - 1] >= 1.0 {
        return Err(QthermError::SymbolRange("Araki-Wyss needs 0 < T < 1".into()));
    }
    let doubled = jordan_wigner(2 * n)?;
    let sqrt_1mt = eig.map(|x| (1.0 - x).sqrt());
    let sqrt_t = eig.map(f64::sqrt);
    let pi_a = (0..n)
        .map(|k| {
            let mut left = vec![C64::new(0.0, 0.0); 2 * n];
            let mut right = vec![C64::new(0.0, 0.0); 2 * n];
            for i in 0..n {
                left[i] = sqrt_1mt[(i, k)];
                right[n + i] = sqrt_t[(i, k)].conj();
            }
            Ok(doubled.a_of(&left)? + doubled.a_dag_of(&right)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let s = eig.map(|x| (x / (1.0 - x)).ln());
    Ok(ArakiWyss { n, doubled, pi_a, s })
}

impl ArakiWyss {
    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn doubled(&self) -> &FermionAlgebra {
        &self.doubled
    }

    /// `π_T(a(f))`.
    pub fn pi_a_of(&self, f: &[C64]) -> Result<CMat> {
        if f.len() != self.n {
            return Err(QthermError::ShapeMismatch("mode vector has wrong length".into()));
        }
        let d = self.doubled.fock_dim();
        Ok(f.iter()
            .zip(&self.pi_a)
            .fold(CMat::zeros(d, d), |acc, (fk, a)| acc + a * fk.conj()))
    }

    pub fn vacuum_expect(&self, a: &CMat) -> C64 {
        let omega = self.doubled.vacuum();
        omega.dotc(&(a * &omega))
    }

    /// `Δ = Γ(e^s ⊕ e^{−s̄})`.
    pub fn modular_operator(&self) -> Result<CMat> {
        let n = self.n;
        let mut gen = CMat::zeros(2 * n, 2 * n);
        gen.view_mut((0, 0), (n, n)).copy_from(&self.s);
        gen.view_mut((n, n), (n, n)).copy_from(&self.s.map(|z| -z.conj()));
        let dg = linalg::hermitian_part_checked(&self.doubled.second_quantize(&gen)?)?;
        linalg::mat_fn(&dg, f64::exp)
    }

    /// Monomials `Π_{i∈I} π(a_i)† Π_{j∈J} π(a_j)`: a linear basis of the
    /// represented algebra.
    pub fn algebra_basis(&self) -> Vec<CMat> {
        let d = self.doubled.fock_dim();
        let mut out = Vec::with_capacity(1 << (2 * self.n));
        for creators in 0..(1usize << self.n) {
            for annihilators in 0..(1usize << self.n) {
                let mut m = linalg::identity(d);
                for i in 0..self.n {
                    if creators >> i & 1 == 1 {
                        m *= dagger(&self.pi_a[i]);
                    }
                }
                for j in 0..self.n {
                    if annihilators >> j & 1 == 1 {
                        m *= &self.pi_a[j];
                    }
                }
                out.push(m);
            }
        }
        out
    }

    /// Builds the Tomita map `S: AΩ ↦ A†Ω` from the algebra basis and checks
    /// that `J = SΔ^{−1/2}` is an antiunitary involution, i.e. that
    /// `JΔ^{1/2}AΩ = A†Ω` with `J` antiunitary. Returns
    /// `max(‖M_J M_J† − 1‖, ‖M_J M̄_J − 1‖)`, where `J x = M_J x̄`.
    pub fn modular_defect(&self) -> Result<f64> {
        let d = self.doubled.fock_dim();
        let omega = self.doubled.vacuum();
        let basis = self.algebra_basis();
        let mut v = CMat::zeros(d, basis.len());
        let mut w = CMat::zeros(d, basis.len());
        for (k, a) in basis.iter().enumerate() {
            v.set_column(k, &(a * &omega));
            w.set_column(k, &(dagger(a) * &omega));
        }
        let v_inv = v
            .try_inverse()
            .ok_or_else(|| QthermError::DomainError("vacuum is not cyclic".into()))?;
        // S x = W conj(V^{-1} x) = W conj(V^{-1}) conj(x)
        let m_s = w * v_inv.map(|z| z.conj());
        let delta_inv_half = linalg::mat_fn(&self.modular_operator()?, |x| x.powf(-0.5))?;
        let m_j = m_s * delta_inv_half.map(|z| z.conj());
        let id = linalg::identity(d);
        let unitary = linalg::max_abs(&(&m_j * dagger(&m_j) - &id));
        let involution = linalg::max_abs(&(&m_j * m_j.map(|z| z.conj()) - &id));
        Ok(unitary.max(involution))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cv(xs: &[f64]) -> Vec<C64> {
        xs.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    fn random_symbol<R: Rng>(n: usize, rng: &mut R) -> CMat {
        let u = random::unitary(n, rng);
        let diag: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
        &u * linalg::from_real_diag(&diag) * dagger(&u)
    }

    #[test]
    fn jordan_wigner_basics() {
        let one = jordan_wigner(1).unwrap();
        let mut expected = CMat::zeros(2, 2);
        expected[(1, 0)] = C64::new(1.0, 0.0);
        assert_eq!(one.a(0), &expected);
        for n in 1..=4 {
            let alg = jordan_wigner(n).unwrap();
            assert!(alg.car_defect() == 0.0);
            assert!(alg.inversion_defect().unwrap() < 1e-12);
            let vac = alg.vacuum();
            for k in 0..n {
                assert!((alg.a(k) * &vac).norm() == 0.0);
            }
        }
        assert!(matches!(jordan_wigner(13), Err(QthermError::Overflow { .. })));
    }

    #[test]
    fn field_norm_matches_vector_norm() {
        let alg = jordan_wigner(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let f = random::unit_vector(3, &mut rng);
            let scale = rng.random_range(0.1..3.0);
            let f: Vec<C64> = f.iter().map(|z| z * scale).collect();
            let norm = linalg::op_norm(&alg.a_of(&f).unwrap());
            assert!((norm - scale).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_symbols() {
        let alg = jordan_wigner(2).unwrap();
        let vac = quasi_free_state(&alg, &CMat::zeros(2, 2)).unwrap();
        let full = quasi_free_state(&alg, &linalg::identity(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let u = random::unitary(2, &mut rng);
            assert!((characteristic_fn(&vac, &u) - 1.0).norm() < 1e-12);
            assert!((characteristic_fn_direct(&alg, &vac, &u).unwrap() - 1.0).norm() < 1e-9);
            assert!((characteristic_fn(&full, &u) - u.determinant()).norm() < 1e-12);
            assert!((characteristic_fn_direct(&alg, &full, &u).unwrap() - u.determinant()).norm() < 1e-9);
        }
        assert!((vac.expect(&alg.number_operator())).norm() < 1e-14);
        assert!((full.expect(&alg.number_operator()) - 2.0).norm() < 1e-14);
        assert!(matches!(
            quasi_free_state(&alg, &linalg::identity(2).scale(1.2)),
            Err(QthermError::SymbolRange(_))
        ));
    }

    #[test]
    fn two_point_and_exponential_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 3] {
            let alg = jordan_wigner(n).unwrap();
            let t = random_symbol(n, &mut rng);
            let st = quasi_free_state(&alg, &t).unwrap();
            let exp = quasi_free_state_exponential(&alg, &t).unwrap();
            assert!(linalg::max_abs(&(st.density().matrix() - exp.matrix())) < 1e-12);
            for _ in 0..5 {
                let f = random::unit_vector(n, &mut rng);
                let g = random::unit_vector(n, &mut rng);
                let lhs = st.two_point(&alg, &f, &g).unwrap();
                let gv = DVector::from_vec(g.clone());
                let fv = DVector::from_vec(f.clone());
                let rhs = gv.dotc(&(&t * &fv));
                assert!((lhs - rhs).norm() < 1e-10);
            }
        }
        // tracial symbol
        let alg = jordan_wigner(2).unwrap();
        let st = quasi_free_state(&alg, &linalg::identity(2).scale(0.5)).unwrap();
        let f = cv(&[0.6, 0.8]);
        let g = cv(&[1.0, 0.0]);
        assert!((st.two_point(&alg, &f, &g).unwrap() - 0.3).norm() < 1e-14);
    }

    #[test]
    fn characteristic_function_two_pipelines() {
        let alg = jordan_wigner(2).unwrap();
        let st = quasi_free_state(&alg, &linalg::from_real_diag(&[0.3, 0.6])).unwrap();
        let kappa = 0.9;
        let mut u = linalg::identity(2);
        u[(0, 0)] = C64::from_polar(1.0, kappa);
        let det = characteristic_fn(&st, &u);
        let direct = characteristic_fn_direct(&alg, &st, &u).unwrap();
        assert!((det - direct).norm() < 1e-10);
        assert!((det - (0.7 + 0.3 * C64::from_polar(1.0, kappa))).norm() < 1e-14);
        assert!((characteristic_fn(&st, &linalg::identity(2)) - 1.0).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [3, 4] {
            let alg = jordan_wigner(n).unwrap();
            let st = quasi_free_state(&alg, &random_symbol(n, &mut rng)).unwrap();
            for _ in 0..3 {
                let u = random::unitary(n, &mut rng);
                let d = characteristic_fn(&st, &u) - characteristic_fn_direct(&alg, &st, &u).unwrap();
                assert!(d.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn pairing_sum_small_cases() {
        let mut two = CMat::zeros(4, 4);
        let vals = [[0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 5.0, 7.0], [0.0, 0.0, 0.0, 11.0]];
        for (i, row) in vals.iter().enumerate() {
            for j in 0..4 {
                two[(i, j)] = C64::new(row[j], 0.0);
            }
        }
        // ⟨12⟩⟨34⟩ − ⟨13⟩⟨24⟩ + ⟨14⟩⟨23⟩
        let expected = 1.0 * 11.0 - 2.0 * 7.0 + 3.0 * 5.0;
        assert!((pairing_sum(&two) - expected).norm() < 1e-14);
        assert_eq!(pairing_sum(&CMat::zeros(3, 3)), C64::new(0.0, 0.0));
    }

    #[test]
    fn wick_theorem() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 3] {
            let alg = jordan_wigner(n).unwrap();
            let st = quasi_free_state(&alg, &random_symbol(n, &mut rng)).unwrap();
            for m in [4, 6] {
                let fs: Vec<Vec<C64>> = (0..m).map(|_| random::unit_vector(n, &mut rng)).collect();
                assert!(wick_defect(&alg, &st, &fs).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn dynamics_and_kms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let alg = jordan_wigner(3).unwrap();
        let h = random::hermitian(3, &mut rng);
        let r = quasi_free_dynamics_check(&alg, &h, 0.0, None).unwrap();
        assert!(r.bogoliubov_defect < 1e-12);
        let r = quasi_free_dynamics_check(&alg, &h, 1.3, Some(1.0)).unwrap();
        assert!(r.bogoliubov_defect < 1e-10);
        assert!(r.kms_defect.unwrap() < 1e-9);

        // diagonal h: phase rotation of each mode
        let h = linalg::from_real_diag(&[0.4, -1.1, 2.0]);
        let big = alg.second_quantize(&h).unwrap();
        let u = linalg::unitary_propagator(&eig_hermitian(&big).unwrap(), 0.7);
        for k in 0..3 {
            let moved = &u * alg.a(k) * dagger(&u);
            let phase = C64::from_polar(1.0, -0.7 * h[(k, k)].re);
            assert!(linalg::max_abs(&(moved - alg.a(k) * phase)) < 1e-12);
        }
    }

    #[test]
    fn max_entropy_direction() {
        let grid: Vec<f64> = (-10..=10).map(|k| k as f64 * 0.005).collect();
        let gap = max_entropy_gap([0.3, 0.6], &grid).unwrap();
        assert!(gap <= 1e-12);
    }

    #[test]
    fn araki_wyss_one_mode() {
        let t = linalg::from_real_diag(&[0.3]);
        let aw = araki_wyss_rep(&t).unwrap();
        let f = cv(&[1.0]);
        let a = aw.pi_a_of(&f).unwrap();
        let two = aw.vacuum_expect(&(dagger(&a) * &a));
        assert!((two - 0.3).norm() < 1e-14);
        let anti = aw.vacuum_expect(&(&a * dagger(&a)));
        assert!((anti - 0.7).norm() < 1e-14);
        assert!(aw.modular_defect().unwrap() < 1e-8);

        let half = araki_wyss_rep(&linalg::from_real_diag(&[0.5])).unwrap();
        assert!(linalg::max_abs(&(half.modular_operator().unwrap() - linalg::identity(4))) < 1e-14);
        assert!(araki_wyss_rep(&linalg::from_real_diag(&[1.0])).is_err());
    }

    #[test]
    fn araki_wyss_reproduces_quasi_free_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 2;
        let t = random_symbol(n, &mut rng);
        let aw = araki_wyss_rep(&t).unwrap();
        let alg = jordan_wigner(n).unwrap();
        let st = quasi_free_state(&alg, &t).unwrap();
        for _ in 0..4 {
            let f = random::unit_vector(n, &mut rng);
            let g = random::unit_vector(n, &mut rng);
            let h = random::unit_vector(n, &mut rng);
            let k = random::unit_vector(n, &mut rng);
            let rep = aw.vacuum_expect(
                &(dagger(&aw.pi_a_of(&f).unwrap())
                    * dagger(&aw.pi_a_of(&g).unwrap())
                    * aw.pi_a_of(&h).unwrap()
                    * aw.pi_a_of(&k).unwrap()),
            );
            let direct = st.expect(
                &(alg.a_dag_of(&f).unwrap() * alg.a_dag_of(&g).unwrap() * alg.a_of(&h).unwrap() * alg.a_of(&k).unwrap()),
            );
            assert!((rep - direct).norm() < 1e-9);
        }
        // the CAR relations survive the representation
        let f = random::unit_vector(n, &mut rng);
        let a = aw.pi_a_of(&f).unwrap();
        let ac = linalg::anticommutator(&a, &dagger(&a));
        assert!(linalg::max_abs(&(ac - linalg::identity(16))) < 1e-12);
        assert!(aw.modular_defect().unwrap() < 1e-8);
    }
}
