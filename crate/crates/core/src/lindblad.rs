//! Completely positive Markov semigroups on `M_d`: Lindblad generators as
//! `d²×d²` superoperators (column stacking), Choi positivity, detailed
//! balance, the Fermi golden rule level shift and extraction of effective
//! generators from a system weakly coupled to a finite fermionic reservoir.

use crate::error::{QthermError, Result};
use crate::fermi::{self, FermionAlgebra};
use crate::linalg::{
    self, dagger, eig_hermitian, left_mul_super, right_mul_super, sandwich_super, CMat, C64,
};
use crate::qstate::DensityMatrix;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picture {
    Heisenberg,
    Schrodinger,
}

/// Linear map on `M_d` stored as a `d²×d²` matrix acting on column-stacked
/// vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    d: usize,
    matrix: CMat,
    picture: Picture,
}

impl Superoperator {
    pub fn new(d: usize, matrix: CMat, picture: Picture) -> Result<Self> {
        if matrix.nrows() != d * d || matrix.ncols() != d * d {
            return Err(QthermError::ShapeMismatch(format!(
                "superoperator on M_{d} must be {0}x{0}",
                d * d
            )));
        }
        Ok(Superoperator { d, matrix, picture })
    }

    pub fn identity(d: usize, picture: Picture) -> Self {
        Superoperator {
            d,
            matrix: linalg::identity(d * d),
            picture,
        }
    }

    /// `X ↦ Xᵀ`, the standard positive but not completely positive map.
    pub fn transpose_map(d: usize) -> Self {
        Superoperator {
            d,
            matrix: linalg::transpose_permutation(d),
            picture: Picture::Heisenberg,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn apply(&self, a: &CMat) -> CMat {
        linalg::unvectorize(&(&self.matrix * linalg::vectorize(a)), self.d)
    }

    /// The map in the other picture: `tr(ρ M(A)) = tr(M_#(ρ) A)`, i.e.
    /// `M_# = P Mᵀ P` with `P` the transpose permutation.
    pub fn dual(&self) -> Self {
        let p = linalg::transpose_permutation(self.d);
        Superoperator {
            d: self.d,
            matrix: &p * self.matrix.transpose() * &p,
            picture: match self.picture {
                Picture::Heisenberg => Picture::Schrodinger,
                Picture::Schrodinger => Picture::Heisenberg,
            },
        }
    }

    /// `e^{tM}`.
    pub fn exp(&self, t: f64) -> Self {
        Superoperator {
            d: self.d,
            matrix: linalg::expm(&self.matrix.scale(t)),
            picture: self.picture,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Superoperator {
            d: self.d,
            matrix: &self.matrix * &other.matrix,
            picture: self.picture,
        }
    }

    /// Principal logarithm divided by `t`; fails with `LogBranch` rather than
    /// choosing another branch.
    pub fn log_over(&self, t: f64) -> Result<Self> {
        Ok(Superoperator {
            d: self.d,
            matrix: linalg::logm(&self.matrix)?.unscale(t),
            picture: self.picture,
        })
    }

    /// Choi matrix `C = Σ_ij E_ij ⊗ Λ(E_ij)`.
    pub fn choi(&self) -> CMat {
        let d = self.d;
        let mut c = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = C64::new(1.0, 0.0);
                let img = self.apply(&e);
                c.view_mut((i * d, j * d), (d, d)).copy_from(&img);
            }
        }
        c
    }

    /// `max |tr(E_a M(E_b)) − tr(M_#(E_a) E_b)|` over matrix units.
    pub fn duality_defect(&self) -> f64 {
        let dual = self.dual();
        let d = self.d;
        let mut worst: f64 = 0.0;
        for a in 0..d * d {
            for b in 0..d * d {
                let ea = unit(d, a);
                let eb = unit(d, b);
                let lhs = linalg::trace_product(&ea, &self.apply(&eb));
                let rhs = linalg::trace_product(&dual.apply(&ea), &eb);
                worst = worst.max((lhs - rhs).norm());
            }
        }
        worst
    }
}

fn unit(d: usize, k: usize) -> CMat {
    let mut e = CMat::zeros(d, d);
    e[(k % d, k / d)] = C64::new(1.0, 0.0);
    e
}

/// `M(A) = i[Υ,A] − ½Σ{W_i†W_i, A} + Σ W_i†AW_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladGen {
    upsilon: CMat,
    jumps: Vec<CMat>,
}

impl LindbladGen {
    pub fn new(upsilon: CMat, jumps: Vec<CMat>) -> Result<Self> {
        let upsilon = linalg::hermitian_part_checked(&upsilon)?;
        let d = upsilon.nrows();
        if jumps.iter().any(|w| w.nrows() != d || w.ncols() != d) {
            return Err(QthermError::ShapeMismatch("jump operator has wrong size".into()));
        }
        Ok(LindbladGen { upsilon, jumps })
    }

    pub fn dim(&self) -> usize {
        self.upsilon.nrows()
    }

    pub fn upsilon(&self) -> &CMat {
        &self.upsilon
    }

    pub fn jumps(&self) -> &[CMat] {
        &self.jumps
    }

    fn dissipator_norm(&self) -> CMat {
        let d = self.dim();
        self.jumps
            .iter()
            .fold(CMat::zeros(d, d), |acc, w| acc + dagger(w) * w)
    }
}

/// Qubit with `Υ = σ_z` and jumps between the σ_z eigenstates, rates chosen
/// so that `e^{−βσ_z}/Z` satisfies detailed balance: the energy-lowering jump
/// `|1⟩⟨0|` has rate `γ e^{β}`, the raising jump `|0⟩⟨1|` rate `γ e^{−β}`.
/// `mismatch` multiplies the lowering rate.
pub fn thermal_qubit(beta: f64, gamma: f64, mismatch: f64) -> Result<LindbladGen> {
    let down = (gamma * beta.exp() * mismatch).sqrt();
    let up = (gamma * (-beta).exp()).sqrt();
    LindbladGen::new(
        linalg::pauli::z(),
        vec![linalg::pauli::sigma_plus().scale(down), linalg::pauli::sigma_minus().scale(up)],
    )
}

pub fn lindblad_to_super(gen: &LindbladGen, picture: Picture) -> Superoperator {
    let d = gen.dim();
    let i = C64::new(0.0, 1.0);
    let k = gen.dissipator_norm();
    let anti = (left_mul_super(&k) + right_mul_super(&k)).scale(0.5);
    let comm = left_mul_super(&gen.upsilon) - right_mul_super(&gen.upsilon);
    let mut m = match picture {
        Picture::Heisenberg => comm * i - anti,
        Picture::Schrodinger => comm * (-i) - anti,
    };
    for w in &gen.jumps {
        let wd = dagger(w);
        m += match picture {
            Picture::Heisenberg => sandwich_super(&wd, w),
            Picture::Schrodinger => sandwich_super(w, &wd),
        };
    }
    Superoperator {
        d,
        matrix: m,
        picture,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpReport {
    pub choi_min_eig: f64,
    /// `‖Λ(1) − 1‖_max`.
    pub unital_defect: f64,
    /// `max_ij |tr Λ(E_ij) − δ_ij|`.
    pub trace_defect: f64,
}

impl CpReport {
    pub fn is_cp(&self) -> bool {
        self.choi_min_eig >= -1e-10
    }
}

pub fn cp_check(map: &Superoperator) -> Result<CpReport> {
    let d = map.d;
    let choi = linalg::hermitian_part_checked(&map.choi())?;
    let choi_min_eig = eig_hermitian(&choi)?.values[0];
    let id = linalg::identity(d);
    let unital_defect = linalg::max_abs(&(map.apply(&id) - &id));
    let mut trace_defect: f64 = 0.0;
    for k in 0..d * d {
        let e = unit(d, k);
        let want = linalg::trace(&e);
        trace_defect = trace_defect.max((linalg::trace(&map.apply(&e)) - want).norm());
    }
    Ok(CpReport {
        choi_min_eig,
        unital_defect,
        trace_defect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbcReport {
    /// `‖M_#(ρ)‖₁`.
    pub invariance_defect: f64,
    /// Self-adjointness defect of `M − i[Υ,·]` for `(A|B) = tr(ρ^{1/2}A†ρ^{1/2}B)`.
    pub dbc_defect: f64,
    /// Same for `(A|B) = tr(ρA†B)`.
    pub dbc1_defect: f64,
}

/// Gram matrices of the two detailed-balance inner products on vec space:
/// `(A|B) = vec(A)† G vec(B)`.
fn gram_matrices(rho: &DensityMatrix) -> (CMat, CMat) {
    let half = rho.power(0.5);
    let kms = sandwich_super(&half, &half);
    let gns = right_mul_super(rho.matrix());
    (kms, gns)
}

/// `max_ab |(E_a|M E_b) − (M E_a|E_b)|` for the Gram matrix `g`.
fn self_adjoint_defect(m: &CMat, g: &CMat) -> f64 {
    linalg::max_abs(&(g * m - dagger(m) * g))
}

fn commutator_super(h: &CMat) -> CMat {
    (left_mul_super(h) - right_mul_super(h)) * C64::new(0.0, 1.0)
}

pub fn detailed_balance_check(gen: &LindbladGen, rho: &DensityMatrix) -> Result<DbcReport> {
    rho.require_faithful()?;
    if rho.dim() != gen.dim() {
        return Err(QthermError::ShapeMismatch("state and generator differ in size".into()));
    }
    let heis = lindblad_to_super(gen, Picture::Heisenberg);
    let schr = lindblad_to_super(gen, Picture::Schrodinger);
    let invariance_defect = linalg::trace_norm(&schr.apply(rho.matrix()));
    let m0 = heis.matrix - commutator_super(&gen.upsilon);
    let (kms, gns) = gram_matrices(rho);
    Ok(DbcReport {
        invariance_defect,
        dbc_defect: self_adjoint_defect(&m0, &kms),
        dbc1_defect: self_adjoint_defect(&m0, &gns),
    })
}

/// Detailed-balance defects of a Heisenberg generator given only as a
/// superoperator: the Hamiltonian part `i[Υ,·]` is fitted by least squares
/// (Frobenius norm of the adjointness defect for the KMS product) before
/// the defects are evaluated.
pub fn superoperator_dbc(m: &Superoperator, rho: &DensityMatrix) -> Result<(f64, f64)> {
    rho.require_faithful()?;
    let d = m.d;
    let (kms, gns) = gram_matrices(rho);
    let basis = crate::qdyn::hermitian_basis(d);
    let defect_of = |x: &CMat| &kms * x - dagger(x) * &kms;
    let target = defect_of(&m.matrix);
    let cols: Vec<CMat> = basis.iter().map(|h| defect_of(&commutator_super(h))).collect();
    let rows = 2 * target.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols.len());
    let mut b = nalgebra::DVector::<f64>::zeros(rows);
    for (k, z) in target.iter().enumerate() {
        b[2 * k] = z.re;
        b[2 * k + 1] = z.im;
    }
    for (j, col) in cols.iter().enumerate() {
        for (k, z) in col.iter().enumerate() {
            a[(2 * k, j)] = z.re;
            a[(2 * k + 1, j)] = z.im;
        }
    }
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| QthermError::ConvergenceFailure(e.to_string()))?;
    let upsilon = basis
        .iter()
        .zip(coef.iter())
        .fold(CMat::zeros(d, d), |acc, (h, c)| acc + h.scale(*c));
    let m0 = &m.matrix - commutator_super(&upsilon);
    Ok((self_adjoint_defect(&m0, &kms), self_adjoint_defect(&m0, &gns)))
}

/// Density matrix in the kernel of a Schrödinger generator: the projection
/// of `1/d` onto `Ker M_#` along `Ran M_#` (the ergodic mean), with the
/// residual `‖M_#(ρ)‖_max`.
pub fn invariant_state(gen: &LindbladGen) -> Result<(DensityMatrix, f64)> {
    kernel_state(lindblad_to_super(gen, Picture::Schrodinger).matrix(), gen.dim())
}

/// Projection of `1/d` onto `Ker m` along `Ran m` for a `d²×d²` matrix `m`
/// whose zero eigenvalue is semisimple (generators of trace-preserving
/// semigroups, or `Φ_# − 1` for a channel), normalized to unit trace.
/// Returns the state and `‖m vec(ρ)‖_max`.
pub fn kernel_state(m: &CMat, d: usize) -> Result<(DensityMatrix, f64)> {
    let n = m.nrows();
    if n != d * d || m.ncols() != n {
        return Err(QthermError::ShapeMismatch("kernel_state needs a d^2 x d^2 matrix".into()));
    }
    let scale = linalg::max_abs(m).max(1.0);
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let null: Vec<usize> = (0..n)
        .filter(|&k| svd.singular_values[k] <= 1e-9 * scale)
        .collect();
    if null.is_empty() {
        return Err(QthermError::ConvergenceFailure("map has trivial kernel".into()));
    }
    let k = null.len();
    let mut right = CMat::zeros(n, k);
    let mut left = CMat::zeros(n, k);
    for (c, &idx) in null.iter().enumerate() {
        right.set_column(c, &v_t.row(idx).adjoint());
        left.set_column(c, &u.column(idx));
    }
    let coupling = (dagger(&left) * &right)
        .try_inverse()
        .ok_or_else(|| QthermError::DomainError("zero eigenvalue is not semisimple".into()))?;
    let mixed = linalg::vectorize(&linalg::identity(d).unscale(d as f64));
    let proj = &right * (coupling * (dagger(&left) * mixed));
    let x = linalg::unvectorize(&proj, d);
    let x = (&x + dagger(&x)).scale(0.5);
    let rho = DensityMatrix::from_unnormalized(x)?;
    let residual = linalg::max_abs(&linalg::unvectorize(&(m * linalg::vectorize(rho.matrix())), d));
    Ok((rho, residual))
}

/// `∫|v(ξ)|²(k + i0 − ξ)^{−1}dξ` from samples of `v` on a sorted grid,
/// split into a principal value and `−iπ|v(k)|²`. `|v|²` is interpolated
/// linearly; the principal value uses the subtraction
/// `∫(g(ξ) − g(k))/(k − ξ)dξ + g(k) log((k − a)/(b − k))` with trapezoids.
pub fn fgr_level_shift(k: f64, v: &[f64], grid: &[f64]) -> Result<C64> {
    let n = grid.len();
    if v.len() != n || n < 3 {
        return Err(QthermError::Grid("need at least 3 samples matching the grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QthermError::Grid("grid must be strictly increasing".into()));
    }
    let (a, b) = (grid[0], grid[n - 1]);
    if k <= grid[1] || k >= grid[n - 2] {
        return Err(QthermError::Grid(format!(
            "k = {k} within one cell of the boundary [{a}, {b}]"
        )));
    }
    let g: Vec<f64> = v.iter().map(|x| x * x).collect();
    let cell = grid.partition_point(|&x| x <= k) - 1;
    let frac = (k - grid[cell]) / (grid[cell + 1] - grid[cell]);
    let gk = g[cell] + frac * (g[cell + 1] - g[cell]);
    let integrand = |i: usize| {
        let x = grid[i];
        if (x - k).abs() < 1e-12 {
            // removable singularity: −g′(k) by central differences
            -(g[i + 1] - g[i - 1]) / (grid[i + 1] - grid[i - 1])
        } else {
            (g[i] - gk) / (k - x)
        }
    };
    let mut pv = 0.0;
    for i in 0..n - 1 {
        pv += 0.5 * (grid[i + 1] - grid[i]) * (integrand(i) + integrand(i + 1));
    }
    pv += gk * ((k - a) / (b - k)).ln();
    Ok(C64::new(pv, -std::f64::consts::PI * gk))
}

/// Qubit (or small system) coupled to a finite free Fermi gas:
/// `H_λ = K⊗1 + 1⊗dΓ(h) + λ Σ_j Q_j ⊗ φ(f_j)` with the reservoir in its
/// Fermi–Dirac state at inverse temperature `β`.
#[derive(Debug, Clone)]
pub struct WeakCouplingModel {
    pub k: CMat,
    pub reservoir_h: CMat,
    /// `(Q_j, f_j)` pairs.
    pub couplings: Vec<(CMat, Vec<C64>)>,
    pub beta: f64,
}

impl WeakCouplingModel {
    /// Qubit `K = σ_z` against four modes near the Bohr frequency 2, coupled
    /// through `σ_x ⊗ φ(f)` with `f` spread over the modes.
    pub fn standard(beta: f64) -> Self {
        let energies = [1.4, 1.8, 2.2, 2.6];
        let f: Vec<C64> = energies.iter().map(|_| C64::new(0.5, 0.0)).collect();
        WeakCouplingModel {
            k: linalg::pauli::z(),
            reservoir_h: linalg::from_real_diag(&energies),
            couplings: vec![(linalg::pauli::x(), f)],
            beta,
        }
    }
}

/// Regression anchors for `WeakCouplingModel::standard(1.0)` at
/// `λ = 0.4, 0.2, 0.1`, `t = 1`: consecutive generator distances and KMS
/// detailed-balance defects.
pub const WEAK_COUPLING_LAMBDAS: [f64; 3] = [0.4, 0.2, 0.1];
pub const WEAK_COUPLING_CAUCHY: [f64; 2] = [1.7591867162074608, 0.03861556144407533];
pub const WEAK_COUPLING_DBC: [f64; 3] = [0.01859997678777356, 0.003468698905857742, 0.001121660740185243];

#[derive(Debug, Clone)]
pub struct WeakCouplingReport {
    pub lambdas: Vec<f64>,
    /// Effective Heisenberg generators `log Λ_λ / t`.
    pub generators: Vec<Superoperator>,
    /// `‖M_{λ_i} − M_{λ_{i+1}}‖_max` for consecutive entries.
    pub cauchy: Vec<f64>,
    /// Detailed-balance defects (KMS product) against `e^{−βK}/Z`.
    pub dbc_defects: Vec<f64>,
    /// Same with the GNS product.
    pub dbc1_defects: Vec<f64>,
    /// `‖[M_λ, i[K,·]]‖_max`.
    pub free_commutators: Vec<f64>,
}

/// Reduced interaction-picture map at rescaled time `t/λ²`:
/// `Λ_λ(A) = e^{−iτK} (id ⊗ ω_R)(e^{iτH_λ}(A⊗1)e^{−iτH_λ}) e^{iτK}`.
pub fn reduced_map(model: &WeakCouplingModel, lambda: f64, t: f64) -> Result<Superoperator> {
    let d = model.k.nrows();
    if lambda == 0.0 {
        return Ok(Superoperator::identity(d, Picture::Heisenberg));
    }
    let n = model.reservoir_h.nrows();
    let alg: FermionAlgebra = fermi::jordan_wigner(n)?;
    let dr = alg.fock_dim();
    let h_r = alg.second_quantize(&model.reservoir_h)?;
    let reservoir = fermi::quasi_free_state(&alg, &fermi::fermi_dirac(&model.reservoir_h, model.beta)?)?;
    let mut h = linalg::kron(&model.k, &linalg::identity(dr))? + linalg::kron(&linalg::identity(d), &h_r)?;
    for (q, f) in &model.couplings {
        h += linalg::kron(q, &alg.field(f)?)?.scale(lambda);
    }
    let tau = t / (lambda * lambda);
    let u = linalg::unitary_propagator(&eig_hermitian(&linalg::hermitian_part_checked(&h)?)?, tau);
    let free = linalg::unitary_propagator(&eig_hermitian(&model.k)?, -tau);
    let env = linalg::kron(&linalg::identity(d), reservoir.density().matrix())?;
    let dims = [d, dr];
    let mut m = CMat::zeros(d * d, d * d);
    for col in 0..d * d {
        let a = unit(d, col);
        let big = &u * linalg::kron(&a, &linalg::identity(dr))? * dagger(&u);
        let reduced = linalg::partial_trace(&(&env * big), &dims, &[0])?;
        let img = &free * reduced * dagger(&free);
        m.set_column(col, &linalg::vectorize(&img));
    }
    Superoperator::new(d, m, Picture::Heisenberg)
}

pub fn weak_coupling_extract(model: &WeakCouplingModel, lambdas: &[f64], t: f64) -> Result<WeakCouplingReport> {
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(QthermError::InvalidArgument("lambda list must be decreasing".into()));
    }
    let generators = crate::par::try_map_range(lambdas.len(), |i| {
        reduced_map(model, lambdas[i], t)?.log_over(t)
    })?;
    let gibbs = crate::qstate::gibbs(&crate::qstate::GibbsSpec::new(model.k.clone(), model.beta)?)?;
    let free = commutator_super(&model.k);
    let mut dbc_defects = Vec::new();
    let mut dbc1_defects = Vec::new();
    let mut free_commutators = Vec::new();
    for g in &generators {
        let (a, b) = superoperator_dbc(g, &gibbs)?;
        dbc_defects.push(a);
        dbc1_defects.push(b);
        free_commutators.push(linalg::max_abs(&(g.matrix() * &free - &free * g.matrix())));
    }
    let cauchy = generators
        .windows(2)
        .map(|w| linalg::max_abs(&(w[0].matrix() - w[1].matrix())))
        .collect();
    Ok(WeakCouplingReport {
        lambdas: lambdas.to_vec(),
        generators,
        cauchy,
        dbc_defects,
        dbc1_defects,
        free_commutators,
    })
}
