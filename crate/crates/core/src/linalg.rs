//! Dense complex linear algebra: Hermitian eigendecomposition, spectral
//! calculus, tensor products, partial traces and a few dense matrix
//! functions for non-normal matrices.
//!
//! Tensor products order factors most-significant first, so
//! `kron(A, B)[(i*db + k, j*db + l)] = A[(i, j)] * B[(k, l)]`. Operators on
//! matrices are vectorized by stacking columns (see [`VECTORIZATION`]).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QthermError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative Hermiticity tolerance for all Hermitian preconditions.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Default cap on any assembled Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 1 << 12;

/// How operators on a `d`-dimensional space are flattened into `d²` vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vectorization {
    /// `vec(X)[i + j*d] = X[(i, j)]`, so `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
    ColumnStacking,
}

/// The one vectorization convention used by every superoperator.
pub const VECTORIZATION: Vectorization = Vectorization::ColumnStacking;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn zeros(d: usize) -> CMat {
    CMat::zeros(d, d)
}

pub fn from_real_diag(diag: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(
        diag.len(),
        diag.iter().map(|&x| c(x, 0.0)),
    ))
}

/// Builds a matrix from row-major real/imaginary pairs.
pub fn from_rows(rows: &[&[C64]]) -> CMat {
    let n = rows.len();
    CMat::from_fn(n, rows[0].len(), |i, j| rows[i][j])
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn trace(a: &CMat) -> C64 {
    a.diagonal().iter().sum()
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |m: f64, &s| m.max(s))
}

/// Sum of singular values.
pub fn trace_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.iter().sum()
}

pub fn is_square(a: &CMat) -> bool {
    a.nrows() == a.ncols()
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `‖A − A†‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn hermitian_defect(a: &CMat) -> f64 {
    let n = frobenius(a);
    if n == 0.0 {
        return 0.0;
    }
    frobenius(&(a - a.adjoint())) / n
}

/// Checks the Hermitian precondition and returns the symmetrized matrix.
pub fn hermitian_part_checked(a: &CMat) -> Result<CMat> {
    if !is_square(a) {
        return Err(QthermError::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let defect = hermitian_defect(a);
    if !(defect <= HERMITIAN_TOL) {
        return Err(QthermError::NotHermitian { defect });
    }
    Ok((a + a.adjoint()).scale(0.5))
}

/// Spectral decomposition `A = V diag(λ) V†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMat,
}

impl HermitianEig {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> CMat {
        self.map(|x| x)
    }

    /// `V f(λ) V†` for a real function.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        self.map_complex(|x| c(f(x), 0.0))
    }

    /// `V f(λ) V†` for a complex-valued function.
    pub fn map_complex(&self, f: impl Fn(f64) -> C64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let fj = f(lam);
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= fj;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    /// Express `A` in the eigenbasis: `V† A V`.
    pub fn to_eigenbasis(&self, a: &CMat) -> CMat {
        self.vectors.adjoint() * a * &self.vectors
    }

    pub fn from_eigenbasis(&self, a: &CMat) -> CMat {
        &self.vectors * a * self.vectors.adjoint()
    }

    /// Spread `λ_max − λ_min`.
    pub fn spread(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Groups eigenvalues into degenerate clusters. Neighbours closer than
    /// `tol * max(1, max|λ|)` belong to the same cluster. Returns half-open
    /// index ranges into `values`.
    pub fn clusters(&self, tol: f64) -> Vec<std::ops::Range<usize>> {
        let scale = self
            .values
            .iter()
            .fold(1.0_f64, |m, &x| m.max(x.abs()));
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.values.len() {
            if i == self.values.len() || self.values[i] - self.values[i - 1] > tol * scale {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    /// Orthogonal projection onto the span of eigenvectors `range`.
    pub fn projector(&self, range: std::ops::Range<usize>) -> CMat {
        let cols = self.vectors.columns(range.start, range.len());
        &cols * cols.adjoint()
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn eig_hermitian(a: &CMat) -> Result<HermitianEig> {
    let h = hermitian_part_checked(a)?;
    if !all_finite(&h) {
        return Err(QthermError::DomainError("non-finite matrix entry".into()));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok(HermitianEig {
            values: vec![],
            vectors: CMat::zeros(0, 0),
        });
    }
    let eps = f64::EPSILON;
    let eig = nalgebra::SymmetricEigen::try_new(h, eps, 10_000 * n).ok_or_else(|| {
        QthermError::ConvergenceFailure("Hermitian QR iteration limit exceeded".into())
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok(HermitianEig { values, vectors })
}

/// `f(A)` for Hermitian `A` and a real function. Non-finite values of `f`
/// on the spectrum are reported as [`QthermError::DomainError`].
pub fn mat_fn(a: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let eig = eig_hermitian(a)?;
    check_domain(&eig, |x| c(f(x), 0.0))?;
    Ok(eig.map(f))
}

/// `f(A)` for Hermitian `A` and a complex-valued function.
pub fn mat_fn_complex(a: &CMat, f: impl Fn(f64) -> C64) -> Result<CMat> {
    let eig = eig_hermitian(a)?;
    check_domain(&eig, &f)?;
    Ok(eig.map_complex(f))
}

/// Support-restricted variant: eigenvalues with `λ ≤ cutoff` are mapped to
/// zero instead of being passed to `f` (used for `log` of singular states).
pub fn mat_fn_on_support(a: &CMat, cutoff: f64, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let eig = eig_hermitian(a)?;
    let g = |x: f64| if x > cutoff { f(x) } else { 0.0 };
    check_domain(&eig, |x| c(g(x), 0.0))?;
    Ok(eig.map(g))
}

fn check_domain(eig: &HermitianEig, f: impl Fn(f64) -> C64) -> Result<()> {
    for &lam in &eig.values {
        let v = f(lam);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(QthermError::DomainError(format!(
                "function is not finite at eigenvalue {lam:e}"
            )));
        }
    }
    Ok(())
}

/// Kronecker product, refusing results larger than [`DEFAULT_MAX_DIM`].
pub fn kron(a: &CMat, b: &CMat) -> Result<CMat> {
    kron_capped(a, b, DEFAULT_MAX_DIM)
}

pub fn kron_capped(a: &CMat, b: &CMat, max_dim: usize) -> Result<CMat> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(cl)) if r <= max_dim && cl <= max_dim => Ok(a.kronecker(b)),
        _ => Err(QthermError::Overflow {
            dim: a.nrows().saturating_mul(b.nrows()),
            max: max_dim,
        }),
    }
}

/// Left-folded Kronecker product of a list (the empty product is `1×1`).
pub fn kron_all(ops: &[CMat]) -> Result<CMat> {
    let mut acc = identity(1);
    for op in ops {
        acc = kron(&acc, op)?;
    }
    Ok(acc)
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn check_dims(a: &CMat, dims: &[usize]) -> Result<usize> {
    let total: usize = dims.iter().product();
    if !is_square(a) || a.nrows() != total {
        return Err(QthermError::ShapeMismatch(format!(
            "matrix is {}x{} but factor dimensions {:?} multiply to {}",
            a.nrows(),
            a.ncols(),
            dims,
            total
        )));
    }
    Ok(total)
}

/// Partial trace keeping the factors listed in `keep` (in ascending factor
/// order) and tracing out the rest.
pub fn partial_trace(a: &CMat, dims: &[usize], keep: &[usize]) -> Result<CMat> {
    check_dims(a, dims)?;
    let mut keep_sorted: Vec<usize> = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.iter().any(|&k| k >= dims.len()) {
        return Err(QthermError::ShapeMismatch(format!(
            "kept factor index out of range for {} factors",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep_sorted.contains(k)).collect();
    let st = strides(dims);
    let kdims: Vec<usize> = keep_sorted.iter().map(|&k| dims[k]).collect();
    let tdims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let dk: usize = kdims.iter().product();
    let dt: usize = tdims.iter().product();
    let offsets = |which: &[usize], wdims: &[usize]| -> Vec<usize> {
        let n: usize = wdims.iter().product();
        let ws = strides(wdims);
        (0..n)
            .map(|idx| {
                which
                    .iter()
                    .enumerate()
                    .map(|(m, &f)| ((idx / ws[m]) % wdims[m]) * st[f])
                    .sum()
            })
            .collect()
    };
    let koff = offsets(&keep_sorted, &kdims);
    let toff = offsets(&traced, &tdims);
    let mut out = CMat::zeros(dk, dk);
    for r in 0..dk {
        for cc in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dt {
                acc += a[(koff[r] + toff[t], koff[cc] + toff[t])];
            }
            out[(r, cc)] = acc;
        }
    }
    Ok(out)
}

/// Embeds `op`, acting on the factors `positions` (its own tensor order
/// follows `positions`), into the full product space with factor
/// dimensions `dims`. Identity on all other factors.
pub fn embed(op: &CMat, dims: &[usize], positions: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if total > DEFAULT_MAX_DIM {
        return Err(QthermError::Overflow {
            dim: total,
            max: DEFAULT_MAX_DIM,
        });
    }
    let mut seen = vec![false; dims.len()];
    for &p in positions {
        if p >= dims.len() || seen[p] {
            return Err(QthermError::ShapeMismatch(format!(
                "invalid factor positions {positions:?} for {} factors",
                dims.len()
            )));
        }
        seen[p] = true;
    }
    let odims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
    let dop: usize = odims.iter().product();
    if !is_square(op) || op.nrows() != dop {
        return Err(QthermError::ShapeMismatch(format!(
            "operator is {}x{} but acts on factors of dimensions {:?}",
            op.nrows(),
            op.ncols(),
            odims
        )));
    }
    let st = strides(dims);
    let ost = strides(&odims);
    let op_offset: Vec<usize> = (0..dop)
        .map(|idx| {
            positions
                .iter()
                .enumerate()
                .map(|(m, &p)| ((idx / ost[m]) % odims[m]) * st[p])
                .sum()
        })
        .collect();
    let mut out = CMat::zeros(total, total);
    for r in 0..total {
        let mut r_op = 0;
        let mut base = r;
        for (m, &p) in positions.iter().enumerate() {
            let digit = (r / st[p]) % dims[p];
            r_op += digit * ost[m];
            base -= digit * st[p];
        }
        for (c_op, off) in op_offset.iter().enumerate() {
            let v = op[(r_op, c_op)];
            if v != C64::new(0.0, 0.0) {
                out[(r, base + off)] = v;
            }
        }
    }
    Ok(out)
}

/// Column-stacking vectorization.
pub fn vectorize(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

pub fn unvectorize(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

/// Superoperator matrix of `X ↦ A X B` in the column-stacking convention.
pub fn sandwich_super(a: &CMat, b: &CMat) -> CMat {
    b.transpose().kronecker(a)
}

/// Left multiplication `X ↦ A X` as a `d²×d²` matrix.
pub fn left_mul_super(a: &CMat) -> CMat {
    identity(a.nrows()).kronecker(a)
}

/// Right multiplication `X ↦ X B` as a `d²×d²` matrix.
pub fn right_mul_super(b: &CMat) -> CMat {
    b.transpose().kronecker(&identity(b.nrows()))
}

/// Permutation with `vec(Xᵀ) = P vec(X)`.
pub fn transpose_permutation(d: usize) -> CMat {
    let mut p = CMat::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            // vec(X)[i + j d] = X[i,j]; vec(Xᵀ)[j + i d] = X[i,j]
            p[(j + i * d, i + j * d)] = C64::new(1.0, 0.0);
        }
    }
    p
}

/// Dense matrix exponential (Padé scaling-and-squaring), valid for
/// non-normal matrices.
pub fn expm(a: &CMat) -> CMat {
    a.exp()
}

/// `e^{i t H}` for Hermitian `H` through its spectral decomposition.
pub fn unitary_propagator(eig: &HermitianEig, t: f64) -> CMat {
    eig.map_complex(|e| C64::from_polar(1.0, e * t))
}

/// Complex eigenvalues of a general square matrix (Schur form).
pub fn general_eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000 * a.nrows().max(1))
        .ok_or_else(|| QthermError::ConvergenceFailure("Schur iteration limit exceeded".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Principal matrix logarithm by inverse scaling-and-squaring: repeated
/// Denman–Beavers square roots until `‖A − 1‖ ≤ 1/4`, then the Mercator
/// series, then scaling back by `2^k`. Eigenvalues on the closed negative
/// real axis are refused.
pub fn logm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    for lam in general_eigenvalues(a)? {
        let scale = lam.norm().max(1.0);
        if lam.im.abs() <= 1e-10 * scale && lam.re <= 1e-14 * scale {
            return Err(QthermError::LogBranch(format!("{lam}")));
        }
    }
    let id = identity(n);
    let mut x = a.clone();
    let mut k = 0u32;
    while max_col_sum(&(&x - &id)) > 0.25 {
        x = sqrt_denman_beavers(&x)?;
        k += 1;
        if k > 60 {
            return Err(QthermError::ConvergenceFailure(
                "too many square roots in logm".into(),
            ));
        }
    }
    let y = &x - &id;
    let mut term = y.clone();
    let mut sum = y.clone();
    for j in 2..200 {
        term = &term * &y;
        let piece = term.scale(1.0 / j as f64);
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        sum += piece.scale(sign);
        if max_abs(&piece) < 1e-18 {
            break;
        }
    }
    Ok(sum.scale(f64::powi(2.0, k as i32)))
}

fn max_col_sum(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn sqrt_denman_beavers(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = identity(n);
    for _ in 0..100 {
        let yi = y
            .clone()
            .try_inverse()
            .ok_or_else(|| QthermError::DomainError("singular matrix in square root".into()))?;
        let zi = z
            .clone()
            .try_inverse()
            .ok_or_else(|| QthermError::DomainError("singular matrix in square root".into()))?;
        let y_next = (&y + &zi).scale(0.5);
        let z_next = (&z + &yi).scale(0.5);
        let delta = max_abs(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * max_abs(&y).max(1.0) {
            return Ok(y);
        }
    }
    Err(QthermError::ConvergenceFailure(
        "Denman-Beavers square root did not converge".into(),
    ))
}

/// Pauli matrices and Pauli-string parsing.
pub mod pauli {
    use super::*;

    pub fn x() -> CMat {
        from_rows(&[&[c(0., 0.), c(1., 0.)], &[c(1., 0.), c(0., 0.)]])
    }

    pub fn y() -> CMat {
        from_rows(&[&[c(0., 0.), c(0., -1.)], &[c(0., 1.), c(0., 0.)]])
    }

    pub fn z() -> CMat {
        from_real_diag(&[1.0, -1.0])
    }

    /// `|0⟩⟨1|`: lowers the σ_z = −1 state |1⟩ to |0⟩.
    pub fn sigma_minus() -> CMat {
        from_rows(&[&[c(0., 0.), c(1., 0.)], &[c(0., 0.), c(0., 0.)]])
    }

    /// `|1⟩⟨0|`.
    pub fn sigma_plus() -> CMat {
        sigma_minus().adjoint()
    }

    pub fn single(ch: char) -> Option<CMat> {
        match ch {
            'I' | 'i' => Some(identity(2)),
            'X' | 'x' => Some(x()),
            'Y' | 'y' => Some(y()),
            'Z' | 'z' => Some(z()),
            _ => None,
        }
    }

    /// Parses e.g. `"XXI"` into `σ_x ⊗ σ_x ⊗ 1`.
    pub fn string(s: &str) -> Result<CMat> {
        let mut ops = Vec::with_capacity(s.len());
        for ch in s.chars() {
            ops.push(single(ch).ok_or_else(|| {
                QthermError::InvalidArgument(format!("unknown Pauli letter {ch:?} in {s:?}"))
            })?);
        }
        if ops.is_empty() {
            return Err(QthermError::InvalidArgument("empty Pauli string".into()));
        }
        kron_all(&ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        frobenius(&(a - b)) <= tol
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = eig_hermitian(&identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert!(close(&e.reconstruct(), &identity(2), 1e-14));
        let e = eig_hermitian(&from_real_diag(&[3.0, -1.0])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn eig_sigma_x_closed_form() {
        let e = eig_hermitian(&pauli::x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 1.0).abs() < 1e-15);
        // eigenvectors (1, ∓1)/√2 up to phase: |⟨v, u⟩| = 1
        let s = 1.0 / 2f64.sqrt();
        let expected = [[s, -s], [s, s]];
        for (k, ex) in expected.iter().enumerate() {
            let overlap = e.vectors[(0, k)].conj() * ex[0] + e.vectors[(1, k)].conj() * ex[1];
            assert!((overlap.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let a = pauli::sigma_minus();
        assert!(matches!(eig_hermitian(&a), Err(QthermError::NotHermitian { .. })));
    }

    #[test]
    fn eig_invariants_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1usize, 2, 3, 5, 8, 16] {
            let a = random::hermitian(d, &mut rng);
            let e = eig_hermitian(&a).unwrap();
            let v = &e.vectors;
            assert!(frobenius(&(v * v.adjoint() - identity(d))) <= 1e-12 * d as f64);
            assert!(frobenius(&(e.reconstruct() - &a)) <= 1e-10 * frobenius(&a));
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn degenerate_gauge_does_not_leak() {
        // Projector onto a 2-dim subspace of C^4: any function of it is
        // independent of the eigenvector choice in the degenerate clusters.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random::unitary(4, &mut rng);
        let p = &u * from_real_diag(&[1.0, 1.0, 0.0, 0.0]) * u.adjoint();
        let f = mat_fn(&p, |x| 2.0 * x + 1.0).unwrap();
        let expected = p.scale(2.0) + identity(4);
        assert!(close(&f, &expected, 1e-12));
        let e = eig_hermitian(&p).unwrap();
        assert_eq!(e.clusters(1e-9).len(), 2);
        assert!(close(&e.projector(2..4), &p, 1e-12));
    }

    #[test]
    fn mat_fn_examples() {
        let r = mat_fn(&from_real_diag(&[1.0, 4.0]), f64::sqrt).unwrap();
        assert!(close(&r, &from_real_diag(&[1.0, 2.0]), 1e-15));
        let r = mat_fn_complex(&pauli::z(), |t| {
            C64::from_polar(1.0, std::f64::consts::FRAC_PI_2 * t)
        })
        .unwrap();
        let expected = CMat::from_diagonal(&CVec::from_vec(vec![c(0., 1.), c(0., -1.)]));
        assert!(close(&r, &expected, 1e-15));
        let p = (identity(2) + pauli::x()).scale(0.5);
        assert!(close(&mat_fn(&p, |x| x).unwrap(), &p, 1e-15));
    }

    #[test]
    fn mat_fn_domain_error() {
        let a = from_real_diag(&[1.0, 0.0]);
        assert!(matches!(mat_fn(&a, f64::ln), Err(QthermError::DomainError(_))));
        let l = mat_fn_on_support(&a, 1e-12, f64::ln).unwrap();
        assert!(max_abs(&l) < 1e-15);
    }

    #[test]
    fn kron_examples() {
        assert_eq!(kron(&identity(2), &identity(2)).unwrap(), identity(4));
        assert_eq!(
            kron(&pauli::z(), &identity(2)).unwrap(),
            from_real_diag(&[1.0, 1.0, -1.0, -1.0])
        );
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random::matrix(2, &mut rng);
        let b = random::matrix(2, &mut rng);
        let k = kron(&a, &b).unwrap();
        assert!((trace(&k) - trace(&a) * trace(&b)).norm() < 1e-14);
        assert!(matches!(
            kron_capped(&identity(64), &identity(128), 4096),
            Err(QthermError::Overflow { .. })
        ));
    }

    #[test]
    fn partial_trace_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random::density(2, &mut rng);
        let sigma = random::density(3, &mut rng).scale(2.0);
        let joint = kron(&rho, &sigma).unwrap();
        let kept = partial_trace(&joint, &[2, 3], &[0]).unwrap();
        assert!(close(&kept, &(rho.clone() * trace(&sigma)), 1e-14));
        // Bell state
        let s = 1.0 / 2f64.sqrt();
        let phi = CVec::from_vec(vec![c(s, 0.), c(0., 0.), c(0., 0.), c(s, 0.)]);
        let bell = &phi * phi.adjoint();
        for keep in [0usize, 1] {
            let r = partial_trace(&bell, &[2, 2], &[keep]).unwrap();
            assert!(close(&r, &identity(2).scale(0.5), 1e-15));
        }
        let r4 = random::density(4, &mut rng);
        let t = trace(&partial_trace(&r4, &[2, 2], &[1]).unwrap());
        assert!((t - trace(&r4)).norm() < 1e-14);
        assert!(matches!(
            partial_trace(&r4, &[2, 3], &[0]),
            Err(QthermError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn partial_trace_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dims = [2, 3, 2];
        let a = random::density(12, &mut rng);
        let direct = partial_trace(&a, &dims, &[1]).unwrap();
        // trace factor 0 first, then factor 1 of the remainder (old factor 2)
        let step = partial_trace(&a, &dims, &[1, 2]).unwrap();
        let two_step = partial_trace(&step, &[3, 2], &[0]).unwrap();
        let step_b = partial_trace(&a, &dims, &[0, 1]).unwrap();
        let two_step_b = partial_trace(&step_b, &[2, 3], &[1]).unwrap();
        assert!(close(&direct, &two_step, 1e-13));
        assert!(close(&direct, &two_step_b, 1e-13));
    }

    #[test]
    fn embed_matches_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random::matrix(2, &mut rng);
        let b = random::matrix(3, &mut rng);
        let dims = [2, 3, 2];
        let e = embed(&kron(&a, &b).unwrap(), &dims, &[0, 1]).unwrap();
        let k = kron_all(&[a.clone(), b.clone(), identity(2)]).unwrap();
        assert!(close(&e, &k, 1e-14));
        // reversed position order swaps the operator's factors
        let e2 = embed(&kron(&b, &a).unwrap(), &dims, &[1, 0]).unwrap();
        assert!(close(&e2, &k, 1e-14));
        let e3 = embed(&a, &dims, &[2]).unwrap();
        let k3 = kron_all(&[identity(2), identity(3), a]).unwrap();
        assert!(close(&e3, &k3, 1e-14));
    }

    #[test]
    fn superoperator_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b, x) = (
            random::matrix(3, &mut rng),
            random::matrix(3, &mut rng),
            random::matrix(3, &mut rng),
        );
        let lhs = vectorize(&(&a * &x * &b));
        let rhs = sandwich_super(&a, &b) * vectorize(&x);
        assert!((lhs - rhs).norm() < 1e-13);
        let p = transpose_permutation(3);
        assert!((p * vectorize(&x) - vectorize(&x.transpose())).norm() < 1e-15);
        assert_eq!(unvectorize(&vectorize(&x), 3), x);
    }

    #[test]
    fn exp_log_roundtrip_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [2usize, 4, 8, 16] {
            let a = random::hermitian(d, &mut rng);
            let e = mat_fn(&a, f64::exp).unwrap();
            let back = mat_fn(&e, f64::ln).unwrap();
            assert!(close(&back, &a, 1e-8));
        }
    }

    #[test]
    fn unitary_propagation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &t in &[-10.0, -1.3, 0.0, 2.5, 10.0] {
            let h = random::hermitian(6, &mut rng);
            let u = unitary_propagator(&eig_hermitian(&h).unwrap(), t);
            assert!(frobenius(&(&u * u.adjoint() - identity(6))) < 1e-10);
            // agrees with the Padé exponential
            let pade = expm(&h.map(|z| z * c(0.0, t)));
            assert!(close(&u, &pade, 1e-9));
        }
    }

    #[test]
    fn logm_inverts_expm() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random::matrix(4, &mut rng).scale(0.5);
        let l = logm(&expm(&a)).unwrap();
        assert!(close(&expm(&l), &expm(&a), 1e-11));
        let neg = from_real_diag(&[1.0, -1.0]);
        assert!(matches!(logm(&neg), Err(QthermError::LogBranch(_))));
    }

    #[test]
    fn pauli_strings() {
        let p = pauli::string("XXI").unwrap();
        let k = kron_all(&[pauli::x(), pauli::x(), identity(2)]).unwrap();
        assert_eq!(p, k);
        assert!(pauli::string("XQ").is_err());
    }

    proptest! {
        #[test]
        fn kron_associative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random::matrix(2, &mut rng);
            let b = random::matrix(3, &mut rng);
            let cm = random::matrix(2, &mut rng);
            let l = kron(&kron(&a, &b).unwrap(), &cm).unwrap();
            let r = kron(&a, &kron(&b, &cm).unwrap()).unwrap();
            prop_assert!(max_abs(&(l - r)) < 1e-13);
        }

        #[test]
        fn kron_mixed_product(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, cm, d) = (
                random::matrix(2, &mut rng),
                random::matrix(3, &mut rng),
                random::matrix(2, &mut rng),
                random::matrix(3, &mut rng),
            );
            let lhs = kron(&a, &b).unwrap() * kron(&cm, &d).unwrap();
            let rhs = kron(&(&a * &cm), &(&b * &d)).unwrap();
            prop_assert!(frobenius(&(lhs - rhs)) < 1e-12);
        }
    }
}
