//! Dense complex linear algebra.
//!
//! [`ComplexMatrix`] stores entries row-major: entry `(r, c)` lives at
//! `data[r * cols + c]`. Linear maps on operators use column-stacking
//! vectorization, `vec(X)[c * rows + r] = X[(r, c)]`, so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)` and composing maps multiplies their
//! matrices.
//!
//! Small products run on plain loops; everything else (large products,
//! eigendecompositions, SVD, LU) is delegated to `faer`.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Products below this many multiply-adds use the naive kernel.
const NAIVE_MATMUL_LIMIT: usize = 32 * 32 * 32;

/// Numerical tolerances for structural checks on inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub hermitian: f64,
    pub unitary: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-8,
            unitary: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        self.diagonal().into_iter().sum()
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows, "trace_product shape mismatch");
        assert_eq!(self.rows, other.cols, "trace_product shape mismatch");
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Entrywise equality within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.max_abs_diff(other) <= tol
    }

    /// `max |A − A†|` entrywise.
    pub fn hermiticity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        if self.rows * self.cols * other.cols <= NAIVE_MATMUL_LIMIT {
            let mut out = Self::zeros(self.rows, other.cols);
            for i in 0..self.rows {
                for k in 0..self.cols {
                    let a = self[(i, k)];
                    if a == ZERO {
                        continue;
                    }
                    let row = &other.data[k * other.cols..(k + 1) * other.cols];
                    let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                    for (d, &b) in dst.iter_mut().zip(row) {
                        *d += a * b;
                    }
                }
            }
            out
        } else {
            let prod = self.to_faer() * other.to_faer();
            Self::from_faer(prod.as_ref())
        }
    }

    /// Matrix–vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `self · x · self†`.
    pub fn conjugate(&self, x: &Self) -> Self {
        self.matmul(x).matmul(&self.adjoint())
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Sub-block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub(crate) fn to_faer(&self) -> Mat<C64> {
        Mat::from_fn(self.rows, self.cols, |r, c| self[(r, c)])
    }

    pub(crate) fn from_faer(m: MatRef<'_, C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Ordered factor dimensions of a tensor-product space, e.g. `[2, 2^n, 2]`
/// for system ⊗ bath ⊗ chain element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorFactorization(Vec<usize>);

impl TensorFactorization {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidFactorization { factors: dims, dim: 0 });
        }
        Ok(Self(dims))
    }

    pub fn single(dim: usize) -> Self {
        Self(vec![dim])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        if self.total() != dim {
            return Err(Error::InvalidFactorization {
                factors: self.0.clone(),
                dim,
            });
        }
        Ok(())
    }

    /// Appends the factors of `other` after those of `self`.
    pub fn join(&self, other: &Self) -> Self {
        let mut dims = self.0.clone();
        dims.extend_from_slice(&other.0);
        Self(dims)
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for k in (0..self.0.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.0[k + 1];
        }
        strides
    }
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (br, bc) = (b.rows, b.cols);
    ComplexMatrix::from_fn(a.rows * br, a.cols * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    factors.iter().fold(ComplexMatrix::identity(1), |acc, f| kron(&acc, f))
}

/// Runs every dense kernel on the calling thread. Results are then
/// independent of the machine's core count.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Eigendecomposition of a Hermitian matrix: `h = V diag(values) V†`,
/// eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V diag(f(values)) V†`.
    pub fn apply_function(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let fv: Vec<C64> = self.values.iter().map(|&x| f(x)).collect();
        let scaled = ComplexMatrix::from_fn(n, n, |r, c| self.vectors[(r, c)] * fv[c]);
        scaled.matmul(&self.vectors.adjoint())
    }

    /// `exp(−i t h)`.
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        self.apply_function(|e| C64::from_polar(1.0, -e * t))
    }
}

pub fn hermitian_eigen(h: &ComplexMatrix, tol: &Tolerances) -> Result<HermitianEigen> {
    check_hermitian(h, tol.hermitian)?;
    let n = h.rows;
    let evd = h
        .hermitian_part()
        .to_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenNotConverged {
            dim: n,
            condition: condition_estimate(h),
        })?;
    let values = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok(HermitianEigen {
        values,
        vectors: ComplexMatrix::from_faer(evd.U()),
    })
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(h: &ComplexMatrix, tol: &Tolerances) -> Result<Vec<f64>> {
    check_hermitian(h, tol.hermitian)?;
    let n = h.rows;
    let vals = h
        .hermitian_part()
        .to_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenNotConverged {
            dim: n,
            condition: condition_estimate(h),
        })?;
    Ok(vals)
}

/// Trace norm `‖a‖₁` of a Hermitian matrix (sum of |eigenvalues|).
pub fn trace_norm_hermitian(a: &ComplexMatrix) -> Result<f64> {
    let vals = hermitian_eigenvalues(&a.hermitian_part(), &Tolerances::default())?;
    Ok(vals.iter().map(|v| v.abs()).sum())
}

/// Trace distance `½‖a − b‖₁` between two Hermitian operators.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    Ok(0.5 * trace_norm_hermitian(&(a - b))?)
}

fn check_hermitian(h: &ComplexMatrix, tolerance: f64) -> Result<()> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            h.rows, h.cols
        )));
    }
    let residual = h.hermiticity_residual();
    if residual > tolerance {
        return Err(Error::NotHermitian { residual, tolerance });
    }
    Ok(())
}

/// `exp(−i t h)` for Hermitian `h`, via its eigendecomposition.
pub fn expm_unitary(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    expm_unitary_with(h, t, &Tolerances::default())
}

pub fn expm_unitary_with(h: &ComplexMatrix, t: f64, tol: &Tolerances) -> Result<ComplexMatrix> {
    Ok(hermitian_eigen(h, tol)?.propagator(t))
}

/// Eigenpairs of a general square matrix.
///
/// `right` and `left` hold eigenvectors as columns, in the order of
/// `values`. Left vectors satisfy `w_i† M = λ_i w_i†` and are scaled so
/// that `w_i† v_j = δ_ij` (taken from the rows of `V⁻¹`, which is exact
/// when the matrix is diagonalizable).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub right: ComplexMatrix,
    pub left: ComplexMatrix,
}

/// Deterministic ordering: modulus descending, then real part descending,
/// then imaginary part descending. Values are compared after rounding to
/// 1e-10 so that numerically tied moduli fall through to the next key.
pub fn eigen_order(values: &[C64]) -> Vec<usize> {
    let q = |x: f64| (x * 1e10).round() as i64;
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let (za, zb) = (values[a], values[b]);
        q(zb.norm())
            .cmp(&q(za.norm()))
            .then(q(zb.re).cmp(&q(za.re)))
            .then(q(zb.im).cmp(&q(za.im)))
            .then(a.cmp(&b))
    });
    idx
}

pub fn sort_eigenvalues(values: &mut Vec<C64>) {
    let order = eigen_order(values);
    *values = order.iter().map(|&i| values[i]).collect();
}

pub fn eig_general(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let fm = m.to_faer();
    let evd = fm.eigen().map_err(|_| Error::EigenNotConverged {
        dim: n,
        condition: condition_estimate(m),
    })?;
    let raw_values: Vec<C64> = evd.S().column_vector().iter().copied().collect();
    let raw_right = evd.U();
    let order = eigen_order(&raw_values);

    let values: Vec<C64> = order.iter().map(|&i| raw_values[i]).collect();
    let right = ComplexMatrix::from_fn(n, n, |r, c| raw_right[(r, order[c])]);
    let inv = right.to_faer().partial_piv_lu().inverse();
    let left = ComplexMatrix::from_fn(n, n, |r, c| inv[(c, r)].conj());
    Ok(EigenDecomposition { values, right, left })
}

/// Eigenvalues only, in [`eigen_order`].
pub fn eigenvalues_general(m: &ComplexMatrix) -> Result<Vec<C64>> {
    let n = m.rows;
    let mut values = m.to_faer().eigenvalues().map_err(|_| Error::EigenNotConverged {
        dim: n,
        condition: condition_estimate(m),
    })?;
    sort_eigenvalues(&mut values);
    Ok(values)
}

/// Singular values, descending.
pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    m.to_faer().singular_values().map_err(|_| Error::EigenNotConverged {
        dim: m.rows.max(m.cols),
        condition: f64::NAN,
    })
}

/// Number of singular values above `tol · max(1, σ_max)`.
pub fn numerical_rank(m: &ComplexMatrix, tol: f64) -> Result<usize> {
    let sv = singular_values(m)?;
    let scale = sv.first().copied().unwrap_or(0.0).max(1.0);
    Ok(sv.iter().filter(|&&s| s > tol * scale).count())
}

/// Frobenius-norm condition estimate `‖M‖·‖M⁻¹‖`.
fn condition_estimate(m: &ComplexMatrix) -> f64 {
    if !m.is_square() || m.rows == 0 {
        return f64::NAN;
    }
    let inv = m.to_faer().partial_piv_lu().inverse();
    let inv_norm = inv.norm_l2();
    if inv_norm.is_finite() {
        m.frobenius_norm() * inv_norm
    } else {
        f64::INFINITY
    }
}

fn validate_keep(factors: &TensorFactorization, keep: &[usize]) -> Result<Vec<usize>> {
    let mut sorted = keep.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != keep.len() || sorted.iter().any(|&k| k >= factors.len()) {
        return Err(Error::DimensionMismatch(format!(
            "invalid factor selection {keep:?} for {} factors",
            factors.len()
        )));
    }
    Ok(sorted)
}

/// Flat offsets of every multi-index over the selected factors.
fn offsets(factors: &TensorFactorization, selected: &[usize]) -> Vec<usize> {
    let strides = factors.strides();
    let mut out = vec![0usize];
    for &k in selected {
        let (d, stride) = (factors.0[k], strides[k]);
        out = out
            .iter()
            .flat_map(|&base| (0..d).map(move |i| base + i * stride))
            .collect();
    }
    out
}

/// Traces out every factor not listed in `keep`. Kept factors retain their
/// original relative order.
pub fn partial_trace(rho: &ComplexMatrix, factors: &TensorFactorization, keep: &[usize]) -> Result<ComplexMatrix> {
    if !rho.is_square() {
        return Err(Error::DimensionMismatch("partial trace of a non-square matrix".into()));
    }
    factors.check(rho.rows)?;
    let keep = validate_keep(factors, keep)?;
    let traced: Vec<usize> = (0..factors.len()).filter(|k| !keep.contains(k)).collect();
    let kept_off = offsets(factors, &keep);
    let traced_off = offsets(factors, &traced);
    let n = kept_off.len();
    Ok(ComplexMatrix::from_fn(n, n, |a, b| {
        traced_off
            .iter()
            .map(|&t| rho[(kept_off[a] + t, kept_off[b] + t)])
            .sum()
    }))
}

/// Reorders tensor factors: factor `k` of the result is factor `perm[k]` of
/// the input.
pub fn permute_factors(
    m: &ComplexMatrix,
    factors: &TensorFactorization,
    perm: &[usize],
) -> Result<(ComplexMatrix, TensorFactorization)> {
    factors.check(m.rows)?;
    let mut check = perm.to_vec();
    check.sort_unstable();
    if check != (0..factors.len()).collect::<Vec<_>>() {
        return Err(Error::DimensionMismatch(format!("{perm:?} is not a permutation")));
    }
    // Enumerating old offsets in the new factor order gives, for each new
    // flat index, the corresponding old flat index.
    let map = offsets(factors, perm);
    let new_factors = TensorFactorization(perm.iter().map(|&k| factors.0[k]).collect());
    let out = ComplexMatrix::from_fn(m.rows, m.cols, |r, c| m[(map[r], map[c])]);
    Ok((out, new_factors))
}

/// Column-stacking vectorization.
pub fn vectorize(x: &ComplexMatrix) -> Vec<C64> {
    let mut v = Vec::with_capacity(x.rows * x.cols);
    for c in 0..x.cols {
        for r in 0..x.rows {
            v.push(x[(r, c)]);
        }
    }
    v
}

/// Inverse of [`vectorize`] for a square `dim × dim` operator.
pub fn devectorize(v: &[C64], dim: usize) -> ComplexMatrix {
    assert_eq!(v.len(), dim * dim, "vector length does not match dim²");
    ComplexMatrix::from_fn(dim, dim, |r, c| v[c * dim + r])
}

/// Matrix of a linear map on `dim × dim` operators in the column-stacking
/// basis: column `c·dim + r` is `vec(apply(E_rc))`.
pub fn map_to_matrix(apply: impl Fn(&ComplexMatrix) -> ComplexMatrix, dim: usize) -> ComplexMatrix {
    let n = dim * dim;
    let mut out = ComplexMatrix::zeros(n, n);
    for c in 0..dim {
        for r in 0..dim {
            let mut unit = ComplexMatrix::zeros(dim, dim);
            unit[(r, c)] = ONE;
            let image = vectorize(&apply(&unit));
            let col = c * dim + r;
            for (row, z) in image.into_iter().enumerate() {
                out[(row, col)] = z;
            }
        }
    }
    out
}
