//! Dense symmetric-matrix primitives: validated matrix types, permutations,
//! Cholesky factors, the symmetric square root and the zero-mean Gaussian KL
//! divergence.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Absolute symmetry tolerance used by validation.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Absolute tolerance on unit diagonal entries.
pub const UNIT_DIAGONAL_TOL: f64 = 1e-10;

/// Symmetric positive definite matrix. Diagonal entries are arbitrary positive
/// variances.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix<T> {
    inner: Matrix<T>,
}

impl<T: Scalar> SpdMatrix<T> {
    /// Validates symmetry (raw deviation within [`SYMMETRY_TOL`]) and positive
    /// definiteness, then stores the exactly symmetric average `(m + m^T)/2`.
    pub fn new(m: Matrix<T>) -> Result<Self> {
        check_square(&m)?;
        m.all_finite()?;
        check_symmetric(&m, T::tol(SYMMETRY_TOL))?;
        Self::from_symmetrizing(&m)
    }

    /// Averages `m` with its transpose without a tolerance check, then tests
    /// positive definiteness. Used for matrices produced by congruence
    /// transforms where roundoff asymmetry is expected.
    pub fn from_symmetrizing(m: &Matrix<T>) -> Result<Self> {
        check_square(m)?;
        let inner = m.symmetrized();
        cholesky_lower(&inner)?;
        Ok(Self { inner })
    }

    pub(crate) fn from_trusted(inner: Matrix<T>) -> Self {
        Self { inner }
    }

    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.inner
    }

    /// Correlation of entries `u`, `v`: `m[u][v] / sqrt(m[u][u] m[v][v])`.
    pub fn correlation(&self, u: usize, v: usize) -> T {
        self.inner[(u, v)] / (self.inner[(u, u)] * self.inner[(v, v)]).sqrt()
    }

    /// Rescales to unit diagonal, `D^{-1/2} M D^{-1/2}`.
    pub fn normalized(&self) -> CorrMatrix<T> {
        let n = self.n();
        let mut m = Matrix::from_fn(n, n, |i, j| self.correlation(i, j));
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        CorrMatrix {
            spd: Self::from_trusted(m),
        }
    }
}

impl<T> Deref for SpdMatrix<T> {
    type Target = Matrix<T>;

    fn deref(&self) -> &Matrix<T> {
        &self.inner
    }
}

/// Symmetric positive definite matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrMatrix<T> {
    spd: SpdMatrix<T>,
}

impl<T: Scalar> CorrMatrix<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            spd: SpdMatrix::from_trusted(Matrix::identity(n)),
        }
    }

    pub fn n(&self) -> usize {
        self.spd.n()
    }

    pub fn as_spd(&self) -> &SpdMatrix<T> {
        &self.spd
    }

    pub fn into_spd(self) -> SpdMatrix<T> {
        self.spd
    }

    /// Accepts an already validated SPD matrix whose diagonal is within
    /// [`UNIT_DIAGONAL_TOL`] of one. The diagonal is snapped to exactly one.
    pub fn from_spd(spd: SpdMatrix<T>) -> Result<Self> {
        let tol = T::tol(UNIT_DIAGONAL_TOL);
        for (i, d) in spd.diag().into_iter().enumerate() {
            if (d - T::one()).abs() > tol {
                return Err(Error::NotUnitDiagonal {
                    index: i,
                    value: d.as_f64(),
                });
            }
        }
        let mut m = spd.into_matrix();
        for i in 0..m.nrows() {
            m[(i, i)] = T::one();
        }
        Ok(Self {
            spd: SpdMatrix::from_trusted(m),
        })
    }

    pub(crate) fn from_trusted(m: Matrix<T>) -> Self {
        Self {
            spd: SpdMatrix::from_trusted(m),
        }
    }
}

impl<T> Deref for CorrMatrix<T> {
    type Target = SpdMatrix<T>;

    fn deref(&self) -> &SpdMatrix<T> {
        &self.spd
    }
}

/// Validates a raw square matrix as a correlation matrix.
pub fn validate_corr<T: Scalar>(m: Matrix<T>) -> Result<CorrMatrix<T>> {
    check_square(&m)?;
    m.all_finite()?;
    check_symmetric(&m, T::tol(SYMMETRY_TOL))?;
    let tol = T::tol(UNIT_DIAGONAL_TOL);
    for (i, d) in m.diag().into_iter().enumerate() {
        if (d - T::one()).abs() > tol {
            return Err(Error::NotUnitDiagonal {
                index: i,
                value: d.as_f64(),
            });
        }
    }
    CorrMatrix::from_spd(SpdMatrix::from_symmetrizing(&m)?)
}

fn check_square<T: Scalar>(m: &Matrix<T>) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

fn check_symmetric<T: Scalar>(m: &Matrix<T>, tol: T) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let dev = (m[(i, j)] - m[(j, i)]).abs();
            if dev > tol {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    deviation: dev.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// Lower triangular matrix with a strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular<T> {
    inner: Matrix<T>,
}

impl<T: Scalar> LowerTriangular<T> {
    pub fn new(m: Matrix<T>) -> Result<Self> {
        check_square(&m)?;
        let n = m.nrows();
        for i in 0..n {
            if !(m[(i, i)] > T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry {i} of a triangular factor must be positive"
                )));
            }
            for j in (i + 1)..n {
                if m[(i, j)] != T::zero() {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i}, {j}) above the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(Self { inner: m })
    }

    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.inner
    }

    /// Inverse by forward substitution, column by column.
    pub fn inverse(&self) -> LowerTriangular<T> {
        LowerTriangular {
            inner: lower_inverse(&self.inner),
        }
    }

    /// `2 * sum(log L[i][i])`, the log-determinant of `L L^T`.
    pub fn log_det_gram(&self) -> T {
        let two = T::lit(2.0);
        self.inner.diag().into_iter().map(|d| two * d.ln()).sum()
    }
}

impl<T> Deref for LowerTriangular<T> {
    type Target = Matrix<T>;

    fn deref(&self) -> &Matrix<T> {
        &self.inner
    }
}

fn lower_inverse<T: Scalar>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.nrows();
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        inv[(col, col)] = T::one() / l[(col, col)];
        for i in (col + 1)..n {
            let mut acc = T::zero();
            for k in col..i {
                let x = inv[(k, col)];
                if x != T::zero() {
                    acc += l[(i, k)] * x;
                }
            }
            inv[(i, col)] = -acc / l[(i, i)];
        }
    }
    inv
}

/// Inverse of an upper triangular matrix by back substitution.
pub fn upper_inverse<T: Scalar>(u: &Matrix<T>) -> Matrix<T> {
    lower_inverse(&u.transpose()).transpose()
}

/// Bijection on `0..n`. `position(label)` is where `label` lands after the
/// permutation is applied; `order()[k]` is the label placed at position `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    position: Vec<usize>,
    order: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            position: (0..n).collect(),
            order: (0..n).collect(),
        }
    }

    /// Builds the permutation that places `order[k]` at position `k`.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut position = vec![usize::MAX; n];
        for (k, &label) in order.iter().enumerate() {
            if label >= n {
                return Err(Error::InvalidPermutation(format!(
                    "label {label} out of range for n = {n}"
                )));
            }
            if position[label] != usize::MAX {
                return Err(Error::InvalidPermutation(format!(
                    "label {label} appears twice"
                )));
            }
            position[label] = k;
        }
        Ok(Self { position, order })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    #[inline]
    pub fn position(&self, label: usize) -> usize {
        self.position[label]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn positions(&self) -> &[usize] {
        &self.position
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(k, &l)| k == l)
    }

    pub fn inverse(&self) -> Self {
        Self {
            position: self.order.clone(),
            order: self.position.clone(),
        }
    }

    /// Permutation matrix `P` with `(P m P^T)[p(i)][p(j)] = m[i][j]`.
    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let n = self.len();
        let mut p = Matrix::zeros(n, n);
        for (label, &pos) in self.position.iter().enumerate() {
            p[(pos, label)] = T::one();
        }
        p
    }

    /// `P m P^T` for any square matrix.
    pub fn apply<T: Scalar>(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_dim(m)?;
        let n = self.len();
        Ok(Matrix::from_fn(n, n, |a, b| {
            m[(self.order[a], self.order[b])]
        }))
    }

    /// `P^T m P`, undoing [`Permutation::apply`].
    pub fn unapply<T: Scalar>(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.inverse().apply(m)
    }

    fn check_dim<T: Scalar>(&self, m: &Matrix<T>) -> Result<()> {
        check_square(m)?;
        if m.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: m.nrows(),
            });
        }
        Ok(())
    }
}

/// `P m P^T` for an SPD matrix; the result stays SPD.
pub fn permute_spd<T: Scalar>(m: &SpdMatrix<T>, p: &Permutation) -> Result<SpdMatrix<T>> {
    Ok(SpdMatrix::from_trusted(p.apply(m.as_matrix())?))
}

/// Lower Cholesky factor `L` with `L L^T = m`. Only the lower triangle of `m`
/// is read.
pub fn cholesky_lower<T: Scalar>(m: &Matrix<T>) -> Result<LowerTriangular<T>> {
    check_square(m)?;
    let n = m.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: d.as_f64(),
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(LowerTriangular { inner: l })
}

/// Upper triangular `U` with `U U^T = m`, obtained by reversing the index
/// order, taking the lower factor, and reversing back.
pub fn cholesky_upper<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    check_square(m)?;
    let n = m.nrows();
    let reversal = Permutation::from_order((0..n).rev().collect())?;
    let l = cholesky_lower(&reversal.apply(m)?).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::NotPositiveDefinite {
            pivot: n - 1 - pivot,
            value,
        },
        other => other,
    })?;
    reversal.unapply(l.as_matrix())
}

/// Log-determinant of an SPD matrix through its Cholesky factor.
pub fn log_det<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    Ok(cholesky_lower(m)?.log_det_gram())
}

/// Inverse of an SPD matrix, `L^-T L^-1`.
pub fn spd_inverse<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let l_inv = cholesky_lower(m)?.inverse();
    Ok(l_inv.transpose().matmul(&l_inv).symmetrized())
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are the eigenvectors.
pub fn symmetric_eigen<T: Scalar>(m: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    check_square(m)?;
    let n = m.nrows();
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm().max(T::min_positive_value());
    let eps = T::epsilon();

    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= eps * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok((a.diag(), v))
}

/// Symmetric square root `S = V sqrt(Lambda) V^T`, so that `S S = m`.
pub fn symmetric_sqrt<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    cholesky_lower(m)?;
    let (values, vectors) = symmetric_eigen(m)?;
    spectral_map(&values, &vectors, |x| x.sqrt())
}

/// Inverse symmetric square root `V Lambda^{-1/2} V^T`.
pub fn inverse_symmetric_sqrt<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    cholesky_lower(m)?;
    let (values, vectors) = symmetric_eigen(m)?;
    spectral_map(&values, &vectors, |x| x.sqrt().recip())
}

fn spectral_map<T: Scalar>(
    values: &[T],
    vectors: &Matrix<T>,
    f: impl Fn(T) -> T,
) -> Result<Matrix<T>> {
    for (i, &ev) in values.iter().enumerate() {
        if !(ev > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                pivot: i,
                value: ev.as_f64(),
            });
        }
    }
    let n = values.len();
    let mapped: Vec<T> = values.iter().map(|&x| f(x)).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = T::zero();
            for k in 0..n {
                acc += vectors[(i, k)] * mapped[k] * vectors[(j, k)];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    Ok(out)
}

/// KL divergence `D(N(0, p) || N(0, q))` in nats,
/// `1/2 (tr(q^-1 p) - n - log|p q^-1|)`.
///
/// With `X = Lq^-1 Lp` (both lower Cholesky factors) the divergence splits
/// into `1/2 sum_i (X_ii^2 - 1 - 2 ln X_ii) + 1/2 sum_{i>j} X_ij^2`, a sum of
/// nonnegative terms, which keeps the result accurate close to zero.
pub fn kl_gauss<T: Scalar>(p: &Matrix<T>, q: &Matrix<T>) -> Result<T> {
    check_square(p)?;
    check_square(q)?;
    if p.nrows() != q.nrows() {
        return Err(Error::DimensionMismatch {
            expected: p.nrows(),
            found: q.nrows(),
        });
    }
    let lp = cholesky_lower(p)?;
    let lq = cholesky_lower(q)?;
    let n = p.nrows();

    // Solve Lq X = Lp column by column; X is lower triangular.
    let mut x = Matrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = lp[(i, col)];
            for k in col..i {
                s -= lq[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / lq[(i, i)];
        }
    }

    let two = T::lit(2.0);
    let mut total = T::zero();
    for i in 0..n {
        let d = x[(i, i)];
        let e = d - T::one();
        total += e * (d + T::one()) - two * e.ln_1p();
        for j in 0..i {
            total += x[(i, j)] * x[(i, j)];
        }
    }
    Ok((T::lit(0.5) * total).max(T::zero()))
}
