//! Dense complex linear algebra for operators on `Z_L`.
//!
//! Everything downstream (frame operators, localization operators, quilted
//! global operators) is a Hermitian matrix of side at most ~1000, so this
//! module provides exactly the dense kernels those consumers need:
//!
//! * [`herm_eig`]: full eigendecomposition of a Hermitian matrix via unitary
//!   Householder reduction to real symmetric tridiagonal form followed by
//!   the implicit-shift QL iteration, with eigenvectors accumulated along
//!   the way. Eigenvalues are returned in descending order with a stable
//!   tie-break on the original index.
//! * [`matfun_psd`]: spectral functions (inverse, inverse square root,
//!   square root) of positive semidefinite matrices, with an eigenvalue
//!   floor so near-singular operators invert to something finite and the
//!   caller learns that clamping happened.
//! * [`op_norm`]: largest singular value by power iteration on `A* A`,
//!   usable on non-Hermitian matrices such as projector differences.
//!
//! The solver is deterministic: no randomized pivoting, a fixed iteration
//! order, and a fixed seed for the power-iteration start vector.

use num_complex::Complex64;
use rand::SeedableRng;
use thiserror::Error;

/// Maximum QL iterations per eigenvalue before giving up.
const QL_MAX_ITER: usize = 50;

/// Maximum power-iteration steps in [`op_norm`].
const OP_NORM_MAX_ITER: usize = 20_000;

/// Successive estimates must agree within tolerance this many times in a row
/// before [`op_norm`] accepts convergence; guards against a premature stop
/// when two singular values nearly coincide.
const OP_NORM_STREAK: usize = 3;

/// Fixed seed for the power-iteration start vector.
const OP_NORM_SEED: u64 = 0x7f4a_7c15_9e37_79b9;

/// Relative tolerance on negative eigenvalues in [`matfun_psd`]: the input
/// counts as positive semidefinite when its smallest eigenvalue is at least
/// `-PSD_REL_TOL * max(lambda_max, 1)`.
const PSD_REL_TOL: f64 = 1e-8;

/// Hermitian-defect tolerance used by [`matfun_psd`] when it decomposes its
/// input, relative to the largest entry magnitude.
const MATFUN_HERMITIAN_REL_TOL: f64 = 1e-8;

/// Errors from the dense kernels.
#[derive(Debug, Error)]
pub enum NumKernelError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must have positive dimensions")]
    Empty,
    #[error("matrix contains a non-finite entry")]
    NotFinite,
    #[error("matrix is not Hermitian: max |A - A*| entry {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:.3e} below -{tol:.3e}")]
    NotPsd { min_eigenvalue: f64, tol: f64 },
    #[error("eigenvalue floor {floor:.3e} must be positive for this spectral function")]
    InvalidFloor { floor: f64 },
    #[error("{what} did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        residual: f64,
        iterations: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Identity matrix of side `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    /// Builds a matrix entry by entry from a closure over `(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Stacks column vectors (all of equal length) into a matrix.
    pub fn from_columns(cols: &[Vec<Complex64>]) -> Self {
        assert!(!cols.is_empty(), "need at least one column");
        let rows = cols[0].len();
        assert!(cols.iter().all(|c| c.len() == rows), "ragged columns");
        Self::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    /// Borrows row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies column `j` out as a vector.
    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Sum of diagonal entries.
    pub fn trace(&self) -> Complex64 {
        assert_eq!(self.rows, self.cols, "trace needs a square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    /// Largest magnitude of `A[i][j] - conj(A[j][i])` over all entries;
    /// zero iff the matrix is exactly Hermitian.
    pub fn hermitian_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "defect needs a square matrix");
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self.get(i, j) - self.get(j, i).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + A*) / 2`, the nearest Hermitian matrix.
    pub fn hermitianize(&mut self) {
        assert_eq!(self.rows, self.cols, "hermitianize needs a square matrix");
        for i in 0..self.rows {
            for j in i..self.cols {
                let v = (self.get(i, j) + self.get(j, i).conj()) * 0.5;
                self.set(i, j, v);
                self.set(j, i, v.conj());
            }
        }
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// Matrix product `self * other*`, computed without forming the adjoint.
    pub fn mul_conj_transpose(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.cols, "inner dimensions must agree");
        let mut out = CMatrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                let b = other.row(j);
                let mut acc = Complex64::new(0.0, 0.0);
                for (x, y) in a.iter().zip(b.iter()) {
                    acc += x * y.conj();
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// Entry-wise difference `self - other`.
    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Entry-wise sum `self + other`.
    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Scales every entry in place.
    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }

    /// Rank-one update `self += weight * u * v*`.
    pub fn add_outer_scaled(&mut self, u: &[Complex64], v: &[Complex64], weight: f64) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            let c = u[i] * weight;
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let dst = self.row_mut(i);
            for (d, x) in dst.iter_mut().zip(v.iter()) {
                *d += c * x.conj();
            }
        }
    }

    /// Matrix-vector product `A x`.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols, "vector length must match columns");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Adjoint matrix-vector product `A* x`.
    pub fn adjoint_matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.rows, "vector length must match rows");
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for i in 0..self.rows {
            let c = x[i];
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i).iter()) {
                *o += a.conj() * c;
            }
        }
        out
    }
}

/// Eigendecomposition of a Hermitian matrix: `A = V diag(values) V*` with
/// `values` descending and `V` unitary (eigenvector `k` in column `k`).
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermEig {
    /// Number of eigenvalues strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v > threshold).count()
    }
}

/// Full eigendecomposition of a Hermitian matrix.
///
/// `tol` bounds the accepted Hermitian defect `max |A - A*|` entry-wise;
/// within that tolerance the matrix is symmetrized and decomposed, beyond it
/// the call fails. The returned eigenvalues are descending; equal values
/// keep their original relative order.
pub fn herm_eig(a: &CMatrix, tol: f64) -> Result<HermEig, NumKernelError> {
    if a.rows() != a.cols() {
        return Err(NumKernelError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.is_finite() {
        return Err(NumKernelError::NotFinite);
    }
    let defect = a.hermitian_defect();
    if defect > tol {
        return Err(NumKernelError::NotHermitian { defect, tol });
    }
    let n = a.rows();
    let mut b = a.clone();
    b.hermitianize();

    if n == 1 {
        return Ok(HermEig {
            values: vec![b.get(0, 0).re],
            vectors: CMatrix::identity(1),
        });
    }

    let mut q = CMatrix::identity(n);
    let (mut d, e_complex) = householder_tridiagonalize(&mut b, &mut q);

    // Absorb the subdiagonal phases into the accumulated unitary so the QL
    // stage works on a real symmetric tridiagonal matrix.
    let mut e = vec![0.0f64; n];
    let mut phase = Complex64::new(1.0, 0.0);
    for i in 0..n - 1 {
        let t = e_complex[i].norm();
        if t > 0.0 {
            phase = e_complex[i] * phase / t;
        }
        e[i] = t;
        for r in 0..n {
            let v = q.get(r, i + 1) * phase;
            q.set(r, i + 1, v);
        }
    }

    ql_implicit_shift(&mut d, &mut e, &mut q)?;
    sort_descending(&mut d, &mut q);

    Ok(HermEig {
        values: d,
        vectors: q,
    })
}

/// Reduces Hermitian `b` to tridiagonal form by Householder reflections,
/// accumulating the product of reflections into `q`. Returns the real
/// diagonal and the complex subdiagonal.
fn householder_tridiagonalize(b: &mut CMatrix, q: &mut CMatrix) -> (Vec<f64>, Vec<Complex64>) {
    let n = b.rows();
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let mut x = vec![Complex64::new(0.0, 0.0); m];
        for (r, xi) in x.iter_mut().enumerate() {
            *xi = b.get(k + 1 + r, k);
        }
        let norm_x = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let ph = if x[0].norm() > 0.0 {
            x[0] / x[0].norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -ph * norm_x;

        let mut w = x;
        w[0] -= alpha;
        let wnorm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            continue;
        }
        for z in &mut w {
            *z /= wnorm;
        }

        // Two-sided update of the trailing block T <- T - w q* - q w*
        // with q = 2 (T w - (w* T w) w).
        let mut p = vec![Complex64::new(0.0, 0.0); m];
        for (r, pi) in p.iter_mut().enumerate() {
            let row = &b.row(k + 1 + r)[k + 1..];
            *pi = row.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        }
        let kappa: f64 = w
            .iter()
            .zip(p.iter())
            .map(|(wi, pi)| (wi.conj() * pi).re)
            .sum();
        let qvec: Vec<Complex64> = p
            .iter()
            .zip(w.iter())
            .map(|(pi, wi)| 2.0 * (pi - kappa * wi))
            .collect();
        for r in 0..m {
            let wr = w[r];
            let qr = qvec[r];
            let row = &mut b.row_mut(k + 1 + r)[k + 1..];
            for (c, cell) in row.iter_mut().enumerate() {
                *cell -= wr * qvec[c].conj() + qr * w[c].conj();
            }
        }

        b.set(k + 1, k, alpha);
        b.set(k, k + 1, alpha.conj());
        for r in k + 2..n {
            b.set(r, k, Complex64::new(0.0, 0.0));
            b.set(k, r, Complex64::new(0.0, 0.0));
        }

        // Accumulate q <- q * (I - 2 w w*), with w embedded at rows k+1.. .
        for r in 0..n {
            let row = &mut q.row_mut(r)[k + 1..];
            let y: Complex64 = row.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let y2 = 2.0 * y;
            for (cell, wc) in row.iter_mut().zip(w.iter()) {
                *cell -= y2 * wc.conj();
            }
        }
    }

    let d: Vec<f64> = (0..n).map(|i| b.get(i, i).re).collect();
    let e: Vec<Complex64> = (0..n - 1).map(|i| b.get(i + 1, i)).collect();
    (d, e)
}

/// Implicit-shift QL iteration on a real symmetric tridiagonal matrix with
/// diagonal `d` and subdiagonal `e` (`e[i]` couples `d[i]` and `d[i+1]`,
/// `e[n-1]` unused). Rotations are accumulated into the complex columns of
/// `z`. On success `d` holds the eigenvalues, unsorted.
fn ql_implicit_shift(
    d: &mut [f64],
    e: &mut [f64],
    z: &mut CMatrix,
) -> Result<(), NumKernelError> {
    let n = d.len();
    let nrows = z.rows();
    let eps = f64::EPSILON;
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    e[n - 1] = 0.0;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0usize;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(NumKernelError::NoConvergence {
                        what: "QL eigenvalue iteration",
                        residual: e[l].abs(),
                        iterations: iter - 1,
                    });
                }

                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..nrows {
                        let hk = z.get(k, i + 1);
                        let zk = z.get(k, i);
                        z.set(k, i + 1, s * zk + c * hk);
                        z.set(k, i, c * zk - s * hk);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Sorts eigenvalues into descending order (stable on the original index)
/// and permutes the eigenvector columns to match.
fn sort_descending(d: &mut Vec<f64>, z: &mut CMatrix) {
    let n = d.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("eigenvalues are finite"));
    let sorted: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    let mut vecs = CMatrix::zeros(z.rows(), n);
    for (new_col, &old_col) in idx.iter().enumerate() {
        for r in 0..z.rows() {
            vecs.set(r, new_col, z.get(r, old_col));
        }
    }
    *d = sorted;
    *z = vecs;
}

/// Spectral functions supported by [`matfun_psd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralFn {
    Inverse,
    InverseSqrt,
    Sqrt,
}

/// Result of a spectral matrix function: the transformed matrix and whether
/// any eigenvalue had to be clamped up to the floor.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub matrix: CMatrix,
    pub clamped: bool,
}

/// Default eigenvalue floor relative to the largest eigenvalue.
pub fn default_spectral_floor(lambda_max: f64) -> f64 {
    1e-12 * lambda_max.max(0.0)
}

/// Applies a spectral function to a Hermitian positive semidefinite matrix:
/// `V f(max(lambda, floor)) V*`. Eigenvalues below `floor` are clamped and
/// the result is flagged, so near-singular inversions stay finite but
/// detectable. `Inverse` and `InverseSqrt` require a strictly positive
/// floor; `Sqrt` accepts any nonnegative floor.
pub fn matfun_psd(
    a: &CMatrix,
    f: SpectralFn,
    floor: f64,
) -> Result<SpectralResult, NumKernelError> {
    match f {
        SpectralFn::Inverse | SpectralFn::InverseSqrt => {
            if !(floor > 0.0) {
                return Err(NumKernelError::InvalidFloor { floor });
            }
        }
        SpectralFn::Sqrt => {
            if !(floor >= 0.0) {
                return Err(NumKernelError::InvalidFloor { floor });
            }
        }
    }
    let tol = MATFUN_HERMITIAN_REL_TOL * a.max_abs().max(1.0);
    let eig = herm_eig(a, tol)?;
    let lambda_max = eig.values.first().copied().unwrap_or(0.0);
    let lambda_min = eig.values.last().copied().unwrap_or(0.0);
    let psd_tol = PSD_REL_TOL * lambda_max.abs().max(1.0);
    if lambda_min < -psd_tol {
        return Err(NumKernelError::NotPsd {
            min_eigenvalue: lambda_min,
            tol: psd_tol,
        });
    }

    let clamped = eig.values.iter().any(|&v| v < floor);
    let weights: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| {
            let vc = v.max(floor);
            match f {
                SpectralFn::Inverse => 1.0 / vc,
                SpectralFn::InverseSqrt => 1.0 / vc.sqrt(),
                SpectralFn::Sqrt => vc.sqrt(),
            }
        })
        .collect();

    let n = a.rows();
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        for i in 0..n {
            let v = scaled.get(i, j) * weights[j];
            scaled.set(i, j, v);
        }
    }
    let mut matrix = scaled.mul_conj_transpose(&eig.vectors);
    matrix.hermitianize();
    Ok(SpectralResult { matrix, clamped })
}

/// Largest singular value of `a` (the `l2 -> l2` operator norm), computed by
/// power iteration on `A* A` from a fixed pseudorandom start vector.
/// Converges when successive estimates agree to relative tolerance `tol`
/// several times in a row.
pub fn op_norm(a: &CMatrix, tol: f64) -> Result<f64, NumKernelError> {
    if !a.is_finite() {
        return Err(NumKernelError::NotFinite);
    }
    if a.max_abs() == 0.0 {
        return Ok(0.0);
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(OP_NORM_SEED);
    let mut v = random_unit_vector(a.cols(), &mut rng);

    let mut prev = f64::NAN;
    let mut streak = 0usize;
    for iter in 1..=OP_NORM_MAX_ITER {
        let w = a.matvec(&v);
        let sigma_sq: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        let sigma = sigma_sq.sqrt();
        if sigma == 0.0 {
            // v landed exactly in the kernel; restart from a fresh vector.
            v = random_unit_vector(a.cols(), &mut rng);
            continue;
        }
        let u = a.adjoint_matvec(&w);
        let unorm: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if unorm == 0.0 {
            return Ok(sigma);
        }
        v = u;
        for z in &mut v {
            *z /= unorm;
        }

        if prev.is_finite() && (sigma - prev).abs() <= tol * sigma.max(f64::MIN_POSITIVE) {
            streak += 1;
            if streak >= OP_NORM_STREAK {
                return Ok(sigma);
            }
        } else {
            streak = 0;
        }
        let _ = iter;
        prev = sigma;
    }
    Err(NumKernelError::NoConvergence {
        what: "operator-norm power iteration",
        residual: prev,
        iterations: OP_NORM_MAX_ITER,
    })
}

fn random_unit_vector(n: usize, rng: &mut impl rand::Rng) -> Vec<Complex64> {
    use rand_distr::StandardNormal;
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for z in &mut v {
            *z /= norm;
        }
    } else {
        v[0] = Complex64::new(1.0, 0.0);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let mut a = random_matrix(n, rng);
        a.hermitianize();
        a
    }

    fn reconstruct(eig: &HermEig) -> CMatrix {
        let n = eig.values.len();
        let mut scaled = eig.vectors.clone();
        for j in 0..n {
            for i in 0..eig.vectors.rows() {
                let v = scaled.get(i, j) * eig.values[j];
                scaled.set(i, j, v);
            }
        }
        scaled.mul_conj_transpose(&eig.vectors)
    }

    fn orthonormality_defect(v: &CMatrix) -> f64 {
        let gram = v.adjoint().mul(v);
        gram.sub(&CMatrix::identity(v.cols())).max_abs()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = herm_eig(&CMatrix::identity(4), 0.0).unwrap();
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(orthonormality_defect(&eig.vectors) < 1e-12);
    }

    #[test]
    fn diagonal_matrix_sorts_descending_with_basis_vectors() {
        let mut a = CMatrix::zeros(3, 3);
        a.set(0, 0, Complex64::new(3.0, 0.0));
        a.set(1, 1, Complex64::new(1.0, 0.0));
        a.set(2, 2, Complex64::new(2.0, 0.0));
        let eig = herm_eig(&a, 0.0).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        // Columns must be the standard basis vectors e0, e2, e1 up to phase.
        for (col, expect_row) in [(0usize, 0usize), (1, 2), (2, 1)] {
            for r in 0..3 {
                let mag = eig.vectors.get(r, col).norm();
                let want = if r == expect_row { 1.0 } else { 0.0 };
                assert!((mag - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_hermitian_reconstructs_to_roundoff() {
        let mut r = rng(7);
        let a = random_hermitian(8, &mut r);
        let eig = herm_eig(&a, 0.0).unwrap();
        assert!(reconstruct(&eig).sub(&a).max_abs() <= 1e-12);
        assert!(orthonormality_defect(&eig.vectors) <= 1e-12);
    }

    #[test]
    fn larger_random_hermitian_meets_relative_tolerance() {
        let mut r = rng(11);
        let a = random_hermitian(64, &mut r);
        let eig = herm_eig(&a, 0.0).unwrap();
        let scale = a.max_abs();
        assert!(reconstruct(&eig).sub(&a).max_abs() <= 1e-10 * scale);
        assert!(orthonormality_defect(&eig.vectors) <= 1e-10);
        let trace: f64 = eig.values.iter().sum();
        assert!((trace - a.trace().re).abs() <= 1e-10 * scale * 64.0);
    }

    #[test]
    fn degenerate_spectrum_keeps_orthonormal_vectors() {
        let mut r = rng(13);
        let u = random_unit_vector(6, &mut r);
        let mut a = CMatrix::identity(6);
        a.add_outer_scaled(&u, &u, 1.0);
        let eig = herm_eig(&a, 1e-14).unwrap();
        assert!((eig.values[0] - 2.0).abs() < 1e-12);
        for k in 1..6 {
            assert!((eig.values[k] - 1.0).abs() < 1e-12);
        }
        assert!(orthonormality_defect(&eig.vectors) <= 1e-11);
        assert!(reconstruct(&eig).sub(&a).max_abs() <= 1e-11);
    }

    #[test]
    fn ties_keep_original_index_order() {
        let mut d = vec![2.0, 5.0, 2.0, 5.0];
        let mut z = CMatrix::from_fn(4, 4, |i, j| {
            Complex64::new((i * 10 + j) as f64, 0.0)
        });
        sort_descending(&mut d, &mut z);
        assert_eq!(d, vec![5.0, 5.0, 2.0, 2.0]);
        // Original columns 1, 3 then 0, 2.
        assert_eq!(z.get(0, 0).re, 1.0);
        assert_eq!(z.get(0, 1).re, 3.0);
        assert_eq!(z.get(0, 2).re, 0.0);
        assert_eq!(z.get(0, 3).re, 2.0);
    }

    #[test]
    fn rejects_non_square_non_finite_and_non_hermitian() {
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(
            herm_eig(&rect, 0.0),
            Err(NumKernelError::NotSquare { .. })
        ));

        let mut inf = CMatrix::identity(2);
        inf.set(0, 1, Complex64::new(f64::INFINITY, 0.0));
        assert!(matches!(herm_eig(&inf, 0.0), Err(NumKernelError::NotFinite)));

        let mut skew = CMatrix::identity(2);
        skew.set(0, 1, Complex64::new(0.5, 0.0));
        assert!(matches!(
            herm_eig(&skew, 1e-12),
            Err(NumKernelError::NotHermitian { .. })
        ));
        // The same defect passes once the tolerance allows it.
        assert!(herm_eig(&skew, 0.6).is_ok());
    }

    #[test]
    fn matfun_inverse_of_identity_is_identity() {
        let res = matfun_psd(&CMatrix::identity(5), SpectralFn::Inverse, 1e-12).unwrap();
        assert!(!res.clamped);
        assert!(res.matrix.sub(&CMatrix::identity(5)).max_abs() < 1e-12);
    }

    #[test]
    fn matfun_inverse_sqrt_of_diagonal() {
        let mut a = CMatrix::zeros(2, 2);
        a.set(0, 0, Complex64::new(4.0, 0.0));
        a.set(1, 1, Complex64::new(9.0, 0.0));
        let res = matfun_psd(&a, SpectralFn::InverseSqrt, 1e-12).unwrap();
        assert!((res.matrix.get(0, 0).re - 0.5).abs() < 1e-13);
        assert!((res.matrix.get(1, 1).re - 1.0 / 3.0).abs() < 1e-13);
        assert!(res.matrix.get(0, 1).norm() < 1e-13);
    }

    #[test]
    fn matfun_inverse_times_matrix_is_identity() {
        let mut r = rng(21);
        let c = random_matrix(6, &mut r);
        let mut a = c.mul_conj_transpose(&c);
        for i in 0..6 {
            let v = a.get(i, i) + Complex64::new(0.1, 0.0);
            a.set(i, i, v);
        }
        let inv = matfun_psd(&a, SpectralFn::Inverse, default_spectral_floor(20.0))
            .unwrap()
            .matrix;
        assert!(inv.mul(&a).sub(&CMatrix::identity(6)).max_abs() <= 1e-10);
    }

    #[test]
    fn matfun_sqrt_squares_back() {
        let mut r = rng(23);
        let c = random_matrix(6, &mut r);
        let mut a = c.mul_conj_transpose(&c);
        for i in 0..6 {
            let v = a.get(i, i) + Complex64::new(1e-3, 0.0);
            a.set(i, i, v);
        }
        let root = matfun_psd(&a, SpectralFn::Sqrt, 0.0).unwrap().matrix;
        assert!(root.mul(&root).sub(&a).max_abs() <= 1e-9 * a.max_abs());
    }

    #[test]
    fn matfun_flags_clamped_eigenvalues() {
        let mut a = CMatrix::zeros(2, 2);
        a.set(0, 0, Complex64::new(1.0, 0.0));
        a.set(1, 1, Complex64::new(1e-15, 0.0));
        let res = matfun_psd(&a, SpectralFn::Inverse, 1e-12).unwrap();
        assert!(res.clamped);
        // The clamped direction inverts to 1/floor, not to 1e15.
        assert!((res.matrix.get(1, 1).re - 1e12).abs() / 1e12 < 1e-10);

        let clean = matfun_psd(&CMatrix::identity(2), SpectralFn::Inverse, 1e-12).unwrap();
        assert!(!clean.clamped);
    }

    #[test]
    fn matfun_rejects_indefinite_and_bad_floor() {
        let mut a = CMatrix::zeros(2, 2);
        a.set(0, 0, Complex64::new(1.0, 0.0));
        a.set(1, 1, Complex64::new(-1.0, 0.0));
        assert!(matches!(
            matfun_psd(&a, SpectralFn::Sqrt, 0.0),
            Err(NumKernelError::NotPsd { .. })
        ));
        assert!(matches!(
            matfun_psd(&CMatrix::identity(2), SpectralFn::Inverse, 0.0),
            Err(NumKernelError::InvalidFloor { .. })
        ));
    }

    #[test]
    fn op_norm_zero_matrix_is_zero() {
        assert_eq!(op_norm(&CMatrix::zeros(4, 4), 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn op_norm_of_diagonal_is_largest_magnitude() {
        let mut a = CMatrix::zeros(2, 2);
        a.set(0, 0, Complex64::new(2.0, 0.0));
        a.set(1, 1, Complex64::new(-5.0, 0.0));
        let got = op_norm(&a, 1e-10).unwrap();
        assert!((got - 5.0).abs() < 1e-8);
    }

    #[test]
    fn op_norm_matches_dense_singular_value() {
        // Oracle: the largest singular value is the square root of the top
        // eigenvalue of A* A, computed by the independent dense solver.
        let mut r = rng(31);
        let a = random_matrix(10, &mut r);
        let gram = a.adjoint().mul(&a);
        let eig = herm_eig(&gram, 1e-10).unwrap();
        let want = eig.values[0].sqrt();
        let got = op_norm(&a, 1e-10).unwrap();
        assert!((got - want).abs() <= 1e-8 * want);
    }

    #[test]
    fn op_norm_dominates_every_matvec() {
        let mut r = rng(37);
        let a = random_matrix(12, &mut r);
        let sigma = op_norm(&a, 1e-10).unwrap();
        for _ in 0..100 {
            let v = random_unit_vector(12, &mut r);
            let av: f64 = a.matvec(&v).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(av <= sigma * (1.0 + 1e-9));
        }
    }

    #[test]
    fn op_norm_handles_rectangular_matrices() {
        let mut r = rng(41);
        let a = CMatrix::from_fn(5, 9, |_, _| {
            Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
        });
        let gram = a.adjoint().mul(&a);
        let want = herm_eig(&gram, 1e-10).unwrap().values[0].sqrt();
        let got = op_norm(&a, 1e-10).unwrap();
        assert!((got - want).abs() <= 1e-8 * want);
    }
}
