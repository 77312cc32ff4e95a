//! Phase-plane regions and time-frequency localization operators.
//!
//! A region is a subset of the discrete phase plane `Z_L x Z_L`. The
//! localization operator of a unit-norm window `phi` and region `Omega`
//! filters a signal through its phase-space content on the region:
//!
//! ```text
//! H f = (1/L) sum_{z in Omega} V_phi f(z) pi(z) phi
//! ```
//!
//! `H` is Hermitian with eigenvalues in `[0, 1]`, `trace H = |Omega| / L`
//! exactly, and `H = I` when the region is the whole plane. Its eigenvalues
//! cluster near 1 (signals living on the region), near 0 (signals living
//! away from it), with a plunge in between of width governed by the region
//! perimeter; the leading eigenvectors span the best subspace for
//! representing signals concentrated on the region.
//!
//! Assembly exploits that the `u`-th diagonal of `H` is the circular
//! convolution of `q_u(y) = phi(y) conj(phi(y - u))` with the per-shift
//! frequency sums `c_u(x) = sum_{omega in Omega_x} exp(2 pi i omega u / L)`,
//! so the whole matrix costs `O(L^2 log L)` instead of the `O(|Omega| L^2)`
//! of summing rank-one terms.

use std::io::Write as IoWrite;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::dsignal::{DSignalError, Signal, TFPoint};
use crate::fft::FftPlan;
use crate::numkernel::{herm_eig, CMatrix, HermEig, NumKernelError};

/// Accepted deviation of the analysis window from unit norm.
pub const UNIT_WINDOW_TOL: f64 = 1e-8;

/// Eigenvalues at or below this threshold count as kernel directions.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-12;

/// Eigenvalues of a localization operator may exceed `[0, 1]` by at most
/// this much roundoff before the decomposition is rejected.
const EIGENVALUE_RANGE_SLACK: f64 = 1e-10;

/// Errors from region construction and localization-operator computations.
#[derive(Debug, Error)]
pub enum TflocError {
    #[error("window length {got} does not match the group size {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("analysis window norm {norm} deviates from 1 by more than {UNIT_WINDOW_TOL:e}")]
    WindowNotUnit { norm: f64 },
    #[error("mask has {got} cells, expected {expected}")]
    MaskSize { expected: usize, got: usize },
    #[error("invalid rectangle: requires start < L and start <= end <= start + L")]
    BadRect,
    #[error("polygon needs at least 3 vertices")]
    BadPolygon,
    #[error("regions live on different group sizes: {0} vs {1}")]
    RegionSizeMismatch(usize, usize),
    #[error("operation requires a nonempty region")]
    EmptyRegion,
    #[error("operation requires a nonzero signal")]
    ZeroSignal,
    #[error("epsilon must lie strictly between 0 and 1, got {eps}")]
    InvalidEpsilon { eps: f64 },
    #[error("constant must exceed 1, got {c}")]
    InvalidConstant { c: f64 },
    #[error("subspace dimension {n} exceeds the eigenvector count {max}")]
    BadSubspaceDim { n: usize, max: usize },
    #[error("eigenvalue {value} falls outside [0, 1] beyond roundoff slack")]
    EigenvalueRange { value: f64 },
    #[error(transparent)]
    Kernel(#[from] NumKernelError),
    #[error(transparent)]
    Signal(#[from] DSignalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Whether a disk includes cells exactly on its radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiskBoundary {
    /// Strict inequality `d^2 < r^2`.
    Strict,
    /// Closed inequality `d^2 <= r^2`.
    Closed,
}

/// A subset of the discrete phase plane `Z_L x Z_L`, stored as a dense mask
/// in row-major `(x, omega)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    l: usize,
    mask: Vec<bool>,
}

impl Region {
    pub fn empty(l: usize) -> Self {
        assert!(l > 0, "group size must be positive");
        Self {
            l,
            mask: vec![false; l * l],
        }
    }

    pub fn full(l: usize) -> Self {
        assert!(l > 0, "group size must be positive");
        Self {
            l,
            mask: vec![true; l * l],
        }
    }

    /// Wraps an explicit mask of length `L^2`.
    pub fn from_mask(l: usize, mask: Vec<bool>) -> Result<Self, TflocError> {
        if mask.len() != l * l {
            return Err(TflocError::MaskSize {
                expected: l * l,
                got: mask.len(),
            });
        }
        Ok(Self { l, mask })
    }

    /// Disk of the given radius around `center` in the toroidal Euclidean
    /// metric (each coordinate difference reduced to `[-L/2, L/2]`).
    pub fn disk(l: usize, center: TFPoint, radius: f64, boundary: DiskBoundary) -> Self {
        let mut r = Self::empty(l);
        let r2 = radius * radius;
        for x in 0..l {
            let dx = toroidal_component(x, center.x, l);
            for omega in 0..l {
                let dw = toroidal_component(omega, center.omega, l);
                let d2 = dx * dx + dw * dw;
                let inside = match boundary {
                    DiskBoundary::Strict => d2 < r2,
                    DiskBoundary::Closed => d2 <= r2,
                };
                if inside {
                    r.mask[x * l + omega] = true;
                }
            }
        }
        r
    }

    /// Cyclic product rectangle `[x0, x1) x [omega0, omega1)`: each factor
    /// is a half-open arc that may wrap past `L` (pass `end = start + L`
    /// for the full circle).
    pub fn rect(
        l: usize,
        x0: usize,
        x1: usize,
        omega0: usize,
        omega1: usize,
    ) -> Result<Self, TflocError> {
        for (start, end) in [(x0, x1), (omega0, omega1)] {
            if start >= l || end < start || end > start + l {
                return Err(TflocError::BadRect);
            }
        }
        let span_x = x1 - x0;
        let span_w = omega1 - omega0;
        let mut r = Self::empty(l);
        for x in 0..l {
            if (x + l - x0) % l >= span_x {
                continue;
            }
            for omega in 0..l {
                if (omega + l - omega0) % l < span_w {
                    r.mask[x * l + omega] = true;
                }
            }
        }
        Ok(r)
    }

    /// Cells whose integer coordinates lie inside the (non-wrapping) simple
    /// polygon, by the even-odd rule. Cells exactly on an edge may land on
    /// either side; use half-integer vertices for a deterministic outline.
    pub fn polygon(l: usize, vertices: &[(f64, f64)]) -> Result<Self, TflocError> {
        if vertices.len() < 3 {
            return Err(TflocError::BadPolygon);
        }
        let mut r = Self::empty(l);
        for x in 0..l {
            for omega in 0..l {
                if point_in_polygon(x as f64, omega as f64, vertices) {
                    r.mask[x * l + omega] = true;
                }
            }
        }
        Ok(r)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Number of cells in the region.
    pub fn area(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn contains(&self, x: usize, omega: usize) -> bool {
        self.mask[(x % self.l) * self.l + omega % self.l]
    }

    pub fn contains_point(&self, z: TFPoint) -> bool {
        self.contains(z.x, z.omega)
    }

    /// Mask row at fixed time shift `x`, indexed by frequency.
    pub fn row(&self, x: usize) -> &[bool] {
        &self.mask[x * self.l..(x + 1) * self.l]
    }

    /// All member cells in row-major order.
    pub fn cells(&self) -> Vec<TFPoint> {
        let mut out = Vec::with_capacity(self.area());
        for x in 0..self.l {
            for omega in 0..self.l {
                if self.mask[x * self.l + omega] {
                    out.push(TFPoint::new(x, omega));
                }
            }
        }
        out
    }

    pub fn union(&self, other: &Region) -> Result<Region, TflocError> {
        self.check_same_size(other)?;
        let mask = self
            .mask
            .iter()
            .zip(other.mask.iter())
            .map(|(a, b)| *a || *b)
            .collect();
        Ok(Region { l: self.l, mask })
    }

    pub fn intersect(&self, other: &Region) -> Result<Region, TflocError> {
        self.check_same_size(other)?;
        let mask = self
            .mask
            .iter()
            .zip(other.mask.iter())
            .map(|(a, b)| *a && *b)
            .collect();
        Ok(Region { l: self.l, mask })
    }

    /// True when every cell of `self` also lies in `other`.
    pub fn is_subset_of(&self, other: &Region) -> Result<bool, TflocError> {
        self.check_same_size(other)?;
        Ok(self
            .mask
            .iter()
            .zip(other.mask.iter())
            .all(|(a, b)| !*a || *b))
    }

    /// Morphological dilation by the Chebyshev ball of radius `amount`:
    /// every side of the region grows by `amount` cells, cyclically.
    /// Separable in the two axes.
    pub fn dilate(&self, amount: usize) -> Region {
        if amount == 0 {
            return self.clone();
        }
        let l = self.l;
        let reach = amount.min(l / 2 + 1);
        let mut pass1 = vec![false; l * l];
        for x in 0..l {
            for omega in 0..l {
                if !self.mask[x * l + omega] {
                    continue;
                }
                for d in 0..=2 * reach {
                    let xx = (x + l + d - reach) % l;
                    pass1[xx * l + omega] = true;
                }
            }
        }
        let mut pass2 = vec![false; l * l];
        for x in 0..l {
            for omega in 0..l {
                if !pass1[x * l + omega] {
                    continue;
                }
                for d in 0..=2 * reach {
                    let ww = (omega + l + d - reach) % l;
                    pass2[x * l + ww] = true;
                }
            }
        }
        Region { l, mask: pass2 }
    }

    /// Member cells having at least one 8-neighbor (toroidal) outside the
    /// region. Empty exactly when the region is empty or full.
    pub fn boundary_cells(&self) -> Vec<TFPoint> {
        let l = self.l;
        let mut out = Vec::new();
        for x in 0..l {
            for omega in 0..l {
                if !self.mask[x * l + omega] {
                    continue;
                }
                let mut exposed = false;
                'probe: for dx in [l - 1, 0, 1] {
                    for dw in [l - 1, 0, 1] {
                        if dx == 0 && dw == 0 {
                            continue;
                        }
                        if !self.mask[((x + dx) % l) * l + (omega + dw) % l] {
                            exposed = true;
                            break 'probe;
                        }
                    }
                }
                if exposed {
                    out.push(TFPoint::new(x, omega));
                }
            }
        }
        out
    }

    /// Toroidal Euclidean distance (in cells) from every cell to the
    /// region: zero inside, distance to the nearest member cell outside.
    /// Indexed like the mask, row-major `(x, omega)`.
    pub fn distance_map(&self) -> Result<Vec<f64>, TflocError> {
        if self.area() == 0 {
            return Err(TflocError::EmptyRegion);
        }
        let l = self.l;
        let boundary = self.boundary_cells();
        let mut out = vec![0.0f64; l * l];
        if boundary.is_empty() {
            return Ok(out);
        }
        for x in 0..l {
            for omega in 0..l {
                if self.mask[x * l + omega] {
                    continue;
                }
                let mut best = f64::INFINITY;
                for b in &boundary {
                    let dx = toroidal_component(x, b.x, l);
                    let dw = toroidal_component(omega, b.omega, l);
                    let d2 = dx * dx + dw * dw;
                    if d2 < best {
                        best = d2;
                    }
                }
                out[x * l + omega] = best.sqrt();
            }
        }
        Ok(out)
    }

    fn check_same_size(&self, other: &Region) -> Result<(), TflocError> {
        if self.l != other.l {
            return Err(TflocError::RegionSizeMismatch(self.l, other.l));
        }
        Ok(())
    }

    /// Writes the mask as run-length text: a header line `region v1 <L>`,
    /// then run lengths over the row-major mask, alternating starting with
    /// the leading run of zeros.
    pub fn write_rle(&self, path: &Path) -> Result<(), TflocError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "{}", self.to_rle_string())?;
        out.flush()?;
        Ok(())
    }

    pub fn to_rle_string(&self) -> String {
        let mut runs: Vec<usize> = Vec::new();
        let mut current = false;
        let mut count = 0usize;
        for &cell in &self.mask {
            if cell == current {
                count += 1;
            } else {
                runs.push(count);
                current = cell;
                count = 1;
            }
        }
        runs.push(count);
        let mut s = format!("region v1 {}\n", self.l);
        for (i, run) in runs.iter().enumerate() {
            if i > 0 {
                s.push(if i % 20 == 0 { '\n' } else { ' ' });
            }
            s.push_str(&run.to_string());
        }
        s.push('\n');
        s
    }

    /// Reads a mask written by [`Region::write_rle`].
    pub fn read_rle(path: &Path) -> Result<Self, TflocError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_rle_str(&text)
    }

    pub fn from_rle_str(text: &str) -> Result<Self, TflocError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(TflocError::Parse {
            line: 1,
            msg: "empty region file".into(),
        })?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("region") || parts.next() != Some("v1") {
            return Err(TflocError::Parse {
                line: 1,
                msg: "expected header `region v1 <L>`".into(),
            });
        }
        let l: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .filter(|&l| l > 0)
            .ok_or(TflocError::Parse {
                line: 1,
                msg: "bad group size in header".into(),
            })?;
        let mut mask = Vec::with_capacity(l * l);
        let mut value = false;
        for (i, line) in lines.enumerate() {
            for tok in line.split_whitespace() {
                let run: usize = tok.parse().map_err(|e| TflocError::Parse {
                    line: i + 2,
                    msg: format!("bad run length {tok:?}: {e}"),
                })?;
                mask.extend(std::iter::repeat(value).take(run));
                value = !value;
            }
        }
        Self::from_mask(l, mask)
    }

    /// Reads a square plain PBM image (`P1`) as written by
    /// [`Region::write_pbm`].
    pub fn read_pbm(path: &Path) -> Result<Self, TflocError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_pbm_str(&text)
    }

    pub fn from_pbm_str(text: &str) -> Result<Self, TflocError> {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                tokens.push((i + 1, tok));
            }
        }
        let parse = |line: usize, msg: String| TflocError::Parse { line, msg };
        let mut tokens = tokens.into_iter();
        match tokens.next() {
            Some((_, "P1")) => {}
            Some((line, other)) => {
                return Err(parse(line, format!("expected plain PBM magic P1, got {other:?}")))
            }
            None => return Err(parse(1, "empty PBM file".into())),
        }
        let mut dim = |name: &str| {
            tokens
                .next()
                .ok_or_else(|| parse(1, format!("missing {name}")))
                .and_then(|(line, tok)| {
                    tok.parse::<usize>()
                        .ok()
                        .filter(|&d| d > 0)
                        .ok_or_else(|| parse(line, format!("bad {name} {tok:?}")))
                })
        };
        let width = dim("width")?;
        let height = dim("height")?;
        if width != height {
            return Err(parse(1, format!("mask must be square, got {width}x{height}")));
        }
        let mut mask = Vec::with_capacity(width * width);
        for (line, tok) in tokens {
            match tok {
                "0" => mask.push(false),
                "1" => mask.push(true),
                other => return Err(parse(line, format!("bad pixel {other:?}"))),
            }
        }
        Self::from_mask(width, mask)
    }

    /// Writes the mask as a plain PBM image (`P1`), one pixel per cell,
    /// row `x`, column `omega`, `1` marking cells inside the region.
    pub fn write_pbm(&self, path: &Path) -> Result<(), TflocError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "P1")?;
        writeln!(out, "{} {}", self.l, self.l)?;
        for x in 0..self.l {
            let row: Vec<&str> = self
                .row(x)
                .iter()
                .map(|&m| if m { "1" } else { "0" })
                .collect();
            // PBM readers expect lines of at most 70 characters.
            for chunk in row.chunks(35) {
                writeln!(out, "{}", chunk.join(" "))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Signed toroidal coordinate difference reduced to `[-L/2, L/2]`, as f64.
fn toroidal_component(a: usize, b: usize, l: usize) -> f64 {
    let d = (a + l - b % l) % l;
    let d = d.min(l - d);
    d as f64
}

fn point_in_polygon(px: f64, py: f64, vertices: &[(f64, f64)]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// A localization operator: the window, the region, and the assembled
/// dense matrix.
#[derive(Debug, Clone)]
pub struct LocalizationOp {
    window: Signal,
    region: Region,
    matrix: CMatrix,
}

impl LocalizationOp {
    pub fn window(&self) -> &Signal {
        &self.window
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn l(&self) -> usize {
        self.region.l()
    }

    /// Applies the operator to a signal.
    pub fn apply(&self, f: &Signal) -> Result<Signal, TflocError> {
        if f.len() != self.l() {
            return Err(TflocError::WindowLength {
                expected: self.l(),
                got: f.len(),
            });
        }
        Ok(Signal::new(self.matrix.matvec(f.values()))?)
    }
}

/// Assembles the localization operator of a unit-norm window and a region.
///
/// Each diagonal `u` of the matrix is the circular convolution of the
/// window autocorrelation `q_u` with the region's per-shift frequency sums,
/// evaluated with three DFTs; the result is exact (no truncation), so the
/// full-plane operator comes out as the identity to roundoff.
pub fn localization_op(window: &Signal, region: &Region) -> Result<LocalizationOp, TflocError> {
    let l = region.l();
    if window.len() != l {
        return Err(TflocError::WindowLength {
            expected: l,
            got: window.len(),
        });
    }
    let norm = window.norm();
    if (norm - 1.0).abs() > UNIT_WINDOW_TOL {
        return Err(TflocError::WindowNotUnit { norm });
    }

    let plan = FftPlan::new(l);

    // s[x][u] = sum_{omega in Omega_x} exp(2 pi i omega u / L), the
    // unnormalized inverse DFT of the row indicator.
    let mut srows: Vec<Vec<Complex64>> = Vec::with_capacity(l);
    for x in 0..l {
        let mut row: Vec<Complex64> = region
            .row(x)
            .iter()
            .map(|&m| Complex64::new(if m { 1.0 } else { 0.0 }, 0.0))
            .collect();
        plan.inverse_unnormalized(&mut row);
        srows.push(row);
    }

    let w = window.values();
    let inv_l2 = 1.0 / (l * l) as f64;
    let mut h = CMatrix::zeros(l, l);
    let mut q = vec![Complex64::new(0.0, 0.0); l];
    let mut c = vec![Complex64::new(0.0, 0.0); l];
    for u in 0..l {
        for y in 0..l {
            q[y] = w[y] * w[(y + l - u) % l].conj();
        }
        for x in 0..l {
            c[x] = srows[x][u];
        }
        let qf = plan.forward_vec(&q);
        let mut prod = plan.forward_vec(&c);
        for (p, qk) in prod.iter_mut().zip(qf.iter()) {
            *p *= qk;
        }
        plan.inverse_unnormalized(&mut prod);
        // prod[t] = L * (q conv c)(t); the matrix entry carries another 1/L.
        for t in 0..l {
            h.set(t, (t + l - u) % l, prod[t] * inv_l2);
        }
    }
    h.hermitianize();

    Ok(LocalizationOp {
        window: window.clone(),
        region: region.clone(),
        matrix: h,
    })
}

/// Concentration of `f` on the operator's region: `Re <H f, f> / ||f||^2`,
/// the fraction of the signal's phase-space energy inside the region.
pub fn concentration(op: &LocalizationOp, f: &Signal) -> Result<f64, TflocError> {
    let nsq = f.norm_sqr();
    if nsq == 0.0 {
        return Err(TflocError::ZeroSignal);
    }
    let hf = op.apply(f)?;
    let ip = crate::dsignal::inner(&hf, f)?;
    Ok(ip.re / nsq)
}

/// Eigendecomposition of a localization operator: eigenvalues descending in
/// `[0, 1]`, eigenvectors as matrix columns, and the dimension of the
/// numerical kernel.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
    pub kernel_dim: usize,
    kernel_tol: f64,
}

impl EigenSystem {
    pub fn l(&self) -> usize {
        self.vectors.rows()
    }

    /// Number of eigenvalues strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v > threshold).count()
    }

    /// Dimension of the non-kernel part of the spectrum.
    pub fn rank(&self) -> usize {
        self.values.len() - self.kernel_dim
    }

    pub fn kernel_tol(&self) -> f64 {
        self.kernel_tol
    }

    /// Expansion coefficients `<f, psi_k>` of a signal over the eigenbasis.
    pub fn coefficients(&self, f: &Signal) -> Vec<Complex64> {
        self.vectors.adjoint_matvec(f.values())
    }
}

/// Decomposes a localization operator, validating that its spectrum stays
/// within `[0, 1]` up to roundoff. Eigenvalues at or below `kernel_tol`
/// count toward the kernel.
pub fn eigensystem(op: &LocalizationOp, kernel_tol: f64) -> Result<EigenSystem, TflocError> {
    let m = op.matrix();
    let tol = 1e-10 * m.max_abs().max(1.0);
    let eig = herm_eig(m, tol)?;
    validate_unit_range(&eig)?;
    let kernel_dim = eig.values.iter().filter(|&&v| v <= kernel_tol).count();
    Ok(EigenSystem {
        values: eig.values,
        vectors: eig.vectors,
        kernel_dim,
        kernel_tol,
    })
}

fn validate_unit_range(eig: &HermEig) -> Result<(), TflocError> {
    for &v in &eig.values {
        if !(-EIGENVALUE_RANGE_SLACK..=1.0 + EIGENVALUE_RANGE_SLACK).contains(&v) {
            return Err(TflocError::EigenvalueRange { value: v });
        }
    }
    Ok(())
}

/// Outcome of the concentration certificate: compares the weighted
/// eigen-coefficient mass on the leading eigenspace (`lhs`) against the
/// deficit outside it (`rhs`); `holds` iff `lhs >= rhs`, which is
/// equivalent to `<H f, f> >= (1 - eps) ||f||^2`.
#[derive(Debug, Clone, Copy)]
pub struct ConcentrationCertificate {
    /// Number of eigenvalues at or above `1 - eps`.
    pub n0: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `<H f, f> / ||f||^2`, evaluated spectrally.
    pub concentration: f64,
}

/// Evaluates the certificate for concentration level `eps` on signal `f`.
pub fn concentration_certificate(
    eig: &EigenSystem,
    f: &Signal,
    eps: f64,
) -> Result<ConcentrationCertificate, TflocError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(TflocError::InvalidEpsilon { eps });
    }
    if f.norm_sqr() == 0.0 {
        return Err(TflocError::ZeroSignal);
    }
    if f.len() != eig.l() {
        return Err(TflocError::WindowLength {
            expected: eig.l(),
            got: f.len(),
        });
    }
    let coeffs = eig.coefficients(f);
    let nsq = f.norm_sqr();
    let n = eig.values.len();
    let rank = eig.rank();
    let n0 = eig.values.iter().filter(|&&v| v >= 1.0 - eps).count();

    let mut lhs = 0.0f64;
    let mut rhs = 0.0f64;
    let mut conc = 0.0f64;
    for k in 0..n {
        let mass = coeffs[k].norm_sqr();
        conc += eig.values[k] * mass;
        if k < n0 {
            lhs += (eig.values[k] + eps - 1.0) * mass;
        } else if k < rank {
            rhs += (1.0 - eps - eig.values[k]) * mass;
        } else {
            rhs += (1.0 - eps) * mass;
        }
    }
    Ok(ConcentrationCertificate {
        n0,
        lhs,
        rhs,
        holds: lhs >= rhs,
        concentration: conc / nsq,
    })
}

/// Outcome of the eigenspace projection error bound for a concentrated
/// signal: with `N` counting eigenvalues above `(c - 1) / c`, the energy
/// outside the leading `N`-dimensional eigenspace is at most `c eps`
/// times the signal energy, where `eps` is the measured concentration
/// deficit `1 - <H f, f> / ||f||^2`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionCheck {
    pub n: usize,
    pub eps: f64,
    pub error_sq: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Evaluates the projection error bound with constant `c > 1`.
pub fn projection_bound(
    eig: &EigenSystem,
    f: &Signal,
    c: f64,
) -> Result<ProjectionCheck, TflocError> {
    if !(c > 1.0) {
        return Err(TflocError::InvalidConstant { c });
    }
    let nsq = f.norm_sqr();
    if nsq == 0.0 {
        return Err(TflocError::ZeroSignal);
    }
    if f.len() != eig.l() {
        return Err(TflocError::WindowLength {
            expected: eig.l(),
            got: f.len(),
        });
    }
    let coeffs = eig.coefficients(f);
    let conc: f64 = eig
        .values
        .iter()
        .zip(coeffs.iter())
        .map(|(&v, c)| v * c.norm_sqr())
        .sum();
    let eps = 1.0 - conc / nsq;
    let threshold = (c - 1.0) / c;
    let n = eig.count_above(threshold);
    let error_sq: f64 = coeffs.iter().skip(n).map(|c| c.norm_sqr()).sum();
    let bound = c * eps * nsq;
    Ok(ProjectionCheck {
        n,
        eps,
        error_sq,
        bound,
        holds: error_sq <= bound,
    })
}

/// Whether an eigenspace projector reproduces eigen-coefficients as they
/// are (`Exact`, the orthogonal projector `P_N`) or weighted by their
/// eigenvalues (`Approximate`, the truncated operator `H_N`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorMode {
    Exact,
    Approximate,
}

/// Rank-`N` operator built from the leading eigenvectors of a localization
/// operator: `sum_{k<N} w_k psi_k psi_k*` with unit weights (`Exact`) or
/// eigenvalue weights (`Approximate`). Owns copies of the vectors it needs.
#[derive(Debug, Clone)]
pub struct EigenspaceProjector {
    basis: CMatrix,
    weights: Vec<f64>,
    mode: ProjectorMode,
    n: usize,
}

impl EigenspaceProjector {
    pub fn from_eigen(
        eig: &EigenSystem,
        n: usize,
        mode: ProjectorMode,
    ) -> Result<Self, TflocError> {
        if n == 0 || n > eig.values.len() {
            return Err(TflocError::BadSubspaceDim {
                n,
                max: eig.values.len(),
            });
        }
        let cols: Vec<Vec<Complex64>> = (0..n).map(|k| eig.vectors.column(k)).collect();
        let weights = match mode {
            ProjectorMode::Exact => vec![1.0; n],
            ProjectorMode::Approximate => eig.values[..n].to_vec(),
        };
        Ok(Self {
            basis: CMatrix::from_columns(&cols),
            weights,
            mode,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> ProjectorMode {
        self.mode
    }

    pub fn l(&self) -> usize {
        self.basis.rows()
    }

    /// The orthonormal basis of the subspace, one eigenvector per column.
    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    /// Applies the projector to a signal.
    pub fn apply(&self, f: &Signal) -> Result<Signal, TflocError> {
        if f.len() != self.l() {
            return Err(TflocError::WindowLength {
                expected: self.l(),
                got: f.len(),
            });
        }
        let mut coeffs = self.basis.adjoint_matvec(f.values());
        for (c, &w) in coeffs.iter_mut().zip(self.weights.iter()) {
            *c *= w;
        }
        Ok(Signal::new(self.basis.matvec(&coeffs))?)
    }

    /// The dense matrix of the projector.
    pub fn matrix(&self) -> CMatrix {
        let mut scaled = self.basis.clone();
        for j in 0..self.n {
            for i in 0..scaled.rows() {
                let v = scaled.get(i, j) * self.weights[j];
                scaled.set(i, j, v);
            }
        }
        scaled.mul_conj_transpose(&self.basis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsignal::{gaussian_window, stft, tf_shift};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_region(l: usize, fill: f64, rng: &mut ChaCha8Rng) -> Region {
        let mask: Vec<bool> = (0..l * l).map(|_| rng.gen_bool(fill)).collect();
        Region::from_mask(l, mask).unwrap()
    }

    #[test]
    fn disk_area_matches_direct_count() {
        for (l, radius) in [(100usize, 30.0f64), (480, 80.0)] {
            let region = Region::disk(l, TFPoint::new(0, 0), radius, DiskBoundary::Strict);
            let mut count = 0usize;
            for x in 0..l {
                for omega in 0..l {
                    let dx = x.min(l - x) as f64;
                    let dw = omega.min(l - omega) as f64;
                    if dx * dx + dw * dw < radius * radius {
                        count += 1;
                    }
                }
            }
            assert_eq!(region.area(), count);
        }
    }

    #[test]
    fn disk_boundary_mode_controls_edge_cells() {
        // (3, 4) sits exactly at distance 5 from the center.
        let strict = Region::disk(20, TFPoint::new(0, 0), 5.0, DiskBoundary::Strict);
        let closed = Region::disk(20, TFPoint::new(0, 0), 5.0, DiskBoundary::Closed);
        assert!(!strict.contains(3, 4));
        assert!(closed.contains(3, 4));
        assert!(strict.area() < closed.area());
    }

    #[test]
    fn rect_supports_cyclic_intervals() {
        let r = Region::rect(20, 18, 22, 5, 7).unwrap();
        assert_eq!(r.area(), 8);
        assert!(r.contains(19, 5) && r.contains(0, 6) && r.contains(1, 5));
        assert!(!r.contains(2, 5) && !r.contains(0, 7));

        let full = Region::rect(6, 0, 6, 0, 6).unwrap();
        assert_eq!(full.area(), 36);

        assert!(Region::rect(10, 12, 13, 0, 1).is_err());
        assert!(Region::rect(10, 2, 1, 0, 1).is_err());
        assert!(Region::rect(10, 2, 13, 0, 1).is_err());
    }

    #[test]
    fn quadrant_rects_partition_the_plane() {
        let l = 16;
        let quads = [
            Region::rect(l, 0, 8, 0, 8).unwrap(),
            Region::rect(l, 8, 16, 0, 8).unwrap(),
            Region::rect(l, 0, 8, 8, 16).unwrap(),
            Region::rect(l, 8, 16, 8, 16).unwrap(),
        ];
        let total: usize = quads.iter().map(|q| q.area()).sum();
        assert_eq!(total, l * l);
        let mut acc = Region::empty(l);
        for q in &quads {
            assert_eq!(acc.intersect(q).unwrap().area(), 0);
            acc = acc.union(q).unwrap();
        }
        assert_eq!(acc.area(), l * l);
    }

    #[test]
    fn polygon_with_half_integer_outline_has_exact_area() {
        let verts = [(1.5, 1.5), (10.5, 1.5), (10.5, 10.5), (1.5, 10.5)];
        let r = Region::polygon(16, &verts).unwrap();
        assert_eq!(r.area(), 81);
        assert!(r.contains(5, 5));
        assert!(!r.contains(15, 15));
        assert!(Region::polygon(16, &verts[..2]).is_err());
    }

    #[test]
    fn dilate_matches_chebyshev_oracle() {
        let l = 16;
        let mut r = rng(3);
        let region = random_region(l, 0.1, &mut r);
        let amount = 2usize;
        let dilated = region.dilate(amount);
        for x in 0..l {
            for omega in 0..l {
                let mut want = false;
                'scan: for z in region.cells() {
                    let dx = toroidal_component(x, z.x, l);
                    let dw = toroidal_component(omega, z.omega, l);
                    if dx.max(dw) <= amount as f64 {
                        want = true;
                        break 'scan;
                    }
                }
                assert_eq!(dilated.contains(x, omega), want, "cell ({x},{omega})");
            }
        }
        assert!(region.is_subset_of(&dilated).unwrap());
    }

    #[test]
    fn dilation_of_single_cell_is_square() {
        let mut mask = vec![false; 81];
        mask[4 * 9 + 4] = true;
        let region = Region::from_mask(9, mask).unwrap();
        assert_eq!(region.dilate(2).area(), 25);
    }

    #[test]
    fn localization_matrix_matches_rank_one_sum() {
        // Oracle: H = (1/L) sum_{z in Omega} (pi(z) phi)(pi(z) phi)*.
        let l = 16;
        let mut r = rng(5);
        let region = random_region(l, 0.2, &mut r);
        let w = gaussian_window(l);
        let fast = localization_op(&w, &region).unwrap();

        let mut direct = CMatrix::zeros(l, l);
        for z in region.cells() {
            let atom = tf_shift(&w, z);
            direct.add_outer_scaled(atom.values(), atom.values(), 1.0 / l as f64);
        }
        assert!(fast.matrix().sub(&direct).max_abs() <= 1e-12);
    }

    #[test]
    fn full_region_gives_identity_and_empty_gives_zero() {
        let l = 32;
        let w = gaussian_window(l);
        let full = localization_op(&w, &Region::full(l)).unwrap();
        assert!(full.matrix().sub(&CMatrix::identity(l)).max_abs() <= 1e-12);
        let empty = localization_op(&w, &Region::empty(l)).unwrap();
        assert!(empty.matrix().max_abs() <= 1e-14);
    }

    #[test]
    fn trace_equals_area_over_group_size() {
        let l = 48;
        let region = Region::disk(l, TFPoint::new(10, 30), 9.5, DiskBoundary::Strict);
        let op = localization_op(&gaussian_window(l), &region).unwrap();
        let want = region.area() as f64 / l as f64;
        assert!((op.matrix().trace().re - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn concentration_matches_stft_energy_fraction() {
        let l = 32;
        let mut r = rng(7);
        let region = Region::disk(l, TFPoint::new(0, 0), 8.0, DiskBoundary::Strict);
        let w = gaussian_window(l);
        let op = localization_op(&w, &region).unwrap();
        let f = Signal::random_unit(l, &mut r);

        let coeffs = stft(&f, &w).unwrap();
        let mut inside = 0.0f64;
        for z in region.cells() {
            inside += coeffs.get(z.x, z.omega).norm_sqr();
        }
        let want = inside / (l as f64 * f.norm_sqr());
        let got = concentration(&op, &f).unwrap();
        assert!((got - want).abs() <= 1e-12);
    }

    #[test]
    fn concentration_grows_with_the_region() {
        let l = 24;
        let mut r = rng(9);
        let w = gaussian_window(l);
        let small = Region::disk(l, TFPoint::new(5, 5), 4.0, DiskBoundary::Strict);
        let big = small.dilate(3);
        let op_small = localization_op(&w, &small).unwrap();
        let op_big = localization_op(&w, &big).unwrap();
        for _ in 0..10 {
            let f = Signal::random_unit(l, &mut r);
            let cs = concentration(&op_small, &f).unwrap();
            let cb = concentration(&op_big, &f).unwrap();
            assert!(cs <= cb + 1e-12);
        }
    }

    #[test]
    fn eigensystem_spectrum_lies_in_unit_interval() {
        let l = 32;
        let region = Region::disk(l, TFPoint::new(16, 16), 7.0, DiskBoundary::Strict);
        let op = localization_op(&gaussian_window(l), &region).unwrap();
        let eig = eigensystem(&op, DEFAULT_KERNEL_TOL).unwrap();
        for &v in &eig.values {
            assert!(v >= -1e-10 && v <= 1.0 + 1e-10);
        }
        // Rank is at most the region area, so the kernel is at least the rest.
        assert!(eig.kernel_dim >= l - region.area().min(l));
        assert_eq!(eig.rank() + eig.kernel_dim, l);
    }

    #[test]
    fn exact_projector_is_idempotent_and_approximate_weights_by_eigenvalue() {
        let l = 24;
        let region = Region::disk(l, TFPoint::new(0, 0), 6.0, DiskBoundary::Strict);
        let op = localization_op(&gaussian_window(l), &region).unwrap();
        let eig = eigensystem(&op, DEFAULT_KERNEL_TOL).unwrap();
        let n = eig.count_above(0.5);
        assert!(n > 0);

        let p = EigenspaceProjector::from_eigen(&eig, n, ProjectorMode::Exact).unwrap();
        let pm = p.matrix();
        assert!(pm.mul(&pm).sub(&pm).max_abs() <= 1e-10);
        assert!((pm.trace().re - n as f64).abs() <= 1e-10);

        let h_n = EigenspaceProjector::from_eigen(&eig, n, ProjectorMode::Approximate).unwrap();
        for k in 0..n {
            let psi = Signal::new(eig.vectors.column(k)).unwrap();
            let got = h_n.apply(&psi).unwrap();
            let mut want = psi.clone();
            want.scale(eig.values[k]);
            assert!(got.sub(&want).norm() <= 1e-10);
        }

        assert!(EigenspaceProjector::from_eigen(&eig, l + 1, ProjectorMode::Exact).is_err());
    }

    #[test]
    fn certificate_agrees_with_direct_concentration_test() {
        let l = 32;
        let mut r = rng(11);
        let region = Region::disk(l, TFPoint::new(0, 0), 9.0, DiskBoundary::Strict);
        let op = localization_op(&gaussian_window(l), &region).unwrap();
        let eig = eigensystem(&op, DEFAULT_KERNEL_TOL).unwrap();
        for _ in 0..50 {
            let f = Signal::random_unit(l, &mut r);
            for eps in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let cert = concentration_certificate(&eig, &f, eps).unwrap();
                let direct = concentration(&op, &f).unwrap() >= 1.0 - eps;
                assert_eq!(cert.holds, direct, "eps={eps}");
                // lhs - rhs telescopes to <Hf,f> - (1-eps)||f||^2 because the
                // kernel eigenvalues vanish.
                let gap = cert.lhs - cert.rhs;
                let want_gap = cert.concentration - (1.0 - eps);
                assert!((gap - want_gap).abs() <= 1e-9);
            }
        }
        assert!(matches!(
            concentration_certificate(&eig, &Signal::delta(l, 0), 0.0),
            Err(TflocError::InvalidEpsilon { .. })
        ));
    }

    #[test]
    fn projection_bound_holds_for_concentrated_signals() {
        let l = 32;
        let mut r = rng(13);
        let region = Region::disk(l, TFPoint::new(8, 8), 8.0, DiskBoundary::Strict);
        let op = localization_op(&gaussian_window(l), &region).unwrap();
        let eig = eigensystem(&op, DEFAULT_KERNEL_TOL).unwrap();
        for _ in 0..20 {
            // Concentrate a random signal by passing it through the operator.
            let g = Signal::random_unit(l, &mut r);
            let mut f = op.apply(&g).unwrap();
            let norm = f.norm();
            assert!(norm > 0.0);
            f.scale(1.0 / norm);
            for c in [1.5, 2.0, 4.0] {
                let check = projection_bound(&eig, &f, c).unwrap();
                assert_eq!(check.n, eig.count_above((c - 1.0) / c));
                assert!(
                    check.holds,
                    "error {} exceeds bound {} at c={c}",
                    check.error_sq, check.bound
                );
            }
        }
        assert!(matches!(
            projection_bound(&eig, &Signal::delta(l, 0), 1.0),
            Err(TflocError::InvalidConstant { .. })
        ));
    }

    #[test]
    fn rle_round_trip_is_exact() {
        let mut r = rng(17);
        let region = random_region(20, 0.3, &mut r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.rle");
        region.write_rle(&path).unwrap();
        assert_eq!(Region::read_rle(&path).unwrap(), region);

        let empty = Region::empty(5);
        assert_eq!(
            Region::from_rle_str(&empty.to_rle_string()).unwrap(),
            empty
        );
        let full = Region::full(5);
        assert_eq!(Region::from_rle_str(&full.to_rle_string()).unwrap(), full);
    }

    #[test]
    fn pbm_export_has_valid_header_and_size() {
        let region = Region::disk(12, TFPoint::new(6, 6), 3.0, DiskBoundary::Strict);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pbm");
        region.write_pbm(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("P1"));
        assert_eq!(lines.next(), Some("12 12"));
        let pixels: Vec<&str> = text.split_whitespace().skip(3).collect();
        assert_eq!(pixels.len(), 144);
        let ones = pixels.iter().filter(|&&p| p == "1").count();
        assert_eq!(ones, region.area());
    }

    #[test]
    fn pbm_round_trip_is_exact() {
        let mut r = rng(23);
        let region = random_region(14, 0.4, &mut r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pbm");
        region.write_pbm(&path).unwrap();
        assert_eq!(Region::read_pbm(&path).unwrap(), region);

        assert!(matches!(
            Region::from_pbm_str("P4\n2 2\n"),
            Err(TflocError::Parse { .. })
        ));
        assert!(matches!(
            Region::from_pbm_str("P1\n2 3\n0 0 0 0 0 0"),
            Err(TflocError::Parse { .. })
        ));
        assert!(matches!(
            Region::from_pbm_str("P1\n# comment\n2 2\n0 1 1 2"),
            Err(TflocError::Parse { .. })
        ));
    }

    #[test]
    fn distance_map_matches_brute_force_over_member_cells() {
        let l = 20;
        let region = Region::disk(l, TFPoint::new(10, 10), 4.0, DiskBoundary::Strict);
        let map = region.distance_map().unwrap();
        let cells = region.cells();
        for x in 0..l {
            for omega in 0..l {
                let got = map[x * l + omega];
                if region.contains(x, omega) {
                    assert_eq!(got, 0.0);
                    continue;
                }
                let mut want = f64::INFINITY;
                for z in &cells {
                    let dx = toroidal_component(x, z.x, l);
                    let dw = toroidal_component(omega, z.omega, l);
                    want = want.min((dx * dx + dw * dw).sqrt());
                }
                assert!((got - want).abs() < 1e-12, "cell ({x},{omega})");
            }
        }
        assert!(Region::empty(4).distance_map().is_err());
        assert!(Region::full(4).distance_map().unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn localization_op_validates_window() {
        let l = 16;
        let region = Region::full(l);
        assert!(matches!(
            localization_op(&gaussian_window(8), &region),
            Err(TflocError::WindowLength { .. })
        ));
        let mut w = gaussian_window(l);
        w.scale(2.0);
        assert!(matches!(
            localization_op(&w, &region),
            Err(TflocError::WindowNotUnit { .. })
        ));
    }
}
