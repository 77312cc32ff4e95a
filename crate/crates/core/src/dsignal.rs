//! Signals on the cyclic group `Z_L` and their phase-space transforms.
//!
//! A signal is a finite complex sequence indexed mod `L`. The discrete
//! short-time Fourier transform used here is
//!
//! ```text
//! V_w f(x, omega) = sum_t f(t) conj(w(t - x)) exp(-2 pi i omega t / L)
//! ```
//!
//! with all index arithmetic mod `L`, i.e. the inner product of `f` against
//! the time-frequency shift `pi(x, omega) w`. Two exact identities anchor
//! the module and its tests: the energy identity
//! `sum_{x,omega} |V_w f|^2 = L ||f||^2 ||w||^2`, and inversion
//! `istft(stft(f, w), w) = f` whenever `||w||_2 = 1`.
//!
//! The canonical window is a periodized Gaussian matched to the group size,
//! which is even, strictly positive, and (numerically) invariant under the
//! unitary DFT.

use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::fft::FftPlan;

/// Accepted deviation of a synthesis window from unit norm in [`istft`].
pub const UNIT_WINDOW_TOL: f64 = 1e-8;

/// Number of Gaussian replicas summed on each side when periodizing; the
/// first omitted term is `exp(-pi (5 L)^2 / L)`, which underflows to zero
/// for every group size of interest.
const GAUSSIAN_REPLICAS: i64 = 4;

/// Errors from signal construction, transforms, and fixture I/O.
#[derive(Debug, Error)]
pub enum DSignalError {
    #[error("signal must have positive length")]
    Empty,
    #[error("signal contains a non-finite entry")]
    NotFinite,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("synthesis window norm {norm} deviates from 1 by more than {UNIT_WINDOW_TOL:e}")]
    WindowNotUnit { norm: f64 },
    #[error("cannot operate on the zero signal")]
    ZeroSignal,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A point `(x, omega)` of the discrete phase plane `Z_L x Z_L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct TFPoint {
    pub x: usize,
    pub omega: usize,
}

impl TFPoint {
    pub fn new(x: usize, omega: usize) -> Self {
        Self { x, omega }
    }
}

/// A complex signal on `Z_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<Complex64>,
}

impl Signal {
    /// Wraps raw samples, rejecting empty or non-finite input.
    pub fn new(values: Vec<Complex64>) -> Result<Self, DSignalError> {
        if values.is_empty() {
            return Err(DSignalError::Empty);
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(DSignalError::NotFinite);
        }
        Ok(Self { values })
    }

    /// The zero signal of length `l`.
    pub fn zeros(l: usize) -> Self {
        assert!(l > 0, "signal length must be positive");
        Self {
            values: vec![Complex64::new(0.0, 0.0); l],
        }
    }

    /// Unit impulse at position `t0`.
    pub fn delta(l: usize, t0: usize) -> Self {
        let mut s = Self::zeros(l);
        s.values[t0 % l] = Complex64::new(1.0, 0.0);
        s
    }

    /// Builds a signal sample by sample.
    pub fn from_fn(l: usize, mut f: impl FnMut(usize) -> Complex64) -> Self {
        assert!(l > 0, "signal length must be positive");
        Self {
            values: (0..l).map(&mut f).collect(),
        }
    }

    /// A random signal with i.i.d. standard complex normal entries,
    /// normalized to unit energy.
    pub fn random_unit(l: usize, rng: &mut impl rand::Rng) -> Self {
        use rand_distr::StandardNormal;
        let mut s = Self::from_fn(l, |_| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let norm = s.norm();
        if norm > 0.0 {
            s.scale(1.0 / norm);
        } else {
            s.values[0] = Complex64::new(1.0, 0.0);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize) -> Complex64 {
        self.values[t]
    }

    /// Squared `l2` norm.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `l2` norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Scales every sample in place.
    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.values {
            *z *= factor;
        }
    }

    /// Returns `self - other`; lengths must match.
    pub fn sub(&self, other: &Signal) -> Signal {
        assert_eq!(self.len(), other.len(), "signal lengths must match");
        Signal {
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Returns `self + other`; lengths must match.
    pub fn add(&self, other: &Signal) -> Signal {
        assert_eq!(self.len(), other.len(), "signal lengths must match");
        Signal {
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Writes the signal as two-column CSV (`re,im` per line).
    pub fn write_csv(&self, path: &Path) -> Result<(), DSignalError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for z in &self.values {
            writeln!(out, "{},{}", z.re, z.im)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a signal from two-column CSV as written by [`Signal::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self, DSignalError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut values = Vec::new();
        for (idx, line) in file.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let re = parse_field(parts.next(), idx + 1)?;
            let im = parse_field(parts.next(), idx + 1)?;
            if parts.next().is_some() {
                return Err(DSignalError::Parse {
                    line: idx + 1,
                    msg: "expected exactly two columns".into(),
                });
            }
            values.push(Complex64::new(re, im));
        }
        Signal::new(values)
    }
}

fn parse_field(field: Option<&str>, line: usize) -> Result<f64, DSignalError> {
    let text = field.ok_or_else(|| DSignalError::Parse {
        line,
        msg: "missing column".into(),
    })?;
    text.trim().parse::<f64>().map_err(|e| DSignalError::Parse {
        line,
        msg: format!("bad float {text:?}: {e}"),
    })
}

/// Inner product `<f, g> = sum_t f(t) conj(g(t))`, linear in `f`.
pub fn inner(f: &Signal, g: &Signal) -> Result<Complex64, DSignalError> {
    if f.len() != g.len() {
        return Err(DSignalError::LengthMismatch {
            expected: f.len(),
            got: g.len(),
        });
    }
    Ok(f.values()
        .iter()
        .zip(g.values().iter())
        .map(|(a, b)| a * b.conj())
        .sum())
}

/// Time-frequency shift `(pi(x, omega) f)(t) = f(t - x) exp(2 pi i omega t / L)`,
/// indices mod `L`. Shifts are unitary, so norms are preserved.
pub fn tf_shift(f: &Signal, z: TFPoint) -> Signal {
    let l = f.len();
    let x = z.x % l;
    let omega = z.omega % l;
    let step = 2.0 * std::f64::consts::PI * omega as f64 / l as f64;
    Signal::from_fn(l, |t| {
        let src = (t + l - x) % l;
        let phase = step * t as f64;
        f.get(src) * Complex64::new(phase.cos(), phase.sin())
    })
}

/// Table of STFT coefficients indexed by `(x, omega)` over `Z_L x Z_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TFMatrix {
    l: usize,
    data: Vec<Complex64>,
}

impl TFMatrix {
    pub fn zeros(l: usize) -> Self {
        assert!(l > 0, "group size must be positive");
        Self {
            l,
            data: vec![Complex64::new(0.0, 0.0); l * l],
        }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn get(&self, x: usize, omega: usize) -> Complex64 {
        self.data[x * self.l + omega]
    }

    #[inline]
    pub fn set(&mut self, x: usize, omega: usize, v: Complex64) {
        self.data[x * self.l + omega] = v;
    }

    /// Coefficient row at fixed time shift `x`, indexed by frequency.
    pub fn row(&self, x: usize) -> &[Complex64] {
        &self.data[x * self.l..(x + 1) * self.l]
    }

    fn row_mut(&mut self, x: usize) -> &mut [Complex64] {
        &mut self.data[x * self.l..(x + 1) * self.l]
    }

    /// Total energy `sum |coefficient|^2`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Short-time Fourier transform of `f` with window `w`; one length-`L` DFT
/// per time shift.
pub fn stft(f: &Signal, w: &Signal) -> Result<TFMatrix, DSignalError> {
    let l = f.len();
    if w.len() != l {
        return Err(DSignalError::LengthMismatch {
            expected: l,
            got: w.len(),
        });
    }
    let plan = FftPlan::new(l);
    let mut out = TFMatrix::zeros(l);
    let mut buf = vec![Complex64::new(0.0, 0.0); l];
    for x in 0..l {
        for t in 0..l {
            let src = (t + l - x) % l;
            buf[t] = f.get(t) * w.get(src).conj();
        }
        plan.forward(&mut buf);
        out.row_mut(x).copy_from_slice(&buf);
    }
    Ok(out)
}

/// Inverse STFT: reconstructs the signal from its full coefficient table,
///
/// ```text
/// f(t) = (1/L) sum_{x,omega} V(x, omega) w(t - x) exp(2 pi i omega t / L)
/// ```
///
/// which inverts [`stft`] exactly when the window has unit norm (enforced
/// within [`UNIT_WINDOW_TOL`]).
pub fn istft(coeffs: &TFMatrix, w: &Signal) -> Result<Signal, DSignalError> {
    let l = coeffs.l();
    if w.len() != l {
        return Err(DSignalError::LengthMismatch {
            expected: l,
            got: w.len(),
        });
    }
    let norm = w.norm();
    if (norm - 1.0).abs() > UNIT_WINDOW_TOL {
        return Err(DSignalError::WindowNotUnit { norm });
    }
    let plan = FftPlan::new(l);
    let mut acc = vec![Complex64::new(0.0, 0.0); l];
    for x in 0..l {
        let r = plan.inverse_unnormalized_vec(coeffs.row(x));
        for t in 0..l {
            let src = (t + l - x) % l;
            acc[t] += w.get(src) * r[t];
        }
    }
    let inv_l = 1.0 / l as f64;
    Ok(Signal::from_fn(l, |t| acc[t] * inv_l))
}

/// Periodized Gaussian window: `phi(t) = c sum_j exp(-pi (t + j L)^2 / L)`
/// with the constant chosen so `||phi||_2 = 1`. Even under `t -> L - t` and
/// numerically self-dual under the unitary DFT.
pub fn gaussian_window(l: usize) -> Signal {
    assert!(l > 0, "group size must be positive");
    let lf = l as f64;
    let mut s = Signal::from_fn(l, |t| {
        let mut v = 0.0f64;
        for j in -GAUSSIAN_REPLICAS..=GAUSSIAN_REPLICAS {
            let u = t as f64 + j as f64 * lf;
            v += (-std::f64::consts::PI * u * u / lf).exp();
        }
        Complex64::new(v, 0.0)
    });
    let norm = s.norm();
    s.scale(1.0 / norm);
    s
}
