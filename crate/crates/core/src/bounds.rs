//! Closed-form decay and covering bounds for concentrated signals.
//!
//! These are the quantitative estimates that control how far outside a
//! region the phase-space content of a localized signal can reach:
//!
//! * a Gaussian decay bound on `|<H f, pi(z) phi_0>|` in the distance from
//!   `z` to the region, for the self-dual Gaussian window,
//! * a polynomial decay bound for windows with polynomial phase-space decay,
//! * a tail-sum bound on `sum exp(-(pi/2)(|lambda| - R)^2)` over lattice
//!   points outside a disk of radius `R*`,
//! * the cover radius `R_eps` guaranteeing reconstruction error `eps` from
//!   lattice points inside the enlarged disk `R + R_eps`,
//! * the local-frame approximation bound `(1 + sqrt(B/A))(sqrt(c eps) + eps~)`.
//!
//! The estimates are continuum statements. To check them against data on
//! `Z_L`, phase-plane coordinates are scaled by `1/sqrt(L)` (see
//! [`continuum_scale`]): under that scaling the discrete self-dual Gaussian
//! corresponds to `exp(-pi t^2)` and distances become comparable across
//! group sizes. Checks are inequality assertions with a small additive
//! slack for floating-point noise; the evaluators themselves are exact
//! transcriptions of the formulas.

use std::f64::consts::PI;

use thiserror::Error;

use crate::gabor::Lattice;

/// Errors from bound evaluation: parameter-range violations and the one
/// genuine failure mode, a cover-radius formula with no finite value.
#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("delta must lie strictly between 0 and 1, got {delta}")]
    InvalidDelta { delta: f64 },
    #[error("polynomial exponent must exceed 1, got {s}")]
    InvalidExponent { s: f64 },
    #[error("prefactor must be positive, got {c}")]
    InvalidPrefactor { c: f64 },
    #[error("distance must be nonnegative and finite, got {dist}")]
    InvalidDistance { dist: f64 },
    #[error("norm must be nonnegative and finite, got {norm}")]
    InvalidNorm { norm: f64 },
    #[error("tail bound needs R_star > R >= 0, got R={r}, R_star={r_star}")]
    InvalidRadii { r: f64, r_star: f64 },
    #[error("lattice cell occupancy must be at least 1")]
    InvalidOccupancy,
    #[error("epsilon must lie in [0, 1), got {eps}")]
    InvalidEpsilon { eps: f64 },
    #[error("constant must exceed 1, got {c}")]
    InvalidConstant { c: f64 },
    #[error("frame bounds must satisfy 0 < A <= B, got A={lower}, B={upper}")]
    InvalidFrameBounds { lower: f64, upper: f64 },
    #[error("logarithm argument must be positive and finite, got {arg}")]
    NonPositiveLogArg { arg: f64 },
    #[error("bound is vacuous: radicand {radicand} is negative, the formula gives no finite radius")]
    VacuousBound { radicand: f64 },
}

/// Scale factor mapping discrete phase-plane coordinates on `Z_L x Z_L` to
/// the continuum normalization in which the self-dual Gaussian is
/// `exp(-pi t^2)`: multiply cell coordinates and distances by this.
pub fn continuum_scale(l: usize) -> f64 {
    1.0 / (l as f64).sqrt()
}

/// Phase-space decay profile of an analysis pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayProfile {
    /// Gaussian decay with interpolation parameter `delta` in `(0, 1)`.
    Gaussian { delta: f64 },
    /// Polynomial decay `|V_phi g(z)| <= C (1 + |z|^{2s})^{-1}` with
    /// exponent `s > 1`, prefactor `C > 0`, and `delta` in `(0, 1)`.
    Polynomial { c: f64, s: f64, delta: f64 },
}

impl DecayProfile {
    pub fn validate(&self) -> Result<(), BoundsError> {
        match *self {
            DecayProfile::Gaussian { delta } => check_delta(delta),
            DecayProfile::Polynomial { c, s, delta } => {
                check_delta(delta)?;
                if !(s > 1.0) || !s.is_finite() {
                    return Err(BoundsError::InvalidExponent { s });
                }
                if !(c > 0.0) || !c.is_finite() {
                    return Err(BoundsError::InvalidPrefactor { c });
                }
                Ok(())
            }
        }
    }

    /// The decay bound at the given distance for a signal of the given norm.
    pub fn bound(&self, dist: f64, f_norm: f64) -> Result<f64, BoundsError> {
        match *self {
            DecayProfile::Gaussian { delta } => gaussian_decay_bound(dist, delta, f_norm),
            DecayProfile::Polynomial { c, s, delta } => {
                poly_decay_bound(dist, c, s, delta, f_norm)
            }
        }
    }
}

fn check_delta(delta: f64) -> Result<(), BoundsError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundsError::InvalidDelta { delta });
    }
    Ok(())
}

fn check_dist_and_norm(dist: f64, f_norm: f64) -> Result<(), BoundsError> {
    if !(dist >= 0.0) || !dist.is_finite() {
        return Err(BoundsError::InvalidDistance { dist });
    }
    if !(f_norm >= 0.0) || !f_norm.is_finite() {
        return Err(BoundsError::InvalidNorm { norm: f_norm });
    }
    Ok(())
}

/// Gaussian-window decay bound
/// `(1/sqrt 2) delta^{-1/2} ||f|| exp(-(pi/2)(1 - delta) dist^2)`
/// on `|<H f, pi(z) phi_0>|` at distance `dist` from the region.
pub fn gaussian_decay_bound(dist: f64, delta: f64, f_norm: f64) -> Result<f64, BoundsError> {
    check_delta(delta)?;
    check_dist_and_norm(dist, f_norm)?;
    let prefactor = delta.sqrt().recip() / std::f64::consts::SQRT_2;
    Ok(prefactor * f_norm * (-(PI / 2.0) * (1.0 - delta) * dist * dist).exp())
}

/// The constant `C_s = C sqrt(2) pi / sqrt(s sin(pi/s))` of the polynomial
/// decay bound; equals `pi` at `C = 1`, `s = 2`.
pub fn polynomial_constant(c: f64, s: f64) -> Result<f64, BoundsError> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(BoundsError::InvalidExponent { s });
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(BoundsError::InvalidPrefactor { c });
    }
    Ok(c * std::f64::consts::SQRT_2 * PI / (s * (PI / s).sin()).sqrt())
}

/// Polynomial-window decay bound
/// `C_s delta^{-1/(2s)} ||f|| (1 + (1 - delta) dist^s)^{-1}`.
pub fn poly_decay_bound(
    dist: f64,
    c: f64,
    s: f64,
    delta: f64,
    f_norm: f64,
) -> Result<f64, BoundsError> {
    check_delta(delta)?;
    check_dist_and_norm(dist, f_norm)?;
    let c_s = polynomial_constant(c, s)?;
    Ok(c_s * delta.powf(-1.0 / (2.0 * s)) * f_norm / (1.0 + (1.0 - delta) * dist.powf(s)))
}

/// Parameters of the lattice tail-sum bound: the region radius `R`, the
/// cutoff radius `R* > R`, and the maximum number of lattice points per
/// unit cell `Q(j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBoundParams {
    pub r: f64,
    pub r_star: f64,
    pub n_lambda: usize,
}

impl TailBoundParams {
    pub fn new(r: f64, r_star: f64, n_lambda: usize) -> Result<Self, BoundsError> {
        if !(r >= 0.0) || !(r_star > r) || !r_star.is_finite() {
            return Err(BoundsError::InvalidRadii { r, r_star });
        }
        if n_lambda == 0 {
            return Err(BoundsError::InvalidOccupancy);
        }
        Ok(Self { r, r_star, n_lambda })
    }

    /// `C_Lambda = 8 exp(5 pi / 4) N_Lambda`.
    pub fn c_lambda(&self) -> f64 {
        tail_sum_constant(self.n_lambda)
    }

    /// The closed-form tail bound
    /// `C_Lambda exp(-(pi/4)((R*)^2 / 4 - R^2))`.
    pub fn bound(&self) -> f64 {
        self.c_lambda() * (-(PI / 4.0) * (self.r_star * self.r_star / 4.0 - self.r * self.r)).exp()
    }
}

/// `C_Lambda = 8 exp(5 pi / 4) N_Lambda`, approximately `406.4 N_Lambda`.
pub fn tail_sum_constant(n_lambda: usize) -> f64 {
    8.0 * (5.0 * PI / 4.0).exp() * n_lambda as f64
}

/// Direct evaluation of the tail sum
/// `sum_{|lambda| > R*} exp(-(pi/2)(|lambda| - R)^2)` over an explicit
/// point set (already in continuum coordinates).
pub fn tail_sum_lhs(points: &[(f64, f64)], r: f64, r_star: f64) -> Result<f64, BoundsError> {
    if !(r >= 0.0) || !(r_star > r) || !r_star.is_finite() {
        return Err(BoundsError::InvalidRadii { r, r_star });
    }
    let mut acc = 0.0f64;
    for &(x, y) in points {
        let norm = (x * x + y * y).sqrt();
        if norm > r_star {
            let d = norm - r;
            acc += (-(PI / 2.0) * d * d).exp();
        }
    }
    Ok(acc)
}

/// Lattice points as continuum coordinates: symmetric representatives in
/// `[-L/2, L/2)` scaled by [`continuum_scale`], suitable for the tail-sum
/// and cover-radius formulas.
pub fn scaled_lattice_points(lattice: &Lattice) -> Vec<(f64, f64)> {
    let l = lattice.l();
    let scale = continuum_scale(l);
    lattice
        .points()
        .iter()
        .map(|z| {
            (
                symmetric_representative(z.x, l) * scale,
                symmetric_representative(z.omega, l) * scale,
            )
        })
        .collect()
}

fn symmetric_representative(v: usize, l: usize) -> f64 {
    let v = v % l;
    if v < l.div_ceil(2) {
        v as f64
    } else {
        v as f64 - l as f64
    }
}

/// The true maximum number of points per unit cell
/// `Q(j) = [j1 - 1/2, j1 + 1/2) x [j2 - 1/2, j2 + 1/2)`, the sharp
/// occupancy `N_Lambda` for [`TailBoundParams`].
pub fn max_points_per_unit_cell(points: &[(f64, f64)]) -> usize {
    use std::collections::HashMap;
    let mut counts: HashMap<(i64, i64), usize> = HashMap::new();
    for &(x, y) in points {
        let cell = ((x + 0.5).floor() as i64, (y + 0.5).floor() as i64);
        *counts.entry(cell).or_insert(0) += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

/// Cover radius `R_eps = -R + sqrt(4 R^2 - (16/pi) ln(eps^2 A / (C_Lambda S)))`
/// with `S = sum_{k<=N} 1/alpha_k^2`: expanding the disk of radius `R` by
/// `R_eps` guarantees reconstruction error at most `eps` on the leading
/// eigenspace. A nonpositive result means no enlargement is needed; a
/// negative radicand means the formula provides no finite radius.
pub fn cover_radius(
    r: f64,
    eps: f64,
    lower_frame_bound: f64,
    c_lambda: f64,
    inv_sq_eigs: f64,
) -> Result<f64, BoundsError> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(BoundsError::InvalidRadii { r, r_star: r });
    }
    let arg = eps * eps * lower_frame_bound / (c_lambda * inv_sq_eigs);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(BoundsError::NonPositiveLogArg { arg });
    }
    let radicand = 4.0 * r * r - (16.0 / PI) * arg.ln();
    if radicand < 0.0 {
        return Err(BoundsError::VacuousBound { radicand });
    }
    Ok(-r + radicand.sqrt())
}

/// Local-frame approximation bound `(1 + sqrt(B/A)) (sqrt(c eps) + eps~)`
/// on the relative error of reconstructing an `(eps, phi)`-concentrated
/// signal from lattice points inside the cover. `eps = 0` is admitted so
/// the degenerate exact case evaluates to `eps~`-only.
pub fn frame_local_bound(
    lower: f64,
    upper: f64,
    eps_tilde: f64,
    c: f64,
    eps: f64,
) -> Result<f64, BoundsError> {
    if !(lower > 0.0 && lower <= upper) || !upper.is_finite() {
        return Err(BoundsError::InvalidFrameBounds { lower, upper });
    }
    if !(c > 1.0) {
        return Err(BoundsError::InvalidConstant { c });
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(BoundsError::InvalidEpsilon { eps });
    }
    if !(eps_tilde >= 0.0) || !eps_tilde.is_finite() {
        return Err(BoundsError::InvalidNorm { norm: eps_tilde });
    }
    Ok((1.0 + (upper / lower).sqrt()) * ((c * eps).sqrt() + eps_tilde))
}
