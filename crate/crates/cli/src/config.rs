//! Run configuration: a versioned JSON schema with one parameter block
//! per experiment, loaded from disk or taken from built-in defaults.
//!
//! Every field has a default, so a config file only needs the entries it
//! overrides. Validation reports the dotted path of the offending field.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Which experiment a `run` invocation executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExperimentKind {
    /// Local Gabor approximation of localized signals over growing covers.
    Exp1,
    /// Ten-region quilted frame: error, condition numbers, frame algorithm.
    Exp2,
    /// Four-region overlap sweep with approximate projection.
    Exp3,
    /// Decay, tail, and cover-radius bound checks.
    Bounds,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ExperimentKind::Exp1 => "exp1",
            ExperimentKind::Exp2 => "exp2",
            ExperimentKind::Exp3 => "exp3",
            ExperimentKind::Bounds => "bounds",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config file: {0}")]
    Parse(#[from] serde_json::Error),
}

fn field(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Top-level configuration: signal length, seed, and per-experiment blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Signal length; all experiments run on `Z_l`.
    pub l: usize,
    pub seed: u64,
    pub exp1: Exp1Config,
    pub exp2: Exp2Config,
    pub exp3: Exp3Config,
    pub bounds: BoundsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            l: 480,
            seed: 0,
            exp1: Exp1Config::default(),
            exp2: Exp2Config::default(),
            exp3: Exp3Config::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks the shared fields and the block the experiment will use.
    pub fn validate(&self, kind: ExperimentKind) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.l < 16 {
            return Err(field("l", format!("must be at least 16, got {}", self.l)));
        }
        match kind {
            ExperimentKind::Exp1 => self.exp1.validate(self.l),
            ExperimentKind::Exp2 => self.exp2.validate(self.l),
            ExperimentKind::Exp3 => self.exp3.validate(self.l),
            ExperimentKind::Bounds => self.bounds.validate(self.l),
        }
    }
}

fn check_lattice(path: &str, l: usize, pair: [usize; 2]) -> Result<(), ConfigError> {
    let [a, b] = pair;
    if a == 0 || b == 0 || l % a != 0 || l % b != 0 {
        return Err(field(
            path,
            format!("lattice ({a},{b}) must consist of divisors of L={l}"),
        ));
    }
    if a * b >= l {
        return Err(field(
            path,
            format!("lattice ({a},{b}) is not oversampled: a*b must be < L={l}"),
        ));
    }
    Ok(())
}

fn check_unit_interval(path: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(field(path, format!("must lie strictly in (0,1), got {v}")));
    }
    Ok(())
}

fn check_increasing(path: &str, values: &[f64]) -> Result<(), ConfigError> {
    if values.is_empty() {
        return Err(field(path, "must not be empty"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(field(path, "must be strictly increasing"));
    }
    Ok(())
}

/// Disk region, one lattice, growing disk covers, eigenspace projection,
/// and iterative reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Config {
    /// Radius of the localization disk centered at the origin.
    pub region_radius: f64,
    pub lattice: [usize; 2],
    pub cover_radii: Vec<f64>,
    /// Eigenvalue threshold selecting the subspace dimension N.
    pub eigen_threshold: f64,
    pub recon_max_iter: usize,
    pub recon_tol: f64,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            region_radius: 80.0,
            lattice: [20, 20],
            cover_radii: vec![80.0, 100.0, 120.0, 140.0],
            eigen_threshold: 0.5,
            recon_max_iter: 2000,
            recon_tol: 1e-8,
        }
    }
}

impl Exp1Config {
    fn validate(&self, l: usize) -> Result<(), ConfigError> {
        if !(self.region_radius > 0.0) {
            return Err(field("exp1.region_radius", "must be positive"));
        }
        check_lattice("exp1.lattice", l, self.lattice)?;
        check_increasing("exp1.cover_radii", &self.cover_radii)?;
        if self.cover_radii[0] < self.region_radius {
            return Err(field(
                "exp1.cover_radii",
                "covers must contain the region: smallest radius below region_radius",
            ));
        }
        check_unit_interval("exp1.eigen_threshold", self.eigen_threshold)?;
        if self.recon_max_iter == 0 {
            return Err(field("exp1.recon_max_iter", "must be positive"));
        }
        if !(self.recon_tol > 0.0) {
            return Err(field("exp1.recon_tol", "must be positive"));
        }
        Ok(())
    }
}

/// Ten rectangular regions (two time halves by five frequency bands),
/// one lattice per region, compared with and without projection under
/// two cover sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Config {
    /// Per-region lattice parameters, time-major over the 2x5 grid.
    pub lattices: Vec<[usize; 2]>,
    /// Cover dilation (in cells) for the less-overlap setting. Covers
    /// must strictly contain their regions for the restricted systems to
    /// stay frames of the eigenspaces, so this is small but nonzero.
    pub less_overlap_margin: usize,
    /// Cover dilation (in cells) for the more-overlap setting.
    pub overlap_margin: usize,
    /// Eigenvalue threshold selecting each region's subspace dimension.
    pub eigen_threshold: f64,
    /// Random signals averaged for the relative-error table.
    pub trials: usize,
    pub alg_max_iter: usize,
    pub alg_tol: f64,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            lattices: vec![
                [20, 20],
                [16, 20],
                [20, 16],
                [16, 16],
                [15, 16],
                [15, 15],
                [12, 15],
                [12, 12],
                [10, 12],
                [10, 10],
            ],
            less_overlap_margin: 4,
            overlap_margin: 20,
            eigen_threshold: 0.3,
            trials: 1000,
            alg_max_iter: 3000,
            alg_tol: 1e-9,
        }
    }
}

impl Exp2Config {
    fn validate(&self, l: usize) -> Result<(), ConfigError> {
        if l % 10 != 0 {
            return Err(field(
                "l",
                "exp2 splits the grid into two time halves and five frequency bands; L must be divisible by 10",
            ));
        }
        if self.lattices.len() != 10 {
            return Err(field(
                "exp2.lattices",
                format!("expected 10 entries, got {}", self.lattices.len()),
            ));
        }
        for (i, &pair) in self.lattices.iter().enumerate() {
            check_lattice(&format!("exp2.lattices[{i}]"), l, pair)?;
        }
        if self.less_overlap_margin == 0 {
            return Err(field(
                "exp2.less_overlap_margin",
                "must be positive: covers have to strictly contain their regions",
            ));
        }
        if self.overlap_margin <= self.less_overlap_margin {
            return Err(field(
                "exp2.overlap_margin",
                format!(
                    "must exceed less_overlap_margin = {}",
                    self.less_overlap_margin
                ),
            ));
        }
        check_unit_interval("exp2.eigen_threshold", self.eigen_threshold)?;
        if self.trials == 0 {
            return Err(field("exp2.trials", "must be positive"));
        }
        if self.alg_max_iter == 0 {
            return Err(field("exp2.alg_max_iter", "must be positive"));
        }
        if !(self.alg_tol > 0.0) {
            return Err(field("exp2.alg_tol", "must be positive"));
        }
        Ok(())
    }
}

/// Four quadrant regions with their own lattices, swept over cover
/// margins, reconstructed with and without approximate projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp3Config {
    /// Quadrant lattices: (low freq, early), (low freq, late),
    /// (high freq, early), (high freq, late).
    pub lattices: Vec<[usize; 2]>,
    /// Cover dilations (in cells) swept as the overlap amount.
    pub overlap_margins: Vec<usize>,
    /// Eigenspace dimensions compared in approximate-projection mode.
    pub eigen_counts: Vec<usize>,
    pub trials: usize,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Self {
            lattices: vec![[20, 8], [24, 10], [12, 24], [15, 20]],
            overlap_margins: vec![0, 8, 16, 24, 32, 40],
            eigen_counts: vec![120, 135, 150],
            trials: 600,
        }
    }
}

impl Exp3Config {
    fn validate(&self, l: usize) -> Result<(), ConfigError> {
        if l % 2 != 0 {
            return Err(field("l", "exp3 splits the grid at L/2; L must be even"));
        }
        if self.lattices.len() != 4 {
            return Err(field(
                "exp3.lattices",
                format!("expected 4 entries, got {}", self.lattices.len()),
            ));
        }
        for (i, &pair) in self.lattices.iter().enumerate() {
            check_lattice(&format!("exp3.lattices[{i}]"), l, pair)?;
        }
        if self.overlap_margins.is_empty() {
            return Err(field("exp3.overlap_margins", "must not be empty"));
        }
        if self.overlap_margins.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field("exp3.overlap_margins", "must be strictly increasing"));
        }
        if self.eigen_counts.is_empty() {
            return Err(field("exp3.eigen_counts", "must not be empty"));
        }
        if self.eigen_counts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field("exp3.eigen_counts", "must be strictly increasing"));
        }
        if self.eigen_counts.iter().any(|&n| n == 0 || n > l) {
            return Err(field(
                "exp3.eigen_counts",
                format!("entries must lie in 1..={l}"),
            ));
        }
        if self.trials == 0 {
            return Err(field("exp3.trials", "must be positive"));
        }
        Ok(())
    }
}

/// Randomized tail-sum checks, dense STFT decay checks, and the
/// end-to-end cover-radius test.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// Random lattice/radius configurations for the tail-sum inequality.
    pub tail_trials: usize,
    /// Signal lengths the tail configurations draw from.
    pub tail_sizes: Vec<usize>,
    /// Random signals checked against the decay bounds.
    pub decay_trials: usize,
    /// Split parameter of the Gaussian decay bound.
    pub decay_delta: f64,
    /// Split parameter of the polynomial decay bound.
    pub poly_delta: f64,
    pub region_radius: f64,
    pub lattice: [usize; 2],
    pub eigen_threshold: f64,
    /// Target errors for the derived cover radius.
    pub cover_eps: Vec<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            tail_trials: 20,
            tail_sizes: vec![120, 240, 480],
            decay_trials: 3,
            decay_delta: 0.5,
            poly_delta: 0.5,
            region_radius: 80.0,
            lattice: [20, 20],
            eigen_threshold: 0.5,
            cover_eps: vec![0.5, 0.9],
        }
    }
}

impl BoundsConfig {
    fn validate(&self, l: usize) -> Result<(), ConfigError> {
        if self.tail_trials == 0 {
            return Err(field("bounds.tail_trials", "must be positive"));
        }
        if self.tail_sizes.is_empty() || self.tail_sizes.iter().any(|&s| s < 16) {
            return Err(field("bounds.tail_sizes", "entries must be at least 16"));
        }
        if self.decay_trials == 0 {
            return Err(field("bounds.decay_trials", "must be positive"));
        }
        check_unit_interval("bounds.decay_delta", self.decay_delta)?;
        check_unit_interval("bounds.poly_delta", self.poly_delta)?;
        if !(self.region_radius > 0.0) {
            return Err(field("bounds.region_radius", "must be positive"));
        }
        check_lattice("bounds.lattice", l, self.lattice)?;
        check_unit_interval("bounds.eigen_threshold", self.eigen_threshold)?;
        check_increasing("bounds.cover_eps", &self.cover_eps)?;
        for &eps in &self.cover_eps {
            check_unit_interval("bounds.cover_eps", eps)?;
        }
        Ok(())
    }
}
