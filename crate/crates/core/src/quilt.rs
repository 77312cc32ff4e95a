//! Families of regions covering the phase plane, each carrying its own
//! lattice and window: globally stitched Gabor-type systems, their frame
//! operators and condition numbers, relative reconstruction error, the
//! Richardson frame algorithm, and the subspace norm-equivalence check.
//!
//! A [`RegionFamily`] lists regions `Omega_mu` whose union covers the grid,
//! each with a covering region `Omega*_mu`, a lattice, a mother window, and
//! a projection mode. [`PreparedFamily::build_global`] enumerates one atom
//! per lattice point inside each cover:
//!
//! * `None`: raw time-frequency shifts of the member window,
//! * `Exact`: atoms projected onto the leading eigenspace of the member
//!   region's localization operator,
//! * `Approximate`: analysis by raw atoms, synthesis by eigenvalue-weighted
//!   projections (the cheap surrogate; the global operator is then not
//!   Hermitian, so condition numbers are defined only for the other modes).
//!
//! Localization operators and eigenspaces always use the family's shared
//! analysis window; the member windows shape the atoms.

use std::path::Path;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::dsignal::{gaussian_window, inner, DSignalError, Signal, TFPoint};
use crate::gabor::{FrameBounds, GaborError, GaborSystem, Lattice};
use crate::localframe::{fit_rate, LocalFrameError, ReconTrace};
use crate::numkernel::{default_spectral_floor, herm_eig, CMatrix, NumKernelError};
use crate::tfloc::{
    eigensystem, localization_op, DiskBoundary, EigenSystem, EigenspaceProjector, ProjectorMode,
    Region, TflocError, DEFAULT_KERNEL_TOL,
};

/// Unit-norm tolerance for the analysis and member mother windows.
const WINDOW_NORM_TOL: f64 = 1e-8;

/// Hermitian-defect tolerance for the assembled global operator.
const OPERATOR_HERMITIAN_REL_TOL: f64 = 1e-10;

/// Errors from family validation, global assembly, and reconstruction.
#[derive(Debug, Error)]
pub enum QuiltError {
    #[error("family is empty")]
    EmptyFamily,
    #[error("member {member}: size {got} does not match family size {expected}")]
    SizeMismatch {
        member: usize,
        expected: usize,
        got: usize,
    },
    #[error("window norm is {norm}, expected 1")]
    WindowNotUnit { norm: f64 },
    #[error("member {member}: cover does not contain its region")]
    CoverDoesNotContainRegion { member: usize },
    #[error("regions leave cell (x={x}, omega={omega}) uncovered")]
    CoverageGap { x: usize, omega: usize },
    #[error("cell (x={x}, omega={omega}) lies in {count} regions, declared bound {bound}")]
    CoverageExcess {
        x: usize,
        omega: usize,
        count: usize,
        bound: usize,
    },
    #[error("member {member}: no lattice point falls inside the cover")]
    EmptyCover { member: usize },
    #[error("condition numbers and the frame algorithm need a Hermitian operator; a member uses approximate projection")]
    NotHermitianMode,
    #[error("global system is not a frame: extreme eigenvalues {lower} and {upper}")]
    NotAFrame { lower: f64, upper: f64 },
    #[error("signal must be nonzero")]
    ZeroSignal,
    #[error("cannot read family spec: {0}")]
    SpecIo(#[from] std::io::Error),
    #[error("cannot parse family spec: {0}")]
    SpecParse(#[from] serde_json::Error),
    #[error(transparent)]
    Gabor(#[from] GaborError),
    #[error(transparent)]
    Kernel(#[from] NumKernelError),
    #[error(transparent)]
    Localization(#[from] TflocError),
    #[error(transparent)]
    Signal(#[from] DSignalError),
    #[error(transparent)]
    Reconstruction(#[from] LocalFrameError),
}

/// How a member's atoms interact with its leading eigenspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Raw time-frequency shifts (the quilted system).
    None,
    /// Atoms projected by the orthogonal eigenspace projector.
    Exact,
    /// Analysis by raw atoms, synthesis by eigenvalue-weighted projections.
    Approximate,
}

/// Rule selecting the eigenspace dimension of a member.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NRule {
    /// All eigenvalues strictly above the threshold (at least one).
    Threshold(f64),
    /// A fixed dimension.
    Fixed(usize),
}

impl NRule {
    fn resolve(&self, eigen: &EigenSystem) -> usize {
        match *self {
            NRule::Threshold(tau) => eigen.count_above(tau).max(1),
            NRule::Fixed(n) => n,
        }
    }
}

/// One patch of the quilt: a region, its cover, and the local system data.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub region: Region,
    pub cover: Region,
    pub lattice: Lattice,
    /// Unit-norm mother window for this member's atoms.
    pub window: Signal,
    /// Replace the mother window by the tight window of its system.
    pub tighten: bool,
    pub n_rule: NRule,
    pub mode: ProjectionMode,
}

/// A validated family of covering regions with a shared analysis window.
#[derive(Debug, Clone)]
pub struct RegionFamily {
    members: Vec<FamilyMember>,
    analysis_window: Signal,
    max_overlap: usize,
}

impl RegionFamily {
    /// Validates sizes, window norms, region containment, and that the
    /// regions cover every cell between 1 and `max_overlap` times.
    pub fn new(
        members: Vec<FamilyMember>,
        analysis_window: Signal,
        max_overlap: usize,
    ) -> Result<Self, QuiltError> {
        if members.is_empty() {
            return Err(QuiltError::EmptyFamily);
        }
        let l = analysis_window.len();
        check_unit(&analysis_window)?;
        for (idx, m) in members.iter().enumerate() {
            for got in [m.region.l(), m.cover.l(), m.lattice.l(), m.window.len()] {
                if got != l {
                    return Err(QuiltError::SizeMismatch {
                        member: idx,
                        expected: l,
                        got,
                    });
                }
            }
            check_unit(&m.window)?;
            if !m.region.is_subset_of(&m.cover)? {
                return Err(QuiltError::CoverDoesNotContainRegion { member: idx });
            }
        }
        for x in 0..l {
            for omega in 0..l {
                let count = members
                    .iter()
                    .filter(|m| m.region.contains(x, omega))
                    .count();
                if count == 0 {
                    return Err(QuiltError::CoverageGap { x, omega });
                }
                if count > max_overlap {
                    return Err(QuiltError::CoverageExcess {
                        x,
                        omega,
                        count,
                        bound: max_overlap,
                    });
                }
            }
        }
        Ok(Self {
            members,
            analysis_window,
            max_overlap,
        })
    }

    pub fn members(&self) -> &[FamilyMember] {
        &self.members
    }

    pub fn analysis_window(&self) -> &Signal {
        &self.analysis_window
    }

    pub fn max_overlap(&self) -> usize {
        self.max_overlap
    }

    pub fn l(&self) -> usize {
        self.analysis_window.len()
    }
}

fn default_window_spec() -> WindowSpec {
    WindowSpec::Gaussian
}

fn default_n_rule() -> NRule {
    NRule::Threshold(0.5)
}

fn default_mode() -> ProjectionMode {
    ProjectionMode::None
}

fn default_tighten() -> bool {
    true
}

fn default_max_overlap() -> usize {
    1
}

fn default_boundary() -> DiskBoundary {
    DiskBoundary::Strict
}

/// Region description in a [`FamilySpec`]: built-in shapes or a mask file
/// in either format the region I/O supports (plain PBM as written by
/// [`Region::write_pbm`], or the run-length text of [`Region::write_rle`],
/// told apart by their headers).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Disk {
        center: [usize; 2],
        radius: f64,
        #[serde(default = "default_boundary")]
        boundary: DiskBoundary,
    },
    /// Cyclic product rectangle `[x[0], x[1]) x [omega[0], omega[1])`.
    Rect { x: [usize; 2], omega: [usize; 2] },
    Polygon { vertices: Vec<[f64; 2]> },
    MaskFile { path: String },
}

impl ShapeSpec {
    fn build(&self, l: usize, base: &Path) -> Result<Region, QuiltError> {
        Ok(match self {
            ShapeSpec::Disk {
                center,
                radius,
                boundary,
            } => Region::disk(l, TFPoint::new(center[0], center[1]), *radius, *boundary),
            ShapeSpec::Rect { x, omega } => Region::rect(l, x[0], x[1], omega[0], omega[1])?,
            ShapeSpec::Polygon { vertices } => {
                let points: Vec<(f64, f64)> = vertices.iter().map(|v| (v[0], v[1])).collect();
                Region::polygon(l, &points)?
            }
            ShapeSpec::MaskFile { path } => {
                let text = std::fs::read_to_string(base.join(path))?;
                if text.trim_start().starts_with("P1") {
                    Region::from_pbm_str(&text)?
                } else {
                    Region::from_rle_str(&text)?
                }
            }
        })
    }
}

/// Window description: the unit Gaussian, or a two-column CSV file as
/// written by [`Signal::write_csv`]. File windows must be unit norm.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowSpec {
    Gaussian,
    File { path: String },
}

impl WindowSpec {
    fn build(&self, l: usize, base: &Path) -> Result<Signal, QuiltError> {
        Ok(match self {
            WindowSpec::Gaussian => gaussian_window(l),
            WindowSpec::File { path } => Signal::read_csv(&base.join(path))?,
        })
    }
}

/// Serializable description of one quilt member.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    pub shape: ShapeSpec,
    /// Lattice pitches `(a, b)`.
    pub lattice: [usize; 2],
    #[serde(default = "default_window_spec")]
    pub window: WindowSpec,
    /// Cover dilation in cells over the region.
    #[serde(default)]
    pub cover_margin: usize,
    #[serde(default = "default_n_rule")]
    pub n_rule: NRule,
    #[serde(default = "default_mode")]
    pub mode: ProjectionMode,
    #[serde(default = "default_tighten")]
    pub tighten: bool,
}

/// Serializable description of a [`RegionFamily`]: the JSON surface for
/// configuring quilted systems without code.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// Group size; every shape, lattice, and window lives on `Z_l`.
    pub l: usize,
    pub members: Vec<MemberSpec>,
    #[serde(default = "default_window_spec")]
    pub analysis_window: WindowSpec,
    #[serde(default = "default_max_overlap")]
    pub max_overlap: usize,
}

impl FamilySpec {
    pub fn from_json(text: &str) -> Result<Self, QuiltError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parses `path` and builds the family; relative mask and window
    /// paths resolve against the spec file's directory.
    pub fn load(path: &Path) -> Result<RegionFamily, QuiltError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text)?.build(base)
    }

    /// Builds and validates the family; relative paths resolve against
    /// `base`.
    pub fn build(&self, base: &Path) -> Result<RegionFamily, QuiltError> {
        let members = self
            .members
            .iter()
            .map(|m| {
                let region = m.shape.build(self.l, base)?;
                let cover = region.dilate(m.cover_margin);
                Ok(FamilyMember {
                    region,
                    cover,
                    lattice: Lattice::new(self.l, m.lattice[0], m.lattice[1])?,
                    window: m.window.build(self.l, base)?,
                    tighten: m.tighten,
                    n_rule: m.n_rule,
                    mode: m.mode,
                })
            })
            .collect::<Result<Vec<_>, QuiltError>>()?;
        RegionFamily::new(
            members,
            self.analysis_window.build(self.l, base)?,
            self.max_overlap,
        )
    }
}

fn check_unit(w: &Signal) -> Result<(), QuiltError> {
    let norm = w.norm();
    if (norm - 1.0).abs() > WINDOW_NORM_TOL {
        return Err(QuiltError::WindowNotUnit { norm });
    }
    Ok(())
}

struct PreparedMember {
    atom_window: Signal,
    eigen: EigenSystem,
}

/// A family with per-member tight windows and eigendecompositions computed
/// once, ready to build global systems under different modes and dimension
/// rules.
pub struct PreparedFamily {
    family: RegionFamily,
    prepared: Vec<PreparedMember>,
}

/// Computes each member's atom window (tightened when requested) and the
/// eigendecomposition of its region's localization operator under the
/// shared analysis window.
pub fn prepare(family: RegionFamily) -> Result<PreparedFamily, QuiltError> {
    let mut prepared = Vec::with_capacity(family.members.len());
    for m in &family.members {
        let atom_window = if m.tighten {
            let sys = GaborSystem::new(m.window.clone(), m.lattice)?;
            sys.tight_window()?
        } else {
            m.window.clone()
        };
        let op = localization_op(&family.analysis_window, &m.region)?;
        let eigen = eigensystem(&op, DEFAULT_KERNEL_TOL)?;
        prepared.push(PreparedMember { atom_window, eigen });
    }
    Ok(PreparedFamily { family, prepared })
}

impl PreparedFamily {
    pub fn family(&self) -> &RegionFamily {
        &self.family
    }

    /// The eigendecomposition backing member `idx`'s projections.
    pub fn eigen(&self, idx: usize) -> &EigenSystem {
        &self.prepared[idx].eigen
    }

    /// Eigenspace dimensions the members resolve to, honoring an override.
    pub fn resolved_dims(&self, n_override: Option<NRule>) -> Vec<usize> {
        self.family
            .members
            .iter()
            .zip(self.prepared.iter())
            .map(|(m, p)| n_override.unwrap_or(m.n_rule).resolve(&p.eigen))
            .collect()
    }

    /// Assembles the global system: one atom per lattice point inside each
    /// member's cover, transformed per the member's projection mode.
    /// `mode_override` and `n_override` replace every member's mode or
    /// dimension rule for side-by-side comparisons on one preparation.
    pub fn build_global(
        &self,
        mode_override: Option<ProjectionMode>,
        n_override: Option<NRule>,
    ) -> Result<GlobalFrame, QuiltError> {
        let l = self.family.l();
        let mut atoms_analysis = Vec::new();
        let mut atoms_synthesis = Vec::new();
        let mut provenance = Vec::new();
        let mut hermitian = true;

        for (idx, (m, p)) in self
            .family
            .members
            .iter()
            .zip(self.prepared.iter())
            .enumerate()
        {
            let mode = mode_override.unwrap_or(m.mode);
            let sys = GaborSystem::new(p.atom_window.clone(), m.lattice)?;
            let active: Vec<TFPoint> = m
                .lattice
                .points()
                .into_iter()
                .filter(|&z| m.cover.contains_point(z))
                .collect();
            if active.is_empty() {
                return Err(QuiltError::EmptyCover { member: idx });
            }
            let projector = match mode {
                ProjectionMode::None => None,
                ProjectionMode::Exact | ProjectionMode::Approximate => {
                    let n = n_override.unwrap_or(m.n_rule).resolve(&p.eigen);
                    let pmode = if mode == ProjectionMode::Exact {
                        ProjectorMode::Exact
                    } else {
                        hermitian = false;
                        ProjectorMode::Approximate
                    };
                    Some(EigenspaceProjector::from_eigen(&p.eigen, n, pmode)?)
                }
            };
            for z in active {
                let raw = sys.atom(z);
                let (analysis, synthesis) = match (&projector, mode) {
                    (None, _) => (raw.clone(), raw),
                    (Some(pr), ProjectionMode::Exact) => {
                        let projected = pr.apply(&raw)?;
                        (projected.clone(), projected)
                    }
                    (Some(pr), _) => {
                        let weighted = pr.apply(&raw)?;
                        (raw, weighted)
                    }
                };
                atoms_analysis.push(analysis);
                atoms_synthesis.push(synthesis);
                provenance.push((idx, z));
            }
        }
        Ok(GlobalFrame {
            l,
            atoms_analysis,
            atoms_synthesis,
            provenance,
            hermitian,
            operator: OnceLock::new(),
            extremes: OnceLock::new(),
        })
    }

    /// Monte-Carlo check of the norm equivalence
    /// `||f||^2 ~ sum_mu sum_{k < N_mu} |<f, psi-mu_k>|^2`: the smallest and
    /// largest subspace coefficient energy over random unit signals.
    pub fn norm_equivalence_check(
        &self,
        trials: usize,
        n_override: Option<NRule>,
        rng: &mut impl Rng,
    ) -> NormRatios {
        let dims = self.resolved_dims(n_override);
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio = 0.0f64;
        for _ in 0..trials {
            let f = Signal::random_unit(self.family.l(), rng);
            let mut energy = 0.0;
            for (p, &n) in self.prepared.iter().zip(dims.iter()) {
                let coeffs = p.eigen.coefficients(&f);
                energy += coeffs.iter().take(n).map(Complex64::norm_sqr).sum::<f64>();
            }
            min_ratio = min_ratio.min(energy);
            max_ratio = max_ratio.max(energy);
        }
        NormRatios {
            min_ratio,
            max_ratio,
        }
    }
}

/// Extremes of the subspace coefficient energy over sampled unit signals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormRatios {
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// The assembled global system: analysis and synthesis atoms (identical
/// except in approximate mode), their member/lattice-point provenance, and
/// the lazily computed frame operator.
pub struct GlobalFrame {
    l: usize,
    atoms_analysis: Vec<Signal>,
    atoms_synthesis: Vec<Signal>,
    provenance: Vec<(usize, TFPoint)>,
    hermitian: bool,
    operator: OnceLock<CMatrix>,
    extremes: OnceLock<FrameBounds>,
}

impl GlobalFrame {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn atom_count(&self) -> usize {
        self.atoms_analysis.len()
    }

    pub fn analysis_atoms(&self) -> &[Signal] {
        &self.atoms_analysis
    }

    pub fn synthesis_atoms(&self) -> &[Signal] {
        &self.atoms_synthesis
    }

    /// `(member index, lattice point)` for each atom, in atom order.
    pub fn provenance(&self) -> &[(usize, TFPoint)] {
        &self.provenance
    }

    /// Whether the operator is Hermitian by construction (no member in
    /// approximate mode).
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// The global operator `S = sum_i s_i a_i*` over synthesis/analysis
    /// atom pairs, computed once and cached.
    pub fn operator(&self) -> &CMatrix {
        self.operator.get_or_init(|| {
            let mut s = CMatrix::zeros(self.l, self.l);
            for (syn, ana) in self.atoms_synthesis.iter().zip(self.atoms_analysis.iter()) {
                s.add_outer_scaled(syn.values(), ana.values(), 1.0);
            }
            if self.hermitian {
                s.hermitianize();
            }
            s
        })
    }

    /// `S f` as coefficient analysis followed by synthesis.
    pub fn apply(&self, f: &Signal) -> Result<Signal, QuiltError> {
        if f.len() != self.l {
            return Err(QuiltError::SizeMismatch {
                member: 0,
                expected: self.l,
                got: f.len(),
            });
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); self.l];
        for (syn, ana) in self.atoms_synthesis.iter().zip(self.atoms_analysis.iter()) {
            let c = inner(f, ana)?;
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(syn.values().iter()) {
                *a += c * v;
            }
        }
        Ok(Signal::new(acc)?)
    }

    /// Extreme eigenvalues of the Hermitian global operator.
    pub fn operator_bounds(&self) -> Result<FrameBounds, QuiltError> {
        if !self.hermitian {
            return Err(QuiltError::NotHermitianMode);
        }
        if let Some(b) = self.extremes.get() {
            return Ok(*b);
        }
        let op = self.operator();
        let tol = OPERATOR_HERMITIAN_REL_TOL * op.max_abs().max(1.0);
        let eig = herm_eig(op, tol)?;
        let bounds = FrameBounds {
            lower: eig.values[self.l - 1],
            upper: eig.values[0],
        };
        let _ = self.extremes.set(bounds);
        Ok(bounds)
    }

    /// Ratio of extreme operator eigenvalues; infinite when the smallest
    /// eigenvalue sits at or below the spectral floor (not a frame).
    pub fn condition_number(&self) -> Result<f64, QuiltError> {
        let bounds = self.operator_bounds()?;
        if bounds.lower <= default_spectral_floor(bounds.upper) {
            return Ok(f64::INFINITY);
        }
        Ok(bounds.upper / bounds.lower)
    }

    /// Relative reconstruction error `||f - S f|| / ||f||` of one pass
    /// through the configured analysis/synthesis pair.
    pub fn apply_and_error(&self, f: &Signal) -> Result<f64, QuiltError> {
        let norm = f.norm();
        if norm == 0.0 {
            return Err(QuiltError::ZeroSignal);
        }
        let sf = self.apply(f)?;
        Ok(f.sub(&sf).norm() / norm)
    }

    /// Richardson frame algorithm: `g_{n+1} = g_n + (2/(A+B))(S f - S g_n)`
    /// from `g_0 = 0`, converging to `f` at geometric rate `(B-A)/(B+A)`.
    /// Errors when the operator spectrum gives no frame.
    pub fn frame_algorithm(
        &self,
        f: &Signal,
        max_iter: usize,
        tol: f64,
    ) -> Result<(Signal, ReconTrace), QuiltError> {
        if f.len() != self.l {
            return Err(QuiltError::SizeMismatch {
                member: 0,
                expected: self.l,
                got: f.len(),
            });
        }
        let norm = f.norm();
        if norm == 0.0 {
            return Err(QuiltError::ZeroSignal);
        }
        let bounds = self.operator_bounds()?;
        if bounds.lower <= default_spectral_floor(bounds.upper) {
            return Err(QuiltError::NotAFrame {
                lower: bounds.lower,
                upper: bounds.upper,
            });
        }
        let relax = 2.0 / (bounds.lower + bounds.upper);
        let op = self.operator();
        let target = Signal::new(op.matvec(f.values()))?;
        let threshold = tol * norm;

        let mut g = Signal::zeros(self.l);
        let mut iterates = vec![norm];
        let mut converged = false;
        for _ in 0..max_iter {
            let mut step = target.sub(&Signal::new(op.matvec(g.values()))?);
            step.scale(relax);
            g = g.add(&step);
            let err = f.sub(&g).norm();
            iterates.push(err);
            if err <= threshold {
                converged = true;
                break;
            }
        }
        let rate = fit_rate(&iterates, threshold.max(norm * 1e-15));
        Ok((
            g,
            ReconTrace {
                iterates,
                converged,
                rate,
            },
        ))
    }
}
