//! Gabor systems restricted to a covering region: truncated analysis and
//! synthesis over the lattice points inside a cover, the truncated frame
//! operator, its operator-norm distance from a subspace projector, frame
//! bounds on the subspace, and the iterative reconstruction recursion.
//!
//! A [`LocalSystem`] keeps only the lattice points of a [`GaborSystem`]
//! that fall inside a cover region. For signals concentrated on a smaller
//! region the retained coefficients nearly determine the signal, and the
//! recursion `f_n = f_{n-1} + P (synthesize(samples - analyze(f_{n-1})))`
//! recovers it at a geometric rate governed by the truncation error.
//!
//! Two synthesis conventions are supported via [`LocalMode`]: `Tight` uses
//! the system window for both analysis and synthesis (the window must
//! already be a tight-frame window for the identities to hold), `DualPair`
//! analyzes with the system window and synthesizes with the canonical dual
//! of the full, unrestricted system.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::dsignal::{inner, DSignalError, Signal, TFPoint};
use crate::gabor::{FrameBounds, GaborError, GaborSystem};
use crate::numkernel::{herm_eig, op_norm, CMatrix, NumKernelError};
use crate::tfloc::{EigenspaceProjector, ProjectorMode, Region, TflocError};

/// Consecutive error increases that count as divergence of the
/// reconstruction recursion.
pub const DIVERGENCE_STREAK: usize = 3;

/// Hermitian-defect tolerance for the subspace Gram matrix.
const GRAM_HERMITIAN_REL_TOL: f64 = 1e-10;

/// Relative tolerance handed to the power iteration inside [`trunc_error`].
const TRUNC_ERROR_OP_TOL: f64 = 1e-10;

/// Errors from restricted-system construction and reconstruction.
#[derive(Debug, Error)]
pub enum LocalFrameError {
    #[error("cover size {cover} does not match system size {system}")]
    SizeMismatch { cover: usize, system: usize },
    #[error("no lattice point falls inside the cover")]
    EmptyActive,
    #[error("no dual window attached: build the system with restrict_with_dual or use tight mode")]
    NoDualWindow,
    #[error("dual window length {got} does not match system length {expected}")]
    DualLength { expected: usize, got: usize },
    #[error("projector size {got} does not match system size {expected}")]
    ProjectorSize { expected: usize, got: usize },
    #[error("operator-norm error requires an exact-mode projector")]
    ProjectorNotExact,
    #[error("expected {expected} coefficients for the active set, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("ground truth length {got} does not match system length {expected}")]
    GroundTruthLength { expected: usize, got: usize },
    #[error("reconstruction diverged at iteration {at}: error grew {DIVERGENCE_STREAK} steps in a row")]
    Diverged { at: usize, trace: ReconTrace },
    #[error(transparent)]
    Gabor(#[from] GaborError),
    #[error(transparent)]
    Kernel(#[from] NumKernelError),
    #[error(transparent)]
    Signal(#[from] DSignalError),
    #[error(transparent)]
    Subspace(#[from] TflocError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Synthesis convention for the truncated operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMode {
    /// Analysis and synthesis share the system window; identities require a
    /// tight-frame window.
    Tight,
    /// Analysis by the system window, synthesis by the canonical dual of
    /// the full system.
    DualPair,
}

/// A Gabor system restricted to the lattice points inside a cover region.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    base: GaborSystem,
    cover: Region,
    active: Vec<TFPoint>,
    dual_window: Option<Signal>,
    atoms: Vec<Signal>,
    dual_atoms: Option<Vec<Signal>>,
}

impl LocalSystem {
    /// Restricts a system to the lattice points inside the cover. No dual
    /// window is attached; tight-mode operations work immediately,
    /// dual-pair operations need [`LocalSystem::restrict_with_dual`].
    pub fn restrict(sys: &GaborSystem, cover: &Region) -> Result<Self, LocalFrameError> {
        if cover.l() != sys.l() {
            return Err(LocalFrameError::SizeMismatch {
                cover: cover.l(),
                system: sys.l(),
            });
        }
        let active: Vec<TFPoint> = sys
            .lattice()
            .points()
            .into_iter()
            .filter(|&z| cover.contains_point(z))
            .collect();
        let atoms = active.iter().map(|&z| sys.atom(z)).collect();
        Ok(Self {
            base: sys.clone(),
            cover: cover.clone(),
            active,
            dual_window: None,
            atoms,
            dual_atoms: None,
        })
    }

    /// Restricts a system and attaches a synthesis window, normally the
    /// canonical dual of the full system.
    pub fn restrict_with_dual(
        sys: &GaborSystem,
        cover: &Region,
        dual: Signal,
    ) -> Result<Self, LocalFrameError> {
        if dual.len() != sys.l() {
            return Err(LocalFrameError::DualLength {
                expected: sys.l(),
                got: dual.len(),
            });
        }
        let mut ls = Self::restrict(sys, cover)?;
        let dual_sys = GaborSystem::new(dual.clone(), *sys.lattice())?;
        ls.dual_atoms = Some(ls.active.iter().map(|&z| dual_sys.atom(z)).collect());
        ls.dual_window = Some(dual);
        Ok(ls)
    }

    /// Restricts a system and computes the canonical dual of the full
    /// system for synthesis. Fails when the system is not a frame.
    pub fn restrict_dual_pair(
        sys: &GaborSystem,
        cover: &Region,
    ) -> Result<Self, LocalFrameError> {
        let dual = sys.dual_window()?;
        Self::restrict_with_dual(sys, cover, dual)
    }

    pub fn base(&self) -> &GaborSystem {
        &self.base
    }

    pub fn cover(&self) -> &Region {
        &self.cover
    }

    /// The retained lattice points, in the lattice's time-major order.
    pub fn active(&self) -> &[TFPoint] {
        &self.active
    }

    pub fn dual_window(&self) -> Option<&Signal> {
        self.dual_window.as_ref()
    }

    pub fn l(&self) -> usize {
        self.base.l()
    }

    /// Analysis atoms over the active set, in active order.
    pub fn atoms(&self) -> &[Signal] {
        &self.atoms
    }

    fn synthesis_atoms(&self, mode: LocalMode) -> Result<&[Signal], LocalFrameError> {
        match mode {
            LocalMode::Tight => Ok(&self.atoms),
            LocalMode::DualPair => self
                .dual_atoms
                .as_deref()
                .ok_or(LocalFrameError::NoDualWindow),
        }
    }

    /// Truncated analysis: coefficients of `f` against the active atoms.
    pub fn analyze(&self, f: &Signal) -> Result<Vec<Complex64>, LocalFrameError> {
        self.atoms
            .iter()
            .map(|g| inner(f, g).map_err(LocalFrameError::from))
            .collect()
    }

    /// Truncated synthesis: `sum_lambda c_lambda * atom_lambda` with the
    /// synthesis atoms of the given mode.
    pub fn synthesize(
        &self,
        coeffs: &[Complex64],
        mode: LocalMode,
    ) -> Result<Signal, LocalFrameError> {
        if coeffs.len() != self.active.len() {
            return Err(LocalFrameError::CoefficientCount {
                expected: self.active.len(),
                got: coeffs.len(),
            });
        }
        let atoms = self.synthesis_atoms(mode)?;
        let mut acc = vec![Complex64::new(0.0, 0.0); self.l()];
        for (c, g) in coeffs.iter().zip(atoms.iter()) {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(g.values().iter()) {
                *a += c * v;
            }
        }
        Ok(Signal::new(acc)?)
    }
}

/// The truncated frame operator `sum_{lambda in active} s_lambda a_lambda*`
/// with analysis atoms `a` and synthesis atoms `s` per the mode. An empty
/// active set yields the zero matrix.
pub fn trunc_frame_op(ls: &LocalSystem, mode: LocalMode) -> Result<CMatrix, LocalFrameError> {
    let l = ls.l();
    let synth = ls.synthesis_atoms(mode)?;
    let mut s = CMatrix::zeros(l, l);
    for (d, g) in synth.iter().zip(ls.atoms.iter()) {
        s.add_outer_scaled(d.values(), g.values(), 1.0);
    }
    if mode == LocalMode::Tight {
        s.hermitianize();
    }
    Ok(s)
}

/// Operator-norm truncation error `||P - S_loc P||` of approximating the
/// subspace projector by the truncated frame operator: the worst relative
/// reconstruction error over unit signals in the subspace.
pub fn trunc_error(
    ls: &LocalSystem,
    projector: &EigenspaceProjector,
    mode: LocalMode,
) -> Result<f64, LocalFrameError> {
    if projector.mode() != ProjectorMode::Exact {
        return Err(LocalFrameError::ProjectorNotExact);
    }
    if projector.l() != ls.l() {
        return Err(LocalFrameError::ProjectorSize {
            expected: ls.l(),
            got: projector.l(),
        });
    }
    let p = projector.matrix();
    let s = trunc_frame_op(ls, mode)?;
    let d = p.sub(&s.mul(&p));
    Ok(op_norm(&d, TRUNC_ERROR_OP_TOL)?)
}

/// Extreme eigenvalues of the coefficient energy form on a subspace:
/// bounds `A', B'` with `A' ||f||^2 <= sum_active |<f, g_lambda>|^2 <= B' ||f||^2`
/// for `f` in the span of the basis columns.
pub fn subspace_frame_bounds(
    basis: &CMatrix,
    atoms: &[Signal],
) -> Result<FrameBounds, LocalFrameError> {
    if atoms.is_empty() {
        return Err(LocalFrameError::EmptyActive);
    }
    let n = basis.cols();
    let l = basis.rows();
    let mut coeff = CMatrix::zeros(n, atoms.len());
    for (col, g) in atoms.iter().enumerate() {
        if g.len() != l {
            return Err(LocalFrameError::DualLength {
                expected: l,
                got: g.len(),
            });
        }
        let products = basis.adjoint_matvec(g.values());
        for (row, v) in products.into_iter().enumerate() {
            coeff.set(row, col, v.conj());
        }
    }
    let mut gram = coeff.mul_conj_transpose(&coeff);
    gram.hermitianize();
    let eig = herm_eig(&gram, GRAM_HERMITIAN_REL_TOL)?;
    Ok(FrameBounds {
        lower: eig.values[n - 1].max(0.0),
        upper: eig.values[0],
    })
}

/// Frame bounds of the restricted system on the projector's subspace.
pub fn local_frame_bounds(
    ls: &LocalSystem,
    projector: &EigenspaceProjector,
) -> Result<FrameBounds, LocalFrameError> {
    if projector.l() != ls.l() {
        return Err(LocalFrameError::ProjectorSize {
            expected: ls.l(),
            got: projector.l(),
        });
    }
    subspace_frame_bounds(projector.basis(), &ls.atoms)
}

/// Error history of the reconstruction recursion. `iterates[n]` is the
/// error after `n` update steps (`iterates[0]` is the starting error), as
/// absolute norms: distance to the ground truth when one was supplied,
/// coefficient residual norm otherwise.
#[derive(Debug, Clone)]
pub struct ReconTrace {
    pub iterates: Vec<f64>,
    pub converged: bool,
    pub rate: f64,
}

impl ReconTrace {
    /// Writes the trace as CSV rows `iteration,error`.
    pub fn write_csv(&self, path: &Path) -> Result<(), LocalFrameError> {
        let mut out = String::from("iteration,error\n");
        for (i, e) in self.iterates.iter().enumerate() {
            let _ = writeln!(out, "{i},{e}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Fitted geometric ratio of an error sequence: the geometric mean of the
/// consecutive ratios above the numerical floor.
pub(crate) fn fit_rate(errors: &[f64], floor: f64) -> f64 {
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for pair in errors.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        if prev > floor && next > floor {
            log_sum += (next / prev).ln();
            count += 1;
        }
    }
    if count == 0 {
        // Converged essentially instantly: the single collapse ratio.
        if errors.len() >= 2 && errors[0] > 0.0 {
            return (errors[1].max(f64::MIN_POSITIVE) / errors[0]).min(1.0 - f64::EPSILON);
        }
        return f64::MIN_POSITIVE;
    }
    (log_sum / count as f64).exp()
}

/// Iterative reconstruction from truncated coefficients:
/// `f_n = f_{n-1} + P(synthesize(samples - analyze(f_{n-1})))` starting
/// from zero. Stops when the error drops below `tol` times the reference
/// norm (ground truth norm when supplied, sample norm otherwise), errors
/// out when the error grows [`DIVERGENCE_STREAK`] steps in a row, and
/// otherwise runs `max_iter` steps with `converged = false`.
pub fn iterative_reconstruct(
    ls: &LocalSystem,
    projector: &EigenspaceProjector,
    samples: &[Complex64],
    mode: LocalMode,
    ground_truth: Option<&Signal>,
    max_iter: usize,
    tol: f64,
) -> Result<(Signal, ReconTrace), LocalFrameError> {
    if ls.active.is_empty() {
        return Err(LocalFrameError::EmptyActive);
    }
    if samples.len() != ls.active.len() {
        return Err(LocalFrameError::CoefficientCount {
            expected: ls.active.len(),
            got: samples.len(),
        });
    }
    if let Some(f) = ground_truth {
        if f.len() != ls.l() {
            return Err(LocalFrameError::GroundTruthLength {
                expected: ls.l(),
                got: f.len(),
            });
        }
    }
    ls.synthesis_atoms(mode)?;

    let sample_norm = samples.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let reference = ground_truth.map_or(sample_norm, Signal::norm);
    let threshold = tol * reference;

    let error_of = |f: &Signal, residual: &[Complex64]| -> f64 {
        match ground_truth {
            Some(truth) => truth.sub(f).norm(),
            None => residual.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
        }
    };

    let mut f = Signal::zeros(ls.l());
    let mut residual: Vec<Complex64> = samples.to_vec();
    let mut iterates = vec![error_of(&f, &residual)];
    let mut converged = iterates[0] <= threshold;
    let mut streak = 0usize;

    for n in 1..=max_iter {
        if converged {
            break;
        }
        let update = projector.apply(&ls.synthesize(&residual, mode)?)?;
        f = f.add(&update);
        let coeffs = ls.analyze(&f)?;
        for (r, (s, c)) in residual.iter_mut().zip(samples.iter().zip(coeffs.iter())) {
            *r = s - c;
        }
        let err = error_of(&f, &residual);
        if err > *iterates.last().expect("nonempty trace") {
            streak += 1;
        } else {
            streak = 0;
        }
        iterates.push(err);
        if streak >= DIVERGENCE_STREAK {
            let floor = (threshold).max(reference * 1e-15);
            let rate = fit_rate(&iterates, floor);
            return Err(LocalFrameError::Diverged {
                at: n,
                trace: ReconTrace {
                    iterates,
                    converged: false,
                    rate,
                },
            });
        }
        if err <= threshold {
            converged = true;
        }
    }

    let floor = (threshold).max(reference * 1e-15);
    let rate = fit_rate(&iterates, floor);
    Ok((
        f,
        ReconTrace {
            iterates,
            converged,
            rate,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsignal::{gaussian_window, tf_shift};
    use crate::gabor::Lattice;
    use crate::tfloc::{eigensystem, localization_op, DiskBoundary, DEFAULT_KERNEL_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn tight_system(l: usize, a: usize, b: usize) -> GaborSystem {
        let lattice = Lattice::new(l, a, b).unwrap();
        let base = GaborSystem::new(gaussian_window(l), lattice).unwrap();
        GaborSystem::new(base.tight_window().unwrap(), lattice).unwrap()
    }

    fn disk_projector(
        l: usize,
        radius: f64,
        threshold: f64,
    ) -> (Region, EigenspaceProjector) {
        let center = TFPoint::new(l / 2, l / 2);
        let region = Region::disk(l, center, radius, DiskBoundary::Strict);
        let op = localization_op(&gaussian_window(l), &region).unwrap();
        let eig = eigensystem(&op, DEFAULT_KERNEL_TOL).unwrap();
        let n = eig.count_above(threshold).max(1);
        let projector = EigenspaceProjector::from_eigen(&eig, n, ProjectorMode::Exact).unwrap();
        (region, projector)
    }

    fn random_subspace_signal(projector: &EigenspaceProjector, rng: &mut ChaCha8Rng) -> Signal {
        let basis = projector.basis();
        let mut acc = vec![Complex64::new(0.0, 0.0); basis.rows()];
        for j in 0..basis.cols() {
            let c = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            for (a, col) in acc.iter_mut().zip(basis.column(j).iter()) {
                *a += c * col;
            }
        }
        let mut f = Signal::new(acc).unwrap();
        f.scale(f.norm().recip());
        f
    }

    #[test]
    fn full_cover_activates_every_lattice_point() {
        let sys = tight_system(24, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::full(24)).unwrap();
        assert_eq!(ls.active().len(), sys.lattice().count());
        assert_eq!(ls.atoms().len(), 36);
    }

    #[test]
    fn disk_cover_counts_match_the_integer_oracle() {
        let lattice = Lattice::new(480, 20, 20).unwrap();
        let sys = GaborSystem::new(gaussian_window(480), lattice).unwrap();
        let center = TFPoint::new(240, 240);
        for (radius, want) in [(80.0, 45), (120.0, 109), (140.0, 145)] {
            let cover = Region::disk(480, center, radius, DiskBoundary::Strict);
            let ls = LocalSystem::restrict(&sys, &cover).unwrap();
            assert_eq!(ls.active().len(), want, "radius {radius}");
        }
    }

    #[test]
    fn tight_full_cover_operator_is_the_identity() {
        let sys = tight_system(24, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::full(24)).unwrap();
        let s = trunc_frame_op(&ls, LocalMode::Tight).unwrap();
        let diff = s.sub(&CMatrix::identity(24));
        assert!(diff.max_abs() < 1e-9);
        assert!(s.hermitian_defect() == 0.0);
    }

    #[test]
    fn dual_pair_full_cover_operator_is_the_identity() {
        let lattice = Lattice::new(24, 4, 4).unwrap();
        let sys = GaborSystem::new(gaussian_window(24), lattice).unwrap();
        let ls = LocalSystem::restrict_dual_pair(&sys, &Region::full(24)).unwrap();
        let s = trunc_frame_op(&ls, LocalMode::DualPair).unwrap();
        let diff = s.sub(&CMatrix::identity(24));
        assert!(diff.max_abs() < 1e-10);
    }

    #[test]
    fn empty_cover_yields_zero_operator_and_frame_ops_refuse() {
        let sys = tight_system(24, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::empty(24)).unwrap();
        assert!(ls.active().is_empty());
        let s = trunc_frame_op(&ls, LocalMode::Tight).unwrap();
        assert_eq!(s.max_abs(), 0.0);

        let (_, projector) = disk_projector(24, 5.0, 0.5);
        assert!(matches!(
            local_frame_bounds(&ls, &projector),
            Err(LocalFrameError::EmptyActive)
        ));
        assert!(matches!(
            iterative_reconstruct(&ls, &projector, &[], LocalMode::Tight, None, 10, 1e-8),
            Err(LocalFrameError::EmptyActive)
        ));
    }

    #[test]
    fn dual_pair_mode_without_dual_window_refuses() {
        let sys = tight_system(24, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::full(24)).unwrap();
        assert!(ls.dual_window().is_none());
        assert!(matches!(
            trunc_frame_op(&ls, LocalMode::DualPair),
            Err(LocalFrameError::NoDualWindow)
        ));
    }

    #[test]
    fn trunc_error_vanishes_on_the_full_cover() {
        let sys = tight_system(24, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::full(24)).unwrap();
        let (_, projector) = disk_projector(24, 5.0, 0.5);
        let err = trunc_error(&ls, &projector, LocalMode::Tight).unwrap();
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn trunc_error_decreases_over_nested_covers() {
        let l = 48;
        let sys = tight_system(l, 6, 6);
        let (_, projector) = disk_projector(l, 8.0, 0.5);
        let center = TFPoint::new(l / 2, l / 2);
        let mut prev = f64::INFINITY;
        for radius in [8.0, 12.0, 16.0, 22.0] {
            let cover = Region::disk(l, center, radius, DiskBoundary::Strict);
            let ls = LocalSystem::restrict(&sys, &cover).unwrap();
            let err = trunc_error(&ls, &projector, LocalMode::Tight).unwrap();
            assert!(err < prev, "radius {radius}: {err} !< {prev}");
            prev = err;
        }
        assert!(prev < 0.2, "largest cover error {prev}");
    }

    #[test]
    fn trunc_error_requires_an_exact_projector() {
        let l = 24;
        let sys = tight_system(l, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::full(l)).unwrap();
        let center = TFPoint::new(l / 2, l / 2);
        let region = Region::disk(l, center, 5.0, DiskBoundary::Strict);
        let op = localization_op(&gaussian_window(l), &region).unwrap();
        let eig = eigensystem(&op, DEFAULT_KERNEL_TOL).unwrap();
        let approx =
            EigenspaceProjector::from_eigen(&eig, 3, ProjectorMode::Approximate).unwrap();
        assert!(matches!(
            trunc_error(&ls, &approx, LocalMode::Tight),
            Err(LocalFrameError::ProjectorNotExact)
        ));
    }

    #[test]
    fn operator_norm_error_matches_sampled_worst_case() {
        let l = 36;
        let lattice = Lattice::new(l, 6, 4).unwrap();
        let sys = GaborSystem::new(gaussian_window(l), lattice).unwrap();
        let center = TFPoint::new(l / 2, l / 2);
        let cover = Region::disk(l, center, 10.0, DiskBoundary::Strict);
        let ls = LocalSystem::restrict_dual_pair(&sys, &cover).unwrap();
        let (_, projector) = disk_projector(l, 6.0, 0.6);
        let eps = trunc_error(&ls, &projector, LocalMode::DualPair).unwrap();

        let mut rng = rng(7);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let f = random_subspace_signal(&projector, &mut rng);
            let coeffs = ls.analyze(&f).unwrap();
            let rebuilt = ls.synthesize(&coeffs, LocalMode::DualPair).unwrap();
            let err = f.sub(&rebuilt).norm();
            assert!(err <= eps + 1e-9, "sample error {err} exceeds norm {eps}");
            worst = worst.max(err);
        }
        assert!(worst >= 0.95 * eps, "sampled worst {worst} vs norm {eps}");
    }

    #[test]
    fn subspace_bounds_are_one_on_full_tight_cover() {
        let l = 24;
        let sys = tight_system(l, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::full(l)).unwrap();
        let (_, projector) = disk_projector(l, 5.0, 0.5);
        let bounds = local_frame_bounds(&ls, &projector).unwrap();
        assert!((bounds.lower - 1.0).abs() < 1e-8, "lower {}", bounds.lower);
        assert!((bounds.upper - 1.0).abs() < 1e-8, "upper {}", bounds.upper);
    }

    #[test]
    fn partial_cover_bounds_respect_the_truncation_error() {
        let l = 48;
        let sys = tight_system(l, 6, 6);
        let (_, projector) = disk_projector(l, 8.0, 0.5);
        let center = TFPoint::new(l / 2, l / 2);
        let cover = Region::disk(l, center, 16.0, DiskBoundary::Strict);
        let ls = LocalSystem::restrict(&sys, &cover).unwrap();
        let eps = trunc_error(&ls, &projector, LocalMode::Tight).unwrap();
        assert!(eps < 1.0);
        let bounds = local_frame_bounds(&ls, &projector).unwrap();
        // The tight system has A = B = 1.
        assert!(
            bounds.lower >= (1.0 - eps) * (1.0 - eps) - 1e-10,
            "lower {} vs (1-eps)^2 {}",
            bounds.lower,
            (1.0 - eps) * (1.0 - eps)
        );
        assert!(bounds.upper <= 1.0 + 1e-10, "upper {}", bounds.upper);
    }

    #[test]
    fn outer_frame_bounds_agree_with_projected_atoms() {
        let l = 36;
        let sys = tight_system(l, 6, 4);
        let (_, projector) = disk_projector(l, 6.0, 0.5);
        let center = TFPoint::new(l / 2, l / 2);
        let cover = Region::disk(l, center, 12.0, DiskBoundary::Strict);
        let ls = LocalSystem::restrict(&sys, &cover).unwrap();
        let bounds = local_frame_bounds(&ls, &projector).unwrap();

        let n = projector.n();
        let mut t = CMatrix::zeros(l, l);
        for g in ls.atoms() {
            let pg = projector.apply(g).unwrap();
            t.add_outer_scaled(pg.values(), pg.values(), 1.0);
        }
        t.hermitianize();
        let eig = herm_eig(&t, 1e-10).unwrap();
        assert!((eig.values[0] - bounds.upper).abs() < 1e-8);
        assert!((eig.values[n - 1] - bounds.lower).abs() < 1e-8);
    }

    #[test]
    fn subspace_bounds_are_invariant_under_tf_shift() {
        let l = 36;
        let sys = tight_system(l, 6, 4);
        let (_, projector) = disk_projector(l, 6.0, 0.5);
        let center = TFPoint::new(l / 2, l / 2);
        let cover = Region::disk(l, center, 12.0, DiskBoundary::Strict);
        let ls = LocalSystem::restrict(&sys, &cover).unwrap();
        let bounds = local_frame_bounds(&ls, &projector).unwrap();

        let nu = TFPoint::new(7, 11);
        let basis = projector.basis();
        let shifted_cols: Vec<Vec<Complex64>> = (0..basis.cols())
            .map(|j| {
                let col = Signal::new(basis.column(j)).unwrap();
                tf_shift(&col, nu).values().to_vec()
            })
            .collect();
        let shifted_basis = CMatrix::from_columns(&shifted_cols);
        let shifted_atoms: Vec<Signal> =
            ls.atoms().iter().map(|g| tf_shift(g, nu)).collect();
        let shifted = subspace_frame_bounds(&shifted_basis, &shifted_atoms).unwrap();
        assert!((shifted.lower - bounds.lower).abs() < 1e-8);
        assert!((shifted.upper - bounds.upper).abs() < 1e-8);
    }

    #[test]
    fn full_cover_reconstruction_converges_in_one_step() {
        let l = 24;
        let sys = tight_system(l, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::full(l)).unwrap();
        let (_, projector) = disk_projector(l, 5.0, 0.5);
        let mut rng = rng(11);
        let f = random_subspace_signal(&projector, &mut rng);
        let samples = ls.analyze(&f).unwrap();
        let (rebuilt, trace) = iterative_reconstruct(
            &ls,
            &projector,
            &samples,
            LocalMode::Tight,
            Some(&f),
            10,
            1e-8,
        )
        .unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterates.len(), 2);
        assert!(f.sub(&rebuilt).norm() < 1e-8);
        assert!(trace.rate > 0.0 && trace.rate < 1.0);
    }

    #[test]
    fn partial_cover_reconstruction_is_geometric() {
        let l = 48;
        let sys = tight_system(l, 6, 6);
        let (_, projector) = disk_projector(l, 8.0, 0.5);
        let center = TFPoint::new(l / 2, l / 2);
        let cover = Region::disk(l, center, 16.0, DiskBoundary::Strict);
        let ls = LocalSystem::restrict(&sys, &cover).unwrap();
        let eps = trunc_error(&ls, &projector, LocalMode::Tight).unwrap();
        assert!(eps < 1.0);

        let tol = 1e-9_f64;
        let mut rng = rng(13);
        let f = random_subspace_signal(&projector, &mut rng);
        let samples = ls.analyze(&f).unwrap();
        let budget = (tol.ln() / eps.ln()).ceil() as usize + 5;
        let (rebuilt, trace) = iterative_reconstruct(
            &ls,
            &projector,
            &samples,
            LocalMode::Tight,
            Some(&f),
            budget,
            tol,
        )
        .unwrap();
        assert!(trace.converged, "no convergence within {budget} steps");
        assert!(f.sub(&rebuilt).norm() < tol);
        assert!(
            trace.rate <= eps + 0.05,
            "rate {} vs error {eps}",
            trace.rate
        );
        for pair in trace.iterates.windows(2).skip(1) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }

        let coeffs = ls.analyze(&rebuilt).unwrap();
        let residual: f64 = samples
            .iter()
            .zip(coeffs.iter())
            .map(|(s, c)| (s - c).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let sample_norm: f64 = samples.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!(residual <= 10.0 * tol * sample_norm);
    }

    #[test]
    fn residual_stop_recovers_without_ground_truth() {
        let l = 48;
        let sys = tight_system(l, 6, 6);
        let (_, projector) = disk_projector(l, 8.0, 0.5);
        let center = TFPoint::new(l / 2, l / 2);
        let cover = Region::disk(l, center, 18.0, DiskBoundary::Strict);
        let ls = LocalSystem::restrict(&sys, &cover).unwrap();
        let mut rng = rng(17);
        let f = random_subspace_signal(&projector, &mut rng);
        let samples = ls.analyze(&f).unwrap();
        let (rebuilt, trace) =
            iterative_reconstruct(&ls, &projector, &samples, LocalMode::Tight, None, 200, 1e-10)
                .unwrap();
        assert!(trace.converged);
        assert!(f.sub(&rebuilt).norm() < 1e-7);
    }

    #[test]
    fn runaway_iteration_reports_divergence() {
        let l = 24;
        let lattice = Lattice::new(l, 4, 4).unwrap();
        let tight = tight_system(l, 4, 4);
        let mut loud = tight.window().clone();
        loud.scale(3.0);
        let sys = GaborSystem::new(loud, lattice).unwrap();
        let ls = LocalSystem::restrict(&sys, &Region::full(l)).unwrap();
        let (_, projector) = disk_projector(l, 5.0, 0.5);
        let mut rng = rng(19);
        let f = random_subspace_signal(&projector, &mut rng);
        let samples = ls.analyze(&f).unwrap();
        let out = iterative_reconstruct(
            &ls,
            &projector,
            &samples,
            LocalMode::Tight,
            Some(&f),
            50,
            1e-8,
        );
        match out {
            Err(LocalFrameError::Diverged { at, trace }) => {
                assert!(at <= 10);
                assert!(!trace.converged);
                assert!(trace.iterates.len() >= DIVERGENCE_STREAK + 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn coefficient_count_and_sizes_are_validated() {
        let sys = tight_system(24, 4, 4);
        let ls = LocalSystem::restrict(&sys, &Region::full(24)).unwrap();
        assert!(matches!(
            ls.synthesize(&[Complex64::new(1.0, 0.0)], LocalMode::Tight),
            Err(LocalFrameError::CoefficientCount { .. })
        ));
        assert!(matches!(
            LocalSystem::restrict(&sys, &Region::full(31)),
            Err(LocalFrameError::SizeMismatch { .. })
        ));
        assert!(matches!(
            LocalSystem::restrict_with_dual(&sys, &Region::full(24), Signal::zeros(7)),
            Err(LocalFrameError::DualLength { .. })
        ));
    }

    #[test]
    fn trace_csv_round_trips_through_the_writer() {
        let trace = ReconTrace {
            iterates: vec![1.0, 0.25, 0.0625],
            converged: true,
            rate: 0.25,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        trace.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "iteration,error\n0,1\n1,0.25\n2,0.0625\n");
    }
}
