//! Gabor systems on separable lattices of the discrete phase plane.
//!
//! A lattice `Lambda = a Z_{L/a} x b Z_{L/b}` (with `a | L`, `b | L`)
//! together with a window `g` generates the system
//! `{ pi(lambda) g : lambda in Lambda }`. The associated frame operator
//!
//! ```text
//! S f = sum_lambda <f, g_lambda> g_lambda
//! ```
//!
//! is Hermitian positive semidefinite and commutes with every lattice
//! shift. Its extreme eigenvalues are the optimal frame bounds; when the
//! smallest is (numerically) zero the system spans a proper subspace and
//! frame-dependent quantities are refused. The canonical dual window
//! `S^{-1} g` and the canonical tight window `S^{-1/2} g` are computed
//! through one eigendecomposition each.
//!
//! The frame operator is assembled densely as a sum of rank-one atom
//! contributions; at the problem sizes this crate targets (side <= ~1000)
//! that keeps the code transparent at negligible cost.

use num_complex::Complex64;
use thiserror::Error;

use crate::dsignal::{inner, tf_shift, DSignalError, Signal, TFPoint};
use crate::numkernel::{herm_eig, CMatrix, NumKernelError};

/// A frame operator whose smallest eigenvalue is at most this fraction of
/// the largest counts as rank-deficient: the system is not a frame.
pub const NOT_A_FRAME_REL_TOL: f64 = 1e-10;

/// Hermitian-defect tolerance accepted when decomposing an assembled frame
/// operator, relative to its largest entry.
const FRAME_OP_HERMITIAN_REL_TOL: f64 = 1e-10;

/// Errors from lattice and Gabor-system construction and frame computations.
#[derive(Debug, Error)]
pub enum GaborError {
    #[error("lattice step {step} does not divide the group size {l}")]
    BadLatticeStep { step: usize, l: usize },
    #[error("window length {got} does not match the group size {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("window must be nonzero")]
    ZeroWindow,
    #[error(
        "system is not a frame: smallest frame-operator eigenvalue {lower:.3e} \
         is negligible against the largest {upper:.3e}"
    )]
    NotAFrame { lower: f64, upper: f64 },
    #[error("coefficient count {got} does not match the lattice size {expected}")]
    CoefficientCount { expected: usize, got: usize },
    #[error(transparent)]
    Signal(#[from] DSignalError),
    #[error(transparent)]
    Kernel(#[from] NumKernelError),
}

/// Separable lattice `{(m a, n b)}` inside `Z_L x Z_L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Lattice {
    l: usize,
    a: usize,
    b: usize,
}

impl Lattice {
    /// Builds the lattice with time step `a` and frequency step `b`; both
    /// must divide `L` so the lattice is a subgroup.
    pub fn new(l: usize, a: usize, b: usize) -> Result<Self, GaborError> {
        for step in [a, b] {
            if step == 0 || l % step != 0 {
                return Err(GaborError::BadLatticeStep { step, l });
            }
        }
        Ok(Self { l, a, b })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// Number of lattice points, `(L/a) (L/b)`.
    pub fn count(&self) -> usize {
        (self.l / self.a) * (self.l / self.b)
    }

    /// Redundancy `L / (a b)`; values below 1 cannot give a frame.
    pub fn redundancy(&self) -> f64 {
        self.l as f64 / (self.a * self.b) as f64
    }

    /// True when the point lies on the lattice.
    pub fn contains(&self, z: TFPoint) -> bool {
        z.x % self.a == 0 && z.omega % self.b == 0
    }

    /// All lattice points in a fixed deterministic order (time-major).
    pub fn points(&self) -> Vec<TFPoint> {
        let mut pts = Vec::with_capacity(self.count());
        for m in 0..self.l / self.a {
            for n in 0..self.l / self.b {
                pts.push(TFPoint::new(m * self.a, n * self.b));
            }
        }
        pts
    }
}

/// Optimal frame bounds: the extreme eigenvalues of the frame operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameBounds {
    pub lower: f64,
    pub upper: f64,
}

/// A window together with a lattice. The window may have any nonzero norm;
/// canonical dual and tight windows of a unit-norm mother are themselves
/// systems, so no normalization is imposed here.
#[derive(Debug, Clone)]
pub struct GaborSystem {
    window: Signal,
    lattice: Lattice,
}

impl GaborSystem {
    pub fn new(window: Signal, lattice: Lattice) -> Result<Self, GaborError> {
        if window.len() != lattice.l() {
            return Err(GaborError::WindowLength {
                expected: lattice.l(),
                got: window.len(),
            });
        }
        if window.norm() == 0.0 {
            return Err(GaborError::ZeroWindow);
        }
        Ok(Self { window, lattice })
    }

    pub fn window(&self) -> &Signal {
        &self.window
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn l(&self) -> usize {
        self.lattice.l()
    }

    /// The system element `pi(z) g`.
    pub fn atom(&self, z: TFPoint) -> Signal {
        tf_shift(&self.window, z)
    }

    /// Analysis coefficients `<f, pi(lambda) g>` in lattice order.
    pub fn analysis(&self, f: &Signal) -> Result<Vec<Complex64>, GaborError> {
        if f.len() != self.l() {
            return Err(GaborError::WindowLength {
                expected: self.l(),
                got: f.len(),
            });
        }
        self.lattice
            .points()
            .iter()
            .map(|&z| inner(f, &self.atom(z)).map_err(GaborError::from))
            .collect()
    }

    /// Synthesis `sum_lambda c_lambda pi(lambda) g` from coefficients in
    /// lattice order.
    pub fn synthesis(&self, coeffs: &[Complex64]) -> Result<Signal, GaborError> {
        let points = self.lattice.points();
        if coeffs.len() != points.len() {
            return Err(GaborError::CoefficientCount {
                expected: points.len(),
                got: coeffs.len(),
            });
        }
        let l = self.l();
        let mut acc = vec![Complex64::new(0.0, 0.0); l];
        for (&z, &c) in points.iter().zip(coeffs.iter()) {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let atom = self.atom(z);
            for (a, v) in acc.iter_mut().zip(atom.values().iter()) {
                *a += c * v;
            }
        }
        Ok(Signal::new(acc)?)
    }

    /// Dense frame operator `S = sum_lambda g_lambda g_lambda*`.
    pub fn frame_operator(&self) -> CMatrix {
        let l = self.l();
        let mut s = CMatrix::zeros(l, l);
        for z in self.lattice.points() {
            let atom = self.atom(z);
            s.add_outer_scaled(atom.values(), atom.values(), 1.0);
        }
        s.hermitianize();
        s
    }

    /// Optimal frame bounds, or an error when the system is not a frame.
    pub fn frame_bounds(&self) -> Result<FrameBounds, GaborError> {
        let eig = self.frame_eig()?;
        extreme_bounds(&eig.values)
    }

    /// Canonical dual window `S^{-1} g`. Expanding any signal over the
    /// system with dual coefficients (or vice versa) reproduces it.
    pub fn dual_window(&self) -> Result<Signal, GaborError> {
        self.spectrally_mapped_window(|lambda| 1.0 / lambda)
    }

    /// Canonical tight window `S^{-1/2} g`, rescaled so its own frame
    /// operator has trace exactly `L` (hence equals the identity up to
    /// roundoff). Its norm is `sqrt(a b / L)`.
    pub fn tight_window(&self) -> Result<Signal, GaborError> {
        let mut w = self.spectrally_mapped_window(|lambda| 1.0 / lambda.sqrt())?;
        let target = ((self.lattice.a() * self.lattice.b()) as f64 / self.l() as f64).sqrt();
        w.scale(target / w.norm());
        Ok(w)
    }

    fn frame_eig(&self) -> Result<crate::numkernel::HermEig, GaborError> {
        let s = self.frame_operator();
        let tol = FRAME_OP_HERMITIAN_REL_TOL * s.max_abs().max(1.0);
        Ok(herm_eig(&s, tol)?)
    }

    /// Applies `V f(Lambda) V* ` to the window through one
    /// eigendecomposition, refusing rank-deficient systems.
    fn spectrally_mapped_window(&self, f: impl Fn(f64) -> f64) -> Result<Signal, GaborError> {
        let eig = self.frame_eig()?;
        extreme_bounds(&eig.values)?;
        let mut coeffs = eig.vectors.adjoint_matvec(self.window.values());
        for (c, &lambda) in coeffs.iter_mut().zip(eig.values.iter()) {
            *c *= f(lambda);
        }
        Ok(Signal::new(eig.vectors.matvec(&coeffs))?)
    }
}

fn extreme_bounds(values: &[f64]) -> Result<FrameBounds, GaborError> {
    let upper = *values.first().expect("spectrum is nonempty");
    let lower = *values.last().expect("spectrum is nonempty");
    if lower <= NOT_A_FRAME_REL_TOL * upper {
        return Err(GaborError::NotAFrame { lower, upper });
    }
    Ok(FrameBounds { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsignal::gaussian_window;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn gaussian_system(l: usize, a: usize, b: usize) -> GaborSystem {
        GaborSystem::new(gaussian_window(l), Lattice::new(l, a, b).unwrap()).unwrap()
    }

    #[test]
    fn lattice_validates_and_enumerates() {
        assert!(matches!(
            Lattice::new(12, 5, 2),
            Err(GaborError::BadLatticeStep { step: 5, .. })
        ));
        assert!(matches!(
            Lattice::new(12, 2, 0),
            Err(GaborError::BadLatticeStep { step: 0, .. })
        ));
        let lat = Lattice::new(12, 3, 4).unwrap();
        assert_eq!(lat.count(), 12);
        assert!((lat.redundancy() - 1.0).abs() < 1e-15);
        let pts = lat.points();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[0], TFPoint::new(0, 0));
        assert_eq!(pts[1], TFPoint::new(0, 4));
        assert_eq!(pts[3], TFPoint::new(3, 0));
        assert!(lat.contains(TFPoint::new(9, 8)));
        assert!(!lat.contains(TFPoint::new(9, 7)));
    }

    #[test]
    fn full_grid_frame_operator_is_l_times_identity() {
        let l = 12;
        let sys = gaussian_system(l, 1, 1);
        let s = sys.frame_operator();
        let mut want = CMatrix::identity(l);
        want.scale(l as f64);
        assert!(s.sub(&want).max_abs() <= 1e-10 * l as f64);
    }

    #[test]
    fn frame_operator_matrix_matches_coefficient_path() {
        // Two routes to S f: the assembled matrix, and synthesis of the
        // analysis coefficients. They must agree to roundoff.
        let sys = gaussian_system(16, 2, 4);
        let f = Signal::random_unit(16, &mut rng(3));
        let via_matrix = sys.frame_operator().matvec(f.values());
        let via_coeffs = sys.synthesis(&sys.analysis(&f).unwrap()).unwrap();
        for (a, b) in via_matrix.iter().zip(via_coeffs.values().iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn analysis_and_synthesis_are_adjoint() {
        let sys = gaussian_system(18, 3, 2);
        let mut r = rng(5);
        let f = Signal::random_unit(18, &mut r);
        let coeffs: Vec<Complex64> = (0..sys.lattice().count())
            .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
            .collect();
        let lhs: Complex64 = sys
            .analysis(&f)
            .unwrap()
            .iter()
            .zip(coeffs.iter())
            .map(|(a, c)| a * c.conj())
            .sum();
        let rhs = inner(&f, &sys.synthesis(&coeffs).unwrap()).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn frame_bounds_sandwich_coefficient_energy() {
        let sys = gaussian_system(24, 2, 2);
        let bounds = sys.frame_bounds().unwrap();
        assert!(bounds.lower > 0.0 && bounds.lower <= bounds.upper);
        let mut r = rng(7);
        for _ in 0..20 {
            let f = Signal::random_unit(24, &mut r);
            let energy: f64 = sys
                .analysis(&f)
                .unwrap()
                .iter()
                .map(|c| c.norm_sqr())
                .sum();
            assert!(energy >= bounds.lower - 1e-10);
            assert!(energy <= bounds.upper + 1e-10);
        }
    }

    #[test]
    fn frame_operator_commutes_with_lattice_shifts() {
        let sys = gaussian_system(24, 4, 6);
        let s = sys.frame_operator();
        let f = Signal::random_unit(24, &mut rng(11));
        for z in [TFPoint::new(4, 6), TFPoint::new(20, 18)] {
            let shifted_then_s = s.matvec(tf_shift(&f, z).values());
            let s_then_shifted = tf_shift(
                &Signal::new(s.matvec(f.values())).unwrap(),
                z,
            );
            for (a, b) in shifted_then_s.iter().zip(s_then_shifted.values().iter()) {
                assert!((a - b).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn dual_window_reconstructs_both_ways() {
        let sys = gaussian_system(48, 4, 6);
        let dual = GaborSystem::new(sys.dual_window().unwrap(), *sys.lattice()).unwrap();
        let f = Signal::random_unit(48, &mut rng(13));

        let via_dual_synthesis = dual.synthesis(&sys.analysis(&f).unwrap()).unwrap();
        assert!(via_dual_synthesis.sub(&f).norm() <= 1e-10);

        let via_dual_analysis = sys.synthesis(&dual.analysis(&f).unwrap()).unwrap();
        assert!(via_dual_analysis.sub(&f).norm() <= 1e-10);
    }

    #[test]
    fn dual_system_bounds_are_reciprocal() {
        let sys = gaussian_system(36, 3, 4);
        let bounds = sys.frame_bounds().unwrap();
        let dual = GaborSystem::new(sys.dual_window().unwrap(), *sys.lattice()).unwrap();
        let dual_bounds = dual.frame_bounds().unwrap();
        assert!((dual_bounds.lower - 1.0 / bounds.upper).abs() <= 1e-9 / bounds.upper);
        assert!((dual_bounds.upper - 1.0 / bounds.lower).abs() <= 1e-9 / bounds.lower);
    }

    #[test]
    fn tight_window_frame_operator_is_identity() {
        let sys = gaussian_system(48, 4, 6);
        let tight = sys.tight_window().unwrap();
        let want_norm = ((4.0 * 6.0) / 48.0f64).sqrt();
        assert!((tight.norm() - want_norm).abs() <= 1e-12);

        let tight_sys = GaborSystem::new(tight, *sys.lattice()).unwrap();
        let s = tight_sys.frame_operator();
        assert!(s.sub(&CMatrix::identity(48)).max_abs() <= 1e-9);
    }

    #[test]
    fn tightening_a_tight_system_changes_nothing() {
        let sys = gaussian_system(30, 3, 5);
        let tight = sys.tight_window().unwrap();
        let tight_sys = GaborSystem::new(tight.clone(), *sys.lattice()).unwrap();
        let again = tight_sys.tight_window().unwrap();
        assert!(again.sub(&tight).norm() <= 1e-9);
    }

    #[test]
    fn undersampled_lattice_is_not_a_frame() {
        // a b > L: too few atoms to span, so every frame quantity refuses.
        let sys = gaussian_system(12, 4, 6);
        assert!(matches!(
            sys.frame_bounds(),
            Err(GaborError::NotAFrame { .. })
        ));
        assert!(matches!(
            sys.dual_window(),
            Err(GaborError::NotAFrame { .. })
        ));
        assert!(matches!(
            sys.tight_window(),
            Err(GaborError::NotAFrame { .. })
        ));
    }

    #[test]
    fn system_constructor_validates() {
        let lat = Lattice::new(12, 2, 3).unwrap();
        assert!(matches!(
            GaborSystem::new(gaussian_window(10), lat),
            Err(GaborError::WindowLength { .. })
        ));
        assert!(matches!(
            GaborSystem::new(Signal::zeros(12), lat),
            Err(GaborError::ZeroWindow)
        ));
        let sys = GaborSystem::new(gaussian_window(12), lat).unwrap();
        assert!(matches!(
            sys.analysis(&Signal::zeros(7)),
            Err(GaborError::WindowLength { .. })
        ));
        assert!(matches!(
            sys.synthesis(&[Complex64::new(1.0, 0.0)]),
            Err(GaborError::CoefficientCount { .. })
        ));
    }
}
