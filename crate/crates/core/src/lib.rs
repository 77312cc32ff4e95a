//! Finite discrete time-frequency analysis on the cyclic group `Z_L`.
//!
//! The crate implements the numerical machinery for studying how well a
//! signal can be represented from its time-frequency content on a bounded
//! region of the discrete phase plane `Z_L x Z_L`:
//!
//! * [`numkernel`]: dense complex linear algebra (Hermitian eigensolver,
//!   spectral matrix functions, operator norms),
//! * [`dsignal`]: signals on `Z_L`, time-frequency shifts, short-time
//!   Fourier transform and its inverse, window generators,
//! * [`gabor`]: Gabor systems on separable lattices, frame operators,
//!   canonical dual and tight windows,
//! * [`tfloc`]: phase-plane regions and time-frequency localization
//!   operators with their eigendecompositions,
//! * [`bounds`]: closed-form error bounds for concentrated signals and
//!   lattice tail sums,
//! * [`localframe`]: Gabor systems restricted to a region cover, truncated
//!   frame operators, iterative local reconstruction,
//! * [`quilt`]: families of regions with per-region lattices and windows
//!   quilted into a single global frame.
//!
//! All transforms are exact on `Z_L` (no sampling or truncation error), so
//! algebraic identities such as STFT inversion or frame-operator symmetry
//! hold to floating-point roundoff and are tested at that level.

pub mod bounds;
pub mod dsignal;
pub mod gabor;
pub mod localframe;
pub mod numkernel;
pub mod quilt;
pub mod tfloc;

mod fft;

pub use num_complex::Complex64;
