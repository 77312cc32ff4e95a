//! Thin wrapper around `rustfft` with per-length plan reuse.
//!
//! Conventions: `forward` computes `F(k) = sum_t f(t) exp(-2 pi i k t / L)`
//! and `inverse_unnormalized` its adjoint without the `1/L` factor, matching
//! the unnormalized DFT pair used throughout the crate. Callers that need
//! the normalized inverse scale by `1/L` themselves.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward and inverse DFT plans for one transform length.
///
/// Construction is cheap after the first call per length because the
/// thread-local planner caches the underlying algorithm.
pub(crate) struct FftPlan {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl FftPlan {
    pub(crate) fn new(len: usize) -> Self {
        assert!(len > 0, "transform length must be positive");
        let (fwd, inv) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(len), p.plan_fft_inverse(len))
        });
        Self { len, fwd, inv }
    }

    /// In-place unnormalized forward DFT.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.len);
        self.fwd.process(data);
    }

    /// In-place unnormalized inverse DFT (`sum_k F(k) exp(+2 pi i k t / L)`).
    pub(crate) fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.len);
        self.inv.process(data);
    }

    /// Forward DFT into a new buffer.
    pub(crate) fn forward_vec(&self, src: &[Complex64]) -> Vec<Complex64> {
        let mut out = src.to_vec();
        self.forward(&mut out);
        out
    }

    /// Unnormalized inverse DFT into a new buffer.
    pub(crate) fn inverse_unnormalized_vec(&self, src: &[Complex64]) -> Vec<Complex64> {
        let mut out = src.to_vec();
        self.inverse_unnormalized(&mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_direct_sum() {
        let l = 12;
        let plan = FftPlan::new(l);
        let src: Vec<Complex64> = (0..l)
            .map(|t| Complex64::new(t as f64 * 0.3 - 1.0, (t * t) as f64 * 0.05))
            .collect();
        let got = plan.forward_vec(&src);
        for k in 0..l {
            let mut want = Complex64::new(0.0, 0.0);
            for t in 0..l {
                let phase = -2.0 * std::f64::consts::PI * (k * t) as f64 / l as f64;
                want += src[t] * Complex64::new(phase.cos(), phase.sin());
            }
            assert!((got[k] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_restores_input() {
        let l = 30;
        let plan = FftPlan::new(l);
        let src: Vec<Complex64> = (0..l)
            .map(|t| Complex64::new((t as f64).sin(), (t as f64).cos()))
            .collect();
        let mut buf = plan.forward_vec(&src);
        plan.inverse_unnormalized(&mut buf);
        for t in 0..l {
            assert!((buf[t] / l as f64 - src[t]).norm() < 1e-12);
        }
    }
}
