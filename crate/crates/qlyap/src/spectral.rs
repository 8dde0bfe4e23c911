//! FFT workspace shared by every operation that moves between position and
//! momentum representation.
//!
//! Conventions: `rustfft` forward (`e^{-2πijm/N}`) maps position amplitudes to
//! the momentum representation; the inverse transform is unscaled, so a
//! round trip multiplies by `N`. Helpers here either fold the `1/N` back in or
//! work with ratios where the scale cancels. Momentum values follow the usual
//! FFT ordering with the upper half wrapped to negative wavenumbers.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

/// Planned forward/inverse transforms plus scratch for one grid size.
pub(crate) struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Spectral {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }


    /// In-place forward transform (position -> momentum, unscaled).
    pub fn to_momentum(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    /// In-place inverse transform (momentum -> position), including the 1/N scale.
    pub fn to_position(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.inverse.process_with_scratch(buf, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        for a in buf.iter_mut() {
            *a *= scale;
        }
    }

    /// Inverse transform without the 1/N scale (callers fold it elsewhere).
    pub fn to_position_unscaled(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.inverse.process_with_scratch(buf, &mut self.scratch);
    }
}

/// Signed momentum value of FFT bin `m` on `grid` (upper half negative).
pub(crate) fn momentum_at(grid: &GridSpec, m: usize) -> f64 {
    let n = grid.n_points;
    let idx = if m < n / 2 {
        m as f64
    } else {
        m as f64 - n as f64
    };
    idx * grid.dp
}

/// Mean and second moment of momentum from an (unscaled) momentum-space buffer.
pub(crate) fn momentum_moments(grid: &GridSpec, mom: &[Complex64]) -> (f64, f64) {
    let mut w_sum = 0.0;
    let mut p_sum = 0.0;
    let mut p2_sum = 0.0;
    for (m, a) in mom.iter().enumerate() {
        let w = a.norm_sqr();
        let p = momentum_at(grid, m);
        w_sum += w;
        p_sum += w * p;
        p2_sum += w * p * p;
    }
    (p_sum / w_sum, p2_sum / w_sum)
}
