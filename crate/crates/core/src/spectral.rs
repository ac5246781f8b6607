//! Thin FFT wrapper shared by the channel and signal code.
//!
//! Each [`Spectral`] owns its plans and scratch space, so independent
//! solver instances never share mutable state.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Spectral {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            len,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalised forward DFT, in place.
    pub fn forward(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    /// Inverse DFT scaled by `1/len`, so `inverse(forward(x)) == x`.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.inverse.process_with_scratch(buf, &mut self.scratch);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Multiplies the spectrum of `buf` by `response` (indexed like the DFT
    /// bins).
    pub fn filter(&mut self, buf: &mut [Complex64], response: &[Complex64]) {
        self.forward(buf);
        for (v, h) in buf.iter_mut().zip(response) {
            *v *= h;
        }
        self.inverse(buf);
    }

    /// Zeroes every bin where `keep` is false.
    pub fn mask(&mut self, buf: &mut [Complex64], keep: &[bool]) {
        self.forward(buf);
        for (v, &k) in buf.iter_mut().zip(keep) {
            if !k {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse(buf);
    }
}

/// Frequency of each DFT bin for `len` samples at `sample_rate` (both in
/// units of the symbol rate). Bins at and above `len/2` map to negative
/// frequencies.
pub fn frequency_grid(len: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / len as f64;
    (0..len)
        .map(|k| {
            if k < len.div_ceil(2) {
                k as f64 * df
            } else {
                (k as f64 - len as f64) * df
            }
        })
        .collect()
}

/// Brick-wall passband `|f| <= cutoff` on the DFT grid.
pub(crate) fn lowpass_mask(len: usize, sample_rate: f64, cutoff: f64) -> Vec<bool> {
    let tol = 1e-12 * sample_rate.max(1.0);
    frequency_grid(len, sample_rate)
        .into_iter()
        .map(|f| f.abs() <= cutoff + tol)
        .collect()
}
