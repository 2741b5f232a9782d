//! Thin FFT helpers over `rustfft` plus the bin bookkeeping shared by the
//! waveform and processing code.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plan pair for one transform length.
#[derive(Clone)]
pub struct FftPair {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse transform scaled by 1/len, in place.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.len as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    /// Unscaled inverse transform, in place.
    pub fn inverse_unscaled(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("len", &self.len).finish()
    }
}

/// Maps a signed frequency offset (in bins) to its index in a length-`n` DFT.
#[inline]
pub fn bin_index(offset: i64, n: usize) -> usize {
    offset.rem_euclid(n as i64) as usize
}

/// Signed frequency (in bins) of DFT index `k` for a length-`n` transform.
/// The Nyquist bin of an even-length transform maps to `-n/2`.
#[inline]
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if 2 * k >= n {
        k as i64 - n as i64
    } else {
        k as i64
    }
}

pub fn fft(input: &[Complex64]) -> Vec<Complex64> {
    let mut buf = input.to_vec();
    FftPair::new(buf.len()).forward(&mut buf);
    buf
}

pub fn ifft(input: &[Complex64]) -> Vec<Complex64> {
    let mut buf = input.to_vec();
    FftPair::new(buf.len()).inverse(&mut buf);
    buf
}

/// Band-limited interpolation of one period by zero-padding its spectrum.
///
/// The Nyquist bin of an even-length input is split between the two
/// half-bands so that the original samples are reproduced exactly.
pub fn interpolate_periodic(x: &[Complex64], factor: usize) -> Vec<Complex64> {
    let n = x.len();
    if factor <= 1 || n == 0 {
        return x.to_vec();
    }
    let m = n * factor;
    let spec = fft(x);
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    for (k, &v) in spec.iter().enumerate() {
        if n.is_multiple_of(2) && k == n / 2 {
            padded[n / 2] += v * 0.5;
            padded[m - n / 2] += v * 0.5;
        } else {
            padded[bin_index(signed_bin(k, n), m)] = v;
        }
    }
    let mut out = padded;
    FftPair::new(m).inverse_unscaled(&mut out);
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}
