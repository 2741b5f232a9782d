//! Periodic Frank-Zadoff-Chu multitone sounding waveforms.
//!
//! A sounding period is built in the frequency domain: `n_tones` unit-modulus
//! FZC coefficients are placed on consecutive tones centred on DC and the
//! period is obtained by an inverse DFT on the sampling grid. The crest factor
//! of the result can then be lowered by [`optimize_crest`], which only moves
//! tone phases and therefore keeps the flat in-band magnitude that the
//! correlation gain depends on.

mod crest;

pub use crest::{optimize_crest, CrestMethod, CrestOptConfig};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft::{bin_index, interpolate_periodic, FftPair};
use crate::units::power_db;

/// Oversampling used when a waveform's crest factor is recorded.
pub const DEFAULT_CF_OVERSAMPLE: usize = 8;

/// Layout of the active tones on the sampling grid of one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneGrid {
    pub n_tones: usize,
    pub tone_spacing_hz: f64,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
}

impl ToneGrid {
    /// Grid for `n_tones` tones filling `bandwidth_hz`, sampled at `sample_rate_hz`.
    pub fn new(n_tones: usize, sample_rate_hz: f64, bandwidth_hz: f64) -> Result<Self> {
        if n_tones == 0 || !(bandwidth_hz > 0.0) || !(sample_rate_hz > 0.0) {
            return invalid("tone grid needs n_tones > 0 and positive rate and bandwidth");
        }
        let spacing = bandwidth_hz / n_tones as f64;
        let ratio = sample_rate_hz / spacing;
        let n_samples = ratio.round();
        if (ratio - n_samples).abs() > 1e-6 * ratio {
            return invalid(format!(
                "sample rate {sample_rate_hz} Hz is not an integer multiple of the tone spacing {spacing} Hz"
            ));
        }
        let grid = ToneGrid { n_tones, tone_spacing_hz: spacing, sample_rate_hz, n_samples: n_samples as usize };
        grid.validate()?;
        Ok(grid)
    }

    /// 2000 tones over 2 GHz at 2.4 GS/s: a 1 µs period of 2400 samples.
    pub fn sounder_default() -> Self {
        ToneGrid { n_tones: 2000, tone_spacing_hz: 1e6, sample_rate_hz: 2.4e9, n_samples: 2400 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tones == 0 || self.n_samples == 0 {
            return invalid("tone grid is empty");
        }
        if !(self.tone_spacing_hz > 0.0) || !(self.sample_rate_hz > 0.0) {
            return invalid("tone spacing and sample rate must be positive");
        }
        if self.n_tones > self.n_samples {
            return invalid(format!("{} tones do not fit on a {}-sample grid", self.n_tones, self.n_samples));
        }
        let period = self.n_samples as f64 / self.sample_rate_hz;
        if (period * self.tone_spacing_hz - 1.0).abs() > 1e-9 {
            return invalid(format!("period {period} s is inconsistent with tone spacing {} Hz", self.tone_spacing_hz));
        }
        Ok(())
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.n_tones as f64 * self.tone_spacing_hz
    }

    pub fn period_s(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate_hz
    }

    /// Signed bin offset of the first active tone.
    pub fn first_offset(&self) -> i64 {
        -((self.n_tones / 2) as i64)
    }

    /// Signed bin offsets of the active tones, lowest frequency first.
    pub fn active_offsets(&self) -> impl Iterator<Item = i64> + '_ {
        let first = self.first_offset();
        (0..self.n_tones as i64).map(move |k| first + k)
    }

    /// DFT indices (on the `n_samples` grid) of the active tones.
    pub fn active_bins(&self) -> Vec<usize> {
        self.active_offsets().map(|o| bin_index(o, self.n_samples)).collect()
    }
}

/// One period of the complex baseband sounding signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<Complex64>,
    pub grid: ToneGrid,
    pub crest_factor_db: f64,
    /// FZC root the tones were generated from, if any.
    pub root: Option<u64>,
}

impl Waveform {
    /// Wraps existing samples, checking them against the grid.
    pub fn from_samples(samples: Vec<Complex64>, grid: ToneGrid, root: Option<u64>) -> Result<Self> {
        grid.validate()?;
        if samples.len() != grid.n_samples {
            return invalid(format!("{} samples supplied for a {}-sample grid", samples.len(), grid.n_samples));
        }
        let crest_factor_db = crest_factor(&samples, DEFAULT_CF_OVERSAMPLE)?;
        Ok(Waveform { samples, grid, crest_factor_db, root })
    }

    /// Unnormalized DFT of the period restricted to the active tones.
    pub fn active_spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.samples.clone();
        FftPair::new(buf.len()).forward(&mut buf);
        self.grid.active_bins().iter().map(|&b| buf[b]).collect()
    }

    /// Energy outside the active tones relative to the in-band energy, dB.
    pub fn out_of_band_db(&self) -> f64 {
        let mut buf = self.samples.clone();
        FftPair::new(buf.len()).forward(&mut buf);
        let active = self.grid.active_bins();
        let mut mask = vec![false; buf.len()];
        active.iter().for_each(|&b| mask[b] = true);
        let (mut inband, mut outband) = (0.0, 0.0);
        for (v, &m) in buf.iter().zip(&mask) {
            if m {
                inband += v.norm_sqr();
            } else {
                outband += v.norm_sqr();
            }
        }
        power_db(outband / inband)
    }

    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn crest_factor(&self, oversample: usize) -> Result<f64> {
        crest_factor(&self.samples, oversample)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Frank-Zadoff-Chu coefficients `exp(-jπ·root·k²/N)` (even `N`) or
/// `exp(-jπ·root·k(k+1)/N)` (odd `N`).
pub fn generate_fzc(n_tones: usize, root: u64) -> Result<Vec<Complex64>> {
    if n_tones < 2 {
        return invalid(format!("FZC length must be at least 2, got {n_tones}"));
    }
    let n = n_tones as u64;
    if gcd(root, n) != 1 {
        return invalid(format!("root {root} is not coprime with length {n}"));
    }
    // The exponent is reduced modulo 2N in integers so that long sequences
    // keep full phase precision.
    let modulus = 2 * n as u128;
    let odd = n % 2 == 1;
    Ok((0..n)
        .map(|k| {
            let k = k as u128;
            let q = if odd { k * (k + 1) } else { k * k };
            let m = (root as u128 % modulus) * (q % modulus) % modulus;
            let phase = -std::f64::consts::PI * m as f64 / n as f64;
            Complex64::from_polar(1.0, phase)
        })
        .collect())
}

/// Places `tones` on the active bins of `grid` and returns the
/// peak-normalized time-domain period.
pub fn synthesize_period(tones: &[Complex64], grid: &ToneGrid) -> Result<Waveform> {
    grid.validate()?;
    if tones.len() != grid.n_tones {
        return invalid(format!("{} tone coefficients for a {}-tone grid", tones.len(), grid.n_tones));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.n_samples];
    for (&b, &c) in grid.active_bins().iter().zip(tones) {
        buf[b] = c;
    }
    FftPair::new(grid.n_samples).inverse_unscaled(&mut buf);
    let peak = buf.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return invalid("all tone coefficients are zero");
    }
    buf.iter_mut().for_each(|v| *v /= peak);
    Waveform::from_samples(buf, *grid, None)
}

/// Peak-to-RMS ratio in dB of the band-limited interpolation of one period
/// at `oversample` times the grid rate.
pub fn crest_factor(samples: &[Complex64], oversample: usize) -> Result<f64> {
    if oversample == 0 {
        return invalid("oversample factor must be at least 1");
    }
    let x = interpolate_periodic(samples, oversample);
    envelope_crest_db(&x).ok_or_else(|| crate::Error::InvalidArgument("waveform is all zeros".into()))
}

pub(crate) fn envelope_crest_db(x: &[Complex64]) -> Option<f64> {
    let (peak, energy) = x.iter().fold((0.0f64, 0.0f64), |(p, e), v| {
        let m = v.norm_sqr();
        (p.max(m), e + m)
    });
    if !(energy > 0.0) {
        return None;
    }
    let mean = energy / x.len() as f64;
    Some(10.0 * (peak / mean).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fzc_length_four() {
        let got = generate_fzc(4, 1).unwrap();
        let want = [0.0, -PI / 4.0, -PI, -9.0 * PI / 4.0].map(|p| Complex64::from_polar(1.0, p));
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).norm() < 1e-12);
        }
    }

    #[test]
    fn fzc_rejects_bad_arguments() {
        assert!(generate_fzc(0, 1).is_err());
        assert!(generate_fzc(1, 1).is_err());
        assert!(generate_fzc(2000, 2).is_err());
        assert!(generate_fzc(2000, 0).is_err());
        assert!(generate_fzc(2000, 3).is_ok());
    }

    #[test]
    fn fzc_is_unit_modulus() {
        for v in generate_fzc(2000, 1).unwrap() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_consistency() {
        let g = ToneGrid::new(2000, 2.4e9, 2e9).unwrap();
        assert_eq!(g, ToneGrid::sounder_default());
        assert!((g.period_s() - 1e-6).abs() < 1e-18);
        assert!(ToneGrid::new(2000, 2.4e9 + 0.3e6, 2e9).is_err());
        assert!(ToneGrid::new(2000, 1e9, 2e9).is_err());
        let bad = ToneGrid { n_samples: 2401, ..ToneGrid::sounder_default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_tone_is_constant_envelope() {
        let grid = ToneGrid { n_tones: 1, tone_spacing_hz: 1.0, sample_rate_hz: 8.0, n_samples: 8 };
        let w = synthesize_period(&[c(1.0, 0.0)], &grid).unwrap();
        assert_eq!(w.samples.len(), 8);
        assert!(w.crest_factor_db.abs() < 1e-12);
    }

    #[test]
    fn crest_factor_of_sine_is_3db() {
        let x: Vec<Complex64> = (0..8).map(|i| c((2.0 * PI * i as f64 / 8.0).cos(), 0.0)).collect();
        let cf = crest_factor(&x, 8).unwrap();
        assert!((cf - 10.0 * 2f64.log10()).abs() < 1e-9, "{cf}");
    }

    #[test]
    fn crest_factor_errors() {
        assert!(crest_factor(&[c(0.0, 0.0); 8], 8).is_err());
        assert!(crest_factor(&[c(1.0, 0.0); 8], 0).is_err());
    }

    #[test]
    fn synthesize_rejects_mismatched_lengths() {
        let grid = ToneGrid::sounder_default();
        assert!(synthesize_period(&[c(1.0, 0.0); 3], &grid).is_err());
    }
}
