use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft::{signed_bin, FftPair};
use crate::units::db_to_amplitude;
use crate::waveform::{ToneGrid, Waveform};

/// One path of a tapped delay line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelTap {
    pub delay_s: f64,
    pub gain_db: f64,
    #[serde(default)]
    pub phase_rad: f64,
    /// Marks a spurious response that is not a propagation path; such taps
    /// are excluded from the known-path set when judging dynamic range.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub artifact: bool,
}

impl ChannelTap {
    pub fn new(delay_s: f64, gain_db: f64) -> Self {
        ChannelTap { delay_s, gain_db, phase_rad: 0.0, artifact: false }
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(db_to_amplitude(self.gain_db), self.phase_rad)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay_s >= 0.0) || !self.delay_s.is_finite() {
            return invalid(format!("tap delay {} s must be finite and non-negative", self.delay_s));
        }
        if !self.gain_db.is_finite() || !self.phase_rad.is_finite() {
            return invalid("tap gain and phase must be finite");
        }
        Ok(())
    }
}

/// A single through path behind an attenuator of the given loss.
pub fn back_to_back_channel(attenuation_db: f64) -> Result<Vec<ChannelTap>> {
    if !(attenuation_db >= 0.0) || !attenuation_db.is_finite() {
        return invalid(format!("attenuation {attenuation_db} dB must be finite and non-negative"));
    }
    Ok(vec![ChannelTap::new(0.0, -attenuation_db)])
}

/// Frequency response of the tap set on every DFT bin of `grid`.
///
/// Delays are applied as exact linear phase, which is a true (fractional)
/// delay for a signal that is periodic on the grid.
pub fn channel_response(taps: &[ChannelTap], grid: &ToneGrid) -> Result<Vec<Complex64>> {
    if taps.is_empty() {
        return invalid("no propagation path defined");
    }
    let period = grid.period_s();
    for t in taps {
        t.validate()?;
        if t.delay_s >= period {
            return invalid(format!("tap delay {} s is not shorter than the {period} s period", t.delay_s));
        }
    }
    let n = grid.n_samples;
    Ok((0..n)
        .map(|k| {
            let f = signed_bin(k, n) as f64 * grid.tone_spacing_hz;
            taps.iter()
                .map(|t| t.amplitude() * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * t.delay_s))
                .sum()
        })
        .collect())
}

/// Circular convolution of one period with the tapped delay line.
pub fn apply_channel(w: &Waveform, taps: &[ChannelTap]) -> Result<Vec<Complex64>> {
    let h = channel_response(taps, &w.grid)?;
    let fft = FftPair::new(w.grid.n_samples);
    let mut buf = w.samples.clone();
    fft.forward(&mut buf);
    buf.iter_mut().zip(&h).for_each(|(x, h)| *x *= h);
    fft.inverse(&mut buf);
    Ok(buf)
}
