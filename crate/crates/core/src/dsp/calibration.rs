use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FrequencyResponse, ProcessedCapture};
use crate::error::{invalid, Result};
use crate::units::{db_to_amplitude, power_db};

/// System-response bins weaker than this, relative to the median magnitude,
/// are raised to it before division.
pub const CLAMP_BELOW_MEDIAN_DB: f64 = -40.0;

/// Back-to-back system response with the reference attenuator divided out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub system_fr: FrequencyResponse,
    pub n_averages_used: usize,
    /// Mean level of the averaged calibration impulse response away from its
    /// main peak, dB relative to that peak.
    pub noise_floor_estimate_db: f64,
    /// Loss inserted between Tx and Rx during the calibration capture.
    pub reference_attenuation_db: f64,
}

impl CalibrationProfile {
    /// Noiseless profile from a known system response.
    pub fn from_response(system_fr: FrequencyResponse) -> Result<Self> {
        if system_fr.bins.iter().all(|v| v.norm_sqr() == 0.0) {
            return invalid("system response is identically zero");
        }
        Ok(CalibrationProfile {
            system_fr,
            n_averages_used: 0,
            noise_floor_estimate_db: f64::NEG_INFINITY,
            reference_attenuation_db: 0.0,
        })
    }

    /// Profile from a processed (uncalibrated, phase-tracked) back-to-back
    /// capture made through `reference_attenuation_db` of loss.
    pub fn from_capture(capture: &ProcessedCapture, reference_attenuation_db: f64) -> Result<Self> {
        if !reference_attenuation_db.is_finite() || reference_attenuation_db < 0.0 {
            return invalid("reference attenuation must be finite and non-negative");
        }
        let gain = 1.0 / db_to_amplitude(-reference_attenuation_db);
        let mut system_fr = capture.averaged_fr.clone();
        system_fr.bins.iter_mut().for_each(|v| *v *= gain);
        let ir = &capture.averaged;
        let main = ir.argmax();
        let n = ir.len();
        let guard = 20.min(n / 4);
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, v) in ir.taps.iter().enumerate() {
            let d = i.abs_diff(main).min(n - i.abs_diff(main));
            if d > guard {
                sum += v.norm_sqr();
                count += 1;
            }
        }
        let floor = if count > 0 { sum / count as f64 } else { 0.0 };
        Ok(CalibrationProfile {
            system_fr,
            n_averages_used: capture.n_averaged,
            noise_floor_estimate_db: power_db(floor) - power_db(ir.taps[main].norm_sqr()),
            reference_attenuation_db,
        })
    }

    /// Bin-wise inverse of the system response after clamping weak bins.
    pub fn inverse(&self) -> Vec<Complex64> {
        let mut mags: Vec<f64> = self.system_fr.bins.iter().map(|v| v.norm()).collect();
        mags.sort_by(f64::total_cmp);
        let floor = mags[mags.len() / 2] * db_to_amplitude(CLAMP_BELOW_MEDIAN_DB);
        self.system_fr
            .bins
            .iter()
            .map(|&v| {
                let m = v.norm();
                if m >= floor && m > 0.0 {
                    v.inv()
                } else if m > 0.0 {
                    (v * (floor / m)).inv()
                } else {
                    Complex64::new(1.0 / floor, 0.0)
                }
            })
            .collect()
    }
}

/// Divides `fr` by the calibration profile's system response.
pub fn calibrate(fr: &FrequencyResponse, cal: &CalibrationProfile) -> Result<FrequencyResponse> {
    fr.check_same_grid(&cal.system_fr)?;
    let inv = cal.inverse();
    Ok(FrequencyResponse { bins: fr.bins.iter().zip(&inv).map(|(a, b)| a * b).collect(), ..fr.clone() })
}
