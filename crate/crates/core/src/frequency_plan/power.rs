//! Transmitter output power: a smooth (Rapp-style) limiter for the wanted
//! signal plus a constant LO feedthrough and a suppressed image sideband.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use crate::units::{power_db, power_sum_db};

/// Headroom used as the "no compression" surrogate for a saturation level.
const LINEAR_SURROGATE_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub small_signal_gain_db: f64,
    pub saturation_power_dbm: f64,
    pub knee_sharpness: f64,
    pub lo_leak_dbm: f64,
    pub sideband_suppression_db: f64,
}

impl PowerModel {
    /// Fit of the measured 300 GHz transmitter (−3 dBm → −5.3 dBm with
    /// 1.7 dB compression, 0 dBm → −2.9 dBm with 2.5 dB compression, nearly
    /// linear below −15 dBm).
    pub fn sounder_default() -> Self {
        PowerModel {
            small_signal_gain_db: -0.5298345742,
            saturation_power_dbm: 4.3980356595,
            knee_sharpness: 0.6716468869,
            lo_leak_dbm: -10.3,
            sideband_suppression_db: 15.0,
        }
    }

    /// Gain compression at the given IF drive, dB (≥ 0).
    pub fn compression_db(&self, if_dbm: f64) -> f64 {
        let linear = if_dbm + self.small_signal_gain_db;
        let s = self.knee_sharpness;
        let x = s * (linear - self.saturation_power_dbm) / 10.0;
        // log10(1 + 10^x) without overflow for large x
        let l = if x > 30.0 { x + (1.0 + 10f64.powf(-x)).log10() } else { (1.0 + 10f64.powf(x)).log10() };
        10.0 / s * l
    }

    /// Wanted-signal output power, dBm.
    pub fn signal_dbm(&self, if_dbm: f64) -> f64 {
        if if_dbm == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        if_dbm + self.small_signal_gain_db - self.compression_db(if_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.small_signal_gain_db,
            self.saturation_power_dbm,
            self.knee_sharpness,
            self.lo_leak_dbm,
            self.sideband_suppression_db,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.knee_sharpness <= 0.0 || self.sideband_suppression_db < 0.0 {
            return Err(Error::InvalidArgument(
                "power model needs finite parameters, positive knee and non-negative suppression".into(),
            ));
        }
        Ok(())
    }
}

/// One transmit power measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub if_dbm: f64,
    pub rf_signal_dbm: f64,
    /// Measured compression at this drive, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression_db: Option<f64>,
}

impl PowerPoint {
    pub fn new(if_dbm: f64, rf_signal_dbm: f64) -> Self {
        PowerPoint { if_dbm, rf_signal_dbm, compression_db: None }
    }

    pub fn with_compression(mut self, db: f64) -> Self {
        self.compression_db = Some(db);
        self
    }
}

/// Upper bound on compression at a drive level where the output is known to
/// be (nearly) linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionOnset {
    pub if_dbm: f64,
    pub max_compression_db: f64,
}

impl CompressionOnset {
    /// The transmitter only starts to compress slightly above −15 dBm IF.
    pub fn sounder_default() -> Self {
        CompressionOnset { if_dbm: -15.0, max_compression_db: 0.29 }
    }
}

/// Least-squares fit of the limiter to measured output powers (and
/// compression values, where given). LO leak and sideband suppression are
/// carried through unchanged.
pub fn fit_power_model(points: &[PowerPoint], lo_leak_dbm: f64, sideband_suppression_db: f64) -> Result<PowerModel> {
    fit_power_model_with_onset(points, None, lo_leak_dbm, sideband_suppression_db)
}

/// [`fit_power_model`] with an additional small-signal constraint, which
/// pins the knee when two measurements alone leave it soft.
pub fn fit_power_model_with_onset(
    points: &[PowerPoint],
    onset: Option<CompressionOnset>,
    lo_leak_dbm: f64,
    sideband_suppression_db: f64,
) -> Result<PowerModel> {
    if points.len() < 2 {
        return Err(Error::FitFailed(format!("need at least 2 points, got {}", points.len())));
    }
    let finite = points
        .iter()
        .all(|p| p.if_dbm.is_finite() && p.rf_signal_dbm.is_finite() && p.compression_db.is_none_or(f64::is_finite));
    if !finite {
        return Err(Error::FitFailed("non-finite power values".into()));
    }
    for (i, a) in points.iter().enumerate() {
        if points[i + 1..].iter().any(|b| (a.if_dbm - b.if_dbm).abs() < 1e-9) {
            return Err(Error::FitFailed(format!("repeated drive level {} dBm", a.if_dbm)));
        }
    }

    let max_in = points.iter().map(|p| p.if_dbm).fold(f64::NEG_INFINITY, f64::max);
    let gains: Vec<f64> = points.iter().map(|p| p.rf_signal_dbm + p.compression_db.unwrap_or(0.0) - p.if_dbm).collect();
    let mean_gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let any_compression = points.iter().any(|p| p.compression_db.is_some_and(|c| c > 0.0));

    // Points on a straight unit-slope line: the knee sits at +∞.
    let linear_residual = points.iter().map(|p| (p.if_dbm + mean_gain - p.rf_signal_dbm).abs()).fold(0.0, f64::max);
    if !any_compression && linear_residual <= 1e-9 {
        return Ok(PowerModel {
            small_signal_gain_db: mean_gain,
            saturation_power_dbm: max_in + mean_gain + LINEAR_SURROGATE_DB,
            knee_sharpness: 1.0,
            lo_leak_dbm,
            sideband_suppression_db,
        });
    }

    let cap = max_in + mean_gain + LINEAR_SURROGATE_DB;
    let model_of = |v: &[f64]| PowerModel {
        small_signal_gain_db: v[0],
        saturation_power_dbm: v[1].min(cap),
        knee_sharpness: v[2].exp().clamp(0.05, 50.0),
        lo_leak_dbm,
        sideband_suppression_db,
    };
    let cost = |v: &[f64]| -> f64 {
        let m = model_of(v);
        let fit: f64 = points
            .iter()
            .map(|p| {
                let r = m.signal_dbm(p.if_dbm) - p.rf_signal_dbm;
                let c = p.compression_db.map_or(0.0, |c| m.compression_db(p.if_dbm) - c);
                r * r + c * c
            })
            .sum();
        let excess = onset.map_or(0.0, |o| (m.compression_db(o.if_dbm) - o.max_compression_db).max(0.0));
        fit + 1e4 * excess * excess
    };

    let max_out = points.iter().map(|p| p.rf_signal_dbm).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for headroom in [0.0, 2.0, 6.0, 15.0] {
        for knee in [0.5f64, 1.0, 2.0] {
            let start = [mean_gain, max_out + headroom, knee.ln()];
            let (x, v) = nelder_mead(cost, &start, &[0.5, 2.0, 0.3], 4000, 1e-16);
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((x, v));
            }
        }
    }
    let (x, v) = best.expect("at least one start");
    if !v.is_finite() {
        return Err(Error::FitFailed("fit diverged".into()));
    }
    Ok(model_of(&x))
}

/// Output power breakdown at one IF drive level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfBreakdown {
    pub signal_dbm: f64,
    pub lo_leak_dbm: f64,
    pub image_dbm: f64,
    pub sum_dbm: f64,
}

pub fn rf_output(if_dbm: f64, model: &PowerModel) -> RfBreakdown {
    let signal_dbm = model.signal_dbm(if_dbm);
    let image_dbm = signal_dbm - model.sideband_suppression_db;
    let sum_dbm = if signal_dbm == f64::NEG_INFINITY {
        model.lo_leak_dbm
    } else {
        power_sum_db(&[signal_dbm, model.lo_leak_dbm, image_dbm])
    };
    RfBreakdown { signal_dbm, lo_leak_dbm: model.lo_leak_dbm, image_dbm, sum_dbm: sum_dbm.max(power_db(0.0)) }
}
