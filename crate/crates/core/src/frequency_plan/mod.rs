//! Heterodyne frequency bookkeeping for a single-sideband transmitter and a
//! double-sideband receiver sharing a ×N LO multiplier chain.
//!
//! All frequencies are integer Hz so that plan checks are exact.

mod power;

pub use power::{
    fit_power_model, fit_power_model_with_onset, rf_output, CompressionOnset, PowerModel, PowerPoint, RfBreakdown,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest and highest RF carrier the transceiver supports.
pub const RF_RANGE_HZ: (u64, u64) = (270_000_000_000, 330_000_000_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sideband {
    #[default]
    Upper,
    Lower,
}

/// The knobs of a plan; everything else is derived from these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanInputs {
    pub tx_if_hz: u64,
    pub tx_lo_ref_hz: u64,
    pub rx_lo_ref_hz: u64,
    pub lo_multiplier: u32,
    pub bandwidth_hz: u64,
    #[serde(default)]
    pub sideband: Sideband,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PlanInputs", into = "PlanInputs")]
pub struct FrequencyPlan {
    pub tx_if_hz: u64,
    pub tx_lo_ref_hz: u64,
    pub rx_lo_ref_hz: u64,
    pub lo_multiplier: u32,
    pub bandwidth_hz: u64,
    pub sideband: Sideband,
    pub tx_lo_hz: u64,
    pub rx_lo_hz: u64,
    pub tx_rf_center_hz: u64,
    pub rx_if_center_hz: u64,
    /// RF position of the unwanted Tx sideband centre.
    pub image_rf_hz: u64,
    /// RF position of the Tx LO feedthrough.
    pub lo_leak_rf_hz: u64,
}

impl TryFrom<PlanInputs> for FrequencyPlan {
    type Error = Error;

    fn try_from(p: PlanInputs) -> Result<Self> {
        derive_plan(p.tx_if_hz, p.tx_lo_ref_hz, p.rx_lo_ref_hz, p.lo_multiplier, p.bandwidth_hz, p.sideband)
    }
}

impl From<FrequencyPlan> for PlanInputs {
    fn from(p: FrequencyPlan) -> Self {
        PlanInputs {
            tx_if_hz: p.tx_if_hz,
            tx_lo_ref_hz: p.tx_lo_ref_hz,
            rx_lo_ref_hz: p.rx_lo_ref_hz,
            lo_multiplier: p.lo_multiplier,
            bandwidth_hz: p.bandwidth_hz,
            sideband: p.sideband,
        }
    }
}

impl FrequencyPlan {
    /// 12 GHz Tx IF, 8 GHz / 8.15 GHz LO references, ×36, 2 GHz bandwidth.
    pub fn sounder_default() -> Self {
        derive_plan(12_000_000_000, 8_000_000_000, 8_150_000_000, 36, 2_000_000_000, Sideband::Upper)
            .expect("default plan is feasible")
    }

    /// Receiver IF of an RF component and whether its spectrum is inverted
    /// by the receiver's double-sideband downconversion.
    pub fn rx_if_of(&self, rf_hz: u64) -> (u64, bool) {
        if rf_hz >= self.rx_lo_hz {
            (rf_hz - self.rx_lo_hz, false)
        } else {
            (self.rx_lo_hz - rf_hz, true)
        }
    }
}

pub fn derive_plan(
    tx_if_hz: u64,
    tx_lo_ref_hz: u64,
    rx_lo_ref_hz: u64,
    lo_multiplier: u32,
    bandwidth_hz: u64,
    sideband: Sideband,
) -> Result<FrequencyPlan> {
    if tx_if_hz == 0 || tx_lo_ref_hz == 0 || rx_lo_ref_hz == 0 || lo_multiplier == 0 || bandwidth_hz == 0 {
        return Err(Error::InvalidArgument("all plan frequencies and the multiplier must be positive".into()));
    }
    let mult = lo_multiplier as u64;
    let tx_lo_hz = mult * tx_lo_ref_hz;
    let rx_lo_hz = mult * rx_lo_ref_hz;
    let (tx_rf_center_hz, image_rf_hz) = match sideband {
        Sideband::Upper => {
            let image = tx_lo_hz
                .checked_sub(tx_if_hz)
                .ok_or_else(|| Error::PlanInfeasible("Tx IF exceeds the LO frequency".into()))?;
            (tx_lo_hz + tx_if_hz, image)
        }
        Sideband::Lower => {
            let rf = tx_lo_hz
                .checked_sub(tx_if_hz)
                .ok_or_else(|| Error::PlanInfeasible("Tx IF exceeds the LO frequency".into()))?;
            (rf, tx_lo_hz + tx_if_hz)
        }
    };
    if !(RF_RANGE_HZ.0..=RF_RANGE_HZ.1).contains(&tx_rf_center_hz) {
        return Err(Error::PlanInfeasible(format!(
            "RF centre {tx_rf_center_hz} Hz outside the supported {}..{} Hz",
            RF_RANGE_HZ.0, RF_RANGE_HZ.1
        )));
    }
    let rx_if = tx_rf_center_hz as i128 - rx_lo_hz as i128;
    if 2 * rx_if <= bandwidth_hz as i128 {
        return Err(Error::PlanInfeasible(format!(
            "receiver IF {rx_if} Hz does not clear half the bandwidth ({} Hz)",
            bandwidth_hz / 2
        )));
    }
    Ok(FrequencyPlan {
        tx_if_hz,
        tx_lo_ref_hz,
        rx_lo_ref_hz,
        lo_multiplier,
        bandwidth_hz,
        sideband,
        tx_lo_hz,
        rx_lo_hz,
        tx_rf_center_hz,
        rx_if_center_hz: rx_if as u64,
        image_rf_hz,
        lo_leak_rf_hz: tx_lo_hz,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpurReport {
    pub lo_leak_rx_if_hz: u64,
    /// Centre of the unwanted-sideband image at the receiver IF.
    pub image_rx_if_hz: u64,
    /// Inclusive receiver IF interval occupied by the wanted signal.
    pub signal_band_rx_if: (u64, u64),
    /// Distance from the LO leak to the nearest band edge; negative inside.
    pub lo_leak_margin_hz: i64,
    /// Gap between the image band and the signal band; negative on overlap.
    pub image_margin_hz: i64,
    pub clear: bool,
}

/// Signed distance of a point to an interval: positive outside, negative inside.
fn point_margin(x: i64, lo: i64, hi: i64) -> i64 {
    if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        -(x - lo).min(hi - x).max(1)
    }
}

/// Gap between two intervals; negative by the overlap length when they intersect.
fn band_margin(a: (i64, i64), b: (i64, i64)) -> i64 {
    if a.1 < b.0 {
        b.0 - a.1
    } else if b.1 < a.0 {
        a.0 - b.1
    } else {
        -(a.1.min(b.1) - a.0.max(b.0)).max(1)
    }
}

/// Places the Tx LO feedthrough and image on the receiver IF axis.
///
/// The image is treated as a band as wide as the signal; the LO leak is a
/// single tone.
pub fn check_spurs(plan: &FrequencyPlan) -> SpurReport {
    let half = (plan.bandwidth_hz / 2) as i64;
    let centre = plan.rx_if_center_hz as i64;
    let band = (centre - half, centre + half);
    let (leak_if, _) = plan.rx_if_of(plan.lo_leak_rf_hz);
    let (image_if, _) = plan.rx_if_of(plan.image_rf_hz);
    let lo_leak_margin_hz = point_margin(leak_if as i64, band.0, band.1);
    let image_band = (image_if as i64 - half, image_if as i64 + half);
    let image_margin_hz = band_margin(image_band, band);
    SpurReport {
        lo_leak_rx_if_hz: leak_if,
        image_rx_if_hz: image_if,
        signal_band_rx_if: (band.0 as u64, band.1 as u64),
        lo_leak_margin_hz,
        image_margin_hz,
        clear: lo_leak_margin_hz > 0 && image_margin_hz > 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpurKind {
    LoLeak,
    Image,
}

/// A transmitter spur that lands inside the sampled receiver band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InBandSpur {
    pub kind: SpurKind,
    /// Offset from the receiver band centre, Hz.
    pub offset_hz: i64,
    /// Power relative to the wanted signal, dB.
    pub relative_db: f64,
    /// Whether the spur's spectrum is mirrored relative to the wanted signal.
    pub inverted: bool,
}

/// Spurs that the plan check places in-band, with levels from the power
/// model at the given IF drive.
pub fn in_band_spurs(plan: &FrequencyPlan, model: &PowerModel, if_dbm: f64) -> Vec<InBandSpur> {
    let report = check_spurs(plan);
    let out = rf_output(if_dbm, model);
    let centre = plan.rx_if_center_hz as i64;
    let mut spurs = Vec::new();
    if report.lo_leak_margin_hz <= 0 {
        let (f, inv) = plan.rx_if_of(plan.lo_leak_rf_hz);
        spurs.push(InBandSpur {
            kind: SpurKind::LoLeak,
            offset_hz: f as i64 - centre,
            relative_db: out.lo_leak_dbm - out.signal_dbm,
            inverted: inv,
        });
    }
    if report.image_margin_hz <= 0 {
        let (f, rx_inv) = plan.rx_if_of(plan.image_rf_hz);
        // The image is already mirrored at the transmitter.
        spurs.push(InBandSpur {
            kind: SpurKind::Image,
            offset_hz: f as i64 - centre,
            relative_db: out.image_dbm - out.signal_dbm,
            inverted: !rx_inv,
        });
    }
    spurs
}

#[cfg(test)]
mod tests {
    use super::*;

    const GHZ: u64 = 1_000_000_000;
    const MHZ: u64 = 1_000_000;

    #[test]
    fn default_plan_positions() {
        let p = FrequencyPlan::sounder_default();
        assert_eq!(p.tx_rf_center_hz, 300 * GHZ);
        assert_eq!(p.rx_if_center_hz, 6_600 * MHZ);
        assert_eq!(p.tx_lo_hz, 288 * GHZ);
        assert_eq!(p.rx_lo_hz, 293_400 * MHZ);
        assert_eq!(p.image_rf_hz, 276 * GHZ);
    }

    #[test]
    fn equal_lo_references() {
        let p = derive_plan(12 * GHZ, 8 * GHZ, 8 * GHZ, 36, 2 * GHZ, Sideband::Upper).unwrap();
        assert_eq!(p.rx_if_center_hz, 12 * GHZ);
        let r = check_spurs(&p);
        assert_eq!(r.lo_leak_rx_if_hz, 0);
        assert!(r.lo_leak_margin_hz > 0);
        assert_eq!(r.image_rx_if_hz, 12 * GHZ);
        assert!(r.image_margin_hz < 0);
        assert!(!r.clear);
    }

    #[test]
    fn default_spur_report() {
        let r = check_spurs(&FrequencyPlan::sounder_default());
        assert_eq!(r.lo_leak_rx_if_hz, 5_400 * MHZ);
        assert_eq!(r.image_rx_if_hz, 17_400 * MHZ);
        assert_eq!(r.signal_band_rx_if, (5_600 * MHZ, 7_600 * MHZ));
        assert_eq!(r.lo_leak_margin_hz, 200 * MHZ as i64);
        assert_eq!(r.image_margin_hz, 8_800 * MHZ as i64);
        assert!(r.clear);
    }

    #[test]
    fn lower_tx_if_shrinks_margin() {
        let p = derive_plan(11_900 * MHZ, 8 * GHZ, 8_150 * MHZ, 36, 2 * GHZ, Sideband::Upper).unwrap();
        let r = check_spurs(&p);
        assert_eq!(r.lo_leak_margin_hz, 100 * MHZ as i64);
        assert!(r.clear);
    }

    #[test]
    fn infeasible_plans() {
        // receiver LO above the signal: IF would be negative
        assert!(matches!(
            derive_plan(12 * GHZ, 8 * GHZ, 8_400 * MHZ, 36, 2 * GHZ, Sideband::Upper),
            Err(Error::PlanInfeasible(_))
        ));
        // IF just short of half the bandwidth
        assert!(matches!(
            derive_plan(12 * GHZ, 8 * GHZ, 8 * GHZ + 305_555_556, 36, 2 * GHZ, Sideband::Upper),
            Err(Error::PlanInfeasible(_))
        ));
        // carrier outside 270..330 GHz
        assert!(matches!(
            derive_plan(12 * GHZ, 9_500 * MHZ, 9_400 * MHZ, 36, 2 * GHZ, Sideband::Upper),
            Err(Error::PlanInfeasible(_))
        ));
        assert!(matches!(
            derive_plan(0, 8 * GHZ, 8 * GHZ, 36, 2 * GHZ, Sideband::Upper),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn serde_goes_through_derivation() {
        let p = FrequencyPlan::sounder_default();
        let json = serde_json::to_string(&p).unwrap();
        assert!(!json.contains("rx_if_center_hz"));
        let back: FrequencyPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let bad = json.replace("8150000000", "8400000000");
        assert!(serde_json::from_str::<FrequencyPlan>(&bad).is_err());
    }

    #[test]
    fn in_band_spurs_only_when_not_clear() {
        let model = PowerModel::sounder_default();
        assert!(in_band_spurs(&FrequencyPlan::sounder_default(), &model, -3.0).is_empty());
        let p = derive_plan(12 * GHZ, 8 * GHZ, 8 * GHZ, 36, 2 * GHZ, Sideband::Upper).unwrap();
        let spurs = in_band_spurs(&p, &model, -3.0);
        assert_eq!(spurs.len(), 1);
        assert_eq!(spurs[0].kind, SpurKind::Image);
        assert_eq!(spurs[0].offset_hz, 0);
        assert!((spurs[0].relative_db + model.sideband_suppression_db).abs() < 1e-12);
    }
}
