//! Behavioural simulation of the propagation channel and the capture chain.
//!
//! [`apply_channel`] realizes a tapped delay line on one period of the
//! sounding signal; [`CaptureSimulator`] then produces snapshot sets with
//! oscillator phase drift, trigger jitter, receiver noise and converter
//! quantization. [`link_budget`] holds the free-space arithmetic used to
//! characterise antennas.

mod capture;
mod channel;
pub mod link_budget;

pub use capture::{simulate_capture, CaptureSimulator};
pub use channel::{apply_channel, back_to_back_channel, channel_response, ChannelTap};
pub use link_budget::{estimate_antenna_gain, expected_s21_db, fspl_db};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftModel {
    /// Random walk rescaled so that its excursion equals the configured span.
    #[default]
    Wiener,
    Linear,
    Sinusoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PhaseDrift {
    pub model: DriftModel,
    /// Peak-to-peak phase excursion over the whole capture, degrees.
    pub magnitude_deg_over_measurement: f64,
}

/// Frequency response of the Tx/Rx hardware between DAC and ADC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ChainResponse {
    /// Magnitude change from the lower to the upper band edge, dB (linear in dB).
    pub magnitude_tilt_db: f64,
    /// Offset between the receiver trigger and the start of a sequence period, s.
    pub trigger_offset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpairmentConfig {
    /// Single-snapshot SNR after correlation, referred to a 0 dB path: the
    /// calibrated, unwindowed impulse response of one snapshot has a mean
    /// noise level of `-snr` dB. `None` disables receiver noise.
    pub snr_db_per_snapshot: Option<f64>,
    pub phase_drift: PhaseDrift,
    pub trigger_jitter_ps_rms: f64,
    /// DAC resolution; `None` keeps the transmit waveform unquantized.
    pub adc_bits_tx: Option<u32>,
    /// ADC resolution; `None` keeps captured samples unquantized.
    pub adc_bits_rx: Option<u32>,
    pub seed: u64,
    pub chain: ChainResponse,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        ImpairmentConfig {
            snr_db_per_snapshot: None,
            phase_drift: PhaseDrift::default(),
            trigger_jitter_ps_rms: 0.0,
            adc_bits_tx: Some(14),
            adc_bits_rx: Some(16),
            seed: 0,
            chain: ChainResponse::default(),
        }
    }
}

impl ImpairmentConfig {
    /// No noise, drift, jitter, quantization or chain response.
    pub fn ideal() -> Self {
        ImpairmentConfig { adc_bits_tx: None, adc_bits_rx: None, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.adc_bits_tx == Some(0) || self.adc_bits_rx == Some(0) {
            return invalid("converter resolution must be at least 1 bit");
        }
        if self.adc_bits_tx.is_some_and(|b| b > 52) || self.adc_bits_rx.is_some_and(|b| b > 52) {
            return invalid("converter resolution above 52 bits is meaningless for f64 samples");
        }
        if !(self.trigger_jitter_ps_rms >= 0.0) || !self.trigger_jitter_ps_rms.is_finite() {
            return invalid("trigger jitter must be finite and non-negative");
        }
        if self.snr_db_per_snapshot.is_some_and(|s| !s.is_finite()) {
            return invalid("SNR must be finite");
        }
        if !self.phase_drift.magnitude_deg_over_measurement.is_finite() {
            return invalid("phase drift magnitude must be finite");
        }
        if !self.chain.magnitude_tilt_db.is_finite() || !self.chain.trigger_offset_s.is_finite() {
            return invalid("chain response must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Simulated,
    File,
}

/// Captured snapshots, one sequence period per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    /// Row-major `n_snapshots × n_samples` samples.
    pub data: Vec<Complex64>,
    pub n_samples: usize,
    pub n_snapshots: usize,
    pub sample_rate_hz: f64,
    pub origin: Origin,
    pub seed: Option<u64>,
    /// Copy of the scenario the capture was made for, if any.
    pub scenario: Option<serde_json::Value>,
}

impl SnapshotSet {
    pub fn new(data: Vec<Complex64>, n_samples: usize, sample_rate_hz: f64, origin: Origin) -> Result<Self> {
        if n_samples == 0 || data.is_empty() || !data.len().is_multiple_of(n_samples) {
            return invalid(format!("{} samples do not form whole rows of {n_samples}", data.len()));
        }
        Ok(SnapshotSet {
            n_snapshots: data.len() / n_samples,
            data,
            n_samples,
            sample_rate_hz,
            origin,
            seed: None,
            scenario: None,
        })
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.n_samples)
    }
}
