//! Reproducible end-to-end experiments: waveform, channel, impairments,
//! calibration and processing settings in one JSON document, with optional
//! expected metrics to check the result against.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::airsim::{back_to_back_channel, channel_response, CaptureSimulator, ChannelTap, ImpairmentConfig};
use crate::dsp::{gain_budget, CalibrationProfile, ProcessedCapture, ProcessingConfig, SoundingProcessor, WindowSpec};
use crate::error::{invalid, Error, Result};
use crate::frequency_plan::{in_band_spurs, FrequencyPlan, InBandSpur, PowerModel};
use crate::metrics::{compute_metrics, known_paths_from_taps, noise_floor, CirMetrics, MetricsConfig};
use crate::waveform::{generate_fzc, optimize_crest, synthesize_period, CrestOptConfig, ToneGrid, Waveform};

/// Random-stream identifiers of the two captures of a run.
const CALIBRATION_CAPTURE: u64 = 0;
const MEASUREMENT_CAPTURE: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformSpec {
    pub n_tones: usize,
    pub sample_rate_hz: f64,
    pub bandwidth_hz: f64,
    pub root: u64,
    pub optimize_cf: bool,
    pub crest: CrestOptConfig,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        WaveformSpec {
            n_tones: 2000,
            sample_rate_hz: 2.4e9,
            bandwidth_hz: 2e9,
            root: 1,
            optimize_cf: true,
            crest: CrestOptConfig::default(),
        }
    }
}

impl WaveformSpec {
    pub fn grid(&self) -> Result<ToneGrid> {
        ToneGrid::new(self.n_tones, self.sample_rate_hz, self.bandwidth_hz)
    }

    pub fn build(&self) -> Result<Waveform> {
        let grid = self.grid()?;
        let mut w = synthesize_period(&generate_fzc(self.n_tones, self.root)?, &grid)?;
        w.root = Some(self.root);
        if self.optimize_cf {
            w = optimize_crest(&w, &self.crest)?;
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    /// Loss of the back-to-back reference attenuator.
    pub attenuation_db: f64,
    /// Snapshots averaged for the profile; defaults to the measurement count.
    pub n_avrg: Option<usize>,
    /// Build the profile from a noise-free capture.
    pub noiseless: bool,
    /// Trigger offset of the measurement relative to the calibration, s.
    pub trigger_offset_error_s: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec { attenuation_db: 54.0, n_avrg: None, noiseless: false, trigger_offset_error_s: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessingSpec {
    pub window: WindowSpec,
    pub track_phase: bool,
    pub pre_average: usize,
    /// Snapshots averaged in a desk-scale run.
    pub n_avrg: usize,
    /// Snapshots averaged in a full-scale run.
    pub n_avrg_full: usize,
}

impl Default for ProcessingSpec {
    fn default() -> Self {
        ProcessingSpec {
            window: WindowSpec::chebyshev(80.0),
            track_phase: true,
            pre_average: 1,
            n_avrg: 1000,
            n_avrg_full: 50_000,
        }
    }
}

impl ProcessingSpec {
    pub fn config(&self) -> ProcessingConfig {
        ProcessingConfig {
            window: self.window,
            track_phase: self.track_phase,
            pre_average: self.pre_average,
            ref_bin: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    MainPeakDelayNs,
    MainPeakDistanceM,
    MainPeakLevelDb,
    SingleSnapshotFloorDb,
    NoiseFloorDb,
    AveragingGainDb,
    DynamicRangeDb,
    MmplDb,
    SpurDelayNs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExpectedMetrics {
    pub desk: BTreeMap<MetricName, Expectation>,
    pub full: BTreeMap<MetricName, Expectation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub waveform: WaveformSpec,
    #[serde(default)]
    pub frequency_plan: Option<FrequencyPlan>,
    #[serde(default)]
    pub power_model: Option<PowerModel>,
    /// IF drive level used with the power model to size transmitter spurs.
    #[serde(default = "default_if_power")]
    pub if_power_dbm: f64,
    pub taps: Vec<ChannelTap>,
    #[serde(default)]
    pub impairments: ImpairmentConfig,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default)]
    pub processing: ProcessingSpec,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub expected_metrics: Option<ExpectedMetrics>,
}

fn default_if_power() -> f64 {
    -3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub metric: MetricName,
    pub value: Option<f64>,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub scale: Scale,
    pub seed: u64,
    pub n_avrg: usize,
    pub metrics: CirMetrics,
    pub single_snapshot_floor_db: f64,
    pub averaging_gain_db: f64,
    pub low_snr_groups: usize,
    pub checks: Vec<Check>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn value(&self, metric: MetricName) -> Option<f64> {
        let m = &self.metrics;
        Some(match metric {
            MetricName::MainPeakDelayNs => m.main_peak.delay_s * 1e9,
            MetricName::MainPeakDistanceM => m.main_peak.distance_m,
            MetricName::MainPeakLevelDb => m.main_peak.level_db,
            MetricName::SingleSnapshotFloorDb => self.single_snapshot_floor_db,
            MetricName::NoiseFloorDb => m.noise_floor_db,
            MetricName::AveragingGainDb => self.averaging_gain_db,
            MetricName::DynamicRangeDb => m.dynamic_range_db,
            MetricName::MmplDb => m.mmpl_db?,
            MetricName::SpurDelayNs => m.spur.delay_s * 1e9,
        })
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub waveform: Waveform,
    pub calibration: CalibrationProfile,
    pub processed: ProcessedCapture,
    pub report: ScenarioReport,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Format(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.waveform.grid()?;
        self.waveform.crest.validate()?;
        channel_response(&self.taps, &grid)?;
        self.impairments.validate()?;
        self.processing.config().validate()?;
        if self.processing.n_avrg == 0 || self.processing.n_avrg_full == 0 {
            return invalid("averaging counts must be at least 1");
        }
        if self.calibration.n_avrg == Some(0) {
            return invalid("calibration averaging count must be at least 1");
        }
        if !(self.calibration.attenuation_db >= 0.0) || !self.calibration.attenuation_db.is_finite() {
            return invalid("calibration attenuation must be finite and non-negative");
        }
        if !self.calibration.trigger_offset_error_s.is_finite() {
            return invalid("calibration trigger offset error must be finite");
        }
        if let Some(m) = &self.power_model {
            m.validate()?;
        }
        if !self.if_power_dbm.is_finite() {
            return invalid("IF power must be finite");
        }
        Ok(())
    }

    pub fn n_avrg(&self, scale: Scale) -> usize {
        match scale {
            Scale::Desk => self.processing.n_avrg,
            Scale::Full => self.processing.n_avrg_full,
        }
    }

    /// Transmitter spurs the frequency plan puts inside the receiver band.
    pub fn spurs(&self) -> Vec<InBandSpur> {
        match &self.frequency_plan {
            Some(plan) => {
                in_band_spurs(plan, &self.power_model.unwrap_or_else(PowerModel::sounder_default), self.if_power_dbm)
            }
            None => Vec::new(),
        }
    }

    pub fn calibration_simulator(&self, waveform: &Waveform, n: usize) -> Result<CaptureSimulator> {
        let mut imp = self.impairments.clone();
        if self.calibration.noiseless {
            imp.snr_db_per_snapshot = None;
        }
        CaptureSimulator::with_spurs(
            waveform,
            &back_to_back_channel(self.calibration.attenuation_db)?,
            &imp,
            n,
            &self.spurs(),
            CALIBRATION_CAPTURE,
        )
    }

    pub fn measurement_simulator(&self, waveform: &Waveform, n: usize) -> Result<CaptureSimulator> {
        let mut imp = self.impairments.clone();
        imp.chain.trigger_offset_s += self.calibration.trigger_offset_error_s;
        CaptureSimulator::with_spurs(waveform, &self.taps, &imp, n, &self.spurs(), MEASUREMENT_CAPTURE)
    }

    /// Calibration profile from a simulated back-to-back capture.
    pub fn calibrate(&self, waveform: &Waveform, n: usize) -> Result<CalibrationProfile> {
        let sim = self.calibration_simulator(waveform, n)?;
        let config = ProcessingConfig { window: WindowSpec::Rectangular, ..self.processing.config() };
        let processed =
            SoundingProcessor::new(waveform, None, config)?.process(n, |i, buf| sim.snapshot_into(i, buf))?;
        CalibrationProfile::from_capture(&processed, self.calibration.attenuation_db)
    }

    /// Metrics of a processed capture, with the scenario's taps as the known
    /// propagation paths.
    pub fn evaluate(&self, processed: &ProcessedCapture, scale: Scale) -> Result<ScenarioReport> {
        let ir = &processed.averaged;
        let known = known_paths_from_taps(&self.taps, ir);
        let mut metrics = compute_metrics(ir, &self.metrics, Some(&known))?;
        metrics.gain_budget = Some(gain_budget(self.waveform.n_tones as u64, processed.n_averaged as u64)?);
        let mut excl = known_paths_from_taps(&self.taps, &processed.first);
        excl.push(metrics.main_peak);
        let single = noise_floor(&processed.first, &excl, self.metrics.guard_bins)?.level_db;
        let mut report = ScenarioReport {
            scenario: self.name.clone(),
            scale,
            seed: self.impairments.seed,
            n_avrg: processed.n_averaged,
            averaging_gain_db: single - metrics.noise_floor_db,
            single_snapshot_floor_db: single,
            metrics,
            low_snr_groups: processed.low_snr_groups,
            checks: Vec::new(),
        };
        if let Some(expected) = &self.expected_metrics {
            let table = match scale {
                Scale::Desk => &expected.desk,
                Scale::Full => &expected.full,
            };
            report.checks = table
                .iter()
                .map(|(&metric, e)| {
                    let value = report.value(metric);
                    Check {
                        metric,
                        value,
                        expected: e.value,
                        tolerance: e.tolerance,
                        pass: value.is_some_and(|v| (v - e.value).abs() <= e.tolerance),
                    }
                })
                .collect();
        }
        Ok(report)
    }

    /// Runs calibration, measurement and evaluation. `n_override` replaces
    /// the averaging count of the chosen scale.
    pub fn run(&self, scale: Scale, n_override: Option<usize>) -> Result<ScenarioRun> {
        self.run_with_waveform(self.waveform.build()?, scale, n_override)
    }

    pub fn run_with_waveform(
        &self,
        waveform: Waveform,
        scale: Scale,
        n_override: Option<usize>,
    ) -> Result<ScenarioRun> {
        self.validate()?;
        if waveform.grid != self.waveform.grid()? {
            return invalid("waveform grid does not match the scenario");
        }
        let n = n_override.unwrap_or_else(|| self.n_avrg(scale));
        if n == 0 {
            return invalid("averaging count must be at least 1");
        }
        let n_cal = self.calibration.n_avrg.unwrap_or(n);
        let calibration = self.calibrate(&waveform, n_cal)?;
        let sim = self.measurement_simulator(&waveform, n)?;
        let processed = SoundingProcessor::new(&waveform, Some(&calibration), self.processing.config())?
            .process(n, |i, buf| sim.snapshot_into(i, buf))?;
        let report = self.evaluate(&processed, scale)?;
        Ok(ScenarioRun { waveform, calibration, processed, report })
    }
}
