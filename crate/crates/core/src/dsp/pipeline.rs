use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    to_impulse_response, CalibrationProfile, FrEstimator, FrequencyResponse, ImpulseResponse, WindowSpec,
    MIN_TRACKING_PROMINENCE_DB, REDUCTION_BLOCK,
};
use crate::airsim::SnapshotSet;
use crate::error::{invalid, Result};
use crate::waveform::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessingConfig {
    pub window: WindowSpec,
    pub track_phase: bool,
    /// Snapshots averaged before each phase estimate.
    pub pre_average: usize,
    /// Tap used as the phase reference; defaults to the strongest tap of the
    /// first group.
    pub ref_bin: Option<usize>,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        ProcessingConfig { window: WindowSpec::chebyshev(80.0), track_phase: true, pre_average: 1, ref_bin: None }
    }
}

impl ProcessingConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if self.pre_average == 0 {
            return invalid("pre-averaging group size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedCapture {
    /// Mean calibrated, phase-corrected response before windowing.
    pub averaged_fr: FrequencyResponse,
    /// Windowed impulse response of `averaged_fr`.
    pub averaged: ImpulseResponse,
    /// Windowed impulse response of the first snapshot alone.
    pub first: ImpulseResponse,
    /// Phase removed from each group, radians (empty when not tracking).
    pub phases_rad: Vec<f64>,
    pub ref_bin: usize,
    pub n_averaged: usize,
    pub low_snr_groups: usize,
}

/// Streaming correlation processor.
///
/// Snapshots are turned into calibrated responses, phase-corrected on the
/// reference tap and summed in the frequency domain; only one response per
/// worker is held in memory. Groups are reduced in fixed blocks, so results
/// are identical for any thread count.
#[derive(Debug, Clone)]
pub struct SoundingProcessor {
    estimator: FrEstimator,
    inv_cal: Option<Vec<Complex64>>,
    window: Vec<f64>,
    config: ProcessingConfig,
}

struct Scratch {
    samples: Vec<Complex64>,
    fr: Vec<Complex64>,
}

impl SoundingProcessor {
    pub fn new(reference: &Waveform, cal: Option<&CalibrationProfile>, config: ProcessingConfig) -> Result<Self> {
        config.validate()?;
        let estimator = FrEstimator::new(reference)?;
        let inv_cal = match cal {
            Some(c) => {
                if c.system_fr.grid != reference.grid {
                    return invalid(format!(
                        "calibration grid ({} tones, {} samples) does not match the waveform ({} tones, {} samples)",
                        c.system_fr.grid.n_tones,
                        c.system_fr.grid.n_samples,
                        reference.grid.n_tones,
                        reference.grid.n_samples
                    ));
                }
                Some(c.inverse())
            }
            None => None,
        };
        Ok(SoundingProcessor {
            window: config.window.coefficients(reference.grid.n_tones)?,
            estimator,
            inv_cal,
            config,
        })
    }

    pub fn config(&self) -> &ProcessingConfig {
        &self.config
    }

    fn scratch(&self) -> Scratch {
        let g = self.estimator.grid();
        Scratch { samples: vec![Complex64::new(0.0, 0.0); g.n_samples], fr: vec![Complex64::new(0.0, 0.0); g.n_tones] }
    }

    /// Calibrated response of snapshot `i` added onto `acc`.
    fn accumulate<F>(&self, i: usize, source: &F, s: &mut Scratch, acc: &mut [Complex64])
    where
        F: Fn(usize, &mut [Complex64]) + Sync,
    {
        source(i, &mut s.samples);
        self.estimator.estimate_into(&mut s.samples, &mut s.fr);
        match &self.inv_cal {
            Some(inv) => {
                for ((a, f), c) in acc.iter_mut().zip(&s.fr).zip(inv) {
                    *a += f * c;
                }
            }
            None => acc.iter_mut().zip(&s.fr).for_each(|(a, f)| *a += f),
        }
    }

    fn windowed_ir(&self, bins: &[Complex64], scale: f64) -> ImpulseResponse {
        let fr = FrequencyResponse {
            bins: bins.iter().zip(&self.window).map(|(b, w)| b * w * scale).collect(),
            grid: *self.estimator.grid(),
            center_offset_hz: 0.0,
        };
        to_impulse_response(&fr, self.inv_cal.is_some())
    }

    /// Steering vector giving the windowed impulse-response tap at `bin`.
    fn steering(&self, bin: usize) -> Vec<Complex64> {
        let g = self.estimator.grid();
        let n = g.n_samples as f64;
        g.active_offsets()
            .zip(&self.window)
            .map(|(o, w)| {
                let turns = ((o * bin as i64).rem_euclid(g.n_samples as i64)) as f64 / n;
                Complex64::from_polar(w / g.n_tones as f64, 2.0 * std::f64::consts::PI * turns)
            })
            .collect()
    }

    /// Processes `n_snapshots` snapshots produced by `source(index, buffer)`.
    pub fn process<F>(&self, n_snapshots: usize, source: F) -> Result<ProcessedCapture>
    where
        F: Fn(usize, &mut [Complex64]) + Sync,
    {
        if n_snapshots == 0 {
            return invalid("no snapshots to process");
        }
        let g = *self.estimator.grid();
        let m = self.config.pre_average;
        let n_groups = n_snapshots.div_ceil(m);
        let zero = Complex64::new(0.0, 0.0);

        let mut s = self.scratch();
        let mut first_fr = vec![zero; g.n_tones];
        self.accumulate(0, &source, &mut s, &mut first_fr);
        let mut first_group = first_fr.clone();
        for i in 1..m.min(n_snapshots) {
            self.accumulate(i, &source, &mut s, &mut first_group);
        }
        let ref_bin = match self.config.ref_bin {
            Some(b) if b < g.n_samples => b,
            Some(b) => return invalid(format!("reference bin {b} outside {} taps", g.n_samples)),
            None => self.windowed_ir(&first_group, 1.0).argmax(),
        };
        let steer = self.steering(ref_bin);
        let track = self.config.track_phase;
        let prominence = 10f64.powf(MIN_TRACKING_PROMINENCE_DB / 10.0);
        let w2: f64 = self.window.iter().map(|w| w * w).sum();

        // Phase and reliability of a group sum's reference tap.
        let tap_phase = |acc: &[Complex64]| -> (f64, bool) {
            let tap: Complex64 = acc.iter().zip(&steer).map(|(a, s)| a * s).sum();
            let mean = acc.iter().map(|v| v.norm_sqr()).sum::<f64>() * w2
                / (g.n_tones as f64 * (g.n_tones * g.n_tones) as f64);
            (tap.arg(), tap.norm_sqr() < mean * prominence)
        };

        let blocks: Vec<(Vec<Complex64>, Vec<f64>, usize)> = (0..n_groups.div_ceil(REDUCTION_BLOCK))
            .into_par_iter()
            .map_init(
                || self.scratch(),
                |s, b| {
                    let mut total = vec![zero; g.n_tones];
                    let mut group = vec![zero; g.n_tones];
                    let mut phases = Vec::new();
                    let mut low = 0;
                    for grp in b * REDUCTION_BLOCK..((b + 1) * REDUCTION_BLOCK).min(n_groups) {
                        group.iter_mut().for_each(|v| *v = zero);
                        for i in grp * m..((grp + 1) * m).min(n_snapshots) {
                            self.accumulate(i, &source, s, &mut group);
                        }
                        if track {
                            let (phase, weak) = tap_phase(&group);
                            let rot = Complex64::from_polar(1.0, -phase);
                            total.iter_mut().zip(&group).for_each(|(t, v)| *t += v * rot);
                            phases.push(phase);
                            low += weak as usize;
                        } else {
                            total.iter_mut().zip(&group).for_each(|(t, v)| *t += v);
                        }
                    }
                    (total, phases, low)
                },
            )
            .collect();

        let mut sum = vec![zero; g.n_tones];
        let mut phases_rad = Vec::new();
        let mut low_snr_groups = 0;
        for (total, phases, low) in blocks {
            sum.iter_mut().zip(&total).for_each(|(a, t)| *a += t);
            phases_rad.extend(phases);
            low_snr_groups += low;
        }
        if low_snr_groups > 0 {
            warn!(
                "phase tracking: {low_snr_groups} of {n_groups} group(s) with a reference tap less than \
                 {MIN_TRACKING_PROMINENCE_DB} dB above the mean level; increase pre-averaging"
            );
        }
        let scale = 1.0 / n_snapshots as f64;
        sum.iter_mut().for_each(|v| *v *= scale);

        if track {
            let (phase, _) = tap_phase(&first_fr);
            let rot = Complex64::from_polar(1.0, -phase);
            first_fr.iter_mut().for_each(|v| *v *= rot);
        }
        let first = self.windowed_ir(&first_fr, 1.0);
        let averaged = self.windowed_ir(&sum, 1.0);
        Ok(ProcessedCapture {
            averaged_fr: FrequencyResponse { bins: sum, grid: g, center_offset_hz: 0.0 },
            averaged,
            first,
            phases_rad,
            ref_bin,
            n_averaged: n_snapshots,
            low_snr_groups,
        })
    }

    /// Processes the first `n` (default: all) rows of a snapshot set.
    pub fn process_set(&self, set: &SnapshotSet, n: Option<usize>) -> Result<ProcessedCapture> {
        let g = self.estimator.grid();
        if set.n_samples != g.n_samples {
            return invalid(format!(
                "snapshots have {} samples, the waveform period has {}",
                set.n_samples, g.n_samples
            ));
        }
        let n = n.unwrap_or(set.n_snapshots);
        if n > set.n_snapshots {
            return invalid(format!("{n} averages requested from {} snapshots", set.n_snapshots));
        }
        self.process(n, |i, buf| buf.copy_from_slice(set.row(i)))
    }
}
