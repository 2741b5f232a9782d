//! Figures of merit read off a processed impulse response: multipath
//! components, mean noise level, dynamic range and maximum measurable path
//! loss.

use serde::{Deserialize, Serialize};

use crate::airsim::ChannelTap;
use crate::dsp::{GainBudget, ImpulseResponse};
use crate::error::{invalid, Error, Result};
use crate::units::{power_db, MIN_LEVEL_DB, SPEED_OF_LIGHT};

pub const DEFAULT_GUARD_BINS: usize = 20;
pub const DEFAULT_MIN_PROMINENCE_DB: f64 = 6.0;

/// Smallest fraction of taps that must remain for a noise estimate.
const MIN_NOISE_FRACTION: f64 = 0.1;

/// One resolved propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    pub delay_s: f64,
    /// Level relative to the main peak, dB.
    pub relative_power_db: f64,
    /// Level on the impulse-response scale, dB.
    pub level_db: f64,
    pub distance_m: f64,
    pub is_main: bool,
    /// Interpolated tap index.
    pub bin: f64,
}

/// Largest local maximum not attributed to a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spur {
    pub delay_s: f64,
    pub level_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    /// Mean level on the impulse-response scale, dB.
    pub level_db: f64,
    /// Mean level relative to the main peak, dB.
    pub relative_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicRange {
    pub dynamic_range_db: f64,
    pub spur: Spur,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirMetrics {
    pub main_peak: Mpc,
    pub mpcs: Vec<Mpc>,
    pub noise_floor_db: f64,
    pub noise_floor_rel_main_db: f64,
    pub dynamic_range_db: f64,
    /// Present for calibrated impulse responses only.
    pub mmpl_db: Option<f64>,
    pub spur: Spur,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_budget: Option<GainBudget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub min_prominence_db: f64,
    pub guard_bins: usize,
    /// Measure prominence from the expected largest noise sample,
    /// `ln(n)` times the mean, instead of from the mean. Without it a
    /// 6 dB threshold accepts about 2% of pure-noise taps as paths.
    pub above_noise_maximum: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            min_prominence_db: DEFAULT_MIN_PROMINENCE_DB,
            guard_bins: DEFAULT_GUARD_BINS,
            above_noise_maximum: true,
        }
    }
}

impl MetricsConfig {
    fn effective_prominence_db(&self, n: usize) -> f64 {
        if self.above_noise_maximum && n > 2 {
            self.min_prominence_db + 10.0 * (n as f64).ln().log10()
        } else {
            self.min_prominence_db
        }
    }
}

pub fn delay_to_distance(delay_s: f64) -> f64 {
    SPEED_OF_LIGHT * delay_s
}

fn circ_dist(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Vertex of the parabola through the log-power of taps `i-1, i, i+1`:
/// (offset in taps within ±0.5, level dB).
pub fn parabolic_peak(p_db: &[f64], i: usize) -> (f64, f64) {
    let n = p_db.len();
    if n < 3 {
        return (0.0, p_db[i]);
    }
    let (a, b, c) = (p_db[(i + n - 1) % n], p_db[i], p_db[(i + 1) % n]);
    let den = a - 2.0 * b + c;
    if !(den < 0.0) {
        return (0.0, b);
    }
    let delta = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
    (delta, b - 0.25 * (a - c) * delta)
}

fn is_local_max(p: &[f64], i: usize) -> bool {
    let n = p.len();
    if n < 3 {
        return true;
    }
    let (prev, next) = (p[(i + n - 1) % n], p[(i + 1) % n]);
    p[i] > prev && p[i] >= next
}

fn mpc_at(ir: &ImpulseResponse, p_db: &[f64], i: usize, main_db: f64, is_main: bool) -> Mpc {
    let (delta, level) = parabolic_peak(p_db, i);
    let n = ir.len() as f64;
    let bin = (i as f64 + delta).rem_euclid(n);
    let delay_s = ir.delay_s(bin);
    Mpc {
        delay_s,
        relative_power_db: if is_main { 0.0 } else { level - main_db },
        level_db: level,
        distance_m: delay_to_distance(delay_s),
        is_main,
        bin,
    }
}

fn main_level(ir: &ImpulseResponse, p_db: &[f64]) -> (usize, f64) {
    let i = ir.argmax();
    (i, parabolic_peak(p_db, i).1)
}

fn detect_with_floor(ir: &ImpulseResponse, p: &[f64], floor: f64, prominence_db: f64, guard: usize) -> Vec<usize> {
    let n = p.len();
    let threshold = floor * 10f64.powf(prominence_db / 10.0);
    let mut candidates: Vec<usize> = (0..n).filter(|&i| p[i] > threshold && is_local_max(p, i)).collect();
    let global = ir.argmax();
    if p[global] > threshold && !candidates.contains(&global) {
        candidates.push(global);
    }
    candidates.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| circ_dist(a, c, n) >= guard.max(1)) {
            accepted.push(c);
        }
    }
    accepted
}

fn mean_outside(p: &[f64], centres: &[usize], guard: usize) -> (f64, usize) {
    let n = p.len();
    let mut sum = 0.0;
    let mut count = 0;
    for (i, &v) in p.iter().enumerate() {
        if centres.iter().all(|&c| circ_dist(c, i, n) > guard) {
            sum += v;
            count += 1;
        }
    }
    (if count > 0 { sum / count as f64 } else { 0.0 }, count)
}

/// Local maxima standing `min_prominence_db` above the mean noise level,
/// at least `guard_bins` apart, sorted by delay. The strongest is marked as
/// the main peak.
pub fn detect_peaks(ir: &ImpulseResponse, min_prominence_db: f64, guard_bins: usize) -> Vec<Mpc> {
    if ir.is_empty() {
        return Vec::new();
    }
    let p = ir.power();
    let p_db = ir.power_db();
    let mut sorted = p.clone();
    sorted.sort_by(f64::total_cmp);
    let rough = sorted[sorted.len() / 2] / std::f64::consts::LN_2;
    let first = detect_with_floor(ir, &p, rough, min_prominence_db, guard_bins);
    let (floor, count) = mean_outside(&p, &first, guard_bins);
    let floor = if count > 0 { floor } else { rough };
    let mut idx = detect_with_floor(ir, &p, floor, min_prominence_db, guard_bins);
    if idx.is_empty() {
        return Vec::new();
    }
    let (main_i, main_db) = main_level(ir, &p_db);
    idx.sort_unstable();
    idx.iter().map(|&i| mpc_at(ir, &p_db, i, main_db, i == main_i)).collect()
}

fn centres(ir: &ImpulseResponse, paths: &[Mpc]) -> Vec<usize> {
    let n = ir.len();
    paths
        .iter()
        .map(|m| ((m.delay_s - ir.t0_offset_s) / ir.delay_step_s).round().rem_euclid(n as f64) as usize % n)
        .collect()
}

/// Mean power over taps farther than `guard_bins` from every exclusion.
pub fn noise_floor(ir: &ImpulseResponse, exclusions: &[Mpc], guard_bins: usize) -> Result<NoiseFloor> {
    if ir.is_empty() {
        return invalid("empty impulse response");
    }
    let p = ir.power();
    let (mean, count) = mean_outside(&p, &centres(ir, exclusions), guard_bins);
    if (count as f64) < MIN_NOISE_FRACTION * p.len() as f64 {
        return Err(Error::InsufficientNoiseRegion { remaining: count, total: p.len() });
    }
    let (_, main_db) = main_level(ir, &ir.power_db());
    let level_db = power_db(mean);
    Ok(NoiseFloor { level_db, relative_db: level_db - main_db })
}

/// Main-peak level minus the largest local maximum outside the guard
/// windows of the main peak and of `known_paths`.
pub fn dynamic_range(ir: &ImpulseResponse, known_paths: &[Mpc], guard_bins: usize) -> Result<DynamicRange> {
    if ir.is_empty() {
        return invalid("empty impulse response");
    }
    let n = ir.len();
    let p = ir.power();
    let p_db = ir.power_db();
    let (main_i, main_db) = main_level(ir, &p_db);
    let mut excl = centres(ir, known_paths);
    excl.push(main_i);
    let free: Vec<usize> = (0..n).filter(|&i| excl.iter().all(|&c| circ_dist(c, i, n) > guard_bins)).collect();
    if free.is_empty() {
        return invalid("no taps left outside the path guard windows");
    }
    let pick = |only_max: bool| {
        free.iter().copied().filter(|&i| !only_max || is_local_max(&p, i)).fold(None, |best: Option<usize>, i| {
            match best {
                Some(b) if p[b] >= p[i] => Some(b),
                _ => Some(i),
            }
        })
    };
    let i = pick(true).or_else(|| pick(false)).expect("free taps exist");
    let (delta, level) = if p[i] > 0.0 { parabolic_peak(&p_db, i) } else { (0.0, MIN_LEVEL_DB) };
    Ok(DynamicRange {
        dynamic_range_db: main_db - level,
        spur: Spur { delay_s: ir.delay_s((i as f64 + delta).rem_euclid(n as f64)), level_db: level },
    })
}

/// Maximum measurable path loss: the loss at which a path would be as
/// strong as the largest non-path maximum. Levels of a calibrated impulse
/// response are path gains, so this is minus that maximum's level.
pub fn mmpl(ir: &ImpulseResponse, known_paths: &[Mpc], guard_bins: usize) -> Result<f64> {
    if !ir.calibrated {
        return invalid("maximum measurable path loss needs a calibrated impulse response");
    }
    Ok(-dynamic_range(ir, known_paths, guard_bins)?.spur.level_db)
}

/// Known paths from a channel description; artifact taps are left out so
/// that they count against the dynamic range.
pub fn known_paths_from_taps(taps: &[ChannelTap], ir: &ImpulseResponse) -> Vec<Mpc> {
    let p_db = ir.power_db();
    let (_, main_db) = main_level(ir, &p_db);
    taps.iter()
        .filter(|t| !t.artifact)
        .map(|t| {
            let level = t.gain_db;
            Mpc {
                delay_s: t.delay_s,
                relative_power_db: level - main_db,
                level_db: level,
                distance_m: delay_to_distance(t.delay_s),
                is_main: false,
                bin: (t.delay_s - ir.t0_offset_s) / ir.delay_step_s,
            }
        })
        .collect()
}

/// All metrics of one impulse response. `known_paths` overrides the
/// detected peaks when deciding what counts as a propagation path.
pub fn compute_metrics(ir: &ImpulseResponse, cfg: &MetricsConfig, known_paths: Option<&[Mpc]>) -> Result<CirMetrics> {
    let mpcs = detect_peaks(ir, cfg.effective_prominence_db(ir.len()), cfg.guard_bins);
    let main_peak = *mpcs
        .iter()
        .find(|m| m.is_main)
        .ok_or_else(|| Error::InvalidArgument("no peak stands above the noise".into()))?;
    let paths: Vec<Mpc> = match known_paths {
        Some(k) => k.iter().copied().chain(std::iter::once(main_peak)).collect(),
        None => mpcs.clone(),
    };
    let mut excl = paths.clone();
    excl.extend(mpcs.iter().copied());
    let floor = noise_floor(ir, &excl, cfg.guard_bins)?;
    let dr = dynamic_range(ir, &paths, cfg.guard_bins)?;
    let mmpl_db = ir.calibrated.then(|| -dr.spur.level_db);
    Ok(CirMetrics {
        main_peak,
        mpcs,
        noise_floor_db: floor.level_db,
        noise_floor_rel_main_db: floor.relative_db,
        dynamic_range_db: dr.dynamic_range_db,
        mmpl_db,
        spur: dr.spur,
        gain_budget: None,
    })
}
