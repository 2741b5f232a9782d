//! Crest-factor reduction by tone-phase optimization.
//!
//! Two engines share one contract: only the phases (and, for clip/restore,
//! magnitudes within a ripple bound) of the active tones change, nothing is
//! ever placed outside the active set, and the lowest crest factor seen is
//! what gets returned.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{envelope_crest_db, synthesize_period, Waveform};
use crate::error::{invalid, Result};
use crate::fft::{bin_index, FftPair};
use crate::optim::lbfgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrestMethod {
    /// Quasi-Newton descent on the tone phases of a p-norm envelope
    /// objective, with p raised stage by stage towards the peak norm.
    #[default]
    PNorm,
    /// Alternating envelope clipping and in-band restoration with a linearly
    /// annealed clip level.
    ClipRestore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrestOptConfig {
    pub method: CrestMethod,
    pub max_iterations: usize,
    pub target_cf_db: f64,
    /// Clip level relative to RMS at the first clip/restore iteration.
    pub clip_level: f64,
    /// Clip level relative to RMS at the last clip/restore iteration.
    pub clip_level_final: f64,
    pub oversample_factor: usize,
    pub tolerance_db: f64,
    /// Allowed in-band magnitude deviation, ± dB.
    pub max_ripple_db: f64,
}

impl Default for CrestOptConfig {
    fn default() -> Self {
        CrestOptConfig {
            method: CrestMethod::PNorm,
            max_iterations: 1200,
            target_cf_db: 0.3,
            clip_level: 1.6,
            clip_level_final: 1.05,
            oversample_factor: 8,
            tolerance_db: 1e-3,
            max_ripple_db: 0.5,
        }
    }
}

impl CrestOptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return invalid("max_iterations must be at least 1");
        }
        if self.oversample_factor < 4 {
            return invalid("oversample_factor must be at least 4");
        }
        if !(self.clip_level > 0.0) || !(self.clip_level_final > 0.0) {
            return invalid("clip levels must be positive");
        }
        if !(self.max_ripple_db >= 0.0) || !(self.tolerance_db >= 0.0) {
            return invalid("ripple and tolerance must be non-negative");
        }
        Ok(())
    }
}

const PNORM_STAGES: [f64; 8] = [4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0];

/// Oversampled synthesis of a tone set; keeps the FFT plan and bin map.
struct Synth {
    bins: Vec<usize>,
    fft: FftPair,
    buf: Vec<Complex64>,
}

impl Synth {
    fn new(w: &Waveform, oversample: usize) -> Self {
        let m = w.grid.n_samples * oversample;
        Synth {
            bins: w.grid.active_offsets().map(|o| bin_index(o, m)).collect(),
            fft: FftPair::new(m),
            buf: vec![Complex64::new(0.0, 0.0); m],
        }
    }

    fn fill(&mut self, tones: &[Complex64]) {
        self.buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (&b, &t) in self.bins.iter().zip(tones) {
            self.buf[b] = t;
        }
        self.fft.inverse_unscaled(&mut self.buf);
    }

    fn crest_db(&mut self, tones: &[Complex64]) -> f64 {
        self.fill(tones);
        envelope_crest_db(&self.buf).unwrap_or(f64::INFINITY)
    }
}

/// Lowers the crest factor of `w` by re-phasing its tones.
///
/// Returns `w` unchanged when no iterate beats its crest factor.
pub fn optimize_crest(w: &Waveform, cfg: &CrestOptConfig) -> Result<Waveform> {
    cfg.validate()?;
    w.grid.validate()?;
    let initial_cf = w.crest_factor(cfg.oversample_factor)?;
    if initial_cf <= cfg.target_cf_db {
        return Ok(w.clone());
    }

    let n = w.grid.n_samples as f64;
    let tones: Vec<Complex64> = w.active_spectrum().into_iter().map(|v| v / n).collect();
    let mut synth = Synth::new(w, cfg.oversample_factor);

    let (best_tones, best_cf) = match cfg.method {
        CrestMethod::PNorm => pnorm_descent(&tones, &mut synth, cfg, initial_cf),
        CrestMethod::ClipRestore => clip_restore(&tones, &mut synth, cfg, initial_cf),
    };
    log::debug!("crest factor {initial_cf:.3} dB -> {best_cf:.3} dB");
    if best_cf >= initial_cf {
        return Ok(w.clone());
    }

    let mut out = synthesize_period(&best_tones, &w.grid)?;
    out.root = w.root;
    out.crest_factor_db = out.crest_factor(super::DEFAULT_CF_OVERSAMPLE)?;
    Ok(out)
}

fn with_phases(mags: &[f64], phases: &[f64]) -> Vec<Complex64> {
    mags.iter().zip(phases).map(|(&m, &p)| Complex64::from_polar(m, p)).collect()
}

/// `ln` of the p-norm of the oversampled envelope (normalized to the RMS) and
/// its gradient with respect to the tone phases.
fn pnorm_objective(synth: &mut Synth, mags: &[f64], p: f64, phases: &[f64], grad: &mut [f64]) -> f64 {
    let rms = mags.iter().map(|a| a * a).sum::<f64>().sqrt();
    let z = with_phases(mags, phases);
    synth.fill(&z);
    let Synth { bins, fft, buf: x } = synth;
    let m = x.len() as f64;
    let amax = x.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max).sqrt() / rms;
    let mut acc = 0.0;
    for v in x.iter_mut() {
        let r = v.norm() / rms / amax;
        acc += r.powf(p);
        *v *= r.powf(p - 2.0);
    }
    let mean_rp = acc / m;
    fft.forward(x);
    let denom = m * rms * rms * amax * amax * mean_rp;
    for ((gk, zk), &b) in grad.iter_mut().zip(&z).zip(bins.iter()) {
        *gk = -(zk * x[b].conj()).im / denom;
    }
    amax.ln() + mean_rp.ln() / p
}

fn pnorm_descent(
    tones: &[Complex64],
    synth: &mut Synth,
    cfg: &CrestOptConfig,
    initial_cf: f64,
) -> (Vec<Complex64>, f64) {
    let mags: Vec<f64> = tones.iter().map(|t| t.norm()).collect();
    let mut phases: Vec<f64> = tones.iter().map(|t| t.arg()).collect();
    let mut best = (tones.to_vec(), initial_cf);
    let per_stage = (cfg.max_iterations / PNORM_STAGES.len()).max(1);
    let mut stalled_stages = 0;

    // Separate synthesizer for CF bookkeeping inside the iterate callback.
    let mut probe = Synth { bins: synth.bins.clone(), fft: synth.fft.clone(), buf: synth.buf.clone() };

    for &p in PNORM_STAGES.iter() {
        let stage_start = best.1;
        let mut reached = false;
        let objective = |th: &[f64], grad: &mut [f64]| pnorm_objective(synth, &mags, p, th, grad);
        let outcome = lbfgs(objective, phases.clone(), per_stage, 8, |th| {
            let z = with_phases(&mags, th);
            let cf = probe.crest_db(&z);
            if cf < best.1 {
                best = (z, cf);
            }
            if best.1 <= cfg.target_cf_db {
                reached = true;
                return false;
            }
            true
        });
        log::debug!(
            "p-norm stage p={p}: objective {:.6} after {} iterations, best CF {:.3} dB",
            outcome.value,
            outcome.iterations,
            best.1
        );
        phases = outcome.x;
        if reached {
            break;
        }
        if stage_start - best.1 < cfg.tolerance_db {
            stalled_stages += 1;
            if stalled_stages >= 2 {
                break;
            }
        } else {
            stalled_stages = 0;
        }
    }
    best
}

fn clip_restore(
    tones: &[Complex64],
    synth: &mut Synth,
    cfg: &CrestOptConfig,
    initial_cf: f64,
) -> (Vec<Complex64>, f64) {
    let nominal: Vec<f64> = tones.iter().map(|t| t.norm()).collect();
    let (lo, hi) = (10f64.powf(-cfg.max_ripple_db / 20.0), 10f64.powf(cfg.max_ripple_db / 20.0));
    let mut current = tones.to_vec();
    let mut best = (current.clone(), initial_cf);
    let iters = cfg.max_iterations;

    for it in 0..iters {
        let frac = if iters > 1 { it as f64 / (iters - 1) as f64 } else { 1.0 };
        let level = cfg.clip_level + (cfg.clip_level_final - cfg.clip_level) * frac;
        synth.fill(&current);
        let Synth { bins, fft, buf: x } = &mut *synth;
        let rms = (x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64).sqrt();
        let limit = level * rms;
        for v in x.iter_mut() {
            let a = v.norm();
            if a > limit {
                *v *= limit / a;
            }
        }
        fft.forward(x);
        let m = x.len() as f64;
        for ((t, &b), &nom) in current.iter_mut().zip(bins.iter()).zip(&nominal) {
            let v = x[b] / m;
            let mag = v.norm().clamp(nom * lo, nom * hi);
            *t = if v.norm() > 0.0 { v * (mag / v.norm()) } else { Complex64::new(mag, 0.0) };
        }
        let cf = synth.crest_db(&current);
        if cf < best.1 {
            best = (current.clone(), cf);
        }
        if best.1 <= cfg.target_cf_db {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{generate_fzc, ToneGrid};

    fn small_grid() -> ToneGrid {
        ToneGrid::new(64, 96e6, 64e6).unwrap()
    }

    #[test]
    fn already_flat_input_is_returned_unchanged() {
        let grid = ToneGrid { n_tones: 1, tone_spacing_hz: 1.0, sample_rate_hz: 8.0, n_samples: 8 };
        let w = synthesize_period(&[Complex64::new(1.0, 0.0)], &grid).unwrap();
        let out = optimize_crest(&w, &CrestOptConfig::default()).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn config_validation() {
        assert!(CrestOptConfig { oversample_factor: 2, ..Default::default() }.validate().is_err());
        assert!(CrestOptConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn both_methods_reduce_cf_and_keep_support() {
        let grid = small_grid();
        let w = synthesize_period(&generate_fzc(64, 1).unwrap(), &grid).unwrap();
        for method in [CrestMethod::PNorm, CrestMethod::ClipRestore] {
            let cfg = CrestOptConfig { method, max_iterations: 300, target_cf_db: 0.0, ..Default::default() };
            let out = optimize_crest(&w, &cfg).unwrap();
            assert!(out.crest_factor(8).unwrap() <= w.crest_factor(8).unwrap());
            assert!(out.out_of_band_db() <= -60.0, "{method:?}");
            let mags: Vec<f64> = out.active_spectrum().iter().map(|v| v.norm()).collect();
            let mean = mags.iter().sum::<f64>() / mags.len() as f64;
            for m in mags {
                assert!((20.0 * (m / mean).log10()).abs() <= 2.0 * cfg.max_ripple_db + 1e-9);
            }
        }
    }

    #[test]
    fn pnorm_gradient_matches_finite_differences() {
        let grid = small_grid();
        let w = synthesize_period(&generate_fzc(64, 1).unwrap(), &grid).unwrap();
        let mut synth = Synth::new(&w, 4);
        let tones: Vec<Complex64> = w.active_spectrum().iter().map(|v| v / 96.0).collect();
        let mags: Vec<f64> = tones.iter().map(|t| t.norm()).collect();
        let th: Vec<f64> = tones.iter().map(|t| t.arg()).collect();
        let mut value = |th: &[f64], grad: &mut [f64]| pnorm_objective(&mut synth, &mags, 8.0, th, grad);
        let mut g = vec![0.0; 64];
        let mut scratch = vec![0.0; 64];
        value(&th, &mut g);
        for k in [0usize, 7, 31, 63] {
            let h = 1e-6;
            let mut plus = th.clone();
            plus[k] += h;
            let mut minus = th.clone();
            minus[k] -= h;
            let fd = (value(&plus, &mut scratch) - value(&minus, &mut scratch)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "k={k} fd={fd} g={}", g[k]);
        }
    }
}
