//! Correlation processing: frequency-response estimation against the known
//! sounding period, back-to-back calibration, frequency-domain windowing,
//! main-peak phase tracking and coherent averaging.
//!
//! All frequency responses live on the active tones of a [`ToneGrid`]. The
//! impulse response is scaled so that a flat, unit response gives a unit
//! peak; levels in dB are therefore path gains once the chain is calibrated.

mod calibration;
mod correlation;
mod pipeline;
mod window;

pub use calibration::{calibrate, CalibrationProfile, CLAMP_BELOW_MEDIAN_DB};
pub use correlation::{circular_xcorr, circular_xcorr_direct};
pub use pipeline::{ProcessedCapture, ProcessingConfig, SoundingProcessor};
pub use window::{chebyshev_window, WindowSpec};

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::{bin_index, FftPair};
use crate::units::power_db;
use crate::waveform::{ToneGrid, Waveform};

/// Peaks less than this far above the snapshot's mean level make the phase
/// estimate unreliable.
pub const MIN_TRACKING_PROMINENCE_DB: f64 = 6.0;

/// Reference bins weaker than this fraction of the median are unusable.
const DEGENERATE_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBudget {
    pub g_corr_db: f64,
    pub g_avrg_db: f64,
    pub g_proc_db: f64,
}

/// Correlation gain of an `n_seq`-tone sequence and averaging gain of
/// `n_avrg` coherent snapshots.
pub fn gain_budget(n_seq: u64, n_avrg: u64) -> Result<GainBudget> {
    if n_seq == 0 || n_avrg == 0 {
        return invalid("gain budget needs at least one tone and one snapshot");
    }
    let g_corr_db = 10.0 * (n_seq as f64).log10();
    let g_avrg_db = 10.0 * (n_avrg as f64).log10();
    Ok(GainBudget { g_corr_db, g_avrg_db, g_proc_db: g_corr_db + g_avrg_db })
}

/// Complex response on the active tones, lowest frequency first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub bins: Vec<Complex64>,
    pub grid: ToneGrid,
    /// Band centre relative to the receiver IF, Hz.
    pub center_offset_hz: f64,
}

impl FrequencyResponse {
    pub fn new(bins: Vec<Complex64>, grid: ToneGrid) -> Result<Self> {
        grid.validate()?;
        if bins.len() != grid.n_tones {
            return invalid(format!("{} bins supplied for {} tones", bins.len(), grid.n_tones));
        }
        if bins.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("frequency response contains non-finite values");
        }
        Ok(FrequencyResponse { bins, grid, center_offset_hz: 0.0 })
    }

    pub fn ones(grid: ToneGrid) -> Self {
        FrequencyResponse { bins: vec![Complex64::new(1.0, 0.0); grid.n_tones], grid, center_offset_hz: 0.0 }
    }

    pub fn tone_spacing_hz(&self) -> f64 {
        self.grid.tone_spacing_hz
    }

    /// Tone frequencies relative to the band centre, Hz.
    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.grid.active_offsets().map(|o| o as f64 * self.grid.tone_spacing_hz + self.center_offset_hz).collect()
    }

    fn check_same_grid(&self, other: &FrequencyResponse) -> Result<()> {
        if self.grid != other.grid {
            return invalid(format!(
                "grid mismatch: {} tones / {} samples vs {} tones / {} samples",
                self.grid.n_tones, self.grid.n_samples, other.grid.n_tones, other.grid.n_samples
            ));
        }
        Ok(())
    }
}

/// Impulse response over one sequence period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse {
    pub taps: Vec<Complex64>,
    pub delay_step_s: f64,
    pub t0_offset_s: f64,
    /// Whether levels are referred to the back-to-back calibration plane.
    pub calibrated: bool,
}

impl ImpulseResponse {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn delay_s(&self, index: f64) -> f64 {
        self.t0_offset_s + index * self.delay_step_s
    }

    pub fn power(&self) -> Vec<f64> {
        self.taps.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn power_db(&self) -> Vec<f64> {
        self.taps.iter().map(|v| power_db(v.norm_sqr())).collect()
    }

    /// Index of the strongest tap, earliest on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.taps.iter().enumerate() {
            if v.norm_sqr() > self.taps[best].norm_sqr() {
                best = i;
            }
        }
        best
    }
}

/// Divides snapshot spectra by the reference spectrum on the active tones.
#[derive(Debug, Clone)]
pub struct FrEstimator {
    fft: FftPair,
    bins: Vec<usize>,
    inv_reference: Vec<Complex64>,
    grid: ToneGrid,
}

impl FrEstimator {
    pub fn new(reference: &Waveform) -> Result<Self> {
        let grid = reference.grid;
        let spectrum = reference.active_spectrum();
        let mut mags: Vec<f64> = spectrum.iter().map(|v| v.norm()).collect();
        mags.sort_by(f64::total_cmp);
        let median = mags[mags.len() / 2];
        let weakest = mags[0];
        if !(weakest >= DEGENERATE_FRACTION * median) || median == 0.0 {
            return Err(Error::DegenerateReference(format!(
                "weakest active tone is {:.1} dB below the median",
                -20.0 * (weakest / median).log10()
            )));
        }
        Ok(FrEstimator {
            fft: FftPair::new(grid.n_samples),
            bins: grid.active_bins(),
            inv_reference: spectrum.iter().map(|v| v.inv()).collect(),
            grid,
        })
    }

    pub fn grid(&self) -> &ToneGrid {
        &self.grid
    }

    /// Writes the response of `snapshot` into `out`; `snapshot` is used as
    /// scratch and overwritten.
    pub fn estimate_into(&self, snapshot: &mut [Complex64], out: &mut [Complex64]) {
        self.fft.forward(snapshot);
        for ((o, &b), r) in out.iter_mut().zip(&self.bins).zip(&self.inv_reference) {
            *o = snapshot[b] * r;
        }
    }

    pub fn estimate(&self, snapshot: &[Complex64]) -> Result<FrequencyResponse> {
        if snapshot.len() != self.grid.n_samples {
            return invalid(format!(
                "snapshot has {} samples, reference period has {}",
                snapshot.len(),
                self.grid.n_samples
            ));
        }
        let mut scratch = snapshot.to_vec();
        let mut bins = vec![Complex64::new(0.0, 0.0); self.grid.n_tones];
        self.estimate_into(&mut scratch, &mut bins);
        FrequencyResponse::new(bins, self.grid)
    }
}

/// Response of one snapshot relative to the transmitted period.
pub fn estimate_fr(snapshot: &[Complex64], reference: &Waveform) -> Result<FrequencyResponse> {
    FrEstimator::new(reference)?.estimate(snapshot)
}

pub fn apply_window(fr: &FrequencyResponse, spec: &WindowSpec) -> Result<FrequencyResponse> {
    let w = spec.coefficients(fr.bins.len())?;
    Ok(FrequencyResponse { bins: fr.bins.iter().zip(&w).map(|(b, w)| b * w).collect(), ..fr.clone() })
}

/// Inverse DFT onto the full sampling grid with the inactive bins zeroed,
/// scaled by `1/n_tones`.
pub fn to_impulse_response(fr: &FrequencyResponse, calibrated: bool) -> ImpulseResponse {
    let n = fr.grid.n_samples;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (o, v) in fr.grid.active_offsets().zip(&fr.bins) {
        buf[bin_index(o, n)] = *v;
    }
    FftPair::new(n).inverse_unscaled(&mut buf);
    let scale = 1.0 / fr.grid.n_tones as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    ImpulseResponse { taps: buf, delay_step_s: 1.0 / fr.grid.sample_rate_hz, t0_offset_s: 0.0, calibrated }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrack {
    /// Phase removed from each snapshot, radians.
    pub phases_rad: Vec<f64>,
    pub ref_bin: usize,
    /// Groups whose reference tap stood less than
    /// [`MIN_TRACKING_PROMINENCE_DB`] above their mean level.
    pub low_snr_groups: usize,
}

/// Rotates every impulse response so that the tap at `ref_bin` (default: the
/// strongest tap of the first group) has zero phase. With `pre_average > 1`
/// the phase is estimated on the mean of each group of consecutive snapshots
/// and applied to all members.
pub fn track_phase(irs: &mut [ImpulseResponse], ref_bin: Option<usize>, pre_average: usize) -> Result<PhaseTrack> {
    if irs.is_empty() {
        return invalid("phase tracking needs at least one snapshot");
    }
    if pre_average == 0 {
        return invalid("pre-averaging group size must be at least 1");
    }
    let n = irs[0].len();
    if irs.iter().any(|ir| ir.len() != n) {
        return invalid("impulse responses differ in length");
    }
    let group_mean = |g: &[ImpulseResponse]| -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for ir in g {
            acc.iter_mut().zip(&ir.taps).for_each(|(a, t)| *a += t);
        }
        acc
    };
    let ref_bin = match ref_bin {
        Some(b) if b < n => b,
        Some(b) => return invalid(format!("reference bin {b} outside {n} taps")),
        None => {
            let first = group_mean(&irs[..pre_average.min(irs.len())]);
            (0..n).fold(0, |best, i| if first[i].norm_sqr() > first[best].norm_sqr() { i } else { best })
        }
    };
    let mut phases = Vec::with_capacity(irs.len());
    let mut low = 0;
    for group in irs.chunks_mut(pre_average) {
        let acc = group_mean(group);
        let mean_power = acc.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let tap = acc[ref_bin];
        if tap.norm_sqr() < mean_power * 10f64.powf(MIN_TRACKING_PROMINENCE_DB / 10.0) {
            low += 1;
        }
        let phase = tap.arg();
        let rot = Complex64::from_polar(1.0, -phase);
        for ir in group.iter_mut() {
            ir.taps.iter_mut().for_each(|v| *v *= rot);
            phases.push(phase);
        }
    }
    if low > 0 {
        warn!("phase tracking: {low} group(s) with a reference tap less than {MIN_TRACKING_PROMINENCE_DB} dB above the mean level; consider pre-averaging or longer sequences");
    }
    Ok(PhaseTrack { phases_rad: phases, ref_bin, low_snr_groups: low })
}

/// Number of items per block in deterministic reductions.
pub(crate) const REDUCTION_BLOCK: usize = 64;

/// Complex mean of impulse responses, summed in fixed blocks so the result
/// does not depend on the thread count.
pub fn coherent_average(irs: &[ImpulseResponse]) -> Result<ImpulseResponse> {
    use rayon::prelude::*;
    let first = irs.first().ok_or_else(|| Error::InvalidArgument("nothing to average".into()))?;
    let n = first.len();
    if irs.iter().any(|ir| ir.len() != n || ir.delay_step_s != first.delay_step_s) {
        return invalid("impulse responses are on different grids");
    }
    let partials: Vec<Vec<Complex64>> = irs
        .par_chunks(REDUCTION_BLOCK)
        .map(|block| {
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            for ir in block {
                acc.iter_mut().zip(&ir.taps).for_each(|(a, t)| *a += t);
            }
            acc
        })
        .collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for p in &partials {
        acc.iter_mut().zip(p).for_each(|(a, t)| *a += t);
    }
    let scale = 1.0 / irs.len() as f64;
    acc.iter_mut().for_each(|v| *v *= scale);
    Ok(ImpulseResponse { taps: acc, calibrated: irs.iter().all(|ir| ir.calibrated), ..first.clone() })
}
