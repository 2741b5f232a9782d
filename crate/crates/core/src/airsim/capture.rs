use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{channel_response, ChannelTap, DriftModel, ImpairmentConfig, Origin, SnapshotSet};
use crate::error::{invalid, Result};
use crate::fft::{bin_index, signed_bin, FftPair};
use crate::frequency_plan::InBandSpur;
use crate::units::db_to_power;
use crate::waveform::Waveform;

const DRIFT_STREAM: u64 = u64::MAX;

/// Mid-rise uniform quantizer with full scale ±1.
fn quantize(v: f64, bits: u32) -> f64 {
    let step = 2.0 / (1u64 << bits) as f64;
    let top = 1.0 - step / 2.0;
    (step * ((v / step).floor() + 0.5)).clamp(-top, top)
}

fn quantize_iq(v: Complex64, bits: u32) -> Complex64 {
    Complex64::new(quantize(v.re, bits), quantize(v.im, bits))
}

fn rng_for(seed: u64, capture_id: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&capture_id.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Per-snapshot common phase in radians.
fn drift_path(imp: &ImpairmentConfig, n: usize, capture_id: u64) -> Vec<f64> {
    let span = imp.phase_drift.magnitude_deg_over_measurement.to_radians();
    if span == 0.0 || n < 2 {
        return vec![0.0; n];
    }
    match imp.phase_drift.model {
        DriftModel::Linear => (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect(),
        DriftModel::Sinusoidal => {
            (0..n).map(|i| 0.5 * span * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin()).collect()
        }
        DriftModel::Wiener => {
            let mut rng = rng_for(imp.seed, capture_id, DRIFT_STREAM);
            let mut acc = 0.0;
            let mut walk: Vec<f64> = (0..n)
                .map(|i| {
                    if i > 0 {
                        acc += normal(&mut rng);
                    }
                    acc
                })
                .collect();
            let (lo, hi) = walk.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let scale = if hi > lo { span / (hi - lo) } else { 0.0 };
            walk.iter_mut().for_each(|v| *v *= scale);
            walk
        }
    }
}

/// Deterministic snapshot generator for one capture.
///
/// Every snapshot draws from its own counter-based random stream keyed by
/// `(seed, capture_id, index)`, so any subset of snapshots can be produced in
/// any order, on any number of threads, with identical results.
#[derive(Debug, Clone)]
pub struct CaptureSimulator {
    fft: FftPair,
    /// Received spectrum before drift, jitter and noise.
    base_spectrum: Vec<Complex64>,
    base_time: Vec<Complex64>,
    /// Signed frequency of every DFT bin, Hz.
    bin_freq: Vec<f64>,
    phases: Vec<f64>,
    noise_sigma: f64,
    /// Noise power each active bin contributes to an impulse-response tap per
    /// unit sample noise variance.
    noise_weight: Vec<f64>,
    jitter_rms_s: f64,
    rx_bits: Option<u32>,
    seed: u64,
    capture_id: u64,
    n_samples: usize,
    sample_rate_hz: f64,
}

impl CaptureSimulator {
    pub fn new(w: &Waveform, taps: &[ChannelTap], imp: &ImpairmentConfig, n_snapshots: usize) -> Result<Self> {
        Self::with_spurs(w, taps, imp, n_snapshots, &[], 0)
    }

    /// `spurs` are transmitter spurs the frequency plan places in-band;
    /// `capture_id` separates the random streams of different captures made
    /// with the same seed (e.g. calibration and measurement).
    pub fn with_spurs(
        w: &Waveform,
        taps: &[ChannelTap],
        imp: &ImpairmentConfig,
        n_snapshots: usize,
        spurs: &[InBandSpur],
        capture_id: u64,
    ) -> Result<Self> {
        imp.validate()?;
        if n_snapshots == 0 {
            return invalid("at least one snapshot is required");
        }
        let grid = w.grid;
        let n = grid.n_samples;
        let fft = FftPair::new(n);
        let h = channel_response(taps, &grid)?;

        let mut tx: Vec<Complex64> = match imp.adc_bits_tx {
            Some(bits) => w.samples.iter().map(|&v| quantize_iq(v, bits)).collect(),
            None => w.samples.clone(),
        };
        let p_sig = w.mean_power();
        let mut spur_sum = vec![Complex64::new(0.0, 0.0); n];
        for spur in spurs {
            let shift = (spur.offset_hz as f64 / grid.tone_spacing_hz).round() as i64;
            let amp = (p_sig * db_to_power(spur.relative_db)).sqrt();
            for (m, s) in spur_sum.iter_mut().enumerate() {
                let rot = Complex64::from_polar(
                    1.0,
                    2.0 * std::f64::consts::PI * (bin_index(shift, n) * m % n) as f64 / n as f64,
                );
                *s += match spur.kind {
                    crate::frequency_plan::SpurKind::LoLeak => rot * amp,
                    crate::frequency_plan::SpurKind::Image => {
                        let x = if spur.inverted { w.samples[m].conj() } else { w.samples[m] };
                        rot * x * (amp / p_sig.sqrt())
                    }
                };
            }
        }
        tx.iter_mut().zip(&spur_sum).for_each(|(t, s)| *t += s);

        let bin_freq: Vec<f64> = (0..n).map(|k| signed_bin(k, n) as f64 * grid.tone_spacing_hz).collect();
        let half_band = grid.bandwidth_hz() / 2.0;
        let chain: Vec<Complex64> = bin_freq
            .iter()
            .map(|&f| {
                let gain_db = imp.chain.magnitude_tilt_db * (f / (2.0 * half_band));
                Complex64::from_polar(
                    10f64.powf(gain_db / 20.0),
                    -2.0 * std::f64::consts::PI * f * imp.chain.trigger_offset_s,
                )
            })
            .collect();

        let mut base_spectrum = tx;
        fft.forward(&mut base_spectrum);
        for ((b, h), c) in base_spectrum.iter_mut().zip(&h).zip(&chain) {
            *b *= h * c;
        }
        let mut base_time = base_spectrum.clone();
        fft.inverse(&mut base_time);

        // Noise level that puts the calibrated, unwindowed single-snapshot
        // floor of a 0 dB path at -snr dB.
        let nt = grid.n_tones as f64;
        let noise_weight: Vec<f64> = w
            .active_spectrum()
            .iter()
            .zip(grid.active_bins())
            .map(|(x, b)| n as f64 / (nt * nt * x.norm_sqr() * chain[b].norm_sqr()))
            .collect();
        let noise_sigma = match imp.snr_db_per_snapshot {
            Some(snr) => (db_to_power(-snr) / noise_weight.iter().sum::<f64>()).sqrt(),
            None => 0.0,
        };

        Ok(CaptureSimulator {
            fft,
            base_spectrum,
            base_time,
            bin_freq,
            phases: drift_path(imp, n_snapshots, capture_id),
            noise_sigma,
            noise_weight,
            jitter_rms_s: imp.trigger_jitter_ps_rms * 1e-12,
            rx_bits: imp.adc_bits_rx,
            seed: imp.seed,
            capture_id,
            n_samples: n,
            sample_rate_hz: grid.sample_rate_hz,
        })
    }

    pub fn n_snapshots(&self) -> usize {
        self.phases.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Injected common phase of every snapshot, radians.
    pub fn phase_path(&self) -> &[f64] {
        &self.phases
    }

    /// Per-sample complex noise standard deviation.
    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Expected single-snapshot noise level, dB, of the calibrated impulse
    /// response after the frequency-domain window `window` (unit-mean
    /// coefficients over the active tones).
    pub fn expected_floor_db(&self, window: &[f64]) -> f64 {
        let p: f64 = self.noise_weight.iter().zip(window).map(|(v, w)| v * w * w).sum();
        crate::units::power_db(p * self.noise_sigma * self.noise_sigma)
    }

    /// Trigger jitter drawn for snapshot `index`, seconds.
    pub fn jitter_s(&self, index: usize) -> f64 {
        if self.jitter_rms_s == 0.0 {
            return 0.0;
        }
        let mut rng = rng_for(self.seed, self.capture_id, index as u64);
        normal(&mut rng) * self.jitter_rms_s
    }

    /// Writes snapshot `index` into `out`.
    pub fn snapshot_into(&self, index: usize, out: &mut [Complex64]) {
        assert!(index < self.phases.len(), "snapshot index out of range");
        assert_eq!(out.len(), self.n_samples);
        let mut rng = rng_for(self.seed, self.capture_id, index as u64);
        let rot = Complex64::from_polar(1.0, self.phases[index]);
        if self.jitter_rms_s > 0.0 {
            let jitter = normal(&mut rng) * self.jitter_rms_s;
            for ((o, b), &f) in out.iter_mut().zip(&self.base_spectrum).zip(&self.bin_freq) {
                *o = b * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * jitter);
            }
            self.fft.inverse(out);
            out.iter_mut().for_each(|v| *v *= rot);
        } else {
            out.iter_mut().zip(&self.base_time).for_each(|(o, b)| *o = b * rot);
        }
        if self.noise_sigma > 0.0 {
            let s = self.noise_sigma / std::f64::consts::SQRT_2;
            for v in out.iter_mut() {
                let re = normal(&mut rng);
                let im = normal(&mut rng);
                *v += Complex64::new(re * s, im * s);
            }
        }
        if let Some(bits) = self.rx_bits {
            out.iter_mut().for_each(|v| *v = quantize_iq(*v, bits));
        }
    }

    pub fn snapshot(&self, index: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_samples];
        self.snapshot_into(index, &mut out);
        out
    }

    /// Materializes every snapshot.
    pub fn capture(&self) -> SnapshotSet {
        let n = self.n_samples;
        let mut data = vec![Complex64::new(0.0, 0.0); n * self.n_snapshots()];
        data.par_chunks_mut(n).enumerate().for_each(|(i, row)| self.snapshot_into(i, row));
        SnapshotSet {
            data,
            n_samples: n,
            n_snapshots: self.n_snapshots(),
            sample_rate_hz: self.sample_rate_hz,
            origin: Origin::Simulated,
            seed: Some(self.seed),
            scenario: None,
        }
    }
}

pub fn simulate_capture(
    w: &Waveform,
    taps: &[ChannelTap],
    imp: &ImpairmentConfig,
    n_snapshots: usize,
) -> Result<SnapshotSet> {
    Ok(CaptureSimulator::new(w, taps, imp, n_snapshots)?.capture())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airsim::{back_to_back_channel, PhaseDrift};
    use crate::waveform::{generate_fzc, synthesize_period, ToneGrid};

    fn wave() -> Waveform {
        let grid = ToneGrid::new(64, 96e6, 64e6).unwrap();
        synthesize_period(&generate_fzc(64, 1).unwrap(), &grid).unwrap()
    }

    #[test]
    fn quantizer_is_mid_rise() {
        assert_eq!(quantize(0.0, 1), 0.5);
        assert_eq!(quantize(-0.1, 1), -0.5);
        assert_eq!(quantize(5.0, 2), 0.75);
        assert_eq!(quantize(-5.0, 2), -0.75);
        let step = 2.0 / 65536.0;
        for v in [0.123456, -0.9, 0.0001] {
            assert!((quantize(v, 16) - v).abs() <= step / 2.0);
        }
    }

    #[test]
    fn clean_capture_repeats_the_period() {
        let w = wave();
        let imp = ImpairmentConfig { adc_bits_tx: None, ..Default::default() };
        let set = simulate_capture(&w, &back_to_back_channel(0.0).unwrap(), &imp, 4).unwrap();
        assert_eq!(set.n_snapshots, 4);
        for row in set.rows() {
            for (a, b) in row.iter().zip(&w.samples) {
                assert_eq!(*a, quantize_iq(*b, 16));
            }
        }
    }

    #[test]
    fn deterministic_and_order_independent() {
        let w = wave();
        let imp = ImpairmentConfig {
            snr_db_per_snapshot: Some(40.0),
            trigger_jitter_ps_rms: 5.0,
            phase_drift: PhaseDrift { model: DriftModel::Wiener, magnitude_deg_over_measurement: 300.0 },
            seed: 7,
            ..Default::default()
        };
        let taps = back_to_back_channel(20.0).unwrap();
        let a = simulate_capture(&w, &taps, &imp, 16).unwrap();
        let b = simulate_capture(&w, &taps, &imp, 16).unwrap();
        assert_eq!(a, b);
        let sim = CaptureSimulator::new(&w, &taps, &imp, 16).unwrap();
        for i in (0..16).rev() {
            assert_eq!(sim.snapshot(i), a.row(i));
        }
        let other = CaptureSimulator::with_spurs(&w, &taps, &imp, 16, &[], 1).unwrap();
        assert_ne!(other.snapshot(0), a.row(0));
    }

    #[test]
    fn drift_paths_have_requested_span() {
        for model in [DriftModel::Wiener, DriftModel::Linear, DriftModel::Sinusoidal] {
            let imp = ImpairmentConfig {
                phase_drift: PhaseDrift { model, magnitude_deg_over_measurement: 300.0 },
                seed: 3,
                ..Default::default()
            };
            let p = drift_path(&imp, 1000, 0);
            let (lo, hi) = p.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            let span = (hi - lo).to_degrees();
            assert!((span - 300.0).abs() < 0.5, "{model:?} {span}");
        }
    }

    #[test]
    fn image_spur_injection_mirrors_spectrum() {
        use crate::frequency_plan::{InBandSpur, SpurKind};
        let w = wave();
        let spur = InBandSpur { kind: SpurKind::Image, offset_hz: 0, relative_db: -15.0, inverted: true };
        let sim = CaptureSimulator::with_spurs(
            &w,
            &back_to_back_channel(0.0).unwrap(),
            &ImpairmentConfig::ideal(),
            1,
            &[spur],
            0,
        )
        .unwrap();
        let y = sim.snapshot(0);
        let expect: Vec<Complex64> = w.samples.iter().map(|x| x + x.conj() * 10f64.powf(-0.75)).collect();
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lo_leak_tone_lands_on_its_bin() {
        use crate::frequency_plan::{InBandSpur, SpurKind};
        let w = wave();
        let spur = InBandSpur { kind: SpurKind::LoLeak, offset_hz: 40_000_000, relative_db: -10.0, inverted: false };
        let sim = CaptureSimulator::with_spurs(
            &w,
            &back_to_back_channel(0.0).unwrap(),
            &ImpairmentConfig::ideal(),
            1,
            &[spur],
            0,
        )
        .unwrap();
        let mut y = sim.snapshot(0);
        for (a, b) in y.iter_mut().zip(&w.samples) {
            *a -= b;
        }
        let spec = crate::fft::fft(&y);
        let n = spec.len() as f64;
        let tone = spec[40].norm_sqr() / (n * n);
        assert!((tone / (w.mean_power() * 0.1) - 1.0).abs() < 1e-9);
        let rest: f64 = spec.iter().enumerate().filter(|(k, _)| *k != 40).map(|(_, v)| v.norm_sqr()).sum();
        assert!(rest < 1e-20);
    }
}
