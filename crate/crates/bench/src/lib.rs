//! Shared fixtures for the benchmarks.

use sounder_core::airsim::{CaptureSimulator, ChannelTap, ImpairmentConfig};
use sounder_core::waveform::{generate_fzc, synthesize_period};
use sounder_core::{ToneGrid, Waveform};

/// Unoptimized FZC period on the default 2000-tone grid.
pub fn default_waveform() -> Waveform {
    let grid = ToneGrid::sounder_default();
    synthesize_period(&generate_fzc(grid.n_tones, 1).expect("valid root"), &grid).expect("valid grid")
}

/// Back-to-back capture with the usual impairments.
pub fn b2b_simulator(w: &Waveform, n: usize) -> CaptureSimulator {
    let imp = ImpairmentConfig { snr_db_per_snapshot: Some(89.25), seed: 1, ..ImpairmentConfig::default() };
    CaptureSimulator::new(w, &[ChannelTap::new(0.0, -54.0)], &imp, n).expect("valid capture")
}
