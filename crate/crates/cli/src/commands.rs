use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context};
use log::{info, warn};
use serde_json::json;

use sounder_core::airsim::CaptureSimulator;
use sounder_core::dsp::{ProcessedCapture, ProcessingConfig, SoundingProcessor, WindowSpec};
use sounder_core::io::{self, SnapshotReader};
use sounder_core::metrics::{compute_metrics, known_paths_from_taps, noise_floor, MetricsConfig};
use sounder_core::scenario::{Scale, Scenario};
use sounder_core::waveform::{generate_fzc, optimize_crest, synthesize_period, CrestOptConfig, DEFAULT_CF_OVERSAMPLE};
use sounder_core::{CalibrationProfile, ChannelTap, ImpairmentConfig, ToneGrid, Waveform};

use crate::{CalArgs, Failure, GenArgs, ProcArgs, ReportArgs, RunArgs, SimArgs, TrackArgs};

type CmdResult = std::result::Result<(), Failure>;

pub fn parse_tap(s: &str) -> Result<ChannelTap, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("expected DELAY_S:GAIN_DB[:PHASE_RAD], got '{s}'"));
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"));
    let mut tap = ChannelTap::new(num(parts[0])?, num(parts[1])?);
    if let Some(p) = parts.get(2) {
        tap.phase_rad = num(p)?;
    }
    Ok(tap)
}

fn load_scenario(path: &Path, seed: Option<u64>) -> anyhow::Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s.impairments.seed = seed;
    }
    Ok(s)
}

/// `ir.bin` → `ir.single.bin`.
fn single_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "bin".into());
    out.with_file_name(format!("{stem}.single.{ext}"))
}

pub fn gen(a: GenArgs) -> CmdResult {
    if a.seed.is_some() {
        info!("waveform generation is deterministic; --seed has no effect");
    }
    let grid = ToneGrid::new(a.tones, a.rate, a.bw)?;
    let mut w = synthesize_period(&generate_fzc(a.tones, a.root)?, &grid)?;
    w.root = Some(a.root);
    let raw_cf = w.crest_factor_db;
    if a.optimize_cf {
        w = optimize_crest(&w, &CrestOptConfig::default())?;
    }
    io::write_waveform(&a.out, &w)?;
    println!(
        "{}: {} tones, {} samples, crest factor {:.3} dB (raw {:.3} dB, {}× oversampled)",
        a.out.display(),
        grid.n_tones,
        grid.n_samples,
        w.crest_factor_db,
        raw_cf,
        DEFAULT_CF_OVERSAMPLE
    );
    Ok(())
}

pub fn sim(a: SimArgs) -> CmdResult {
    let w = io::read_waveform(&a.waveform)?;
    if a.n == 0 {
        return Err(anyhow::anyhow!("snapshot count must be at least 1").into());
    }
    let (sim, seed, scenario): (CaptureSimulator, u64, Option<serde_json::Value>) = match &a.scenario {
        Some(path) => {
            let s = load_scenario(path, a.seed)?;
            if s.waveform.grid()? != w.grid {
                return Err(anyhow::anyhow!(
                    "waveform {} does not match the grid of scenario {}",
                    a.waveform.display(),
                    s.name
                )
                .into());
            }
            let sim = if a.calibration { s.calibration_simulator(&w, a.n)? } else { s.measurement_simulator(&w, a.n)? };
            (sim, s.impairments.seed, Some(serde_json::to_value(&s)?))
        }
        None => {
            let imp = ImpairmentConfig {
                snr_db_per_snapshot: a.snr,
                seed: a.seed.unwrap_or(0),
                ..ImpairmentConfig::default()
            };
            let sim = CaptureSimulator::new(&w, &a.tap, &imp, a.n)?;
            let desc = json!({ "taps": a.tap, "impairments": imp });
            (sim, imp.seed, Some(desc))
        }
    };
    io::stream_snapshots(&a.out, &sim, seed, scenario)?;
    println!("{}: {} snapshots × {} samples, seed {seed}", a.out.display(), a.n, sim.n_samples());
    Ok(())
}

/// Runs the streaming processor over a snapshot file.
fn process_file(
    w: &Waveform,
    cal: Option<&CalibrationProfile>,
    config: ProcessingConfig,
    snapshots: &Path,
    avg: Option<usize>,
) -> anyhow::Result<ProcessedCapture> {
    let reader = SnapshotReader::open(snapshots)?;
    let meta = &reader.meta;
    if meta.n_samples != w.grid.n_samples {
        bail!(
            "{}: rows of {} samples do not match the {}-sample waveform period",
            snapshots.display(),
            meta.n_samples,
            w.grid.n_samples
        );
    }
    if (meta.sample_rate_hz - w.grid.sample_rate_hz).abs() > 1e-6 * w.grid.sample_rate_hz {
        bail!(
            "{}: sample rate {} Hz differs from the waveform's {} Hz",
            snapshots.display(),
            meta.sample_rate_hz,
            w.grid.sample_rate_hz
        );
    }
    let n = avg.unwrap_or(meta.n_snapshots);
    if n == 0 || n > meta.n_snapshots {
        bail!("cannot average {n} of {} snapshots", meta.n_snapshots);
    }
    let processor = SoundingProcessor::new(w, cal, config)?;
    let failed = Mutex::new(None);
    let processed = processor.process(n, |i, buf| {
        if let Err(e) = reader.read_row(i, buf) {
            failed.lock().unwrap().get_or_insert(e);
        }
    })?;
    if let Some(e) = failed.into_inner().unwrap() {
        return Err(e).with_context(|| format!("reading {}", snapshots.display()));
    }
    Ok(processed)
}

fn config(window: WindowSpec, t: &TrackArgs) -> ProcessingConfig {
    ProcessingConfig { window, track_phase: t.track_phase, pre_average: t.pre_average, ref_bin: None }
}

pub fn cal(a: CalArgs) -> CmdResult {
    let w = io::read_waveform(&a.waveform)?;
    let p = process_file(&w, None, config(WindowSpec::Rectangular, &a.track), &a.snapshots, a.track.avg)?;
    let profile = CalibrationProfile::from_capture(&p, a.attenuation)?;
    io::write_calibration(&a.out, &profile)?;
    println!(
        "{}: {} snapshots, floor {:.2} dB below the reference peak",
        a.out.display(),
        profile.n_averages_used,
        -profile.noise_floor_estimate_db
    );
    Ok(())
}

pub fn proc(a: ProcArgs) -> CmdResult {
    let w = io::read_waveform(&a.waveform)?;
    let cal = match &a.cal {
        Some(path) => Some(io::read_calibration(path)?),
        None => {
            warn!("no calibration profile given; writing the uncalibrated response (back-to-back mode)");
            None
        }
    };
    let cfg = config(a.window, &a.track);
    let p = process_file(&w, cal.as_ref(), cfg, &a.snapshots, a.track.avg)?;
    let manifest = json!({
        "processing": cfg,
        "n_averaged": p.n_averaged,
        "ref_bin": p.ref_bin,
        "low_snr_groups": p.low_snr_groups,
        "calibration": a.cal,
    });
    io::write_impulse_response(&a.out, &p.averaged, Some(manifest.clone()))?;
    io::write_impulse_response(&single_path(&a.out), &p.first, Some(manifest))?;
    let peak = p.averaged.argmax();
    println!(
        "{}: {} snapshots averaged, peak {:.2} dB at {:.3} ns{}",
        a.out.display(),
        p.n_averaged,
        p.averaged.power_db()[peak],
        p.averaged.delay_s(peak as f64) * 1e9,
        if p.averaged.calibrated { "" } else { " (uncalibrated)" }
    );
    Ok(())
}

pub fn report(a: ReportArgs) -> CmdResult {
    let ir = io::read_impulse_response(&a.ir)?;
    let taps = match &a.scenario {
        Some(path) => Scenario::load(path)?.taps,
        None => Vec::new(),
    };
    let cfg = MetricsConfig { min_prominence_db: a.prominence, guard_bins: a.guard, ..MetricsConfig::default() };
    let known = known_paths_from_taps(&taps, &ir);
    let metrics = compute_metrics(&ir, &cfg, a.scenario.as_ref().map(|_| known.as_slice()))?;
    let single_file = single_path(&a.ir);
    let single = if io::sidecar_path(&single_file).exists() {
        let first = io::read_impulse_response(&single_file)?;
        let mut excl = known_paths_from_taps(&taps, &first);
        excl.push(metrics.main_peak);
        Some(noise_floor(&first, &excl, a.guard)?.level_db)
    } else {
        None
    };
    let out = json!({
        "metrics": metrics,
        "single_snapshot_floor_db": single,
        "averaging_gain_db": single.map(|s| s - metrics.noise_floor_db),
    });
    io::write_json(&a.out, &out)?;
    io::write_cir_csv(&a.csv, &ir)?;
    print_metrics(&metrics);
    Ok(())
}

fn print_metrics(m: &sounder_core::CirMetrics) {
    println!(
        "main peak   {:.2} dB at {:.3} ns ({:.3} m)",
        m.main_peak.level_db,
        m.main_peak.delay_s * 1e9,
        m.main_peak.distance_m
    );
    println!("noise floor {:.2} dB ({:.2} dB below main)", m.noise_floor_db, -m.noise_floor_rel_main_db);
    println!("dyn. range  {:.2} dB (largest spur at {:.2} ns)", m.dynamic_range_db, m.spur.delay_s * 1e9);
    if let Some(mmpl) = m.mmpl_db {
        println!("MMPL        {mmpl:.2} dB");
    }
    println!("paths       {}", m.mpcs.len());
}

pub fn run(a: RunArgs) -> CmdResult {
    let s = load_scenario(&a.scenario, a.seed)?;
    let scale = if a.full { Scale::Full } else { Scale::Desk };
    let waveform = s.waveform.build()?;
    let run = s.run_with_waveform(waveform, scale, a.n)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    io::write_waveform(&a.out.join("waveform.bin"), &run.waveform)?;
    io::write_calibration(&a.out.join("calibration.bin"), &run.calibration)?;
    let manifest =
        json!({ "scenario": s.name, "processing": s.processing.config(), "n_averaged": run.processed.n_averaged });
    io::write_impulse_response(&a.out.join("ir.bin"), &run.processed.averaged, Some(manifest.clone()))?;
    io::write_impulse_response(&a.out.join("ir.single.bin"), &run.processed.first, Some(manifest))?;
    io::write_json(&a.out.join("metrics.json"), &run.report)?;
    io::write_cir_csv(&a.out.join("cir.csv"), &run.processed.averaged)?;
    if a.keep_snapshots {
        let sim = s.measurement_simulator(&run.waveform, run.report.n_avrg)?;
        io::stream_snapshots(&a.out.join("snapshots.bin"), &sim, s.impairments.seed, Some(serde_json::to_value(&s)?))?;
    }

    let r = &run.report;
    println!("{} ({:?}, N = {}, seed {})", r.scenario, r.scale, r.n_avrg, r.seed);
    print_metrics(&r.metrics);
    println!(
        "single-snapshot floor {:.2} dB, averaging gain {:.2} dB",
        r.single_snapshot_floor_db, r.averaging_gain_db
    );
    let mut failed = Vec::new();
    for c in &r.checks {
        let value = c.value.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        let mark = if c.pass { "pass" } else { "FAIL" };
        let name = serde_json::to_value(c.metric)?.as_str().unwrap_or_default().to_string();
        println!("  {mark} {name:<26} {value:>10} (expected {} ± {})", c.expected, c.tolerance);
        if !c.pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        return Err(Failure::Expectation(format!("expected metrics violated: {}", failed.join(", "))));
    }
    Ok(())
}
