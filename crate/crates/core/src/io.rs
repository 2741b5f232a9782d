//! On-disk formats: little-endian `f32` interleaved I/Q sample files, each
//! with a JSON sidecar of the same stem, plus JSON and CSV reports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::airsim::{CaptureSimulator, Origin, SnapshotSet};
use crate::dsp::{CalibrationProfile, FrequencyResponse, ImpulseResponse};
use crate::error::{Error, Result};
use crate::waveform::{ToneGrid, Waveform};

pub const FORMAT_VERSION: u32 = 1;

/// `capture.bin` → `capture.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn encode(samples: &[Complex64], out: &mut Vec<u8>) {
    for v in samples {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
}

fn decode(bytes: &[u8], out: &mut [Complex64]) {
    for (v, c) in out.iter_mut().zip(bytes.chunks_exact(8)) {
        let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
        *v = Complex64::new(re as f64, im as f64);
    }
}

pub fn write_iq(path: &Path, samples: &[Complex64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(samples.len() * 8);
    encode(samples, &mut bytes);
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_iq(path: &Path) -> Result<Vec<Complex64>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(format_err(format!("{}: length {} is not whole I/Q pairs", path.display(), bytes.len())));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); bytes.len() / 8];
    decode(&bytes, &mut out);
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn read_sidecar<T: DeserializeOwned>(data: &Path, role: &str) -> Result<T> {
    let side = sidecar_path(data);
    if !side.exists() {
        return Err(format_err(format!("missing sidecar {}", side.display())));
    }
    let value: serde_json::Value = read_json(&side)?;
    let found = value.get("role").and_then(|r| r.as_str()).unwrap_or("");
    if found != role {
        return Err(format_err(format!("{} describes a '{found}' file, expected '{role}'", side.display())));
    }
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        other => return Err(format_err(format!("{}: unsupported format_version {other:?}", side.display()))),
    }
    serde_json::from_value(value).map_err(|e| format_err(format!("{}: {e}", side.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSidecar {
    pub format_version: u32,
    pub role: String,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub active_tones: usize,
    pub tone_spacing_hz: f64,
    pub root: Option<u64>,
    pub crest_factor_db: f64,
}

pub fn write_waveform(path: &Path, w: &Waveform) -> Result<()> {
    write_iq(path, &w.samples)?;
    write_json(
        &sidecar_path(path),
        &WaveformSidecar {
            format_version: FORMAT_VERSION,
            role: "waveform".into(),
            sample_rate_hz: w.grid.sample_rate_hz,
            n_samples: w.grid.n_samples,
            active_tones: w.grid.n_tones,
            tone_spacing_hz: w.grid.tone_spacing_hz,
            root: w.root,
            crest_factor_db: w.crest_factor_db,
        },
    )
}

pub fn read_waveform(path: &Path) -> Result<Waveform> {
    let side: WaveformSidecar = read_sidecar(path, "waveform")?;
    let grid = ToneGrid {
        n_tones: side.active_tones,
        tone_spacing_hz: side.tone_spacing_hz,
        sample_rate_hz: side.sample_rate_hz,
        n_samples: side.n_samples,
    };
    let samples = read_iq(path)?;
    Waveform::from_samples(samples, grid, side.root)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSidecar {
    pub format_version: u32,
    pub role: String,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub n_snapshots: usize,
    pub seed: Option<u64>,
    pub scenario: Option<serde_json::Value>,
}

impl SnapshotSidecar {
    fn new(
        sample_rate_hz: f64,
        n_samples: usize,
        n_snapshots: usize,
        seed: Option<u64>,
        scenario: Option<serde_json::Value>,
    ) -> Self {
        SnapshotSidecar {
            format_version: FORMAT_VERSION,
            role: "snapshots".into(),
            sample_rate_hz,
            n_samples,
            n_snapshots,
            seed,
            scenario,
        }
    }
}

pub fn write_snapshots(path: &Path, set: &SnapshotSet) -> Result<()> {
    write_iq(path, &set.data)?;
    write_json(
        &sidecar_path(path),
        &SnapshotSidecar::new(set.sample_rate_hz, set.n_samples, set.n_snapshots, set.seed, set.scenario.clone()),
    )
}

/// Writes the simulator's snapshots row by row without holding the set in
/// memory.
pub fn stream_snapshots(
    path: &Path,
    sim: &CaptureSimulator,
    seed: u64,
    scenario: Option<serde_json::Value>,
) -> Result<()> {
    let n = sim.n_samples();
    let mut w = BufWriter::new(File::create(path)?);
    let mut row = vec![Complex64::new(0.0, 0.0); n];
    let mut bytes = Vec::with_capacity(n * 8);
    for i in 0..sim.n_snapshots() {
        sim.snapshot_into(i, &mut row);
        bytes.clear();
        encode(&row, &mut bytes);
        w.write_all(&bytes)?;
    }
    w.flush()?;
    write_json(
        &sidecar_path(path),
        &SnapshotSidecar::new(sim.sample_rate_hz(), n, sim.n_snapshots(), Some(seed), scenario),
    )
}

/// Random-access reader over a snapshot file; rows can be read concurrently.
#[derive(Debug)]
pub struct SnapshotReader {
    file: File,
    pub meta: SnapshotSidecar,
}

impl SnapshotReader {
    pub fn open(path: &Path) -> Result<Self> {
        let meta: SnapshotSidecar = read_sidecar(path, "snapshots")?;
        let file = File::open(path)?;
        let expect = (meta.n_samples * meta.n_snapshots * 8) as u64;
        let len = file.metadata()?.len();
        if len != expect {
            return Err(format_err(format!(
                "{}: {len} bytes, sidecar describes {} × {} samples ({expect} bytes)",
                path.display(),
                meta.n_snapshots,
                meta.n_samples
            )));
        }
        Ok(SnapshotReader { file, meta })
    }

    pub fn read_row(&self, index: usize, out: &mut [Complex64]) -> Result<()> {
        let n = self.meta.n_samples;
        if index >= self.meta.n_snapshots || out.len() != n {
            return Err(Error::InvalidArgument(format!("row {index} out of range")));
        }
        let mut bytes = vec![0u8; n * 8];
        read_exact_at(&self.file, &mut bytes, (index * n * 8) as u64)?;
        decode(&bytes, out);
        Ok(())
    }

    pub fn read_all(&self) -> Result<SnapshotSet> {
        let n = self.meta.n_samples;
        let mut data = vec![Complex64::new(0.0, 0.0); n * self.meta.n_snapshots];
        for (i, row) in data.chunks_exact_mut(n).enumerate() {
            self.read_row(i, row)?;
        }
        let mut set = SnapshotSet::new(data, n, self.meta.sample_rate_hz, Origin::File)?;
        set.seed = self.meta.seed;
        set.scenario = self.meta.scenario.clone();
        Ok(set)
    }
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    std::os::unix::fs::FileExt::read_exact_at(file, buf, offset)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = file.seek_read(buf, offset)?;
        if n == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        buf = &mut buf[n..];
        offset += n as u64;
    }
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    SnapshotReader::open(path)?.read_all()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSidecar {
    pub format_version: u32,
    pub role: String,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub active_tones: usize,
    pub tone_spacing_hz: f64,
    pub n_averages_used: usize,
    pub noise_floor_estimate_db: Option<f64>,
    pub reference_attenuation_db: f64,
}

pub fn write_calibration(path: &Path, cal: &CalibrationProfile) -> Result<()> {
    let g = cal.system_fr.grid;
    write_iq(path, &cal.system_fr.bins)?;
    write_json(
        &sidecar_path(path),
        &CalibrationSidecar {
            format_version: FORMAT_VERSION,
            role: "calibration".into(),
            sample_rate_hz: g.sample_rate_hz,
            n_samples: g.n_samples,
            active_tones: g.n_tones,
            tone_spacing_hz: g.tone_spacing_hz,
            n_averages_used: cal.n_averages_used,
            noise_floor_estimate_db: cal.noise_floor_estimate_db.is_finite().then_some(cal.noise_floor_estimate_db),
            reference_attenuation_db: cal.reference_attenuation_db,
        },
    )
}

pub fn read_calibration(path: &Path) -> Result<CalibrationProfile> {
    let side: CalibrationSidecar = read_sidecar(path, "calibration")?;
    let grid = ToneGrid {
        n_tones: side.active_tones,
        tone_spacing_hz: side.tone_spacing_hz,
        sample_rate_hz: side.sample_rate_hz,
        n_samples: side.n_samples,
    };
    let bins = read_iq(path)?;
    Ok(CalibrationProfile {
        system_fr: FrequencyResponse::new(bins, grid).map_err(|e| format_err(format!("{}: {e}", path.display())))?,
        n_averages_used: side.n_averages_used,
        noise_floor_estimate_db: side.noise_floor_estimate_db.unwrap_or(f64::NEG_INFINITY),
        reference_attenuation_db: side.reference_attenuation_db,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponseSidecar {
    pub format_version: u32,
    pub role: String,
    pub n_samples: usize,
    pub delay_step_s: f64,
    pub t0_offset_s: f64,
    pub calibrated: bool,
    /// Processing settings that produced the response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

pub fn write_impulse_response(path: &Path, ir: &ImpulseResponse, manifest: Option<serde_json::Value>) -> Result<()> {
    write_iq(path, &ir.taps)?;
    write_json(
        &sidecar_path(path),
        &ImpulseResponseSidecar {
            format_version: FORMAT_VERSION,
            role: "impulse_response".into(),
            n_samples: ir.len(),
            delay_step_s: ir.delay_step_s,
            t0_offset_s: ir.t0_offset_s,
            calibrated: ir.calibrated,
            manifest,
        },
    )
}

pub fn read_impulse_response(path: &Path) -> Result<ImpulseResponse> {
    let side: ImpulseResponseSidecar = read_sidecar(path, "impulse_response")?;
    let taps = read_iq(path)?;
    if taps.len() != side.n_samples {
        return Err(format_err(format!("{}: {} taps, sidecar says {}", path.display(), taps.len(), side.n_samples)));
    }
    Ok(ImpulseResponse {
        taps,
        delay_step_s: side.delay_step_s,
        t0_offset_s: side.t0_offset_s,
        calibrated: side.calibrated,
    })
}

/// Power-delay profile as `delay_ns,power_db` rows.
pub fn write_cir_csv(path: &Path, ir: &ImpulseResponse) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "delay_ns,power_db")?;
    for (i, p) in ir.power_db().iter().enumerate() {
        writeln!(w, "{:.4},{:.3}", ir.delay_s(i as f64) * 1e9, p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airsim::{back_to_back_channel, simulate_capture, ImpairmentConfig};
    use crate::dsp::{to_impulse_response, CalibrationProfile};
    use crate::waveform::{generate_fzc, synthesize_period};

    fn wave() -> Waveform {
        let grid = ToneGrid::new(64, 96e6, 64e6).unwrap();
        synthesize_period(&generate_fzc(64, 1).unwrap(), &grid).unwrap()
    }

    fn close(a: &[Complex64], b: &[Complex64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= 1e-6 * (1.0 + y.norm()))
    }

    #[test]
    fn waveform_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let w = Waveform { root: Some(1), ..wave() };
        write_waveform(&p, &w).unwrap();
        let back = read_waveform(&p).unwrap();
        assert_eq!(back.grid, w.grid);
        assert_eq!(back.root, Some(1));
        assert!(close(&back.samples, &w.samples));
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 96 * 8);
        let side: serde_json::Value = read_json(&sidecar_path(&p)).unwrap();
        for key in [
            "format_version",
            "sample_rate_hz",
            "n_samples",
            "active_tones",
            "tone_spacing_hz",
            "root",
            "crest_factor_db",
        ] {
            assert!(side.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn snapshots_round_trip_and_stream() {
        let dir = tempfile::tempdir().unwrap();
        let w = wave();
        let imp = ImpairmentConfig { snr_db_per_snapshot: Some(20.0), seed: 7, ..Default::default() };
        let taps = back_to_back_channel(3.0).unwrap();
        let set = simulate_capture(&w, &taps, &imp, 5).unwrap();
        let a = dir.path().join("a.bin");
        write_snapshots(&a, &set).unwrap();
        let back = read_snapshots(&a).unwrap();
        assert_eq!(back.n_snapshots, 5);
        assert_eq!(back.origin, Origin::File);
        assert!(close(&back.data, &set.data));

        let b = dir.path().join("b.bin");
        let sim = CaptureSimulator::new(&w, &taps, &imp, 5).unwrap();
        stream_snapshots(&b, &sim, 7, None).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let r = SnapshotReader::open(&b).unwrap();
        let mut row = vec![Complex64::new(0.0, 0.0); 96];
        r.read_row(3, &mut row).unwrap();
        assert!(close(&row, set.row(3)));
        assert!(r.read_row(5, &mut row).is_err());
    }

    #[test]
    fn sidecar_problems_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_iq(&p, &[Complex64::new(1.0, 0.0); 4]).unwrap();
        assert!(matches!(read_snapshots(&p), Err(Error::Format(m)) if m.contains("missing sidecar")));
        write_waveform(&p, &wave()).unwrap();
        assert!(matches!(read_snapshots(&p), Err(Error::Format(_))));
        std::fs::write(&p, [0u8; 13]).unwrap();
        assert!(read_iq(&p).is_err());
    }

    #[test]
    fn calibration_and_ir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = wave().grid;
        let bins: Vec<Complex64> = (0..64).map(|k| Complex64::from_polar(0.5, k as f64 * 0.1)).collect();
        let cal = CalibrationProfile::from_response(FrequencyResponse::new(bins, grid).unwrap()).unwrap();
        let p = dir.path().join("cal.bin");
        write_calibration(&p, &cal).unwrap();
        let back = read_calibration(&p).unwrap();
        assert_eq!(back.system_fr.grid, grid);
        assert!(close(&back.system_fr.bins, &cal.system_fr.bins));
        let side: serde_json::Value = read_json(&sidecar_path(&p)).unwrap();
        assert_eq!(side["role"], "calibration");

        let ir = to_impulse_response(&cal.system_fr, true);
        let q = dir.path().join("ir.bin");
        write_impulse_response(&q, &ir, None).unwrap();
        let back = read_impulse_response(&q).unwrap();
        assert!(back.calibrated);
        assert!(close(&back.taps, &ir.taps));

        let c = dir.path().join("ir.csv");
        write_cir_csv(&c, &ir).unwrap();
        let text = std::fs::read_to_string(&c).unwrap();
        assert!(text.starts_with("delay_ns,power_db\n0.0000,"));
        assert_eq!(text.lines().count(), 97);
    }
}
