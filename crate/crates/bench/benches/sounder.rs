use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use sounder_bench::{b2b_simulator, default_waveform};
use sounder_core::dsp::{circular_xcorr, FrEstimator, ProcessingConfig, SoundingProcessor, WindowSpec};
use sounder_core::metrics::{compute_metrics, MetricsConfig};
use sounder_core::waveform::{generate_fzc, optimize_crest, CrestOptConfig};
use sounder_core::Complex64;

fn waveform(c: &mut Criterion) {
    c.bench_function("fzc_2000", |b| b.iter(|| generate_fzc(black_box(2000), 1).unwrap()));
    let w = default_waveform();
    c.bench_function("crest_factor_8x", |b| b.iter(|| black_box(&w).crest_factor(8).unwrap()));

    let mut g = c.benchmark_group("optimize_crest");
    g.sample_size(10);
    g.bench_function("pnorm_2000", |b| b.iter(|| optimize_crest(&w, &CrestOptConfig::default()).unwrap()));
    g.finish();
}

fn snapshot(c: &mut Criterion) {
    let w = default_waveform();
    let sim = b2b_simulator(&w, 64);
    let est = FrEstimator::new(&w).unwrap();
    let mut buf = vec![Complex64::new(0.0, 0.0); w.grid.n_samples];
    let mut fr = vec![Complex64::new(0.0, 0.0); w.grid.n_tones];

    c.bench_function("simulate_snapshot", |b| b.iter(|| sim.snapshot_into(black_box(3), &mut buf)));
    c.bench_function("estimate_fr", |b| {
        b.iter_batched_ref(|| sim.snapshot(3), |s| est.estimate_into(s, &mut fr), BatchSize::SmallInput)
    });
    let x = sim.snapshot(0);
    c.bench_function("circular_xcorr_2400", |b| b.iter(|| circular_xcorr(black_box(&x), &w.samples).unwrap()));
    c.bench_function("chebyshev_2000", |b| {
        b.iter(|| WindowSpec::chebyshev(80.0).coefficients(black_box(2000)).unwrap())
    });
}

fn pipeline(c: &mut Criterion) {
    let w = default_waveform();
    let mut g = c.benchmark_group("process");
    g.sample_size(10);
    for n in [64usize, 256] {
        let sim = b2b_simulator(&w, n);
        g.throughput(Throughput::Elements(n as u64));
        for track in [false, true] {
            let cfg = ProcessingConfig { track_phase: track, ..ProcessingConfig::default() };
            let p = SoundingProcessor::new(&w, None, cfg).unwrap();
            let id = BenchmarkId::new(if track { "tracked" } else { "untracked" }, n);
            g.bench_with_input(id, &n, |b, &n| b.iter(|| p.process(n, |i, buf| sim.snapshot_into(i, buf)).unwrap()));
        }
    }
    g.finish();

    let sim = b2b_simulator(&w, 64);
    let ir = SoundingProcessor::new(&w, None, ProcessingConfig::default())
        .unwrap()
        .process(64, |i, buf| sim.snapshot_into(i, buf))
        .unwrap()
        .averaged;
    c.bench_function("compute_metrics", |b| {
        b.iter(|| compute_metrics(black_box(&ir), &MetricsConfig::default(), None).unwrap())
    });
}

criterion_group!(benches, waveform, snapshot, pipeline);
criterion_main!(benches);
