//! Stability-scan throughput: rayon-parallel map vs the sequential twin.
//!
//! Run with `cargo bench -p rpnn`. Both paths produce bit-identical scans
//! (asserted below before timing); the benchmark quantifies what the
//! parallel feature buys on this machine.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rpnn::stability::{scan_region, scan_region_seq, ScanConfig};

fn scan_cfg(m: usize, points: usize, runs: usize) -> ScanConfig {
    let mut cfg = ScanConfig::new(m);
    cfg.re_range = (-20.0, 2.0);
    cfg.im_range = (-4.0, 4.0);
    cfg.points_per_axis = points;
    cfg.refine_levels = 4;
    cfg.mc_runs = runs;
    cfg
}

fn bench_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("stability_scan");
    group.sample_size(10);
    for (m, points, runs) in [(4usize, 12usize, 8usize), (10, 12, 8)] {
        let cfg = scan_cfg(m, points, runs);
        let par = scan_region(&cfg, 42).unwrap();
        let seq = scan_region_seq(&cfg, 42).unwrap();
        assert_eq!(par, seq, "parallel and sequential scans must agree bitwise");

        group.bench_with_input(
            BenchmarkId::new("parallel", format!("m{m}")),
            &cfg,
            |b, cfg| b.iter(|| scan_region(cfg, 42).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", format!("m{m}")),
            &cfg,
            |b, cfg| b.iter(|| scan_region_seq(cfg, 42).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_scan);
criterion_main!(benches);
