//! Sequential vs rayon execution of the two heavy stages: per-angle CFR
//! synthesis and per-row SAGE extraction.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use thz_sense::config::SounderConfig;
use thz_sense::exec::Execution;
use thz_sense::sage::{estimate_all, FloorMode, SageConfig};
use thz_sense::scene::SceneModel;
use thz_sense::synth::synthesize_cfr;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn config() -> SounderConfig {
    SounderConfig {
        rotation_step_deg: 4.0,
        ..SounderConfig::default()
    }
}

fn synthesis(c: &mut Criterion) {
    let scene = SceneModel::single_wall(1.2, 4.0);
    let pose = scene.trx_poses[0];
    let cfg = config();
    let mut g = c.benchmark_group("synthesize_cfr");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| synthesize_cfr(black_box(&scene), &pose, &cfg, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn sage(c: &mut Criterion) {
    let scene = SceneModel::single_wall(1.2, 4.0);
    let pose = scene.trx_poses[0];
    let cfg = config();
    let cfr = synthesize_cfr(&scene, &pose, &cfg, 7, Execution::default()).unwrap();
    let sage_cfg = SageConfig::default();
    let mut g = c.benchmark_group("estimate_all");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| estimate_all(black_box(&cfr), &sage_cfg, FloorMode::default(), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, synthesis, sage);
criterion_main!(benches);
