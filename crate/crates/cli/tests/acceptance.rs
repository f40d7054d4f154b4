//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails that is not listed in `KNOWN_GAPS`.
//!
//! The closed-loop criteria share three full single-pose runs on the
//! L-shaped corridor: pose 14 with and without noise, and pose 19 (which
//! faces a window).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use thz_sense::analytics;
use thz_sense::config::{FreqGrid, SounderConfig};
use thz_sense::exec::Execution;
use thz_sense::geometry::{far_field_distance, wall_specular_delay};
use thz_sense::hybrid::{self, ClassifiedMpc, ClassifyTolerances, DiffusePowerModel, FeatureRef};
use thz_sense::sage::{self, estimate_all, FloorMode, SageConfig};
use thz_sense::scene::{SceneModel, WallKind};
use thz_sense::synth::{add_noise, add_tone, synthesize_cfr, DirectionalCfr};
use thz_sense::tracking::{track_pose, PoseTracks, TrackerConfig};
use thz_sense::{wrap_deg, C64};
use thz_sense_cli::{cmd_run_all, pose_seed, RunOptions, SynthOptions};

/// Criteria that currently fail and are documented as such in the README.
const KNOWN_GAPS: &[u32] = &[8];

const SEED: u64 = 7;
const FLOOR_DB: f64 = -120.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct PoseRun {
    scene: SceneModel,
    pose_index: usize,
    cfg: SounderConfig,
    cfr: DirectionalCfr,
    estimate_time: Duration,
    tracks: PoseTracks,
    classified: Vec<ClassifiedMpc>,
}

fn run_pose(pose_index: usize, noisy: bool) -> PoseRun {
    let scene = SceneModel::l_room();
    let pose = *scene.pose(pose_index).unwrap();
    let cfg = SounderConfig {
        noise_enabled: noisy,
        noise_floor_db: FLOOR_DB,
        ..SounderConfig::default()
    };
    let cfr = synthesize_cfr(&scene, &pose, &cfg, pose_seed(SEED, pose_index), Execution::default()).unwrap();
    let t = Instant::now();
    let estimates = estimate_all(&cfr, &SageConfig::default(), FloorMode::default(), Execution::default()).unwrap();
    let estimate_time = t.elapsed();
    let bin = cfr.grid.delay_bin_s();
    let tracks = track_pose(&estimates, &scene, &pose, &TrackerConfig::default(), bin).unwrap();
    let classified = hybrid::classify(&tracks.deembedded, &scene, &pose, bin, &ClassifyTolerances::default());
    PoseRun {
        scene,
        pose_index,
        cfg,
        cfr,
        estimate_time,
        tracks,
        classified,
    }
}

// 1. Resolution identities.
fn resolution() -> Outcome {
    let t = Instant::now();
    let cfg = SounderConfig::default();
    let bin_ns = cfg.delay_resolution_s() * 1e9;
    let one_way_cm = cfg.range_resolution_m() * 100.0;
    let round_trip_cm = cfg.space_resolution_m() * 100.0;
    let pass = (bin_ns - 0.05).abs() < 1e-15
        && (one_way_cm - 0.75).abs() < 0.005
        && (round_trip_cm - 1.5).abs() < 0.005
        && (round_trip_cm - 2.0 * one_way_cm).abs() < 1e-15
        && t.elapsed() < Duration::from_secs(1);
    outcome(
        pass,
        format!("bin {bin_ns} ns, one-way {one_way_cm:.4} cm, round trip {round_trip_cm:.4} cm"),
    )
}

/// A sparse random row: up to 5 paths at least 3 bins apart, each with a
/// per-frequency-sample SNR of at least 15 dB.
fn sparse_row(grid: &FreqGrid, rng: &mut ChaCha8Rng, n_paths: usize, noise_seed: u64) -> (Vec<C64>, Vec<(f64, f64)>) {
    let bin = grid.delay_bin_s();
    // Per-sample noise power is the per-bin floor times N.
    let sample_floor_db = FLOOR_DB + 10.0 * (grid.len as f64).log10();
    let mut paths: Vec<(f64, f64)> = Vec::new();
    while paths.len() < n_paths {
        let tau = rng.random_range(2e-9..60e-9);
        if paths.iter().any(|(t, _)| (t - tau).abs() < 3.0 * bin) {
            continue;
        }
        paths.push((tau, rng.random_range(sample_floor_db + 15.0..-50.0)));
    }
    let mut row = vec![C64::new(0.0, 0.0); grid.len];
    for &(tau, p) in &paths {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        add_tone(&mut row, grid, C64::from_polar(10f64.powf(p / 20.0), phase), tau);
    }
    add_noise(&mut row, FLOOR_DB, noise_seed, 0);
    (row, paths)
}

// 2. SAGE round trip on sparse rows, plus the runtime of a dense pose.
fn sage_round_trip(dense_time: Duration) -> Outcome {
    let grid = SounderConfig::default().grid().unwrap();
    let cfg = SageConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut hit, mut total) = (0usize, 0usize);
    for s in 0..100u64 {
        let n = rng.random_range(1..=5);
        let (row, paths) = sparse_row(&grid, &mut rng, n, 1000 + s);
        let est = sage::estimate_angle(&row, &grid, &cfg, FLOOR_DB, 0.0).unwrap();
        for &(tau, p) in &paths {
            total += 1;
            if est
                .mpcs
                .iter()
                .any(|m| (m.delay_s - tau).abs() < 5e-12 && (m.power_db - p).abs() < 0.2)
            {
                hit += 1;
            }
        }
    }
    let frac = hit as f64 / total as f64;
    outcome(
        frac >= 0.99 && dense_time < Duration::from_secs(120),
        format!(
            "{hit}/{total} paths recovered ({:.2}%), dense 360 x 2001 pose in {:.1} s",
            frac * 100.0,
            dense_time.as_secs_f64()
        ),
    )
}

/// Exhaustive three-path ML delay search on a regular refined grid within
/// ±1 bin of each true delay. Independent of the estimator: correlations,
/// Gram entries (closed-form geometric sums) and the 3×3 solve are computed
/// here from scratch.
fn ml_three_paths(row: &[C64], grid: &FreqGrid, centers: [f64; 3], step: f64) -> [f64; 3] {
    let tau = std::f64::consts::TAU;
    let half = (grid.delay_bin_s() / step).round() as i64;
    let axes: Vec<Vec<f64>> = centers
        .iter()
        .map(|c| {
            let k0 = (c / step).round() as i64;
            (k0 - half..=k0 + half).map(|k| k as f64 * step).collect()
        })
        .collect();
    let corr = |t: f64| -> C64 {
        row.iter()
            .enumerate()
            .map(|(n, x)| C64::from_polar(1.0, tau * grid.freq(n) * t) * x)
            .sum()
    };
    // Σ_n exp(j2π f_n d) for f_n = f0 + nΔf.
    let gram = |d: f64| -> C64 {
        let n = grid.len as f64;
        let z = C64::from_polar(1.0, tau * grid.step_hz * d);
        let head = C64::from_polar(1.0, tau * grid.start_hz * d);
        if (z - 1.0).norm() < 1e-12 {
            head * n
        } else {
            head * (C64::new(1.0, 0.0) - C64::from_polar(1.0, tau * grid.step_hz * d * n)) / (C64::new(1.0, 0.0) - z)
        }
    };
    let c: Vec<Vec<C64>> = axes.iter().map(|a| a.iter().map(|&t| corr(t)).collect()).collect();
    let g = |i: usize, j: usize| -> Vec<Vec<C64>> {
        axes[i]
            .iter()
            .map(|&ti| axes[j].iter().map(|&tj| gram(ti - tj)).collect())
            .collect()
    };
    let (g01, g02, g12) = (g(0, 1), g(0, 2), g(1, 2));
    let n = grid.len as f64;
    let mut best = (f64::NEG_INFINITY, [0.0; 3]);
    for a in 0..axes[0].len() {
        for b in 0..axes[1].len() {
            for d in 0..axes[2].len() {
                // Hermitian G with G[i][j] = a_i^H a_j, solved by Cholesky.
                let (x01, x02, x12) = (g01[a][b], g02[a][d], g12[b][d]);
                let l00 = n.sqrt();
                let l10 = x01.conj() / l00;
                let l11 = (n - l10.norm_sqr()).sqrt();
                let l20 = x02.conj() / l00;
                let l21 = (x12.conj() - l20 * l10.conj()) / l11;
                let l22 = (n - l20.norm_sqr() - l21.norm_sqr()).sqrt();
                let y0 = c[0][a] / l00;
                let y1 = (c[1][b] - l10 * y0) / l11;
                let y2 = (c[2][d] - l20 * y0 - l21 * y1) / l22;
                let f = y0.norm_sqr() + y1.norm_sqr() + y2.norm_sqr();
                if f > best.0 {
                    best = (f, [axes[0][a], axes[1][b], axes[2][d]]);
                }
            }
        }
    }
    best.1
}

// 3. SAGE delays against the exhaustive ML oracle.
fn sage_vs_oracle() -> Outcome {
    let grid = SounderConfig::default().grid().unwrap();
    let cfg = SageConfig::default();
    let step = grid.delay_bin_s() / cfg.refine_grid_factor as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut ok = 0;
    for s in 0..20u64 {
        let (row, paths) = sparse_row(&grid, &mut rng, 3, 5000 + s);
        let oracle = ml_three_paths(&row, &grid, [paths[0].0, paths[1].0, paths[2].0], step);
        let est = sage::estimate_angle(&row, &grid, &cfg, FLOOR_DB, 0.0).unwrap();
        let mut row_ok = true;
        for t in oracle {
            let d = est
                .mpcs
                .iter()
                .map(|m| (m.delay_s - t).abs())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d / step);
            row_ok &= d <= step;
        }
        ok += row_ok as usize;
    }
    outcome(
        ok == 20,
        format!("{ok}/20 rows within one refined step; worst {worst:.3} steps"),
    )
}

// 4. Closed-form geometry.
fn geometry() -> Outcome {
    let tau_ns = wall_specular_delay(1.2, 0.2, 90.0).unwrap() * 1e9;
    let d = far_field_distance(12.2e-3, 1e-3).unwrap();
    outcome(
        (tau_ns - 6.67).abs() <= 0.01 && (0.29..=0.30).contains(&d),
        format!("specular delay {tau_ns:.4} ns, far field {d:.4} m"),
    )
}

// 5. De-embedding against ground truth, and the delay gate.
fn tracking(runs: &[&PoseRun]) -> Outcome {
    let mut hit = 0usize;
    let mut total = 0usize;
    let mut violations = 0usize;
    let mut links = 0usize;
    let gate = TrackerConfig::default().delay_gate_s;
    for run in runs {
        let bin = run.cfr.grid.delay_bin_s();
        let g0 = run.cfg.antenna.boresight_gain_dbi;
        let threshold = run.cfg.noise_floor_db + SageConfig::default().threshold_offset_db;
        for p in run.cfr.truth.as_ref().unwrap().iter().filter(|p| p.specular) {
            if p.power_db() + 2.0 * g0 < threshold {
                continue;
            }
            total += 1;
            if run.tracks.deembedded.iter().any(|m| {
                (m.delay_s - p.delay_s).abs() <= bin && wrap_deg(m.azimuth_deg - p.azimuth_deg).abs() <= 1.0
            }) {
                hit += 1;
            }
        }
        for t in &run.tracks.trajectories {
            for w in t.members.windows(2) {
                links += 1;
                if (w[1].1.delay_s - w[0].1.delay_s).abs() > gate {
                    violations += 1;
                }
            }
        }
    }
    let frac = hit as f64 / total.max(1) as f64;
    outcome(
        total > 0 && frac >= 0.95 && violations == 0,
        format!("{hit}/{total} discrete paths matched; {violations} of {links} links outside the gate"),
    )
}

// 6. Diffuse power-law fit on synthetic samples.
fn diffuse_fit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise = Normal::new(0.0, 3.0).unwrap();
    let samples: Vec<(f64, f64)> = (0..200)
        .map(|_| {
            let dphi: f64 = rng.random_range(0.0..90.0);
            let c = dphi.to_radians().cos();
            let x = c * c;
            (x, 15.2 * x - 144.5 + noise.sample(&mut rng))
        })
        .collect();
    let m: DiffusePowerModel = hybrid::fit_power_law(&samples).unwrap();
    outcome(
        (m.n_diff - 15.2).abs() <= 1.5 && (m.b_diff + 144.5).abs() <= 1.5 && (m.rmse - 3.0).abs() <= 0.5,
        format!("n = {:.3}, b = {:.3}, rmse = {:.3}", m.n_diff, m.b_diff, m.rmse),
    )
}

// 7. Hybrid CIR additivity.
fn additivity() -> Outcome {
    let scene = SceneModel::l_room();
    let pose = scene.pose(14).unwrap();
    let cfg = SounderConfig::default();
    let grid = cfg.grid().unwrap();
    let model = DiffusePowerModel {
        n_diff: 15.2,
        b_diff: -55.0,
        rmse: 0.0,
    };
    let cir = hybrid::synthesize_hybrid_cir(&scene, pose, &model, &cfg, &ClassifyTolerances::default(), SEED).unwrap();
    let total = cir.response(&grid);
    let t = cir.target_response(&grid);
    let e = cir.environment_response(&grid);
    let mut worst = 0.0f64;
    for k in 0..total.len() {
        let sum = t[k] + e[k];
        let scale = total[k].norm().max(f64::MIN_POSITIVE);
        worst = worst.max((total[k] - sum).norm() / scale);
    }
    outcome(
        worst < 1e-12 && !cir.target.is_empty() && !cir.environment.is_empty(),
        format!(
            "{} target + {} environment paths, max relative error {worst:.2e}",
            cir.target.len(),
            cir.environment.len()
        ),
    )
}

fn mean_error(run: &PoseRun) -> (f64, f64, usize) {
    let pose = run.scene.pose(run.pose_index).unwrap();
    let pts = analytics::reconstruct_environment(&run.tracks.deembedded, pose);
    let e = analytics::distance_error_cdf(&pts, &run.scene).unwrap();
    (e.mean_m.unwrap_or(f64::INFINITY), e.fraction_within(0.02), pts.len())
}

// 8. Reconstruction accuracy.
fn reconstruction(noisy: &PoseRun, clean: &PoseRun) -> Outcome {
    let (mn, fn_, nn) = mean_error(noisy);
    let (mc, fc, nc) = mean_error(clean);
    outcome(
        mn <= 0.03 && mc <= 0.0075,
        format!(
            "noisy mean {:.2} cm over {nn} points ({:.0}% within 2 cm), noiseless mean {:.2} cm over {nc} points ({:.0}% within 2 cm)",
            mn * 100.0,
            fn_ * 100.0,
            mc * 100.0,
            fc * 100.0
        ),
    )
}

// 9. Reflection loss of walls and windows.
fn reflection_loss(runs: &[&PoseRun]) -> Outcome {
    let mut by_kind: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut worst = 0.0f64;
    for run in runs {
        let losses = analytics::specular_losses(&run.classified, run.cfg.f_c_hz, run.cfg.antenna.boresight_gain_dbi).unwrap();
        for (f, _, l) in losses {
            let FeatureRef::Wall(w) = f else { continue };
            let wall = &run.scene.walls[w];
            let kind = match wall.kind {
                WallKind::Wall => "wall",
                WallKind::Window => "window",
                WallKind::ScattererZoneBoundary => continue,
            };
            worst = worst.max((l - wall.material.specular_loss_db).abs());
            by_kind.entry(kind).or_default().push(l);
        }
    }
    let summary: Vec<String> = by_kind
        .iter()
        .map(|(k, v)| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            format!("{k} {lo:.2}..{hi:.2} dB ({} returns)", v.len())
        })
        .collect();
    outcome(
        by_kind.contains_key("wall") && by_kind.contains_key("window") && worst <= 0.5,
        format!("{}; worst deviation {worst:.3} dB", summary.join(", ")),
    )
}

// 10. Spread closed forms and the lognormal fit.
fn spreads() -> Outcome {
    let single_delay = analytics::rms_delay_spread(&[(1e-9, 12.5)]).unwrap();
    let single_angle = analytics::circular_angular_spread(&[(3.0, 77.0)]).unwrap();
    // Two equal paths: delay spread is half the separation, angular spread
    // half the wrapped separation.
    let two_delay = analytics::rms_delay_spread(&[(2.0, 10.0), (2.0, 14.0)]).unwrap();
    let two_angle = analytics::circular_angular_spread(&[(1.0, 30.0), (1.0, 70.0)]).unwrap();
    let wrap = analytics::circular_angular_spread(&[(1.0, 350.0), (1.0, 10.0)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let normal = Normal::new(-0.52, 0.57).unwrap();
    let samples: Vec<f64> = (0..10_000).map(|_| 10f64.powf(normal.sample(&mut rng))).collect();
    let fit = analytics::fit_lognormal(&samples).unwrap();
    let pass = single_delay == 0.0
        && single_angle == 0.0
        && two_delay == 2.0
        && (two_angle - 20.0).abs() < 1e-12
        && (wrap - 10.0).abs() < 1e-12
        && (fit.mu + 0.52).abs() <= 0.02
        && (fit.sigma - 0.57).abs() <= 0.02;
    outcome(
        pass,
        format!(
            "single {single_delay}/{single_angle}, two-path {two_delay} ns/{two_angle:.12} deg, wrap {wrap:.12} deg, lognormal mu {:.4} sigma {:.4}",
            fit.mu, fit.sigma
        ),
    )
}

fn snapshot(dir: &Path, acc: &mut BTreeMap<String, Vec<u8>>, root: &Path) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            snapshot(&p, acc, root);
        } else {
            acc.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
        }
    }
}

// 11. Determinism across worker counts and execution modes.
fn determinism() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let synth = SynthOptions {
        scene: Some(fixtures.join("small_scene.json")),
        config: Some(fixtures.join("small_config.json")),
        poses: None,
        seed: SEED,
    };
    let opts = RunOptions {
        emit_figures: true,
        ..RunOptions::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let mut snaps = Vec::new();
    for threads in [1, 4] {
        let out = tmp.path().join(format!("t{threads}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| cmd_run_all(&out, &synth, &opts)).unwrap();
        let mut acc = BTreeMap::new();
        snapshot(&out, &mut acc, &out);
        snaps.push(acc);
    }
    let same_files = snaps[0] == snaps[1];

    // Sequential and parallel execution inside the core.
    let scene = SceneModel::load(&fixtures.join("small_scene.json")).unwrap();
    let cfg = thz_sense_cli::PipelineConfig::load(&fixtures.join("small_config.json")).unwrap();
    let pose = scene.pose(1).unwrap();
    let floor = FloorMode::Estimate {
        guard_delay_s: cfg.guard_delay_ns * 1e-9,
    };
    let run = |exec: Execution| {
        let cfr = synthesize_cfr(&scene, pose, &cfg.sounder, SEED, exec).unwrap();
        let est = estimate_all(&cfr, &cfg.sage, floor, exec).unwrap();
        (cfr, est)
    };
    let (cs, es) = run(Execution::Sequential);
    let (cp, ep) = run(Execution::Parallel);
    let same_core = cs == cp && es == ep;
    outcome(
        same_files && same_core,
        format!(
            "{} artifacts identical for 1 and 4 workers: {same_files}; sequential == parallel: {same_core}",
            snaps[0].len()
        ),
    )
}

fn main() {
    let mut err = std::io::stderr();
    let mut line = |id: u32, name: &str, o: &Outcome| {
        let status = match (o.pass, KNOWN_GAPS.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => "FAIL",
        };
        let _ = writeln!(err, "{status} [{id:>2}] {name}: {}", o.detail);
    };
    let mut results = Vec::new();
    let mut record = |id: u32, name: &str, o: Outcome| {
        line(id, name, &o);
        results.push((id, o.pass));
    };

    record(1, "resolution identities", resolution());
    record(4, "geometric formulas", geometry());
    record(6, "diffuse fit recovery", diffuse_fit());
    record(7, "hybrid additivity", additivity());
    record(10, "spread properties", spreads());
    record(3, "SAGE vs exhaustive ML", sage_vs_oracle());
    record(11, "determinism", determinism());

    let noisy14 = run_pose(14, true);
    let clean14 = run_pose(14, false);
    let noisy19 = run_pose(19, true);
    record(2, "SAGE round trip", sage_round_trip(noisy14.estimate_time));
    record(5, "tracking and de-embedding", tracking(&[&noisy14, &clean14, &noisy19]));
    record(8, "reconstruction accuracy", reconstruction(&noisy14, &clean14));
    record(9, "reflection loss", reflection_loss(&[&noisy14, &noisy19]));

    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(id, pass)| !pass && !KNOWN_GAPS.contains(id))
        .map(|r| r.0)
        .collect();
    let passed = results.iter().filter(|r| r.1).count();
    let _ = writeln!(
        std::io::stderr(),
        "acceptance: {passed}/{} criteria pass; unexpected failures: {unexpected:?}",
        results.len()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
