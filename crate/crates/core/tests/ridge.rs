//! The diffuse ridge of a single wall follows the closed-form backscatter
//! delay curve.

use thz_sense::config::SounderConfig;
use thz_sense::exec::Execution;
use thz_sense::geometry::wall_diffuse_delay;
use thz_sense::padp::{compute_padp, Window};
use thz_sense::scene::SceneModel;
use thz_sense::synth::synthesize_cfr;
use thz_sense::SPEED_OF_LIGHT;

const A: f64 = 1.2;
const R: f64 = 0.2;

#[test]
fn diffuse_ridge_follows_backscatter_curve() {
    let scene = SceneModel::single_wall(A, 8.0);
    let cfg = SounderConfig {
        noise_enabled: false,
        ..SounderConfig::default()
    };
    let pose = scene.trx_poses[0];

    // Facets carry random phases, so one realization is speckled. Average the
    // PADP power over seeds; Hann keeps the specular sidelobes off the ridge.
    let seeds = 64u64;
    let mut mean: Vec<Vec<f64>> = Vec::new();
    let mut delays = Vec::new();
    for seed in 0..seeds {
        let cfr = synthesize_cfr(&scene, &pose, &cfg, seed, Execution::default()).unwrap();
        let padp = compute_padp(&cfr, Window::Hann, Execution::default()).unwrap();
        mean.resize(padp.power_db.len(), vec![0.0; padp.delays_s.len()]);
        for (acc, row) in mean.iter_mut().zip(&padp.power_db) {
            for (x, p) in acc.iter_mut().zip(row) {
                *x += 10f64.powf(p / 10.0) / seeds as f64;
            }
        }
        delays = padp.delays_s;
    }
    let db: Vec<Vec<f64>> = mean.iter().map(|r| r.iter().map(|x| 10.0 * x.log10()).collect()).collect();
    let bin = delays[1];

    // Read the ridge along angle at each delay bin: the main lobe is parabolic
    // in dB, so a three-point fit locates the facet direction.
    let lo = wall_diffuse_delay(A, R, 15.0).unwrap();
    let hi = wall_diffuse_delay(A, R, 40.0).unwrap();
    let mut errs = Vec::new();
    for (k, &t) in delays.iter().enumerate().filter(|(_, t)| (lo..=hi).contains(*t)) {
        for span in [45usize..80, 101..136] {
            let j = span.max_by(|&a, &b| db[a][k].total_cmp(&db[b][k])).unwrap();
            let (a, b, c) = (db[j - 1][k], db[j][k], db[j + 1][k]);
            let curv = a - 2.0 * b + c;
            let dj = if curv < 0.0 { 0.5 * (a - c) / curv } else { 0.0 };
            let theta = (j as f64 + dj - 90.0).abs();
            let err = wall_diffuse_delay(A, R, theta).unwrap() - t;
            // Neighbouring facets are this far apart in delay.
            let facet_step = 2.0 * theta.to_radians().sin() * cfg.facet_len_m / SPEED_OF_LIGHT;
            assert!(err.abs() <= bin + facet_step, "delay {:.3} ns: {:.2} bins", t * 1e9, err / bin);
            errs.push(err.abs() / bin);
        }
    }
    assert!(errs.len() > 50);
    let mean_err = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean_err < 1.0, "mean ridge error {mean_err:.2} bins");
}
