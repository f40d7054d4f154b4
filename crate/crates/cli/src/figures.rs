//! Plot-ready CSV exports, one file group per figure of the usual write-up:
//! PADP heatmap, measured vs reconstructed PDP, trajectories, point cloud,
//! distance-error CDF, delay spread and angular spread.

use std::path::Path;

use anyhow::Result;

use thz_sense::analytics::{self, SpreadSample};
use thz_sense::exec::Execution;
use thz_sense::io::{read_cfr, write_csv};
use thz_sense::padp::{self, Window};
use thz_sense::sage;
use thz_sense::scene::SceneModel;
use thz_sense::tracking;

use crate::manifest::RunManifest;
use crate::report::{self, ReportInputs};
use crate::stages::{cfr_stem, track_files};

fn spread_cdf(samples: &[SpreadSample]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = samples.iter().map(|s| s.value).collect();
    v.sort_by(f64::total_cmp);
    analytics::empirical_cdf(&v)
}

/// Writes `figures/` and returns the files written, relative to `out`.
pub fn write_figures(
    out: &Path,
    manifest: &RunManifest,
    scene: &SceneModel,
    inputs: &ReportInputs,
    window: Window,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut emit = |name: &str| {
        files.push(format!("figures/{name}"));
        out.join("figures").join(name)
    };

    if let (Some(&first), Some(pin)) = (manifest.poses.first(), inputs.poses.first()) {
        let cfr = read_cfr(&cfr_stem(out, first))?;
        let padp_data = padp::compute_padp(&cfr, window, Execution::default())?;
        padp::write_padp_csv(&emit("padp.csv"), &padp_data)?;

        let rows = pin.estimates.angles.iter().flat_map(|a| {
            a.mpcs
                .iter()
                .map(move |m| [a.angle_deg.to_string(), (m.delay_s * 1e9).to_string(), m.power_db.to_string()])
        });
        write_csv(&emit("padp_estimates.csv"), &["angle_deg", "delay_ns", "power_db"], rows)?;

        // Measured vs reconstructed PDP at the angle holding the strongest MPC.
        let best = pin
            .estimates
            .angles
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.mpcs.first().map(|m| (i, m.power_db)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((row_idx, _)) = best {
            let est = &pin.estimates.angles[row_idx];
            let n = cfr.grid.len;
            let measured = &cfr.data[row_idx * n..(row_idx + 1) * n];
            let recon = sage::reconstruct_row(est, &cfr.grid);
            let residual: Vec<_> = measured.iter().zip(&recon).map(|(a, b)| a - b).collect();
            let pm = padp::cfr_to_pdp(measured, &cfr.grid, window, est.angle_deg)?;
            let pr = padp::cfr_to_pdp(&recon, &cfr.grid, window, est.angle_deg)?;
            let pe = padp::cfr_to_pdp(&residual, &cfr.grid, window, est.angle_deg)?;
            let rows = (0..pm.delays_s.len()).map(|k| {
                [
                    (pm.delays_s[k] * 1e9).to_string(),
                    pm.power_db[k].to_string(),
                    pr.power_db[k].to_string(),
                    pe.power_db[k].to_string(),
                ]
            });
            write_csv(
                &emit("pdp_reconstruction.csv"),
                &["delay_ns", "measured_db", "reconstructed_db", "residual_db"],
                rows,
            )?;
        }

        let (tf, _, _) = track_files(first);
        let trajs = tracking::read_trajectories(&out.join(tf))?;
        tracking::write_trajectories(&emit("trajectories.csv"), &trajs)?;
        tracking::write_deembedded(&emit("deembedded.csv"), &pin.deembedded)?;
    }

    let points = report::all_points(scene, inputs);
    let rows = points.iter().map(|(pose, l, p)| {
        [
            pose.to_string(),
            l.as_str().to_string(),
            p.x_m.to_string(),
            p.y_m.to_string(),
            p.power_db.to_string(),
        ]
    });
    write_csv(&emit("points.csv"), &["pose", "label", "x_m", "y_m", "power_db"], rows)?;
    let rows = scene.walls.iter().map(|w| {
        [
            w.p0.x.to_string(),
            w.p0.y.to_string(),
            w.p1.x.to_string(),
            w.p1.y.to_string(),
            serde_json::to_value(w.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        ]
    });
    write_csv(&emit("walls.csv"), &["x0_m", "y0_m", "x1_m", "y1_m", "kind"], rows)?;
    let rows = scene
        .trx_poses
        .iter()
        .map(|p| [p.pose_index.to_string(), p.center.x.to_string(), p.center.y.to_string()]);
    write_csv(&emit("poses.csv"), &["pose", "x_m", "y_m"], rows)?;

    let pts: Vec<_> = points.iter().map(|p| p.2).collect();
    let cdf = if scene.walls.is_empty() {
        Vec::new()
    } else {
        analytics::distance_error_cdf(&pts, scene)?.cdf()
    };
    analytics::write_cdf(&emit("distance_cdf.csv"), &cdf)?;

    let ds = report::delay_spreads(inputs);
    let rows = ds
        .iter()
        .map(|(pose, s)| [pose.to_string(), s.context.to_string(), s.value.to_string()]);
    write_csv(&emit("delay_spread.csv"), &["pose", "angle_deg", "delay_spread_ns"], rows)?;
    let samples: Vec<SpreadSample> = ds.into_iter().map(|d| d.1).collect();
    analytics::write_cdf(&emit("delay_spread_cdf.csv"), &spread_cdf(&samples))?;

    let asp = report::angular_spreads(inputs);
    analytics::write_spreads(&emit("angular_spread.csv"), "pose", "angular_spread_deg", &asp)?;
    analytics::write_cdf(&emit("angular_spread_cdf.csv"), &spread_cdf(&asp))?;

    Ok(files)
}
