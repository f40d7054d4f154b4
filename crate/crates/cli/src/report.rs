//! Summary report of a finished run.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use serde_json::{json, Value};

use thz_sense::analytics::{self, DistanceErrors, LognormalFit, ReconPoint, SpreadSample};
use thz_sense::hybrid::{self, ClassifiedMpc, DiffusePowerModel, Label};
use thz_sense::sage::{self, EstimateSet};
use thz_sense::scene::SceneModel;
use thz_sense::tracking::{self, DeembeddedMpc};

use crate::manifest::RunManifest;
use crate::stages::{estimate_files, model_files, track_files, ABSOLUTE_MODEL_FILE, CONSISTENCY_FILE, RELATIVE_MODEL_FILE};
use crate::PipelineConfig;

/// Distance within which a reconstructed point counts as lying on a wall.
pub const ON_WALL_M: f64 = 0.02;

pub struct PoseInputs {
    pub pose: usize,
    pub estimates: EstimateSet,
    pub n_trajectories: usize,
    pub deembedded: Vec<DeembeddedMpc>,
    pub classified: Vec<ClassifiedMpc>,
}

pub struct ReportInputs {
    pub poses: Vec<PoseInputs>,
    pub relative: Option<DiffusePowerModel>,
    pub absolute: Option<DiffusePowerModel>,
    pub consistency: Value,
}

fn read_model(path: &Path) -> Result<Option<DiffusePowerModel>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    Ok(Some(DiffusePowerModel::from_json(&text)?))
}

pub fn load_inputs(out: &Path, manifest: &RunManifest) -> Result<ReportInputs> {
    let mut poses = Vec::new();
    for &idx in &manifest.poses {
        let (p, r) = estimate_files(idx);
        let (tf, df, _) = track_files(idx);
        let (cf, _) = model_files(idx);
        poses.push(PoseInputs {
            pose: idx,
            estimates: sage::read_estimates(&out.join(p), &out.join(r), idx)?,
            n_trajectories: tracking::read_trajectories(&out.join(tf))?.len(),
            deembedded: tracking::read_deembedded(&out.join(df))?,
            classified: hybrid::read_classified(&out.join(cf))?,
        });
    }
    let consistency_path = out.join(CONSISTENCY_FILE);
    let consistency = serde_json::from_str(&std::fs::read_to_string(&consistency_path)?).map_err(|e| {
        thz_sense::Error::Schema {
            context: consistency_path.display().to_string(),
            message: e.to_string(),
        }
    })?;
    Ok(ReportInputs {
        poses,
        relative: read_model(&out.join(RELATIVE_MODEL_FILE))?,
        absolute: read_model(&out.join(ABSOLUTE_MODEL_FILE))?,
        consistency,
    })
}

/// Reconstructed points of every pose, in scene coordinates.
pub fn all_points(scene: &SceneModel, inputs: &ReportInputs) -> Vec<(usize, Label, ReconPoint)> {
    let mut out = Vec::new();
    for p in &inputs.poses {
        let Some(pose) = scene.pose(p.pose) else { continue };
        let labels: Vec<Label> = p.classified.iter().map(|c| c.label).collect();
        let mpcs: Vec<DeembeddedMpc> = p.classified.iter().map(|c| c.mpc).collect();
        for (pt, l) in analytics::reconstruct_environment(&mpcs, pose).into_iter().zip(labels) {
            out.push((p.pose, l, pt));
        }
    }
    out
}

pub fn delay_spreads(inputs: &ReportInputs) -> Vec<(usize, SpreadSample)> {
    inputs
        .poses
        .iter()
        .flat_map(|p| analytics::delay_spread_per_angle(&p.estimates).into_iter().map(move |s| (p.pose, s)))
        .collect()
}

pub fn angular_spreads(inputs: &ReportInputs) -> Vec<SpreadSample> {
    inputs
        .poses
        .iter()
        .filter_map(|p| analytics::angular_spread_of_pose(&p.deembedded, p.pose).ok())
        .collect()
}

fn fit_json(f: Option<LognormalFit>) -> Value {
    f.map(|f| json!({"mu": f.mu, "sigma": f.sigma, "n": f.n})).unwrap_or(Value::Null)
}

fn errors_json(e: &Option<DistanceErrors>) -> Value {
    match e {
        Some(e) => json!({
            "n_points": e.sorted_m.len(),
            "mean_error_m": e.mean_m,
            "fraction_within_2cm": e.fraction_within(ON_WALL_M),
        }),
        None => Value::Null,
    }
}

fn opt_model(m: &Option<DiffusePowerModel>) -> Value {
    m.as_ref().map(|m| json!(m)).unwrap_or(Value::Null)
}

const EMPTY: &str = "(empty)";

/// Writes `report/` and returns the files written, relative to `out`.
pub fn write_report(out: &Path, scene: &SceneModel, cfg: &PipelineConfig, inputs: &ReportInputs) -> Result<Vec<String>> {
    let g0 = cfg.sounder.antenna.boresight_gain_dbi;
    let fc = cfg.sounder.f_c_hz;
    let mut files = Vec::new();

    // Per pose counts.
    let mut pose_rows = Vec::new();
    for p in &inputs.poses {
        let count = |l: Label| p.classified.iter().filter(|c| c.label == l).count();
        pose_rows.push(json!({
            "pose": p.pose,
            "n_mpcs": p.estimates.total_mpcs(),
            "n_trajectories": p.n_trajectories,
            "n_deembedded": p.deembedded.len(),
            "n_target_specular": count(Label::TargetSpecular),
            "n_environment_diffuse": count(Label::EnvironmentDiffuse),
            "n_unmatched": count(Label::Unmatched),
        }));
    }

    // Reconstruction.
    let points = all_points(scene, inputs);
    let pts: Vec<ReconPoint> = points.iter().map(|p| p.2).collect();
    let env: Vec<ReconPoint> = points
        .iter()
        .filter(|p| p.1 == Label::EnvironmentDiffuse)
        .map(|p| p.2)
        .collect();
    let has_walls = !scene.walls.is_empty();
    let all_err = has_walls.then(|| analytics::distance_error_cdf(&pts, scene)).transpose()?;
    let env_err = has_walls.then(|| analytics::distance_error_cdf(&env, scene)).transpose()?;
    analytics::write_points(&out.join("report/points.csv"), &pts)?;
    files.push("report/points.csv".to_string());
    let cdf = all_err.as_ref().map(|e| e.cdf()).unwrap_or_default();
    analytics::write_cdf(&out.join("report/distance_cdf.csv"), &cdf)?;
    files.push("report/distance_cdf.csv".to_string());

    // Reflection loss of the strongest specular MPC per feature.
    let mut loss_rows = Vec::new();
    for p in &inputs.poses {
        for (f, m, l) in analytics::specular_losses(&p.classified, fc, g0)? {
            loss_rows.push((p.pose, f, m, l));
        }
    }
    let rows = loss_rows.iter().map(|(pose, f, m, l)| {
        [
            pose.to_string(),
            f.to_string(),
            m.azimuth_deg.to_string(),
            (m.delay_s * 1e9).to_string(),
            l.to_string(),
        ]
    });
    thz_sense::io::write_csv(
        &out.join("report/reflection_loss.csv"),
        &["pose", "feature", "azimuth_deg", "delay_ns", "loss_db"],
        rows,
    )?;
    files.push("report/reflection_loss.csv".to_string());

    // Spreads.
    let ds = delay_spreads(inputs);
    let rows = ds
        .iter()
        .map(|(pose, s)| [pose.to_string(), s.context.to_string(), s.value.to_string()]);
    thz_sense::io::write_csv(&out.join("report/delay_spread.csv"), &["pose", "angle_deg", "delay_spread_ns"], rows)?;
    files.push("report/delay_spread.csv".to_string());
    let values: Vec<f64> = ds.iter().map(|d| d.1.value).collect();
    let ds_fit = analytics::fit_lognormal(&values).ok();
    let zeros = values.iter().filter(|v| **v == 0.0).count();

    let asp = angular_spreads(inputs);
    analytics::write_spreads(&out.join("report/angular_spread.csv"), "pose", "angular_spread_deg", &asp)?;
    files.push("report/angular_spread.csv".to_string());
    let as_fit = analytics::fit_lognormal(&asp.iter().map(|s| s.value).collect::<Vec<_>>()).ok();

    let summary = json!({
        "poses": pose_rows,
        "diffuse_fit": {
            "relative_to_specular": opt_model(&inputs.relative),
            "absolute": opt_model(&inputs.absolute),
        },
        "reconstruction": {
            "all": errors_json(&all_err),
            "environment_diffuse": errors_json(&env_err),
        },
        "reflection_loss": loss_rows.iter().map(|(pose, f, m, l)| json!({
            "pose": pose, "feature": f.to_string(), "azimuth_deg": m.azimuth_deg,
            "delay_ns": m.delay_s * 1e9, "loss_db": l,
        })).collect::<Vec<_>>(),
        "specular_consistency": inputs.consistency,
        "delay_spread": {
            "n": values.len(),
            "n_zero": zeros,
            "lognormal_ns": fit_json(ds_fit),
        },
        "angular_spread": {
            "n": asp.len(),
            "lognormal_deg": fit_json(as_fit),
        },
    });
    thz_sense::io::write_bytes(
        &out.join("report/summary.json"),
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;
    files.push("report/summary.json".to_string());

    let text = render_text(&summary);
    thz_sense::io::write_bytes(&out.join("report/summary.txt"), text.as_bytes())?;
    files.push("report/summary.txt".to_string());
    Ok(files)
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.3}"),
        None => "n/a".into(),
    }
}

/// Human-readable view of the summary. Every section is present; sections
/// without data say so.
pub fn render_text(s: &Value) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "== poses");
    match s["poses"].as_array() {
        Some(a) if !a.is_empty() => {
            let _ = writeln!(t, "pose  mpcs  trajectories  deembedded  specular  diffuse  unmatched");
            for p in a {
                let _ = writeln!(
                    t,
                    "{:>4}  {:>4}  {:>12}  {:>10}  {:>8}  {:>7}  {:>9}",
                    p["pose"].to_string(),
                    p["n_mpcs"].to_string(),
                    p["n_trajectories"].to_string(),
                    p["n_deembedded"].to_string(),
                    p["n_target_specular"].to_string(),
                    p["n_environment_diffuse"].to_string(),
                    p["n_unmatched"].to_string()
                );
            }
        }
        _ => {
            let _ = writeln!(t, "{EMPTY}");
        }
    }

    let _ = writeln!(t, "\n== diffuse fit (n_diff cos^2 + b_diff, dB)");
    for (name, key) in [("relative to specular", "relative_to_specular"), ("absolute", "absolute")] {
        let m = &s["diffuse_fit"][key];
        if m.is_null() {
            let _ = writeln!(t, "{name}: {EMPTY}");
        } else {
            let _ = writeln!(t, "{name}: n = {}, b = {}, rmse = {}", num(&m["n_diff"]), num(&m["b_diff"]), num(&m["rmse"]));
        }
    }

    let _ = writeln!(t, "\n== reconstruction (distance to nearest wall)");
    for (name, key) in [("all", "all"), ("environment", "environment_diffuse")] {
        let r = &s["reconstruction"][key];
        if r.is_null() || r["n_points"] == 0 {
            let _ = writeln!(t, "{name}: {EMPTY}");
        } else {
            let _ = writeln!(
                t,
                "{name}: {} points, mean error {} cm, {} within 2 cm",
                r["n_points"],
                r["mean_error_m"].as_f64().map(|m| format!("{:.2}", m * 100.0)).unwrap_or("n/a".into()),
                num(&r["fraction_within_2cm"])
            );
        }
    }

    let _ = writeln!(t, "\n== reflection loss (strongest specular per feature)");
    match s["reflection_loss"].as_array() {
        Some(a) if !a.is_empty() => {
            for r in a {
                let _ = writeln!(
                    t,
                    "pose {:>2} {:<12} az {:>7} delay {:>8} ns  L = {} dB",
                    r["pose"].to_string(),
                    r["feature"].as_str().unwrap_or(""),
                    num(&r["azimuth_deg"]),
                    num(&r["delay_ns"]),
                    num(&r["loss_db"])
                );
            }
        }
        _ => {
            let _ = writeln!(t, "{EMPTY}");
        }
    }

    let _ = writeln!(t, "\n== specular power consistency");
    match s["specular_consistency"].as_array() {
        Some(a) if !a.is_empty() => {
            for c in a {
                let r = &c["report"];
                let _ = writeln!(
                    t,
                    "azimuth {}: {} poses, range {} dB ({} .. {}), outliers {}, missing {}",
                    num(&c["azimuth_deg"]),
                    r["powers"].as_array().map(|v| v.len()).unwrap_or(0),
                    num(&r["range_db"]),
                    num(&r["min_db"]),
                    num(&r["max_db"]),
                    r["outliers"],
                    r["missing"]
                );
            }
        }
        _ => {
            let _ = writeln!(t, "{EMPTY}");
        }
    }

    let _ = writeln!(t, "\n== delay spread (per rotation angle, log10 ns)");
    let d = &s["delay_spread"];
    if d["lognormal_ns"].is_null() {
        let _ = writeln!(t, "{EMPTY}");
    } else {
        let _ = writeln!(
            t,
            "{} samples ({} zero, excluded from the fit): mu = {}, sigma = {}",
            d["n"],
            d["n_zero"],
            num(&d["lognormal_ns"]["mu"]),
            num(&d["lognormal_ns"]["sigma"])
        );
    }

    let _ = writeln!(t, "\n== angular spread (per pose, log10 deg)");
    let a = &s["angular_spread"];
    if a["lognormal_deg"].is_null() {
        let _ = writeln!(t, "{EMPTY}");
    } else {
        let _ = writeln!(
            t,
            "{} poses: mu = {}, sigma = {}",
            a["n"],
            num(&a["lognormal_deg"]["mu"]),
            num(&a["lognormal_deg"]["sigma"])
        );
    }
    t
}
