//! The pipeline stages. Each one loads and checks all of its inputs before
//! writing anything.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use thz_sense::exec::Execution;
use thz_sense::hybrid::{self, ClassifiedMpc, DiffusePowerModel, PowerReference};
use thz_sense::io::{read_cfr, write_cfr};
use thz_sense::padp::Window;
use thz_sense::sage::{self, estimate_all, FloorMode};
use thz_sense::scene::SceneModel;
use thz_sense::synth::synthesize_cfr;
use thz_sense::tracking::{self, track_pose};

use crate::manifest::{RunManifest, StageRecord};
use crate::{parse_poses, pose_seed, pose_stem, PipelineConfig};

pub const SCENE_FILE: &str = "scene.json";
pub const CONFIG_FILE: &str = "config.json";
pub const RELATIVE_MODEL_FILE: &str = "model/diffuse_model.json";
pub const ABSOLUTE_MODEL_FILE: &str = "model/diffuse_model_absolute.json";
pub const CONSISTENCY_FILE: &str = "model/specular_consistency.json";

pub const BUILTIN_SCENE: &str = "builtin:l-room";
pub const BUILTIN_CONFIG: &str = "builtin:default";

/// Inputs of `synth`.
#[derive(Debug, Clone, Default)]
pub struct SynthOptions {
    pub scene: Option<PathBuf>,
    pub config: Option<PathBuf>,
    /// Pose selection, `all` when absent.
    pub poses: Option<String>,
    pub seed: u64,
}

/// Flags of the downstream stages.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub threshold_db: Option<f64>,
    pub gate_ns: Option<f64>,
    pub window: Window,
    pub emit_figures: bool,
}

pub(crate) fn cfr_stem(out: &Path, pose: usize) -> PathBuf {
    out.join("cfr").join(pose_stem(pose))
}

pub(crate) fn estimate_files(pose: usize) -> (String, String) {
    let s = pose_stem(pose);
    (format!("estimates/{s}_paths.csv"), format!("estimates/{s}_rows.csv"))
}

pub(crate) fn track_files(pose: usize) -> (String, String, String) {
    let s = pose_stem(pose);
    (
        format!("tracks/{s}_trajectories.csv"),
        format!("tracks/{s}_deembedded.csv"),
        format!("tracks/{s}_meta.json"),
    )
}

pub(crate) fn model_files(pose: usize) -> (String, String) {
    let s = pose_stem(pose);
    (format!("model/{s}_classified.csv"), format!("model/{s}_hybrid.csv"))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| thz_sense::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    thz_sense::io::write_bytes(path, text.as_bytes())?;
    Ok(())
}

pub(crate) fn load_run(out: &Path) -> Result<(RunManifest, SceneModel, PipelineConfig)> {
    let manifest = RunManifest::load(out)?;
    manifest.require(out, "synth")?;
    let scene = SceneModel::load(&out.join(SCENE_FILE))?;
    let cfg = PipelineConfig::load(&out.join(CONFIG_FILE))?;
    Ok((manifest, scene, cfg))
}

fn params(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Synthesizes one CFR dataset per selected pose.
pub fn cmd_synth(out: &Path, opts: &SynthOptions) -> Result<()> {
    let (scene, scene_source) = match &opts.scene {
        Some(p) => (SceneModel::load(p)?, p.display().to_string()),
        None => (SceneModel::l_room(), BUILTIN_SCENE.to_string()),
    };
    let (cfg, config_source) = match &opts.config {
        Some(p) => (PipelineConfig::load(p)?, p.display().to_string()),
        None => (PipelineConfig::default(), BUILTIN_CONFIG.to_string()),
    };
    let available: Vec<usize> = scene.trx_poses.iter().map(|p| p.pose_index).collect();
    let poses = parse_poses(opts.poses.as_deref().unwrap_or("all"), &available)?;

    let mut manifest = RunManifest::new(scene_source, config_source, poses.clone(), opts.seed);
    if let Ok(existing) = RunManifest::load(out) {
        let same = existing.scene_source == manifest.scene_source
            && existing.config_source == manifest.config_source
            && existing.poses == manifest.poses
            && existing.seed == manifest.seed;
        if !same {
            bail!(thz_sense::Error::InvalidInput(format!(
                "{} already holds a different run; use a fresh output directory",
                out.display()
            )));
        }
        manifest = existing;
    }

    make_dir(&out.join("cfr"))?;
    write_text(&out.join(SCENE_FILE), &(scene.to_json() + "\n"))?;
    write_text(&out.join(CONFIG_FILE), &cfg.to_json())?;
    let mut outputs = vec![SCENE_FILE.to_string(), CONFIG_FILE.to_string()];
    for &idx in &poses {
        let pose = scene.pose(idx).expect("pose checked above");
        log::info!("synth: pose {idx}");
        let cfr = synthesize_cfr(&scene, pose, &cfg.sounder, pose_seed(opts.seed, idx), Execution::default())?;
        write_cfr(&cfr_stem(out, idx), &cfr)?;
        let s = pose_stem(idx);
        outputs.push(format!("cfr/{s}.json"));
        outputs.push(format!("cfr/{s}.bin"));
    }
    manifest.append(
        out,
        StageRecord {
            stage: "synth".into(),
            params: params(&[
                ("noise_enabled", json!(cfg.sounder.noise_enabled)),
                ("noise_floor_db", json!(cfg.sounder.noise_floor_db)),
            ]),
            outputs,
        },
    )
}

/// Per-angle SAGE extraction.
pub fn cmd_estimate(out: &Path, threshold_db: Option<f64>) -> Result<()> {
    let (mut manifest, _scene, cfg) = load_run(out)?;
    let mut sage_cfg = cfg.sage;
    if let Some(t) = threshold_db {
        sage_cfg.threshold_offset_db = t;
    }
    sage_cfg.validate()?;
    // Check every dataset before producing any output.
    for &idx in &manifest.poses {
        let stem = cfr_stem(out, idx);
        let cfr = read_cfr(&stem).with_context(|| format!("pose {idx}"))?;
        if cfr.pose_index != idx {
            bail!(thz_sense::Error::Schema {
                context: stem.with_extension("json").display().to_string(),
                message: format!("pose_index: expected {idx}, found {}", cfr.pose_index),
            });
        }
    }
    make_dir(&out.join("estimates"))?;
    let floor = FloorMode::Estimate {
        guard_delay_s: cfg.guard_delay_ns * 1e-9,
    };
    let mut outputs = Vec::new();
    for &idx in &manifest.poses {
        log::info!("estimate: pose {idx}");
        let cfr = read_cfr(&cfr_stem(out, idx))?;
        let est = estimate_all(&cfr, &sage_cfg, floor, Execution::default())?;
        let (p, r) = estimate_files(idx);
        sage::write_estimates(&out.join(&p), &out.join(&r), &est)?;
        outputs.push(p);
        outputs.push(r);
    }
    manifest.append(
        out,
        StageRecord {
            stage: "estimate".into(),
            params: params(&[
                ("threshold_db", json!(sage_cfg.threshold_offset_db)),
                ("guard_delay_ns", json!(cfg.guard_delay_ns)),
            ]),
            outputs,
        },
    )
}

/// Trajectory tracking and de-embedding.
pub fn cmd_track(out: &Path, gate_ns: Option<f64>) -> Result<()> {
    let (mut manifest, scene, cfg) = load_run(out)?;
    manifest.require(out, "estimate")?;
    let mut tcfg = cfg.tracker;
    if let Some(g) = gate_ns {
        tcfg.delay_gate_s = g * 1e-9;
    }
    tcfg.validate()?;
    let bin = cfg.sounder.grid()?.delay_bin_s();
    let mut sets = Vec::new();
    for &idx in &manifest.poses {
        let (p, r) = estimate_files(idx);
        sets.push(sage::read_estimates(&out.join(p), &out.join(r), idx)?);
    }
    make_dir(&out.join("tracks"))?;
    let mut outputs = Vec::new();
    for (est, &idx) in sets.iter().zip(&manifest.poses) {
        log::info!("track: pose {idx}");
        let pose = scene
            .pose(idx)
            .ok_or_else(|| thz_sense::Error::InvalidInput(format!("pose {idx} is not in the scene")))?;
        let tr = track_pose(est, &scene, pose, &tcfg, bin)?;
        let (tf, df, mf) = track_files(idx);
        tracking::write_trajectories(&out.join(&tf), &tr.trajectories)?;
        tracking::write_deembedded(&out.join(&df), &tr.deembedded)?;
        let reference = tr.reference.as_ref().map(|r| {
            json!({
                "trajectory_id": r.id,
                "len": r.len(),
                "start_angle_deg": r.members[0].0,
                "end_angle_deg": r.members[r.len() - 1].0,
            })
        });
        let meta = json!({
            "pose": idx,
            "reference": reference,
            "weights": tr.weights,
            "n_trajectories": tr.trajectories.len(),
        });
        write_text(&out.join(&mf), &(serde_json::to_string_pretty(&meta)? + "\n"))?;
        outputs.extend([tf, df, mf]);
    }
    manifest.append(
        out,
        StageRecord {
            stage: "track".into(),
            params: params(&[
                ("gate_ns", json!(tcfg.delay_gate_s * 1e9)),
                ("mcd_gate_multiplier", json!(tcfg.mcd_gate_multiplier)),
                ("min_track_len", json!(tcfg.min_track_len)),
            ]),
            outputs,
        },
    )
}

fn write_hybrid_csv(path: &Path, cir: &hybrid::HybridCir) -> Result<()> {
    let rows = cir
        .target
        .iter()
        .map(|p| ("target", p))
        .chain(cir.environment.iter().map(|p| ("environment", p)))
        .map(|(part, p)| {
            [
                part.to_string(),
                (p.delay_s * 1e9).to_string(),
                p.azimuth_deg.to_string(),
                p.power_db().to_string(),
                p.amplitude.arg().to_string(),
            ]
        });
    thz_sense::io::write_csv(path, &["part", "delay_ns", "azimuth_deg", "power_db", "phase_rad"], rows)?;
    Ok(())
}

fn fit_or_warn(all: &[ClassifiedMpc], reference: PowerReference) -> Option<DiffusePowerModel> {
    match hybrid::fit_diffuse_model(all, reference) {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!("diffuse fit ({reference:?}) skipped: {e}");
            None
        }
    }
}

/// Classification, diffuse fit, specular consistency and hybrid CIRs.
pub fn cmd_model(out: &Path) -> Result<()> {
    let (mut manifest, scene, cfg) = load_run(out)?;
    manifest.require(out, "track")?;
    let bin = cfg.sounder.grid()?.delay_bin_s();
    let mut per_pose = Vec::new();
    for &idx in &manifest.poses {
        let (_, df, _) = track_files(idx);
        per_pose.push((idx, tracking::read_deembedded(&out.join(df))?));
    }
    make_dir(&out.join("model"))?;
    let mut outputs = Vec::new();
    let mut all = Vec::new();
    for (idx, mpcs) in &per_pose {
        let pose = scene
            .pose(*idx)
            .ok_or_else(|| thz_sense::Error::InvalidInput(format!("pose {idx} is not in the scene")))?;
        let cl = hybrid::classify(mpcs, &scene, pose, bin, &cfg.classify);
        let (cf, _) = model_files(*idx);
        hybrid::write_classified(&out.join(&cf), &cl)?;
        outputs.push(cf);
        all.extend(cl);
    }

    let relative = fit_or_warn(&all, PowerReference::RelativeToSpecular);
    let absolute = fit_or_warn(&all, PowerReference::Absolute);
    if let Some(m) = &relative {
        write_text(&out.join(RELATIVE_MODEL_FILE), &(m.to_json() + "\n"))?;
        outputs.push(RELATIVE_MODEL_FILE.into());
    }
    if let Some(m) = &absolute {
        write_text(&out.join(ABSOLUTE_MODEL_FILE), &(m.to_json() + "\n"))?;
        outputs.push(ABSOLUTE_MODEL_FILE.into());
    }

    let mut consistency = Vec::new();
    for az in [0.0, 90.0, 180.0, 270.0] {
        if let Ok(rep) = hybrid::specular_power_consistency(&per_pose, &scene, az, bin, &cfg.classify) {
            consistency.push(json!({ "azimuth_deg": az, "report": rep }));
        }
    }
    write_text(&out.join(CONSISTENCY_FILE), &(serde_json::to_string_pretty(&consistency)? + "\n"))?;
    outputs.push(CONSISTENCY_FILE.into());

    if let Some(m) = &relative {
        for &idx in &manifest.poses {
            let pose = scene.pose(idx).expect("checked above");
            let cir = hybrid::synthesize_hybrid_cir(&scene, pose, m, &cfg.sounder, &cfg.classify, pose_seed(manifest.seed, idx))?;
            let (_, hf) = model_files(idx);
            write_hybrid_csv(&out.join(&hf), &cir)?;
            outputs.push(hf);
        }
    }
    manifest.append(
        out,
        StageRecord {
            stage: "model".into(),
            params: params(&[
                ("tol_delay_bins", json!(cfg.classify.delay_bins)),
                ("tol_angle_deg", json!(cfg.classify.angle_deg)),
            ]),
            outputs,
        },
    )
}

/// Summary report, CSV exports and optional figure data.
pub fn cmd_report(out: &Path, opts: &RunOptions) -> Result<()> {
    let (mut manifest, scene, cfg) = load_run(out)?;
    manifest.require(out, "model")?;
    let inputs = crate::report::load_inputs(out, &manifest)?;
    make_dir(&out.join("report"))?;
    let mut outputs = crate::report::write_report(out, &scene, &cfg, &inputs)?;
    if opts.emit_figures {
        make_dir(&out.join("figures"))?;
        outputs.extend(crate::figures::write_figures(out, &manifest, &scene, &inputs, opts.window)?);
    }
    manifest.append(
        out,
        StageRecord {
            stage: "report".into(),
            params: params(&[
                ("window", json!(opts.window)),
                ("emit_figures", json!(opts.emit_figures)),
            ]),
            outputs,
        },
    )
}

/// All stages in order, with the same artifacts as running them one by one.
pub fn cmd_run_all(out: &Path, synth: &SynthOptions, opts: &RunOptions) -> Result<()> {
    cmd_synth(out, synth)?;
    cmd_estimate(out, opts.threshold_db)?;
    cmd_track(out, opts.gate_ns)?;
    cmd_model(out)?;
    cmd_report(out, opts)
}
