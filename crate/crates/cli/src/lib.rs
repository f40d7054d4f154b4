//! File-based pipeline behind the `thzsense` binary.
//!
//! Every stage reads the artifacts of the previous one from the output
//! directory and appends a record to `manifest.json`:
//!
//! ```text
//! out/
//!   manifest.json  scene.json  config.json
//!   cfr/        pose_NN.json + pose_NN.bin
//!   estimates/  pose_NN_paths.csv, pose_NN_rows.csv
//!   tracks/     pose_NN_trajectories.csv, pose_NN_deembedded.csv, pose_NN_meta.json
//!   model/      pose_NN_classified.csv, pose_NN_hybrid.csv, diffuse_model*.json, specular_consistency.json
//!   report/     summary.json, summary.txt and CSV exports
//!   figures/    plot-ready CSVs (with --emit-figures)
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod figures;
pub mod manifest;
pub mod report;
pub mod stages;

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use thz_sense::config::SounderConfig;
use thz_sense::hybrid::ClassifyTolerances;
use thz_sense::sage::SageConfig;
use thz_sense::tracking::TrackerConfig;

pub use stages::{cmd_estimate, cmd_model, cmd_report, cmd_run_all, cmd_synth, cmd_track, RunOptions, SynthOptions};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for bad input: unreadable or malformed files, invalid flags,
/// missing upstream artifacts.
pub const EXIT_BAD_INPUT: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;

/// Maps an error to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<thz_sense::Error>() {
            return match e {
                thz_sense::Error::Numerical(_) => EXIT_NUMERICAL,
                _ => EXIT_BAD_INPUT,
            };
        }
    }
    EXIT_BAD_INPUT
}

/// Everything tunable, in one JSON document. Missing sections take their
/// defaults; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sounder: SounderConfig,
    pub sage: SageConfig,
    pub tracker: TrackerConfig,
    pub classify: ClassifyTolerances,
    /// PDP samples beyond this delay set the per-row noise floor, ns.
    pub guard_delay_ns: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sounder: SounderConfig::default(),
            sage: SageConfig::default(),
            tracker: TrackerConfig::default(),
            classify: ClassifyTolerances::default(),
            guard_delay_ns: thz_sense::padp::DEFAULT_GUARD_S * 1e9,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            thz_sense::Error::Schema {
                context: context.to_string(),
                message: e.to_string(),
            }
        })?;
        cfg.validate().with_context(|| context.to_string())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| thz_sense::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.sounder.validate()?;
        self.sage.validate()?;
        self.tracker.validate()?;
        self.classify.validate()?;
        if !(self.guard_delay_ns > 0.0) {
            bail!(thz_sense::Error::InvalidInput("guard_delay_ns must be > 0".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Parses a pose selection: `all`, or a comma list of indices and ranges
/// such as `1-3,14`. The result is sorted and free of duplicates.
pub fn parse_poses(spec: &str, available: &[usize]) -> Result<Vec<usize>> {
    let bad = |m: String| thz_sense::Error::InvalidInput(format!("--poses `{spec}`: {m}"));
    if spec.trim() == "all" {
        return Ok(available.to_vec());
    }
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let lo: usize = lo.parse().map_err(|_| bad(format!("`{part}` is not a pose index")))?;
        let hi: usize = hi.parse().map_err(|_| bad(format!("`{part}` is not a pose index")))?;
        if lo > hi {
            bail!(bad(format!("empty range `{part}`")));
        }
        for i in lo..=hi {
            if !available.contains(&i) {
                bail!(bad(format!("pose {i} is not in the scene")));
            }
            out.push(i);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Seed of one pose, derived from the run seed.
pub fn pose_seed(seed: u64, pose_index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(pose_index as u64)
}

pub(crate) fn pose_stem(pose_index: usize) -> String {
    format!("pose_{pose_index:02}")
}
