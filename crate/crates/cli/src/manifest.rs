//! Run manifest: what was run, with which inputs, and what each stage wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub stage: String,
    /// Effective parameters of the stage.
    pub params: BTreeMap<String, Value>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    /// Scene as given on the command line, or `builtin:l-room`.
    pub scene_source: String,
    /// Config as given on the command line, or `builtin:default`.
    pub config_source: String,
    pub poses: Vec<usize>,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(scene_source: String, config_source: String, poses: Vec<usize>, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scene_source,
            config_source,
            poses,
            seed,
            stages: Vec::new(),
        }
    }

    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .with_context(|| format!("cannot read {} (run `synth` first)", path.display()))?;
        serde_json::from_str(&text).map_err(|e| {
            anyhow::Error::new(thz_sense::Error::Schema {
                context: path.display().to_string(),
                message: e.to_string(),
            })
        })
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Latest record of `stage`.
    pub fn stage(&self, stage: &str) -> Option<&StageRecord> {
        self.stages.iter().rev().find(|s| s.stage == stage)
    }

    /// Fails unless `stage` has run and all its outputs still exist.
    pub fn require(&self, out: &Path, stage: &str) -> Result<&StageRecord> {
        let Some(rec) = self.stage(stage) else {
            bail!(missing(format!("stage `{stage}` has not been run in {}", out.display())));
        };
        for f in &rec.outputs {
            if !out.join(f).exists() {
                bail!(missing(format!("output `{f}` of stage `{stage}` is missing")));
            }
        }
        Ok(rec)
    }

    pub fn append(&mut self, out: &Path, record: StageRecord) -> Result<()> {
        self.stages.push(record);
        self.save(out)
    }
}

fn missing(msg: String) -> thz_sense::Error {
    thz_sense::Error::InvalidInput(msg)
}
