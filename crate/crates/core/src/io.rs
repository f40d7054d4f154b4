//! File formats: CFR datasets (JSON header + little-endian f32 pairs) and
//! small CSV helpers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::FreqGrid;
use crate::synth::{DirectionalCfr, GroundTruthPath};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfrHeader {
    pub pose_index: usize,
    pub angles: Vec<f64>,
    pub f_start: f64,
    pub f_stop: f64,
    pub n_freq: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<GroundTruthPath>>,
    #[serde(default = "default_floor")]
    pub noise_floor_db: f64,
    #[serde(default = "default_true")]
    pub noise_enabled: bool,
}

fn default_floor() -> f64 {
    -120.0
}

fn default_true() -> bool {
    true
}

/// Paths of the header and sample file for `stem` (without extension).
pub fn cfr_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

fn encode_samples(data: &[C64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for z in data {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    buf
}

/// Serialized header and sample bytes, ready to be written.
pub fn encode_cfr(cfr: &DirectionalCfr) -> (String, Vec<u8>) {
    let header = CfrHeader {
        pose_index: cfr.pose_index,
        angles: cfr.angles_deg.clone(),
        f_start: cfr.grid.start_hz,
        f_stop: cfr.grid.stop_hz(),
        n_freq: cfr.grid.len,
        seed: cfr.seed,
        truth: cfr.truth.clone(),
        noise_floor_db: cfr.noise_floor_db,
        noise_enabled: cfr.noise_enabled,
    };
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    (json, encode_samples(&cfr.data))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.json` and `<stem>.bin`.
pub fn write_cfr(stem: &Path, cfr: &DirectionalCfr) -> Result<()> {
    let (json_path, bin_path) = cfr_paths(stem);
    let (json, bin) = encode_cfr(cfr);
    write_bytes(&bin_path, &bin)?;
    write_bytes(&json_path, json.as_bytes())
}

/// Reads a CFR dataset, checking the sample count against the header.
pub fn read_cfr(stem: &Path) -> Result<DirectionalCfr> {
    let (json_path, bin_path) = cfr_paths(stem);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let header: CfrHeader = serde_json::from_str(&text)
        .map_err(|e| Error::schema(json_path.display().to_string(), e.to_string()))?;
    let grid = FreqGrid::new(header.f_start, header.f_stop, header.n_freq)
        .map_err(|e| Error::schema(json_path.display().to_string(), e.to_string()))?;
    if header.angles.is_empty() {
        return Err(Error::schema(json_path.display().to_string(), "angles: empty"));
    }
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let expect = header.angles.len() * header.n_freq * 8;
    if bytes.len() != expect {
        return Err(Error::schema(
            bin_path.display().to_string(),
            format!("binary length {} does not match header ({} bytes expected)", bytes.len(), expect),
        ));
    }
    let data: Vec<C64> = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            C64::new(re as f64, im as f64)
        })
        .collect();
    let cfr = DirectionalCfr {
        pose_index: header.pose_index,
        angles_deg: header.angles,
        grid,
        data,
        truth: header.truth,
        seed: header.seed,
        noise_floor_db: header.noise_floor_db,
        noise_enabled: header.noise_enabled,
    };
    cfr.validate()
        .map_err(|e| Error::schema(bin_path.display().to_string(), e.to_string()))?;
    Ok(cfr)
}

/// Writes a CSV file with the given header row.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(r).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    write_bytes(path, &bytes)
}

/// Reads a CSV file into records, requiring the exact header row.
pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::schema(path.display().to_string(), format!("{other:?}")),
    })?;
    let got = r
        .headers()
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?
        .clone();
    if got.len() != header.len() || got.iter().zip(header).any(|(a, b)| a != *b) {
        let missing: Vec<_> = header.iter().filter(|h| !got.iter().any(|g| g == **h)).collect();
        return Err(Error::schema(
            path.display().to_string(),
            format!("unexpected columns {:?}, missing {:?}", got.iter().collect::<Vec<_>>(), missing),
        ));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        out.push(rec.map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?);
    }
    Ok(out)
}

/// Parses column `idx` (named `name`) of a record as `T`.
pub fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, path: &Path) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.trim().parse().map_err(|_| {
        Error::schema(
            path.display().to_string(),
            format!("field `{name}`: cannot parse {raw:?}"),
        )
    })
}
