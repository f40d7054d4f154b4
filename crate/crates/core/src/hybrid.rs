//! Specular / diffuse classification of de-embedded MPCs, the diffuse power
//! law fit and hybrid CIR synthesis.
//!
//! Specular returns (walls and retro-reflecting corners) form the
//! target-related part of the channel; backscatter from the rest of each
//! wall is the environment-related part. The diffuse power is modeled in dB
//! as `n_diff · cos²(Δφ) + b_diff` where Δφ is the offset of the return from
//! the wall normal.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{FreqGrid, SounderConfig};
use crate::geometry::fspl_db;
use crate::scene::{SceneModel, TrxPose, Vec2, WallSegment};
use crate::synth::{add_tone, facet_phase, offset_from_normal_deg, GroundTruthPath, PathOrigin};
use crate::trace::{self, GeoPath};
use crate::tracking::DeembeddedMpc;
use crate::{db10, from_db10, wrap_deg, Error, Result, C64, SPEED_OF_LIGHT};

/// Angular step of the diffuse-manifold search.
const SEARCH_STEP_DEG: f64 = 0.1;

/// Matching tolerances of [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyTolerances {
    /// Delay tolerance in native delay bins.
    pub delay_bins: f64,
    pub angle_deg: f64,
}

impl Default for ClassifyTolerances {
    fn default() -> Self {
        Self {
            delay_bins: 2.0,
            angle_deg: 3.0,
        }
    }
}

impl ClassifyTolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.delay_bins > 0.0 && self.delay_bins.is_finite()) {
            return Err(Error::invalid("delay_bins must be > 0"));
        }
        if !(self.angle_deg > 0.0 && self.angle_deg < 90.0) {
            return Err(Error::invalid("angle_deg must be in (0, 90)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    TargetSpecular,
    EnvironmentDiffuse,
    Unmatched,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::TargetSpecular => "target_specular",
            Label::EnvironmentDiffuse => "environment_diffuse",
            Label::Unmatched => "unmatched",
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "target_specular" => Ok(Label::TargetSpecular),
            "environment_diffuse" => Ok(Label::EnvironmentDiffuse),
            "unmatched" => Ok(Label::Unmatched),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

/// A wall (by index) or the corner formed by two walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRef {
    Wall(usize),
    Corner(usize, usize),
}

impl fmt::Display for FeatureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureRef::Wall(i) => write!(f, "wall:{i}"),
            FeatureRef::Corner(i, j) => write!(f, "corner:{i}-{j}"),
        }
    }
}

impl FromStr for FeatureRef {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("bad feature reference {s:?}");
        if let Some(rest) = s.strip_prefix("wall:") {
            return rest.parse().map(FeatureRef::Wall).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("corner:") {
            let (a, b) = rest.split_once('-').ok_or_else(bad)?;
            return Ok(FeatureRef::Corner(
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
            ));
        }
        Err(bad())
    }
}

/// A specular return of the pose, described at boresight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub reference: FeatureRef,
    pub azimuth_deg: f64,
    /// Round-trip delay from the phase center.
    pub delay_s: f64,
    /// Propagation-only power, dB.
    pub power_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedMpc {
    pub mpc: DeembeddedMpc,
    pub label: Label,
    pub feature: Option<FeatureRef>,
    /// Offset from the normal of the matched wall, degrees in [0, 90].
    pub delta_phi_deg: Option<f64>,
    /// Round-trip specular path length of the matched wall from the phase
    /// center at boresight (diffuse matches only).
    pub specular_path_m: Option<f64>,
    /// Power of the observed specular MPC of the matched wall, or of a
    /// collinear segment of the same material (diffuse matches only).
    pub specular_power_db: Option<f64>,
}

/// Fitted diffuse power law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusePowerModel {
    pub n_diff: f64,
    pub b_diff: f64,
    pub rmse: f64,
}

impl DiffusePowerModel {
    pub fn power_db(&self, delta_phi_deg: f64) -> f64 {
        let c = delta_phi_deg.to_radians().cos();
        self.n_diff * c * c + self.b_diff
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::schema("diffuse model", e.to_string()))?;
        if !(m.n_diff.is_finite() && m.b_diff.is_finite() && m.rmse >= 0.0) {
            return Err(Error::schema("diffuse model", "coefficients must be finite and rmse >= 0"));
        }
        Ok(m)
    }
}

/// What the diffuse samples are measured against before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerReference {
    /// Absolute power, normalized to the specular path length of the matched
    /// wall.
    Absolute,
    /// As `Absolute`, minus the observed specular power of the matched wall.
    /// Samples without such a reference are dropped. This is the convention
    /// of [`synthesize_hybrid_cir`].
    RelativeToSpecular,
}

fn specular_origin(kind: crate::scene::WallKind, order: usize) -> PathOrigin {
    use crate::scene::WallKind;
    match (order, kind) {
        (2, _) => PathOrigin::CornerSpecular,
        (_, WallKind::Window) => PathOrigin::Window,
        (_, WallKind::ScattererZoneBoundary) => PathOrigin::Scatterer,
        (_, WallKind::Wall) => PathOrigin::WallSpecular,
    }
}

fn diffuse_origin(kind: crate::scene::WallKind) -> PathOrigin {
    use crate::scene::WallKind;
    match kind {
        WallKind::Window => PathOrigin::Window,
        WallKind::ScattererZoneBoundary => PathOrigin::Scatterer,
        WallKind::Wall => PathOrigin::WallDiffuse,
    }
}

/// Propagation power of a path whose phase-center length is `len_m`.
fn fspl_at(cfg_fc: f64, len_m: f64) -> f64 {
    fspl_db(cfg_fc, len_m).unwrap_or(f64::INFINITY)
}

fn boresight_len(path: &GeoPath, r: f64) -> f64 {
    path.length_m() - 2.0 * r
}

fn feature_of(path: &GeoPath) -> FeatureRef {
    match path.walls.as_slice() {
        [i] => FeatureRef::Wall(*i),
        [i, j] => FeatureRef::Corner(*i.min(j), *i.max(j)),
        _ => unreachable!("specular paths have order 1 or 2"),
    }
}

/// Specular features of a pose (walls and retro corners), with the
/// propagation power at carrier `f_c_hz`.
pub fn specular_features(scene: &SceneModel, pose: &TrxPose, f_c_hz: f64) -> Vec<Feature> {
    let r = pose.azimuth_radius_m;
    trace::specular_paths(scene, pose.center, 2)
        .iter()
        .filter_map(|p| {
            let len = boresight_len(p, r);
            if len <= 0.0 {
                return None;
            }
            let loss: f64 = p.walls.iter().map(|&w| scene.walls[w].material.specular_loss_db).sum();
            Some(Feature {
                reference: feature_of(p),
                azimuth_deg: p.azimuth_deg,
                delay_s: len / SPEED_OF_LIGHT,
                power_db: -fspl_at(f_c_hz, len) - loss,
            })
        })
        .collect()
}

fn collinear(a: &WallSegment, b: &WallSegment) -> bool {
    let tol = 1e-9;
    a.line_distance(b.p0) < tol && a.line_distance(b.p1) < tol
}

/// Closest point of the diffuse manifold to an MPC: the wall hit by a ray
/// from the center within the angular tolerance whose round-trip delay is
/// closest to the estimate.
fn diffuse_match(scene: &SceneModel, pose: &TrxPose, m: &DeembeddedMpc, tol_delay_s: f64, tol_angle_deg: f64) -> Option<usize> {
    let r = pose.azimuth_radius_m;
    let steps = (tol_angle_deg / SEARCH_STEP_DEG).round() as i64;
    let mut best: Option<(f64, i64, usize)> = None;
    for k in -steps..=steps {
        let phi = m.azimuth_deg + k as f64 * SEARCH_STEP_DEG;
        let Some((wall, s)) = scene.ray_hit(pose.center, Vec2::from_angle_deg(phi)) else {
            continue;
        };
        let err = (2.0 * (s - r) / SPEED_OF_LIGHT - m.delay_s).abs();
        if err > tol_delay_s {
            continue;
        }
        let better = match best {
            None => true,
            Some((e, kk, _)) => err < e || (err == e && k.abs() < kk.abs()),
        };
        if better {
            best = Some((err, k, wall));
        }
    }
    best.map(|(_, _, w)| w)
}

/// Labels every MPC of one pose. `delay_bin_s` scales the delay tolerance.
/// The result is in input order; each label depends only on its own MPC and
/// on the specular MPCs of the set, so reordering the input reorders the
/// output and nothing else.
pub fn classify(
    deembedded: &[DeembeddedMpc],
    scene: &SceneModel,
    pose: &TrxPose,
    delay_bin_s: f64,
    tol: &ClassifyTolerances,
) -> Vec<ClassifiedMpc> {
    let tol_delay = tol.delay_bins * delay_bin_s;
    // Power does not matter for matching; any carrier will do.
    let features = specular_features(scene, pose, 300e9);
    let c = pose.center;
    let r = pose.azimuth_radius_m;

    let mut out: Vec<ClassifiedMpc> = deembedded
        .iter()
        .map(|m| {
            let spec = features
                .iter()
                .filter(|f| {
                    (f.delay_s - m.delay_s).abs() <= tol_delay
                        && wrap_deg(f.azimuth_deg - m.azimuth_deg).abs() <= tol.angle_deg
                })
                .min_by(|a, b| {
                    let d = |f: &Feature| (f.delay_s - m.delay_s).abs() / tol_delay + wrap_deg(f.azimuth_deg - m.azimuth_deg).abs() / tol.angle_deg;
                    d(a).total_cmp(&d(b))
                });
            if let Some(f) = spec {
                let dphi = match f.reference {
                    FeatureRef::Wall(_) => wrap_deg(m.azimuth_deg - f.azimuth_deg).abs(),
                    FeatureRef::Corner(..) => 0.0,
                };
                return ClassifiedMpc {
                    mpc: *m,
                    label: Label::TargetSpecular,
                    feature: Some(f.reference),
                    delta_phi_deg: Some(dphi),
                    specular_path_m: None,
                    specular_power_db: None,
                };
            }
            match diffuse_match(scene, pose, m, tol_delay, tol.angle_deg) {
                Some(w) => {
                    let wall = &scene.walls[w];
                    let normal = wall.normal_towards_deg(c) + 180.0;
                    ClassifiedMpc {
                        mpc: *m,
                        label: Label::EnvironmentDiffuse,
                        feature: Some(FeatureRef::Wall(w)),
                        delta_phi_deg: Some(wrap_deg(m.azimuth_deg - normal).abs().min(90.0)),
                        specular_path_m: Some(2.0 * (wall.line_distance(c) - r)),
                        specular_power_db: None,
                    }
                }
                None => ClassifiedMpc {
                    mpc: *m,
                    label: Label::Unmatched,
                    feature: None,
                    delta_phi_deg: None,
                    specular_path_m: None,
                    specular_power_db: None,
                },
            }
        })
        .collect();

    // Observed specular level per wall: the strongest specular MPC on the
    // same line and material.
    let observed: Vec<(usize, f64)> = out
        .iter()
        .filter_map(|cm| match (cm.label, cm.feature) {
            (Label::TargetSpecular, Some(FeatureRef::Wall(w))) => Some((w, cm.mpc.power_db)),
            _ => None,
        })
        .collect();
    for cm in out.iter_mut() {
        if let (Label::EnvironmentDiffuse, Some(FeatureRef::Wall(w))) = (cm.label, cm.feature) {
            let wall = &scene.walls[w];
            cm.specular_power_db = observed
                .iter()
                .filter(|(o, _)| {
                    let other = &scene.walls[*o];
                    other.material == wall.material && collinear(wall, other)
                })
                .map(|&(_, p)| p)
                .max_by(|a, b| a.total_cmp(b));
        }
    }
    out
}

/// Diffuse samples `(cos²Δφ, power dB)` with the free-space loss difference
/// to the matched wall's specular path removed.
pub fn diffuse_samples(classified: &[ClassifiedMpc], reference: PowerReference) -> Vec<(f64, f64)> {
    classified
        .iter()
        .filter(|c| c.label == Label::EnvironmentDiffuse)
        .filter_map(|c| {
            let dphi = c.delta_phi_deg?;
            let d_spec = c.specular_path_m?;
            let d = c.mpc.delay_s * SPEED_OF_LIGHT;
            if !(d > 0.0 && d_spec > 0.0) {
                return None;
            }
            let mut p = c.mpc.power_db + 20.0 * (d / d_spec).log10();
            if reference == PowerReference::RelativeToSpecular {
                p -= c.specular_power_db?;
            }
            let cs = dphi.to_radians().cos();
            Some((cs * cs, p))
        })
        .collect()
}

/// Ordinary least squares of `y` on `x`.
pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<DiffusePowerModel> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 diffuse samples, got {m}")));
    }
    if samples.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::invalid("diffuse samples must be finite"));
    }
    let mf = m as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / mf;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / mf;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx) * (s.0 - mx)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    if sxx <= 1e-12 * mf {
        return Err(Error::Numerical("rank-deficient design: cos²Δφ does not vary".into()));
    }
    let n = sxy / sxx;
    let b = my - n * mx;
    let ssr: f64 = samples.iter().map(|(x, y)| (y - n * x - b).powi(2)).sum();
    Ok(DiffusePowerModel {
        n_diff: n,
        b_diff: b,
        rmse: (ssr / mf).sqrt(),
    })
}

pub fn fit_diffuse_model(classified: &[ClassifiedMpc], reference: PowerReference) -> Result<DiffusePowerModel> {
    fit_power_law(&diffuse_samples(classified, reference))
}

/// Specular power of one wall across poses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecularConsistency {
    /// `(pose_index, power_db)` for every pose with a match.
    pub powers: Vec<(usize, f64)>,
    pub missing: Vec<usize>,
    pub min_db: f64,
    pub max_db: f64,
    pub range_db: f64,
    pub median_db: f64,
    /// Poses more than 3 dB above the median.
    pub outliers: Vec<usize>,
}

pub const OUTLIER_MARGIN_DB: f64 = 3.0;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Power of the wall-specular MPC seen at `azimuth_deg` in every pose.
/// Matching the azimuth rather than a wall index lets a wall made of several
/// segments (a patch of another material, say) count as one.
pub fn specular_power_consistency(
    per_pose: &[(usize, Vec<DeembeddedMpc>)],
    scene: &SceneModel,
    azimuth_deg: f64,
    delay_bin_s: f64,
    tol: &ClassifyTolerances,
) -> Result<SpecularConsistency> {
    let mut powers = Vec::new();
    let mut missing = Vec::new();
    for (idx, mpcs) in per_pose {
        let pose = scene
            .pose(*idx)
            .ok_or_else(|| Error::invalid(format!("pose {idx} is not part of the scene")))?;
        let best = classify(mpcs, scene, pose, delay_bin_s, tol)
            .iter()
            .filter(|c| {
                c.label == Label::TargetSpecular
                    && matches!(c.feature, Some(FeatureRef::Wall(_)))
                    && wrap_deg(c.mpc.azimuth_deg - azimuth_deg).abs() <= tol.angle_deg
            })
            .map(|c| c.mpc.power_db)
            .max_by(|a, b| a.total_cmp(b));
        match best {
            Some(p) => powers.push((*idx, p)),
            None => missing.push(*idx),
        }
    }
    if powers.is_empty() {
        return Err(Error::invalid("no pose has a specular match at the requested azimuth"));
    }
    let mut vals: Vec<f64> = powers.iter().map(|p| p.1).collect();
    let med = median(&mut vals);
    let min = vals[0];
    let max = vals[vals.len() - 1];
    let outliers = powers
        .iter()
        .filter(|(_, p)| *p > med + OUTLIER_MARGIN_DB)
        .map(|(i, _)| *i)
        .collect();
    Ok(SpecularConsistency {
        powers,
        missing,
        min_db: min,
        max_db: max,
        range_db: max - min,
        median_db: med,
        outliers,
    })
}

/// One path of a hybrid CIR, at boresight, propagation only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridPath {
    pub amplitude: C64,
    /// Round-trip delay from the phase center.
    pub delay_s: f64,
    /// Azimuth seen from the rotation center.
    pub azimuth_deg: f64,
    pub origin: PathOrigin,
}

impl HybridPath {
    pub fn power_db(&self) -> f64 {
        db10(self.amplitude.norm_sqr())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridCir {
    pub pose_index: usize,
    pub target: Vec<HybridPath>,
    pub environment: Vec<HybridPath>,
}

fn response_of(paths: &[HybridPath], grid: &FreqGrid, out: &mut [C64]) {
    for p in paths {
        add_tone(out, grid, p.amplitude, p.delay_s);
    }
}

impl HybridCir {
    /// Frequency response of the target part alone.
    pub fn target_response(&self, grid: &FreqGrid) -> Vec<C64> {
        let mut h = vec![C64::new(0.0, 0.0); grid.len];
        response_of(&self.target, grid, &mut h);
        h
    }

    pub fn environment_response(&self, grid: &FreqGrid) -> Vec<C64> {
        let mut h = vec![C64::new(0.0, 0.0); grid.len];
        response_of(&self.environment, grid, &mut h);
        h
    }

    /// Frequency response of the whole CIR (omnidirectional, no antenna).
    pub fn response(&self, grid: &FreqGrid) -> Vec<C64> {
        let mut h = vec![C64::new(0.0, 0.0); grid.len];
        response_of(&self.target, grid, &mut h);
        response_of(&self.environment, grid, &mut h);
        h
    }

    /// All paths as ground truth, ready for directional synthesis with
    /// [`crate::synth::synthesize_paths`].
    pub fn to_paths(&self) -> Vec<GroundTruthPath> {
        let conv = |p: &HybridPath, specular| GroundTruthPath {
            amplitude: p.amplitude,
            delay_s: p.delay_s,
            azimuth_deg: p.azimuth_deg,
            origin: p.origin,
            specular,
        };
        self.target
            .iter()
            .map(|p| conv(p, true))
            .chain(self.environment.iter().map(|p| conv(p, false)))
            .collect()
    }

    /// Delays and azimuths of both parts as de-embedded MPCs with powers
    /// raised by the two-way boresight gain.
    pub fn as_deembedded(&self, boresight_gain_dbi: f64) -> Vec<DeembeddedMpc> {
        let g = from_db10(2.0 * boresight_gain_dbi).sqrt();
        self.target
            .iter()
            .chain(&self.environment)
            .enumerate()
            .map(|(i, p)| {
                let a = p.amplitude * g;
                DeembeddedMpc {
                    amplitude: a,
                    delay_s: p.delay_s,
                    azimuth_deg: p.azimuth_deg,
                    power_db: db10(a.norm_sqr()),
                    source_trajectory_id: i,
                }
            })
            .collect()
    }
}

/// Builds the hybrid CIR of a pose. Targets are the traced specular paths.
/// The environment holds one path per visible wall facet, with power set by
/// `model` relative to the specular level of the facet's wall at the facet's
/// own path length. Facets that would fall inside a specular matching cell of
/// `tol` are left out, which keeps the two parts disjoint.
pub fn synthesize_hybrid_cir(
    scene: &SceneModel,
    pose: &TrxPose,
    model: &DiffusePowerModel,
    cfg: &SounderConfig,
    tol: &ClassifyTolerances,
    seed: u64,
) -> Result<HybridCir> {
    scene.validate()?;
    let grid = cfg.grid()?;
    let tol_delay = tol.delay_bins * grid.delay_bin_s();
    let c = pose.center;
    let r = pose.azimuth_radius_m;

    let mut target = Vec::new();
    for p in trace::specular_paths(scene, c, 2) {
        let len = boresight_len(&p, r);
        if len <= 0.0 {
            continue;
        }
        let loss: f64 = p.walls.iter().map(|&w| scene.walls[w].material.specular_loss_db).sum();
        let db = -fspl_db(cfg.f_c_hz, len)? - loss;
        target.push(HybridPath {
            amplitude: C64::new(from_db10(db).sqrt(), 0.0),
            delay_s: len / SPEED_OF_LIGHT,
            azimuth_deg: p.azimuth_deg,
            origin: specular_origin(p.wall_kind, p.order()),
        });
    }

    let facets = trace::wall_facets(scene, cfg.facet_len_m);
    let mut environment = Vec::new();
    for p in trace::diffuse_paths(scene, c, 0.0, 180.0, &facets) {
        let len = boresight_len(&p, r);
        if len <= 0.0 {
            continue;
        }
        let delay = len / SPEED_OF_LIGHT;
        let in_cell = target.iter().any(|t: &HybridPath| {
            (t.delay_s - delay).abs() <= tol_delay && wrap_deg(t.azimuth_deg - p.azimuth_deg).abs() <= tol.angle_deg
        });
        if in_cell {
            continue;
        }
        let w = p.walls[0];
        let point = p.bounce_points[0];
        let dphi = offset_from_normal_deg(scene, w, c, point);
        let db = -fspl_db(cfg.f_c_hz, len)? - scene.walls[w].material.specular_loss_db + model.power_db(dphi);
        environment.push(HybridPath {
            amplitude: C64::from_polar(from_db10(db).sqrt(), facet_phase(seed, point)),
            delay_s: delay,
            azimuth_deg: p.azimuth_deg,
            origin: diffuse_origin(p.wall_kind),
        });
    }
    let by_delay = |a: &HybridPath, b: &HybridPath| a.delay_s.total_cmp(&b.delay_s).then(a.azimuth_deg.total_cmp(&b.azimuth_deg));
    target.sort_by(by_delay);
    environment.sort_by(by_delay);
    Ok(HybridCir {
        pose_index: pose.pose_index,
        target,
        environment,
    })
}

pub const CLASSIFIED_COLUMNS: [&str; 10] = [
    "id",
    "azimuth_deg",
    "delay_ns",
    "power_db",
    "phase_rad",
    "label",
    "feature",
    "delta_phi_deg",
    "specular_path_m",
    "specular_power_db",
];

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_classified(path: &Path, items: &[ClassifiedMpc]) -> Result<()> {
    let rows = items.iter().map(|c| {
        [
            c.mpc.source_trajectory_id.to_string(),
            c.mpc.azimuth_deg.to_string(),
            (c.mpc.delay_s * 1e9).to_string(),
            c.mpc.power_db.to_string(),
            c.mpc.amplitude.arg().to_string(),
            c.label.as_str().to_string(),
            c.feature.map(|f| f.to_string()).unwrap_or_default(),
            opt_str(c.delta_phi_deg),
            opt_str(c.specular_path_m),
            opt_str(c.specular_power_db),
        ]
    });
    crate::io::write_csv(path, &CLASSIFIED_COLUMNS, rows)
}

pub fn read_classified(path: &Path) -> Result<Vec<ClassifiedMpc>> {
    use crate::io::{field, read_csv};
    let schema = |name: &str, msg: String| Error::schema(path.display().to_string(), format!("field `{name}`: {msg}"));
    let opt = |rec: &csv::StringRecord, idx: usize, name: &str| -> Result<Option<f64>> {
        match rec.get(idx).unwrap_or("").trim() {
            "" => Ok(None),
            _ => field(rec, idx, name, path).map(Some),
        }
    };
    read_csv(path, &CLASSIFIED_COLUMNS)?
        .iter()
        .map(|rec| {
            let power_db: f64 = field(rec, 3, "power_db", path)?;
            let phase: f64 = field(rec, 4, "phase_rad", path)?;
            let label: Label = rec.get(5).unwrap_or("").parse().map_err(|e| schema("label", e))?;
            let feature = match rec.get(6).unwrap_or("").trim() {
                "" => None,
                s => Some(s.parse::<FeatureRef>().map_err(|e| schema("feature", e))?),
            };
            if (label == Label::Unmatched) != feature.is_none() {
                return Err(schema("feature", "must be empty exactly for unmatched rows".into()));
            }
            Ok(ClassifiedMpc {
                mpc: DeembeddedMpc {
                    amplitude: C64::from_polar(from_db10(power_db).sqrt(), phase),
                    delay_s: field::<f64>(rec, 2, "delay_ns", path)? * 1e-9,
                    azimuth_deg: field(rec, 1, "azimuth_deg", path)?,
                    power_db,
                    source_trajectory_id: field(rec, 0, "id", path)?,
                },
                label,
                feature,
                delta_phi_deg: opt(rec, 7, "delta_phi_deg")?,
                specular_path_m: opt(rec, 8, "specular_path_m")?,
                specular_power_db: opt(rec, 9, "specular_power_db")?,
            })
        })
        .collect()
}
