//! Forward simulator: directional channel frequency responses for a rotating
//! monostatic horn, with recorded ground truth.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{AntennaPattern, FreqGrid, SounderConfig};
use crate::exec::Execution;
use crate::geometry::fspl_db;
use crate::scene::{SceneModel, TrxPose, Vec2, WallKind};
use crate::trace::{self, GeoPath, PathKind, TraceOptions};
use crate::{from_db10, wrap_deg, Error, Result, C64, SPEED_OF_LIGHT};

/// Two-way-symmetric horn gain at `offset_deg` from boresight, dBi.
pub fn antenna_gain_db(pattern: &AntennaPattern, offset_deg: f64) -> f64 {
    let off = wrap_deg(offset_deg);
    let main = pattern.boresight_gain_dbi - 3.0 * (2.0 * off / pattern.hpbw_deg).powi(2);
    main.max(pattern.boresight_gain_dbi + pattern.floor_db)
}

/// Pattern phase at `offset_deg`; zero unless a ripple is configured.
pub fn antenna_phase_rad(pattern: &AntennaPattern, offset_deg: f64) -> f64 {
    if pattern.phase_ripple_rad == 0.0 || pattern.hpbw_deg.is_infinite() {
        return 0.0;
    }
    pattern.phase_ripple_rad * (PI * wrap_deg(offset_deg) / pattern.hpbw_deg).sin()
}

/// Complex two-way antenna response for departure and arrival offsets.
pub fn two_way_response(pattern: &AntennaPattern, dep_offset_deg: f64, arr_offset_deg: f64) -> C64 {
    let g = antenna_gain_db(pattern, dep_offset_deg) + antenna_gain_db(pattern, arr_offset_deg);
    let ph = antenna_phase_rad(pattern, dep_offset_deg) + antenna_phase_rad(pattern, arr_offset_deg);
    C64::from_polar(from_db10(g).sqrt(), ph)
}

/// Phase factor of the rotating phase center, `exp(j 4π f r cos φ / c)`.
pub fn rotation_manifold(f_hz: f64, phi_deg: f64, r_m: f64) -> C64 {
    let cycles = (2.0 * f_hz * r_m * phi_deg.to_radians().cos() / SPEED_OF_LIGHT).rem_euclid(1.0);
    C64::from_polar(1.0, TAU * cycles)
}

/// `exp(-j 2π f τ)` with the argument reduced in cycles first.
#[inline]
pub fn delay_phasor(f_hz: f64, tau_s: f64) -> C64 {
    let cycles = (f_hz * tau_s).rem_euclid(1.0);
    let (s, c) = (TAU * cycles).sin_cos();
    C64::new(c, -s)
}

const REANCHOR: usize = 32;

/// Adds `alpha * exp(-j2π f_n τ)` to every bin of `row`.
pub fn add_tone(row: &mut [C64], grid: &FreqGrid, alpha: C64, tau_s: f64) {
    let step = delay_phasor(grid.step_hz, tau_s);
    let mut z = C64::new(0.0, 0.0);
    for (n, v) in row.iter_mut().enumerate() {
        if n % REANCHOR == 0 {
            z = alpha * delay_phasor(grid.freq(n), tau_s);
        }
        *v += z;
        z *= step;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathOrigin {
    WallSpecular,
    WallDiffuse,
    CornerSpecular,
    Window,
    Scatterer,
}

impl PathOrigin {
    fn of(kind: WallKind, specular: bool, order: usize) -> Self {
        match (kind, specular, order) {
            (_, true, 2) => PathOrigin::CornerSpecular,
            (WallKind::Window, ..) => PathOrigin::Window,
            (WallKind::ScattererZoneBoundary, ..) => PathOrigin::Scatterer,
            (WallKind::Wall, true, _) => PathOrigin::WallSpecular,
            (WallKind::Wall, false, _) => PathOrigin::WallDiffuse,
        }
    }
}

/// A physical path as seen with the boresight pointing straight at it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPath {
    /// Propagation-only amplitude (no antenna gain), linear.
    pub amplitude: C64,
    /// Round-trip delay from the phase center when the boresight points along
    /// `azimuth_deg`.
    pub delay_s: f64,
    /// Azimuth of the path seen from the rotation center.
    pub azimuth_deg: f64,
    pub origin: PathOrigin,
    pub specular: bool,
}

impl GroundTruthPath {
    pub fn power_db(&self) -> f64 {
        crate::db10(self.amplitude.norm_sqr())
    }
}

/// Directional CFR of one pose: `n_angles × n_freq`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalCfr {
    pub pose_index: usize,
    pub angles_deg: Vec<f64>,
    pub grid: FreqGrid,
    pub data: Vec<C64>,
    pub truth: Option<Vec<GroundTruthPath>>,
    pub seed: u64,
    /// Nominal noise floor of the sounder, dB per PDP bin.
    pub noise_floor_db: f64,
    pub noise_enabled: bool,
}

impl DirectionalCfr {
    pub fn n_angles(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn n_freq(&self) -> usize {
        self.grid.len
    }

    pub fn row(&self, i: usize) -> &[C64] {
        let n = self.grid.len;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn freqs_hz(&self) -> Vec<f64> {
        self.grid.freqs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.n_angles() * self.n_freq() {
            return Err(Error::invalid(format!(
                "CFR has {} samples, expected {} x {}",
                self.data.len(),
                self.n_angles(),
                self.n_freq()
            )));
        }
        if self.data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numerical("CFR contains non-finite samples".into()));
        }
        Ok(())
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-facet random phase in [0, 2π), fixed by the seed and facet location.
pub(crate) fn facet_phase(seed: u64, p: Vec2) -> f64 {
    let h = splitmix64(seed ^ splitmix64(p.x.to_bits() ^ splitmix64(p.y.to_bits())));
    TAU * ((h >> 11) as f64 / (1u64 << 53) as f64)
}

fn row_rng(seed: u64, angle_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(0xA5A5_0000 + angle_index as u64)))
}

/// Adds circular complex Gaussian noise whose mean PDP bin power is
/// `floor_db`.
pub fn add_noise(row: &mut [C64], floor_db: f64, seed: u64, angle_index: usize) {
    let var = row.len() as f64 * from_db10(floor_db);
    let sd = (0.5 * var).sqrt();
    let mut rng = row_rng(seed, angle_index);
    for v in row.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v += C64::new(re * sd, im * sd);
    }
}

/// Angle between `p - center` and the normal of `wall` through `center`,
/// degrees in [0, 90].
pub fn offset_from_normal_deg(scene: &SceneModel, wall: usize, center: Vec2, p: Vec2) -> f64 {
    let normal = scene.walls[wall].normal_towards_deg(center) + 180.0;
    wrap_deg((p - center).angle_deg() - normal).abs().min(90.0)
}

/// Propagation-only power of a traced path (no antenna gain), dB, or `None`
/// for diffuse facets inside the specular exclusion zone.
fn propagation_db(scene: &SceneModel, center: Vec2, path: &GeoPath, cfg: &SounderConfig) -> Option<f64> {
    let fspl = fspl_db(cfg.f_c_hz, path.length_m()).ok()?;
    match path.kind {
        PathKind::Specular => {
            let loss: f64 = path
                .walls
                .iter()
                .map(|&w| scene.walls[w].material.specular_loss_db)
                .sum();
            Some(-fspl - loss)
        }
        PathKind::Diffuse => {
            let dphi = offset_from_normal_deg(scene, path.walls[0], center, path.bounce_points[0]);
            if dphi < cfg.diffuse_exclusion_deg {
                return None;
            }
            Some(-fspl - path.material.specular_loss_db + path.material.diffuse_relative_db(dphi))
        }
    }
}

fn trace_options(cfg: &SounderConfig) -> TraceOptions {
    TraceOptions {
        max_order: 2,
        beam_half_width_deg: cfg.antenna.floor_half_width_deg(),
        facet_len_m: cfg.facet_len_m,
        include_diffuse: true,
    }
}

fn check_pose(scene: &SceneModel, pose: &TrxPose) -> Result<()> {
    if !scene.contains_pose(pose) {
        return Err(Error::invalid(format!("pose {} is not part of the scene", pose.pose_index)));
    }
    Ok(())
}

/// Synthesizes the directional CFR of `pose` by exact ray tracing at every
/// rotation angle.
pub fn synthesize_cfr(
    scene: &SceneModel,
    pose: &TrxPose,
    cfg: &SounderConfig,
    seed: u64,
    exec: Execution,
) -> Result<DirectionalCfr> {
    cfg.validate()?;
    scene.validate()?;
    check_pose(scene, pose)?;
    let grid = cfg.grid()?;
    let angles = cfg.angles_deg();
    let opts = trace_options(cfg);
    let facets = trace::wall_facets(scene, cfg.facet_len_m);

    let rows = exec.map_indices(angles.len(), |i| {
        let phi = angles[i];
        let q = pose.phase_center(phi);
        let mut row = vec![C64::new(0.0, 0.0); grid.len];
        for path in trace::trace_with_facets(scene, pose, phi, &opts, &facets) {
            let Some(prop_db) = propagation_db(scene, pose.center, &path, cfg) else {
                continue;
            };
            let arr_az = (*path.bounce_points.last().expect("bounce") - q).angle_deg();
            let ant = two_way_response(&cfg.antenna, path.azimuth_deg - phi, arr_az - phi);
            let phase = match path.kind {
                PathKind::Specular => 0.0,
                PathKind::Diffuse => facet_phase(seed, path.bounce_points[0]),
            };
            let alpha = C64::from_polar(from_db10(prop_db).sqrt(), phase) * ant;
            add_tone(&mut row, &grid, alpha, path.delay_s);
        }
        if cfg.noise_enabled {
            add_noise(&mut row, cfg.noise_floor_db, seed, i);
        }
        row
    });

    Ok(DirectionalCfr {
        pose_index: pose.pose_index,
        angles_deg: angles,
        grid,
        data: rows.concat(),
        truth: Some(ground_truth(scene, pose, cfg, seed)?),
        seed,
        noise_floor_db: cfg.noise_floor_db,
        noise_enabled: cfg.noise_enabled,
    })
}

/// Unique physical paths of a pose, each described at the rotation angle
/// pointing straight at it, sorted by delay then azimuth.
pub fn ground_truth(scene: &SceneModel, pose: &TrxPose, cfg: &SounderConfig, seed: u64) -> Result<Vec<GroundTruthPath>> {
    check_pose(scene, pose)?;
    let c = pose.center;
    let r = pose.azimuth_radius_m;
    let mut out = Vec::new();
    let to_truth = |path: &GeoPath, prop_db: f64, phase: f64| {
        // Path length seen from the center, shortened by the two radius legs.
        let delay = path.delay_s - 2.0 * r / SPEED_OF_LIGHT;
        GroundTruthPath {
            amplitude: C64::from_polar(from_db10(prop_db).sqrt(), phase),
            delay_s: delay,
            azimuth_deg: path.azimuth_deg,
            origin: PathOrigin::of(path.wall_kind, path.kind == PathKind::Specular, path.order()),
            specular: path.kind == PathKind::Specular,
        }
    };
    let phase_center_len = |p: &GeoPath| p.length_m() - 2.0 * r;
    for path in trace::specular_paths(scene, c, 2) {
        let mut at_boresight = path.clone();
        at_boresight.delay_s = phase_center_len(&path) / SPEED_OF_LIGHT;
        let Some(db) = propagation_db(scene, c, &at_boresight, cfg) else {
            continue;
        };
        let mut t = to_truth(&path, db, 0.0);
        t.delay_s = at_boresight.delay_s;
        out.push(t);
    }
    let facets = trace::wall_facets(scene, cfg.facet_len_m);
    for path in trace::diffuse_paths(scene, c, 0.0, 180.0, &facets) {
        let mut at_boresight = path.clone();
        at_boresight.delay_s = phase_center_len(&path) / SPEED_OF_LIGHT;
        let Some(db) = propagation_db(scene, c, &at_boresight, cfg) else {
            continue;
        };
        let mut t = to_truth(&path, db, facet_phase(seed, path.bounce_points[0]));
        t.delay_s = at_boresight.delay_s;
        out.push(t);
    }
    out.retain(|t| t.delay_s > 0.0);
    out.sort_by(|a, b| {
        a.delay_s
            .total_cmp(&b.delay_s)
            .then(a.azimuth_deg.total_cmp(&b.azimuth_deg))
    });
    Ok(out)
}

/// Synthesizes a CFR from an explicit path list using the far-field signal
/// model: each path is weighted by the two-way pattern at `φ_ℓ − φ` and the
/// rotation manifold, with delays referred to the rotation center.
pub fn synthesize_paths(
    paths: &[GroundTruthPath],
    pose_index: usize,
    r_m: f64,
    cfg: &SounderConfig,
    seed: u64,
    exec: Execution,
) -> Result<DirectionalCfr> {
    cfg.validate()?;
    if !(r_m >= 0.0) {
        return Err(Error::invalid("r must be >= 0"));
    }
    let grid = cfg.grid()?;
    let angles = cfg.angles_deg();
    let rows = exec.map_indices(angles.len(), |i| {
        let phi = angles[i];
        let mut row = vec![C64::new(0.0, 0.0); grid.len];
        for p in paths {
            let off = p.azimuth_deg - phi;
            let ant = two_way_response(&cfg.antenna, off, off);
            let tau_center = p.delay_s + 2.0 * r_m / SPEED_OF_LIGHT;
            if r_m == 0.0 {
                add_tone(&mut row, &grid, p.amplitude * ant, tau_center);
            } else {
                // The manifold is a delay shift of -2 r cos(off) / c.
                let shift = 2.0 * r_m * off.to_radians().cos() / SPEED_OF_LIGHT;
                add_tone(&mut row, &grid, p.amplitude * ant, tau_center - shift);
            }
        }
        if cfg.noise_enabled {
            add_noise(&mut row, cfg.noise_floor_db, seed, i);
        }
        row
    });
    Ok(DirectionalCfr {
        pose_index,
        angles_deg: angles,
        grid,
        data: rows.concat(),
        truth: Some(paths.to_vec()),
        seed,
        noise_floor_db: cfg.noise_floor_db,
        noise_enabled: cfg.noise_enabled,
    })
}
