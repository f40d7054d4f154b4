//! 2D scene description: walls with materials and the TRx rotation poses.

use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2 { x: v[0], y: v[1] }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `deg` degrees counter-clockwise from +x.
    pub fn from_angle_deg(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm())
    }

    /// Azimuth of the vector in degrees, [0, 360).
    pub fn angle_deg(self) -> f64 {
        crate::norm_deg(self.y.atan2(self.x).to_degrees())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Scalar reflection parameters of a surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    /// Loss of the normal-incidence specular return, dB.
    #[serde(rename = "spec_loss_db")]
    pub specular_loss_db: f64,
    /// Slope of the diffuse power law against cos²(Δφ), dB.
    #[serde(rename = "n_diff")]
    pub diffuse_slope_db: f64,
    /// Intercept of the diffuse power law relative to the specular level, dB.
    #[serde(rename = "b_diff")]
    pub diffuse_intercept_db: f64,
}

impl MaterialSpec {
    pub const fn new(specular_loss_db: f64, diffuse_slope_db: f64, diffuse_intercept_db: f64) -> Self {
        Self {
            specular_loss_db,
            diffuse_slope_db,
            diffuse_intercept_db,
        }
    }

    /// Plastered cement wall.
    pub const WALL: MaterialSpec = MaterialSpec::new(11.4, 15.2, -55.0);
    /// Metallic-framed window.
    pub const WINDOW: MaterialSpec = MaterialSpec::new(2.5, 10.0, -65.0);
    /// Boundary of a dense-scatterer area (furniture, equipment).
    pub const SCATTERER: MaterialSpec = MaterialSpec::new(15.3, 5.0, -35.0);

    /// Diffuse power relative to the specular level of the same surface.
    pub fn diffuse_relative_db(&self, delta_phi_deg: f64) -> f64 {
        let c = delta_phi_deg.to_radians().cos();
        self.diffuse_slope_db * c * c + self.diffuse_intercept_db
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.specular_loss_db >= 0.0) || !self.specular_loss_db.is_finite() {
            return Err(Error::invalid("material spec_loss_db must be finite and >= 0"));
        }
        if !(self.diffuse_slope_db.is_finite() && self.diffuse_intercept_db.is_finite()) {
            return Err(Error::invalid("material diffuse coefficients must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    Wall,
    Window,
    ScattererZoneBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    pub p0: Vec2,
    pub p1: Vec2,
    pub material: MaterialSpec,
    pub kind: WallKind,
}

impl WallSegment {
    pub fn new(p0: Vec2, p1: Vec2, material: MaterialSpec, kind: WallKind) -> Self {
        Self {
            p0,
            p1,
            material,
            kind,
        }
    }

    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }

    pub fn direction(&self) -> Vec2 {
        (self.p1 - self.p0).normalized()
    }

    /// Parameter `t` of the orthogonal projection of `p` onto the wall line
    /// (`t ∈ [0, 1]` inside the segment).
    pub fn project(&self, p: Vec2) -> f64 {
        let d = self.p1 - self.p0;
        (p - self.p0).dot(d) / d.dot(d)
    }

    pub fn point_at(&self, t: f64) -> Vec2 {
        self.p0 + (self.p1 - self.p0) * t
    }

    /// Distance from `p` to the infinite line through the wall.
    pub fn line_distance(&self, p: Vec2) -> f64 {
        self.direction().cross(p - self.p0).abs()
    }

    /// Euclidean distance from `p` to the segment.
    pub fn distance(&self, p: Vec2) -> f64 {
        let t = self.project(p).clamp(0.0, 1.0);
        (p - self.point_at(t)).norm()
    }

    /// Mirror image of `p` across the wall line.
    pub fn mirror(&self, p: Vec2) -> Vec2 {
        let foot = self.point_at(self.project(p));
        foot * 2.0 - p
    }

    /// Azimuth (degrees) of the wall normal pointing from the wall towards `p`.
    pub fn normal_towards_deg(&self, p: Vec2) -> f64 {
        let foot = self.point_at(self.project(p));
        (p - foot).angle_deg()
    }

    /// Intersection parameter `(s, t)` of segment `a→b` with the wall, where
    /// `s` runs along `a→b` and `t` along the wall; `None` when parallel.
    pub fn intersect(&self, a: Vec2, b: Vec2) -> Option<(f64, f64)> {
        let r = b - a;
        let w = self.p1 - self.p0;
        let denom = r.cross(w);
        if denom.abs() < 1e-15 * r.norm() * w.norm() {
            return None;
        }
        let ap = self.p0 - a;
        let s = ap.cross(w) / denom;
        let t = ap.cross(r) / denom;
        Some((s, t))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0.is_finite() && self.p1.is_finite()) {
            return Err(Error::invalid("wall endpoints must be finite"));
        }
        if !(self.length() > 0.0) {
            return Err(Error::invalid("zero-length wall segment"));
        }
        self.material.validate()
    }
}

/// One TRx location: the rotation center and the antenna phase-center radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrxPose {
    pub center: Vec2,
    pub azimuth_radius_m: f64,
    /// 1-based pose number.
    pub pose_index: usize,
}

impl TrxPose {
    pub fn new(center: Vec2, azimuth_radius_m: f64, pose_index: usize) -> Self {
        Self {
            center,
            azimuth_radius_m,
            pose_index,
        }
    }

    /// Antenna phase center when the boresight points at `phi_deg`.
    pub fn phase_center(&self, phi_deg: f64) -> Vec2 {
        self.center + Vec2::from_angle_deg(phi_deg) * self.azimuth_radius_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub name: String,
    pub walls: Vec<WallSegment>,
    pub trx_poses: Vec<TrxPose>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    center: Vec2,
    r: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    name: String,
    walls: Vec<WallSegment>,
    trx_poses: Vec<PoseFile>,
}

impl SceneModel {
    /// Builds a scene, numbering poses 1.. in order.
    pub fn new(name: impl Into<String>, walls: Vec<WallSegment>, centers: &[(Vec2, f64)]) -> Result<Self> {
        let scene = Self {
            name: name.into(),
            walls,
            trx_poses: centers
                .iter()
                .enumerate()
                .map(|(i, &(c, r))| TrxPose::new(c, r, i + 1))
                .collect(),
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Checks segment and pose invariants. Scenes without walls are accepted
    /// here (they simulate pure noise); scene files must contain walls.
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.walls.iter().enumerate() {
            w.validate()
                .map_err(|e| Error::invalid(format!("walls[{i}]: {e}")))?;
        }
        for p in &self.trx_poses {
            if !p.center.is_finite() {
                return Err(Error::invalid(format!("pose {}: center must be finite", p.pose_index)));
            }
            if !(p.azimuth_radius_m > 0.0) || !p.azimuth_radius_m.is_finite() {
                return Err(Error::invalid(format!("pose {}: r must be > 0", p.pose_index)));
            }
            for (i, w) in self.walls.iter().enumerate() {
                if w.distance(p.center) <= p.azimuth_radius_m {
                    return Err(Error::invalid(format!(
                        "pose {}: rotation circle touches walls[{i}]",
                        p.pose_index
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pose(&self, pose_index: usize) -> Option<&TrxPose> {
        self.trx_poses.iter().find(|p| p.pose_index == pose_index)
    }

    /// True when `pose` is one of this scene's poses.
    pub fn contains_pose(&self, pose: &TrxPose) -> bool {
        self.pose(pose.pose_index) == Some(pose)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| Error::schema("scene", e.to_string()))?;
        if file.walls.is_empty() {
            return Err(Error::schema("scene", "walls: at least one wall is required"));
        }
        let centers: Vec<_> = file.trx_poses.iter().map(|p| (p.center, p.r)).collect();
        Self::new(file.name, file.walls, &centers)
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            name: self.name.clone(),
            walls: self.walls.clone(),
            trx_poses: self
                .trx_poses
                .iter()
                .map(|p| PoseFile {
                    center: p.center,
                    r: p.azimuth_radius_m,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("scene serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Schema { message, .. } => Error::schema(path.display().to_string(), message),
            other => other,
        })
    }

    /// First wall hit by the ray `origin + s * dir`, `s > 0`, returning the
    /// wall index and the distance `s` (dir is unit).
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<(usize, f64)> {
        let far = origin + dir * 1e3;
        let mut best: Option<(usize, f64)> = None;
        for (i, w) in self.walls.iter().enumerate() {
            if let Some((s, t)) = w.intersect(origin, far) {
                if s > 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&t) {
                    let dist = s * 1e3;
                    if best.is_none_or(|(_, d)| dist < d) {
                        best = Some((i, dist));
                    }
                }
            }
        }
        best
    }

    /// True when the open segment `a→b` crosses no wall except those in
    /// `skip`. Endpoints touching a wall do not count as blocking.
    pub fn segment_clear(&self, a: Vec2, b: Vec2, skip: &[usize]) -> bool {
        const EPS: f64 = 1e-9;
        for (i, w) in self.walls.iter().enumerate() {
            if skip.contains(&i) {
                continue;
            }
            if let Some((s, t)) = w.intersect(a, b) {
                if s > EPS && s < 1.0 - EPS && t > -EPS && t < 1.0 + EPS {
                    return false;
                }
            }
        }
        true
    }

    /// Distance from `p` to the nearest wall segment.
    pub fn nearest_wall_distance(&self, p: Vec2) -> Option<f64> {
        self.walls
            .iter()
            .map(|w| w.distance(p))
            .min_by(|a, b| a.total_cmp(b))
    }

    /// The reference L-shaped laboratory: a room corner with two windows on
    /// the right-hand wall, dense-scatterer boundaries on the far side, and 28
    /// TRx poses spaced 0.5 m along an L route kept 1.2 m from the walls.
    /// TRx 14 sits at the origin.
    pub fn l_room() -> Self {
        use WallKind::*;
        let wall = MaterialSpec::WALL;
        let window = MaterialSpec::WINDOW;
        let scat = MaterialSpec::SCATTERER;
        let v = Vec2::new;
        let walls = vec![
            // top wall
            WallSegment::new(v(-7.5, 1.2), v(1.2, 1.2), wall, Wall),
            // right wall with two windows
            WallSegment::new(v(1.2, 1.2), v(1.2, -2.25), wall, Wall),
            WallSegment::new(v(1.2, -2.25), v(1.2, -3.25), window, Window),
            WallSegment::new(v(1.2, -3.25), v(1.2, -4.75), wall, Wall),
            WallSegment::new(v(1.2, -4.75), v(1.2, -5.75), window, Window),
            WallSegment::new(v(1.2, -5.75), v(1.2, -8.0), wall, Wall),
            // bottom wall, far part bordering the workshop
            WallSegment::new(v(1.2, -8.0), v(-3.25, -8.0), wall, Wall),
            WallSegment::new(v(-3.25, -8.0), v(-7.5, -8.0), scat, ScattererZoneBoundary),
            // left side: equipment / office area
            WallSegment::new(v(-7.5, -8.0), v(-7.5, 1.2), scat, ScattererZoneBoundary),
        ];
        let mut centers = Vec::with_capacity(28);
        for m in 0..14 {
            centers.push((v(-6.5 + 0.5 * m as f64, 0.0), 0.2));
        }
        for m in 1..=14 {
            centers.push((v(0.0, -0.5 * m as f64), 0.2));
        }
        Self::new("l-room", walls, &centers).expect("reference scene is valid")
    }

    /// A single straight wall at distance `a` above a pose at the origin.
    pub fn single_wall(a: f64, half_len: f64) -> Self {
        let walls = vec![WallSegment::new(
            Vec2::new(-half_len, a),
            Vec2::new(half_len, a),
            MaterialSpec::WALL,
            WallKind::Wall,
        )];
        Self::new("single-wall", walls, &[(Vec2::new(0.0, 0.0), 0.2)]).expect("valid")
    }
}
