//! Exact 2D monostatic ray geometry: mirror-image specular paths (single
//! bounce and retro-reflective double bounce) and direct backscatter from
//! discretized wall facets.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::scene::{MaterialSpec, SceneModel, TrxPose, Vec2, WallKind};
use crate::{wrap_deg, Error, Result, SPEED_OF_LIGHT};

const EPS: f64 = 1e-9;

/// Double bounces are kept only when the ray leaves and returns along the
/// same azimuth (within this tolerance), which is what a single co-located
/// antenna can see.
pub const RETRO_TOL_DEG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Specular,
    Diffuse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoPath {
    /// Round-trip delay from the phase center, seconds.
    pub delay_s: f64,
    /// Departure azimuth at the phase center, degrees in [0, 360).
    pub azimuth_deg: f64,
    pub bounce_points: Vec<Vec2>,
    pub kind: PathKind,
    /// Walls hit, in traversal order.
    pub walls: Vec<usize>,
    /// Material of the first bounce.
    pub material: MaterialSpec,
    pub wall_kind: WallKind,
}

impl GeoPath {
    pub fn order(&self) -> usize {
        self.walls.len()
    }

    pub fn length_m(&self) -> f64 {
        self.delay_s * SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// 1 (single bounce) or 2 (adds corner double bounces).
    pub max_order: usize,
    /// Only paths departing within this angle of boresight are returned.
    pub beam_half_width_deg: f64,
    pub facet_len_m: f64,
    pub include_diffuse: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            max_order: 2,
            beam_half_width_deg: crate::config::AntennaPattern::default().floor_half_width_deg(),
            facet_len_m: 0.02,
            include_diffuse: true,
        }
    }
}

impl TraceOptions {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.max_order) {
            return Err(Error::invalid("max_order must be 1 or 2"));
        }
        if !(self.beam_half_width_deg >= 0.0) {
            return Err(Error::invalid("beam_half_width_deg must be >= 0"));
        }
        if !(self.facet_len_m > 0.0) {
            return Err(Error::invalid("facet_len_m must be > 0"));
        }
        Ok(())
    }
}

/// A backscattering wall element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub center: Vec2,
    pub wall: usize,
}

/// Splits every wall into equal facets no longer than `facet_len_m`.
pub fn wall_facets(scene: &SceneModel, facet_len_m: f64) -> Vec<Facet> {
    let mut out = Vec::new();
    for (i, w) in scene.walls.iter().enumerate() {
        let n = (w.length() / facet_len_m).ceil().max(1.0) as usize;
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            out.push(Facet {
                center: w.point_at(t),
                wall: i,
            });
        }
    }
    out
}

fn in_beam(azimuth_deg: f64, phi_deg: f64, half_width: f64) -> bool {
    wrap_deg(azimuth_deg - phi_deg).abs() <= half_width + 1e-12
}

/// Single-bounce specular paths from phase center `q`, ignoring the beam.
pub fn specular_first_order(scene: &SceneModel, q: Vec2) -> Vec<GeoPath> {
    let mut out = Vec::new();
    for (i, w) in scene.walls.iter().enumerate() {
        let t = w.project(q);
        if !(-EPS..=1.0 + EPS).contains(&t) {
            continue;
        }
        let foot = w.point_at(t);
        let d = (foot - q).norm();
        if d <= EPS || !scene.segment_clear(q, foot, &[i]) {
            continue;
        }
        out.push(GeoPath {
            delay_s: 2.0 * d / SPEED_OF_LIGHT,
            azimuth_deg: (foot - q).angle_deg(),
            bounce_points: vec![foot],
            kind: PathKind::Specular,
            walls: vec![i],
            material: w.material,
            wall_kind: w.kind,
        });
    }
    out
}

/// Retro-reflective double-bounce paths from `q`, ignoring the beam.
pub fn specular_second_order(scene: &SceneModel, q: Vec2) -> Vec<GeoPath> {
    let mut out = Vec::new();
    let n = scene.walls.len();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (wi, wj) = (&scene.walls[i], &scene.walls[j]);
            if wi.direction().cross(wj.direction()).abs() < 1e-12 {
                continue;
            }
            let img_i = wi.mirror(q);
            let img_ij = wj.mirror(img_i);
            let Some((_, t2)) = wj.intersect(q, img_ij) else {
                continue;
            };
            if !(-EPS..=1.0 + EPS).contains(&t2) {
                continue;
            }
            let p2 = wj.point_at(t2.clamp(0.0, 1.0));
            let Some((_, t1)) = wi.intersect(p2, img_i) else {
                continue;
            };
            if !(-EPS..=1.0 + EPS).contains(&t1) {
                continue;
            }
            let p1 = wi.point_at(t1.clamp(0.0, 1.0));
            let (dep, arr) = (p1 - q, p2 - q);
            if dep.norm() <= EPS || arr.norm() <= EPS {
                continue;
            }
            if wrap_deg(dep.angle_deg() - arr.angle_deg()).abs() > RETRO_TOL_DEG {
                continue;
            }
            let skip = [i, j];
            let clear = scene.segment_clear(q, p1, &skip)
                && scene.segment_clear(p1, p2, &skip)
                && scene.segment_clear(p2, q, &skip);
            if !clear {
                continue;
            }
            let len = dep.norm() + (p2 - p1).norm() + arr.norm();
            // Each double bounce is found once per ordering; keep the one
            // whose first bounce point is lexicographically smaller.
            if lex_cmp(p1, p2) == Ordering::Greater {
                continue;
            }
            if lex_cmp(p1, p2) == Ordering::Equal && i > j {
                continue;
            }
            out.push(GeoPath {
                delay_s: len / SPEED_OF_LIGHT,
                azimuth_deg: dep.angle_deg(),
                bounce_points: vec![p1, p2],
                kind: PathKind::Specular,
                walls: vec![i, j],
                material: wi.material,
                wall_kind: wi.kind,
            });
        }
    }
    out
}

fn lex_cmp(a: Vec2, b: Vec2) -> Ordering {
    let close = |u: f64, v: f64| (u - v).abs() <= EPS;
    if close(a.x, b.x) && close(a.y, b.y) {
        Ordering::Equal
    } else if close(a.x, b.x) {
        a.y.total_cmp(&b.y)
    } else {
        a.x.total_cmp(&b.x)
    }
}

/// Direct backscatter paths to the given facets that lie inside the beam.
pub fn diffuse_paths(
    scene: &SceneModel,
    q: Vec2,
    phi_deg: f64,
    half_width_deg: f64,
    facets: &[Facet],
) -> Vec<GeoPath> {
    let mut out = Vec::new();
    for f in facets {
        let v = f.center - q;
        let d = v.norm();
        if d <= EPS {
            continue;
        }
        let az = v.angle_deg();
        if !in_beam(az, phi_deg, half_width_deg) {
            continue;
        }
        if !scene.segment_clear(q, f.center, &[f.wall]) {
            continue;
        }
        let w = &scene.walls[f.wall];
        out.push(GeoPath {
            delay_s: 2.0 * d / SPEED_OF_LIGHT,
            azimuth_deg: az,
            bounce_points: vec![f.center],
            kind: PathKind::Diffuse,
            walls: vec![f.wall],
            material: w.material,
            wall_kind: w.kind,
        });
    }
    out
}

/// Specular paths (order 1 and optionally 2) with duplicate returns removed:
/// a foot point landing exactly on a junction of two collinear segments is
/// reported once, attributed to the segment with the lower specular loss.
pub fn specular_paths(scene: &SceneModel, q: Vec2, max_order: usize) -> Vec<GeoPath> {
    let mut paths = specular_first_order(scene, q);
    if max_order >= 2 {
        paths.extend(specular_second_order(scene, q));
    }
    paths.sort_by(canonical_cmp);
    let mut out: Vec<GeoPath> = Vec::with_capacity(paths.len());
    for p in paths {
        let dup = out.iter_mut().find(|o| {
            o.order() == p.order()
                && (o.delay_s - p.delay_s).abs() < 1e-15
                && o
                    .bounce_points
                    .iter()
                    .zip(&p.bounce_points)
                    .all(|(a, b)| (*a - *b).norm() < 1e-9)
        });
        match dup {
            Some(o) => {
                if p.material.specular_loss_db < o.material.specular_loss_db {
                    *o = p;
                }
            }
            None => out.push(p),
        }
    }
    out
}

/// Canonical ordering: delay, then azimuth, then kind, then bounce points.
pub fn canonical_cmp(a: &GeoPath, b: &GeoPath) -> Ordering {
    a.delay_s
        .total_cmp(&b.delay_s)
        .then(a.azimuth_deg.total_cmp(&b.azimuth_deg))
        .then((a.kind as u8).cmp(&(b.kind as u8)))
        .then_with(|| {
            for (p, r) in a.bounce_points.iter().zip(&b.bounce_points) {
                let c = p.x.total_cmp(&r.x).then(p.y.total_cmp(&r.y));
                if c != Ordering::Equal {
                    return c;
                }
            }
            a.bounce_points.len().cmp(&b.bounce_points.len())
        })
}

/// All paths seen by the antenna at `pose` pointing at `phi_deg`.
pub fn trace_paths(scene: &SceneModel, pose: &TrxPose, phi_deg: f64, opts: &TraceOptions) -> Result<Vec<GeoPath>> {
    opts.validate()?;
    if !phi_deg.is_finite() {
        return Err(Error::invalid("phi must be finite"));
    }
    if scene.walls.is_empty() {
        return Ok(Vec::new());
    }
    let facets = if opts.include_diffuse {
        wall_facets(scene, opts.facet_len_m)
    } else {
        Vec::new()
    };
    Ok(trace_with_facets(scene, pose, phi_deg, opts, &facets))
}

/// Like [`trace_paths`] with precomputed facets (reused across angles).
pub fn trace_with_facets(
    scene: &SceneModel,
    pose: &TrxPose,
    phi_deg: f64,
    opts: &TraceOptions,
    facets: &[Facet],
) -> Vec<GeoPath> {
    let q = pose.phase_center(phi_deg);
    let mut out: Vec<GeoPath> = specular_paths(scene, q, opts.max_order)
        .into_iter()
        .filter(|p| in_beam(p.azimuth_deg, phi_deg, opts.beam_half_width_deg))
        .collect();
    if opts.include_diffuse {
        out.extend(diffuse_paths(scene, q, phi_deg, opts.beam_half_width_deg, facets));
    }
    out.sort_by(canonical_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{corner_specular_delay, wall_diffuse_delay, wall_specular_delay};
    use crate::scene::WallSegment;
    use proptest::prelude::*;

    fn wall(p0: (f64, f64), p1: (f64, f64)) -> WallSegment {
        WallSegment::new(
            Vec2::new(p0.0, p0.1),
            Vec2::new(p1.0, p1.1),
            MaterialSpec::WALL,
            WallKind::Wall,
        )
    }

    fn specular_only() -> TraceOptions {
        TraceOptions {
            include_diffuse: false,
            ..TraceOptions::default()
        }
    }

    #[test]
    fn single_wall_normal_beam() {
        let scene = SceneModel::single_wall(1.2, 5.0);
        let pose = scene.trx_poses[0];
        let paths = trace_paths(&scene, &pose, 90.0, &specular_only()).unwrap();
        assert_eq!(paths.len(), 1);
        let expect = 2.0 * (1.2 - 0.2) / SPEED_OF_LIGHT;
        assert!((paths[0].delay_s - expect).abs() < 1e-18);
        assert!((paths[0].delay_s - wall_specular_delay(1.2, 0.2, 90.0).unwrap()).abs() < 1e-12);
        assert!((paths[0].azimuth_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn specular_departs_along_normal_off_boresight() {
        let scene = SceneModel::single_wall(1.2, 5.0);
        let pose = scene.trx_poses[0];
        let paths = trace_paths(&scene, &pose, 80.0, &specular_only()).unwrap();
        assert_eq!(paths.len(), 1);
        let exact = crate::geometry::wall_specular_delay_exact(1.2, 0.2, 10.0).unwrap();
        assert!((paths[0].delay_s - exact).abs() < 1e-18);
        assert!((paths[0].azimuth_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn corner_bisector() {
        // Right-angle corner at (a, a) seen from the origin along 45°.
        let a = 1.2;
        let walls = vec![wall((-3.0, a), (a, a)), wall((a, a), (a, -3.0))];
        let scene = SceneModel::new("corner", walls, &[(Vec2::new(0.0, 0.0), 0.2)]).unwrap();
        let pose = scene.trx_poses[0];
        let paths = trace_paths(&scene, &pose, 45.0, &specular_only()).unwrap();
        let second: Vec<_> = paths.iter().filter(|p| p.order() == 2).collect();
        assert_eq!(second.len(), 1);
        // Distance from center to corner is a / sin 45°.
        let d_corner = a * 2f64.sqrt();
        let approx = corner_specular_delay(d_corner * 45f64.to_radians().sin(), 0.2, 0.0, 45.0).unwrap();
        let slack = 2.0 * 0.2 * (1.0 - 0f64.cos()) / SPEED_OF_LIGHT;
        assert!((second[0].delay_s - approx).abs() <= slack + 1e-15);
        assert!((second[0].delay_s - 2.0 * (d_corner - 0.2) / SPEED_OF_LIGHT).abs() < 1e-18);
        assert!((second[0].bounce_points[0] - Vec2::new(a, a)).norm() < 1e-9);
    }

    #[test]
    fn corner_off_bisector_within_slack() {
        let a = 1.2;
        let walls = vec![wall((-3.0, a), (a, a)), wall((a, a), (a, -3.0))];
        let scene = SceneModel::new("corner", walls, &[(Vec2::new(0.0, 0.0), 0.2)]).unwrap();
        let pose = scene.trx_poses[0];
        for dphi in [-6.0, -3.0, 3.0, 6.0] {
            let paths = trace_paths(&scene, &pose, 45.0 + dphi, &specular_only()).unwrap();
            let p = paths.iter().find(|p| p.order() == 2).unwrap();
            let approx = corner_specular_delay(a, 0.2, dphi, 45.0).unwrap();
            let slack = 2.0 * 0.2 * (1.0 - dphi.to_radians().cos()) / SPEED_OF_LIGHT;
            assert!((p.delay_s - approx).abs() <= slack + 1e-15, "{dphi}");
        }
    }

    #[test]
    fn facet_at_boresight_matches_diffuse_formula() {
        let scene = SceneModel::single_wall(1.2, 5.0);
        let pose = scene.trx_poses[0];
        let facets = wall_facets(&scene, 0.02);
        for k in [250usize, 300, 350, 400] {
            let f = facets[k];
            let phi = (f.center - pose.center).angle_deg();
            let theta = phi - 90.0;
            let paths = diffuse_paths(&scene, pose.phase_center(phi), phi, 0.01, &[f]);
            assert_eq!(paths.len(), 1);
            let expect = wall_diffuse_delay(1.2, 0.2, theta).unwrap();
            assert!((paths[0].delay_s - expect).abs() < 1e-12, "facet {k}");
            assert!((paths[0].azimuth_deg - phi).abs() < 1e-9);
        }
    }

    #[test]
    fn occluded_paths_dropped() {
        let walls = vec![wall((-2.0, 2.0), (2.0, 2.0)), wall((-0.5, 1.0), (0.5, 1.0))];
        let scene = SceneModel::new("occl", walls, &[(Vec2::new(0.0, 0.0), 0.2)]).unwrap();
        let pose = scene.trx_poses[0];
        let paths = trace_paths(&scene, &pose, 90.0, &specular_only()).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].walls, vec![1]);
    }

    #[test]
    fn empty_scene_has_no_paths() {
        let scene = SceneModel::new("empty", vec![], &[(Vec2::new(0.0, 0.0), 0.2)]).unwrap();
        let pose = scene.trx_poses[0];
        assert!(trace_paths(&scene, &pose, 0.0, &TraceOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn junction_foot_reported_once() {
        let walls = vec![
            wall((-2.0, 1.2), (0.0, 1.2)),
            WallSegment::new(Vec2::new(0.0, 1.2), Vec2::new(2.0, 1.2), MaterialSpec::WINDOW, WallKind::Window),
        ];
        let scene = SceneModel::new("j", walls, &[(Vec2::new(0.0, 0.0), 0.2)]).unwrap();
        let paths = trace_paths(&scene, &scene.trx_poses[0], 90.0, &specular_only()).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].wall_kind, WallKind::Window);
    }

    #[test]
    fn l_room_has_corner_return() {
        let scene = SceneModel::l_room();
        let pose = *scene.pose(14).unwrap();
        let paths = trace_paths(&scene, &pose, 45.0, &specular_only()).unwrap();
        assert!(paths.iter().any(|p| p.order() == 2));
        let full = trace_paths(&scene, &pose, 45.0, &TraceOptions::default()).unwrap();
        assert!(full.iter().any(|p| p.kind == PathKind::Diffuse));
    }

    fn same_paths(a: &[GeoPath], b: &[GeoPath]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.kind == y.kind
                    && x.order() == y.order()
                    && (x.delay_s - y.delay_s).abs() < 1e-18
                    && (x.azimuth_deg - y.azimuth_deg).abs() < 1e-9
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn wall_order_independent(seed in 0u64..1000, phi_idx in 0usize..360) {
            let base = SceneModel::l_room();
            let mut walls = base.walls.clone();
            // deterministic shuffle
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            for i in (1..walls.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                walls.swap(i, j);
            }
            let centers: Vec<_> = base.trx_poses.iter().map(|p| (p.center, p.azimuth_radius_m)).collect();
            let shuffled = SceneModel::new("s", walls, &centers).unwrap();
            let pose = base.trx_poses[(seed as usize) % base.trx_poses.len()];
            let opts = TraceOptions::default();
            let a = trace_paths(&base, &pose, phi_idx as f64, &opts).unwrap();
            let b = trace_paths(&shuffled, &pose, phi_idx as f64, &opts).unwrap();
            prop_assert!(same_paths(&a, &b), "{} vs {} paths", a.len(), b.len());
        }

        #[test]
        fn single_wall_matches_closed_forms(a in 0.5f64..5.0, phi in 76.0f64..104.0) {
            let scene = SceneModel::single_wall(a, 50.0);
            let pose = scene.trx_poses[0];
            let paths = trace_paths(&scene, &pose, phi, &specular_only()).unwrap();
            prop_assert_eq!(paths.len(), 1);
            let exact = crate::geometry::wall_specular_delay_exact(a, 0.2, phi - 90.0).unwrap();
            prop_assert!((paths[0].delay_s - exact).abs() < 1e-12);
        }
    }
}
