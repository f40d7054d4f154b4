//! Trajectory tracking of MPCs across rotation angles and antenna-pattern
//! de-embedding.
//!
//! A scatterer stays at a nearly constant delay while the horn sweeps past
//! it, and its power follows the antenna pattern. Linking MPCs of adjacent
//! angles by a weighted distance in (power, delay) gives one trajectory per
//! scatterer; the strongest member is the boresight view.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sage::{EstimateSet, MpcEstimate};
use crate::scene::{SceneModel, TrxPose};
use crate::{from_db10, wrap_deg, Error, Result, C64, SPEED_OF_LIGHT};

/// Floor applied to the step standard deviations before inverting them.
pub const WEIGHT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McdWeights {
    /// Weight of the power difference (dB).
    pub w_power: f64,
    /// Weight of the delay difference (ns).
    pub w_delay: f64,
    /// Std of successive power steps along the reference, dB.
    pub s_power: f64,
    /// Std of successive delay steps along the reference, ns.
    pub s_delay: f64,
    /// Median MCD between successive reference members; `None` disables the
    /// MCD gate.
    pub reference_median: Option<f64>,
}

impl McdWeights {
    /// Uncalibrated weights: plain Euclidean distance in (dB, ns).
    pub fn unit() -> Self {
        Self {
            w_power: 1.0,
            w_delay: 1.0,
            s_power: 1.0,
            s_delay: 1.0,
            reference_median: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_power", self.w_power), ("w_delay", self.w_delay)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some(m) = self.reference_median {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::invalid(format!("reference median MCD must be finite and >= 0, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub delay_gate_s: f64,
    pub mcd_gate_multiplier: f64,
    pub min_track_len: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            delay_gate_s: 0.02e-9,
            mcd_gate_multiplier: 3.0,
            min_track_len: 3,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delay_gate_s.is_finite() && self.delay_gate_s > 0.0) {
            return Err(Error::invalid("delay_gate_s must be > 0"));
        }
        if !(self.mcd_gate_multiplier.is_finite() && self.mcd_gate_multiplier > 0.0) {
            return Err(Error::invalid("mcd_gate_multiplier must be > 0"));
        }
        if self.min_track_len == 0 {
            return Err(Error::invalid("min_track_len must be >= 1"));
        }
        Ok(())
    }
}

/// MPCs of consecutive rotation angles believed to come from one scatterer.
/// A trajectory may run across the 360°/0° seam, in which case the angles
/// restart from zero part-way through.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub members: Vec<(f64, MpcEstimate)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mean_power_db(&self) -> f64 {
        self.members.iter().map(|(_, m)| m.power_db).sum::<f64>() / self.members.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeembeddedMpc {
    pub amplitude: C64,
    pub delay_s: f64,
    pub azimuth_deg: f64,
    pub power_db: f64,
    pub source_trajectory_id: usize,
}

/// Multipath component distance: `sqrt(w_p Δp² + w_τ Δτ²)` with Δp in dB and
/// Δτ in ns.
pub fn mcd(a: &MpcEstimate, b: &MpcEstimate, w: &McdWeights) -> f64 {
    let dp = a.power_db - b.power_db;
    let dt = (a.delay_s - b.delay_s) * 1e9;
    (w.w_power * dp * dp + w.w_delay * dt * dt).sqrt()
}

/// Unbiased sample standard deviation of the successive differences.
fn step_std(values: &[f64]) -> f64 {
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    var.sqrt()
}

/// MCD weights from the step statistics of a reference trajectory:
/// `w = 1 / sqrt(S)`, with `S` floored at [`WEIGHT_EPS`].
pub fn compute_weights(reference: &Trajectory) -> Result<McdWeights> {
    if reference.len() < 3 {
        return Err(Error::invalid(format!(
            "reference trajectory needs at least 3 members, got {}",
            reference.len()
        )));
    }
    let powers: Vec<f64> = reference.members.iter().map(|(_, m)| m.power_db).collect();
    let delays: Vec<f64> = reference.members.iter().map(|(_, m)| m.delay_s * 1e9).collect();
    let s_power = step_std(&powers).max(WEIGHT_EPS);
    let s_delay = step_std(&delays).max(WEIGHT_EPS);
    let mut w = McdWeights {
        w_power: 1.0 / s_power.sqrt(),
        w_delay: 1.0 / s_delay.sqrt(),
        s_power,
        s_delay,
        reference_median: None,
    };
    let mut steps: Vec<f64> = reference.members.windows(2).map(|p| mcd(&p[0].1, &p[1].1, &w)).collect();
    steps.sort_by(f64::total_cmp);
    let m = steps.len();
    w.reference_median = Some(if m % 2 == 1 {
        steps[m / 2]
    } else {
        0.5 * (steps[m / 2 - 1] + steps[m / 2])
    });
    w.validate()?;
    Ok(w)
}

/// True when the angle grid closes on itself (a full turn).
fn full_turn(est: &EstimateSet) -> bool {
    let n = est.angles.len();
    n >= 3 && (n as f64 * est.step_deg() - 360.0).abs() < 1e-6
}

/// Links MPCs of adjacent angles greedily in ascending MCD and returns the
/// chains as `(angle index, mpc index)` lists of at least `min_track_len`.
fn link_chains(est: &EstimateSet, w: &McdWeights, cfg: &TrackerConfig) -> Vec<Vec<(usize, usize)>> {
    let n = est.angles.len();
    let limit = w.reference_median.map(|m| cfg.mcd_gate_multiplier * m);
    let mut next: Vec<Vec<Option<usize>>> = est.angles.iter().map(|a| vec![None; a.mpcs.len()]).collect();
    let mut has_prev: Vec<Vec<bool>> = est.angles.iter().map(|a| vec![false; a.mpcs.len()]).collect();

    let pairs = if full_turn(est) { n } else { n.saturating_sub(1) };
    for i in 0..pairs {
        let j = (i + 1) % n;
        let (a, b) = (&est.angles[i].mpcs, &est.angles[j].mpcs);
        let mut cand: Vec<(f64, usize, usize)> = Vec::new();
        for (ia, ma) in a.iter().enumerate() {
            for (ib, mb) in b.iter().enumerate() {
                if (ma.delay_s - mb.delay_s).abs() > cfg.delay_gate_s {
                    continue;
                }
                let d = mcd(ma, mb, w);
                if limit.is_some_and(|l| d > l) {
                    continue;
                }
                cand.push((d, ia, ib));
            }
        }
        cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        for (_, ia, ib) in cand {
            if next[i][ia].is_none() && !has_prev[j][ib] {
                next[i][ia] = Some(ib);
                has_prev[j][ib] = true;
            }
        }
    }

    let mut seen: Vec<Vec<bool>> = est.angles.iter().map(|a| vec![false; a.mpcs.len()]).collect();
    let mut chains = Vec::new();
    let follow = |start: (usize, usize), seen: &mut Vec<Vec<bool>>| {
        let mut chain = Vec::new();
        let mut cur = Some(start);
        while let Some((i, k)) = cur {
            if seen[i][k] {
                break;
            }
            seen[i][k] = true;
            chain.push((i, k));
            cur = next[i][k].map(|kn| ((i + 1) % n, kn));
        }
        chain
    };
    for i in 0..n {
        for k in 0..est.angles[i].mpcs.len() {
            if !has_prev[i][k] {
                chains.push(follow((i, k), &mut seen));
            }
        }
    }
    // What is left are closed loops around the full turn; open them at the
    // seam.
    for k in 0..est.angles.first().map_or(0, |a| a.mpcs.len()) {
        if !seen[0][k] {
            chains.push(follow((0, k), &mut seen));
        }
    }
    chains.retain(|c| c.len() >= cfg.min_track_len);
    chains.sort_by(|a, b| {
        let (ia, ka) = a[0];
        let (ib, kb) = b[0];
        ia.cmp(&ib).then(
            est.angles[ia].mpcs[ka]
                .delay_s
                .total_cmp(&est.angles[ib].mpcs[kb].delay_s),
        )
    });
    chains
}

fn to_trajectories(est: &EstimateSet, chains: Vec<Vec<(usize, usize)>>) -> Vec<Trajectory> {
    chains
        .into_iter()
        .enumerate()
        .map(|(id, c)| Trajectory {
            id,
            members: c
                .into_iter()
                .map(|(i, k)| (est.angles[i].angle_deg, est.angles[i].mpcs[k]))
                .collect(),
        })
        .collect()
}

/// Tracks MPC trajectories over the rotation. Links must satisfy the delay
/// gate and, when the weights carry a reference median, the MCD gate. Every
/// MPC ends up in at most one trajectory.
pub fn track_trajectories(est: &EstimateSet, w: &McdWeights, cfg: &TrackerConfig) -> Result<Vec<Trajectory>> {
    w.validate()?;
    cfg.validate()?;
    Ok(to_trajectories(est, link_chains(est, w, cfg)))
}

/// Least-squares fit of the exact wall specular delay
/// `2 (a - r cos(φ - φ_n)) / c` over `a`; returns the RMS residual.
fn specular_fit_rms(traj: &[(f64, MpcEstimate)], normal_deg: f64, r: f64) -> f64 {
    let proj = |phi: f64| r * wrap_deg(phi - normal_deg).to_radians().cos();
    let a = traj
        .iter()
        .map(|(phi, m)| 0.5 * SPEED_OF_LIGHT * m.delay_s + proj(*phi))
        .sum::<f64>()
        / traj.len() as f64;
    let ss: f64 = traj
        .iter()
        .map(|(phi, m)| (m.delay_s - 2.0 * (a - proj(*phi)) / SPEED_OF_LIGHT).powi(2))
        .sum();
    (ss / traj.len() as f64).sqrt()
}

/// Finds the wall specular trajectory used to calibrate the MCD weights.
///
/// Chains are linked on the delay gate alone. A chain qualifies for a wall
/// visible from the pose center when it passes the wall normal and its delays
/// fit the wall specular law with an RMS residual below one delay bin. The
/// longest qualifying chain wins, then the stronger one.
pub fn find_specular_reference(
    est: &EstimateSet,
    scene: &SceneModel,
    pose: &TrxPose,
    delay_bin_s: f64,
) -> Result<Trajectory> {
    let normals: Vec<f64> = crate::trace::specular_first_order(scene, pose.center)
        .iter()
        .map(|p| p.azimuth_deg)
        .collect();
    if normals.is_empty() {
        return Err(Error::NoReference(format!(
            "no wall normal is visible from pose {}",
            pose.pose_index
        )));
    }
    let step = est.step_deg();
    let chains = to_trajectories(est, link_chains(est, &McdWeights::unit(), &TrackerConfig::default()));
    let r = pose.azimuth_radius_m;
    let best = chains
        .into_iter()
        .filter(|t| {
            normals.iter().any(|&n| {
                let passes = t.members.iter().any(|(phi, _)| wrap_deg(phi - n).abs() <= 0.5 * step + 1e-9);
                passes && specular_fit_rms(&t.members, n, r) < delay_bin_s
            })
        })
        .max_by(|a, b| {
            a.len()
                .cmp(&b.len())
                .then(a.mean_power_db().total_cmp(&b.mean_power_db()))
        });
    best.ok_or_else(|| {
        Error::NoReference(format!(
            "no trajectory at pose {} fits a wall specular return",
            pose.pose_index
        ))
    })
}

/// One de-embedded MPC per trajectory: the strongest member, ties going to
/// the member nearest the middle of the trajectory.
pub fn deembed(trajs: &[Trajectory]) -> Vec<DeembeddedMpc> {
    trajs
        .iter()
        .filter(|t| !t.is_empty())
        .map(|t| {
            let mid = 0.5 * (t.len() - 1) as f64;
            let (_, (angle, m)) = t
                .members
                .iter()
                .enumerate()
                .max_by(|(i, a), (j, b)| match a.1.power_db.total_cmp(&b.1.power_db) {
                    Ordering::Equal => (*j as f64 - mid).abs().total_cmp(&(*i as f64 - mid).abs()),
                    o => o,
                })
                .expect("non-empty trajectory");
            DeembeddedMpc {
                amplitude: m.amplitude,
                delay_s: m.delay_s,
                azimuth_deg: *angle,
                power_db: m.power_db,
                source_trajectory_id: t.id,
            }
        })
        .collect()
}

/// Result of tracking one pose.
#[derive(Debug, Clone)]
pub struct PoseTracks {
    pub reference: Option<Trajectory>,
    pub weights: McdWeights,
    pub trajectories: Vec<Trajectory>,
    pub deembedded: Vec<DeembeddedMpc>,
}

/// Reference search, weight calibration, tracking and de-embedding. Falls
/// back to unit weights without an MCD gate when no reference is found.
pub fn track_pose(
    est: &EstimateSet,
    scene: &SceneModel,
    pose: &TrxPose,
    cfg: &TrackerConfig,
    delay_bin_s: f64,
) -> Result<PoseTracks> {
    let (reference, weights) = match find_specular_reference(est, scene, pose, delay_bin_s) {
        Ok(r) => {
            let w = compute_weights(&r)?;
            (Some(r), w)
        }
        Err(Error::NoReference(msg)) => {
            log::warn!("{msg}; tracking with unit weights");
            (None, McdWeights::unit())
        }
        Err(e) => return Err(e),
    };
    let trajectories = track_trajectories(est, &weights, cfg)?;
    let deembedded = deembed(&trajectories);
    Ok(PoseTracks {
        reference,
        weights,
        trajectories,
        deembedded,
    })
}

pub const TRAJECTORY_COLUMNS: [&str; 4] = ["trajectory_id", "angle_deg", "delay_ns", "power_db"];
pub const DEEMBEDDED_COLUMNS: [&str; 5] = ["id", "azimuth_deg", "delay_ns", "power_db", "phase_rad"];

pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    let rows = trajs.iter().flat_map(|t| {
        t.members.iter().map(move |(a, m)| {
            [
                t.id.to_string(),
                a.to_string(),
                (m.delay_s * 1e9).to_string(),
                m.power_db.to_string(),
            ]
        })
    });
    crate::io::write_csv(path, &TRAJECTORY_COLUMNS, rows)
}

/// Reads trajectories back. The file holds no phase, so amplitudes come
/// back real.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    use crate::io::{field, read_csv};
    let mut out: Vec<Trajectory> = Vec::new();
    for rec in read_csv(path, &TRAJECTORY_COLUMNS)? {
        let id: usize = field(&rec, 0, "trajectory_id", path)?;
        let angle: f64 = field(&rec, 1, "angle_deg", path)?;
        let delay_ns: f64 = field(&rec, 2, "delay_ns", path)?;
        let power_db: f64 = field(&rec, 3, "power_db", path)?;
        let m = MpcEstimate {
            amplitude: C64::new(from_db10(power_db).sqrt(), 0.0),
            delay_s: delay_ns * 1e-9,
            power_db,
        };
        match out.last_mut() {
            Some(t) if t.id == id => t.members.push((angle, m)),
            _ => out.push(Trajectory {
                id,
                members: vec![(angle, m)],
            }),
        }
    }
    Ok(out)
}

pub fn write_deembedded(path: &Path, mpcs: &[DeembeddedMpc]) -> Result<()> {
    let rows = mpcs.iter().map(|m| {
        [
            m.source_trajectory_id.to_string(),
            m.azimuth_deg.to_string(),
            (m.delay_s * 1e9).to_string(),
            m.power_db.to_string(),
            m.amplitude.arg().to_string(),
        ]
    });
    crate::io::write_csv(path, &DEEMBEDDED_COLUMNS, rows)
}

pub fn read_deembedded(path: &Path) -> Result<Vec<DeembeddedMpc>> {
    use crate::io::{field, read_csv};
    read_csv(path, &DEEMBEDDED_COLUMNS)?
        .iter()
        .map(|rec| {
            let power_db: f64 = field(rec, 3, "power_db", path)?;
            let phase: f64 = field(rec, 4, "phase_rad", path)?;
            Ok(DeembeddedMpc {
                amplitude: C64::from_polar(from_db10(power_db).sqrt(), phase),
                delay_s: field::<f64>(rec, 2, "delay_ns", path)? * 1e-9,
                azimuth_deg: field(rec, 1, "azimuth_deg", path)?,
                power_db,
                source_trajectory_id: field(rec, 0, "id", path)?,
            })
        })
        .collect()
}
