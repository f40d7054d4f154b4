//! Environment reconstruction, reflection loss and channel dispersion
//! statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::fspl_db;
use crate::hybrid::{ClassifiedMpc, FeatureRef, Label};
use crate::sage::EstimateSet;
use crate::scene::{SceneModel, TrxPose, Vec2};
use crate::tracking::DeembeddedMpc;
use crate::{db10, from_db10, wrap_deg, Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconPoint {
    pub x_m: f64,
    pub y_m: f64,
    pub power_db: f64,
    pub source_id: usize,
}

/// Places every MPC at half its round-trip range from the phase center, in
/// the boresight direction.
pub fn reconstruct_environment(deembedded: &[DeembeddedMpc], pose: &TrxPose) -> Vec<ReconPoint> {
    deembedded
        .iter()
        .filter(|m| m.delay_s.is_finite() && m.azimuth_deg.is_finite())
        .map(|m| {
            let u = Vec2::from_angle_deg(m.azimuth_deg);
            let p = pose.phase_center(m.azimuth_deg) + u * (SPEED_OF_LIGHT * m.delay_s / 2.0);
            ReconPoint {
                x_m: p.x,
                y_m: p.y,
                power_db: m.power_db,
                source_id: m.source_trajectory_id,
            }
        })
        .collect()
}

/// Distance of each point to the nearest wall, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceErrors {
    pub sorted_m: Vec<f64>,
    /// `None` for an empty input.
    pub mean_m: Option<f64>,
}

impl DistanceErrors {
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        empirical_cdf(&self.sorted_m)
    }

    /// Fraction of points within `d_m` of a wall.
    pub fn fraction_within(&self, d_m: f64) -> f64 {
        if self.sorted_m.is_empty() {
            return 0.0;
        }
        self.sorted_m.partition_point(|&e| e <= d_m) as f64 / self.sorted_m.len() as f64
    }
}

pub fn distance_error_cdf(points: &[ReconPoint], scene: &SceneModel) -> Result<DistanceErrors> {
    if scene.walls.is_empty() {
        return Err(Error::invalid("scene has no walls"));
    }
    let mut errs: Vec<f64> = points
        .iter()
        .filter_map(|p| scene.nearest_wall_distance(Vec2::new(p.x_m, p.y_m)))
        .collect();
    errs.sort_by(|a, b| a.total_cmp(b));
    let mean = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
    Ok(DistanceErrors {
        sorted_m: errs,
        mean_m: mean,
    })
}

/// `(value, cumulative probability)` of already sorted samples.
pub fn empirical_cdf(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / n))
        .collect()
}

/// Reflection loss of each MPC in dB: the received propagation power falls
/// short of free space over the full round trip `c·τ̂` by this much. The
/// two-way boresight gain is removed from the amplitude first. A zero
/// amplitude gives `+∞`.
pub fn reflection_loss(deembedded: &[DeembeddedMpc], f_c_hz: f64, boresight_gain_dbi: f64) -> Result<Vec<f64>> {
    deembedded
        .iter()
        .map(|m| {
            if !(m.delay_s > 0.0) {
                return Err(Error::invalid(format!("delay must be > 0, got {}", m.delay_s)));
            }
            let fspl = fspl_db(f_c_hz, SPEED_OF_LIGHT * m.delay_s)?;
            let a2 = m.amplitude.norm_sqr();
            if a2 == 0.0 {
                return Ok(f64::INFINITY);
            }
            let propagation_db = db10(a2) - 2.0 * boresight_gain_dbi;
            Ok(-propagation_db - fspl)
        })
        .collect()
}

/// Reflection loss of the strongest specular MPC of each matched feature,
/// sorted by feature.
pub fn specular_losses(classified: &[ClassifiedMpc], f_c_hz: f64, boresight_gain_dbi: f64) -> Result<Vec<(FeatureRef, DeembeddedMpc, f64)>> {
    let mut best: Vec<(FeatureRef, DeembeddedMpc)> = Vec::new();
    for c in classified.iter().filter(|c| c.label == Label::TargetSpecular) {
        let Some(f) = c.feature else { continue };
        match best.iter_mut().find(|(g, _)| *g == f) {
            Some(slot) if slot.1.power_db < c.mpc.power_db => slot.1 = c.mpc,
            Some(_) => {}
            None => best.push((f, c.mpc)),
        }
    }
    best.sort_by_key(|(f, _)| match *f {
        FeatureRef::Wall(i) => (0, i, 0),
        FeatureRef::Corner(i, j) => (1, i, j),
    });
    let mpcs: Vec<DeembeddedMpc> = best.iter().map(|b| b.1).collect();
    let losses = reflection_loss(&mpcs, f_c_hz, boresight_gain_dbi)?;
    Ok(best.into_iter().zip(losses).map(|((f, m), l)| (f, m, l)).collect())
}

fn check_weights(mpcs: &[(f64, f64)], what: &str) -> Result<f64> {
    if mpcs.is_empty() {
        return Err(Error::invalid(format!("{what}: no MPCs")));
    }
    if mpcs.iter().any(|(p, v)| !(*p >= 0.0 && p.is_finite() && v.is_finite())) {
        return Err(Error::invalid(format!("{what}: powers must be finite and >= 0")));
    }
    let total: f64 = mpcs.iter().map(|m| m.0).sum();
    if !(total > 0.0) {
        return Err(Error::invalid(format!("{what}: total power is zero")));
    }
    Ok(total)
}

/// RMS delay spread of `(linear power, delay)` pairs, in the delay unit.
pub fn rms_delay_spread(mpcs: &[(f64, f64)]) -> Result<f64> {
    let total = check_weights(mpcs, "delay spread")?;
    if mpcs.len() == 1 {
        return Ok(0.0);
    }
    let mean = mpcs.iter().map(|(p, t)| p * t).sum::<f64>() / total;
    let var = mpcs.iter().map(|(p, t)| p * (t - mean).powi(2)).sum::<f64>() / total;
    Ok(var.max(0.0).sqrt())
}

/// Circular angular spread of `(linear power, azimuth deg)` pairs, degrees.
/// Deviations are taken from the power-weighted circular mean and wrapped to
/// (−180°, 180°].
pub fn circular_angular_spread(mpcs: &[(f64, f64)]) -> Result<f64> {
    let total = check_weights(mpcs, "angular spread")?;
    if mpcs.len() == 1 {
        return Ok(0.0);
    }
    let (s, c) = mpcs.iter().fold((0.0, 0.0), |(s, c), (p, a)| {
        let r = a.to_radians();
        (s + p * r.sin(), c + p * r.cos())
    });
    let mean = s.atan2(c).to_degrees();
    let var = mpcs.iter().map(|(p, a)| p * wrap_deg(a - mean).powi(2)).sum::<f64>() / total;
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadSample {
    pub value: f64,
    /// Rotation angle (degrees) or pose index, depending on the producer.
    pub context: f64,
}

/// Normal fit of `log10(value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalFit {
    pub mu: f64,
    pub sigma: f64,
    /// Samples used after dropping non-positive values.
    pub n: usize,
}

pub fn fit_lognormal(samples: &[f64]) -> Result<LognormalFit> {
    let logs: Vec<f64> = samples
        .iter()
        .filter(|v| **v > 0.0 && v.is_finite())
        .map(|v| v.log10())
        .collect();
    if logs.is_empty() {
        return Err(Error::invalid("no positive samples to fit"));
    }
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let sigma = if logs.len() > 1 {
        (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(LognormalFit { mu, sigma, n: logs.len() })
}

/// RMS delay spread (ns) of every rotation angle with at least one MPC.
pub fn delay_spread_per_angle(est: &EstimateSet) -> Vec<SpreadSample> {
    est.angles
        .iter()
        .filter_map(|a| {
            let pairs: Vec<(f64, f64)> = a
                .mpcs
                .iter()
                .map(|m| (m.amplitude.norm_sqr(), m.delay_s * 1e9))
                .collect();
            rms_delay_spread(&pairs).ok().map(|v| SpreadSample {
                value: v,
                context: a.angle_deg,
            })
        })
        .collect()
}

/// Variant of [`delay_spread_per_angle`] over de-embedded MPCs grouped into
/// azimuth bins of width `bin_deg` (bin centers at multiples of `bin_deg`).
pub fn delay_spread_per_azimuth_bin(deembedded: &[DeembeddedMpc], bin_deg: f64) -> Result<Vec<SpreadSample>> {
    if !(bin_deg > 0.0) {
        return Err(Error::invalid("bin width must be > 0"));
    }
    let n_bins = (360.0 / bin_deg).round().max(1.0) as usize;
    let mut bins: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_bins];
    for m in deembedded {
        let k = (crate::norm_deg(m.azimuth_deg) / bin_deg).round() as usize % n_bins;
        bins[k].push((m.amplitude.norm_sqr(), m.delay_s * 1e9));
    }
    Ok(bins
        .iter()
        .enumerate()
        .filter_map(|(k, b)| {
            rms_delay_spread(b).ok().map(|v| SpreadSample {
                value: v,
                context: k as f64 * bin_deg,
            })
        })
        .collect())
}

/// Angular spread (degrees) of one pose's de-embedded set.
pub fn angular_spread_of_pose(deembedded: &[DeembeddedMpc], pose_index: usize) -> Result<SpreadSample> {
    let pairs: Vec<(f64, f64)> = deembedded
        .iter()
        .map(|m| (m.amplitude.norm_sqr(), m.azimuth_deg))
        .collect();
    Ok(SpreadSample {
        value: circular_angular_spread(&pairs)?,
        context: pose_index as f64,
    })
}

/// Keeps MPCs whose power is at least `threshold_db` above `floor_db`.
pub fn above_floor(deembedded: &[DeembeddedMpc], floor_db: f64, threshold_db: f64) -> Vec<DeembeddedMpc> {
    let min_lin = from_db10(floor_db + threshold_db);
    deembedded
        .iter()
        .filter(|m| m.amplitude.norm_sqr() >= min_lin)
        .copied()
        .collect()
}

pub const POINT_COLUMNS: [&str; 3] = ["x_m", "y_m", "power_db"];
pub const CDF_COLUMNS: [&str; 2] = ["value", "cumulative_prob"];

pub fn write_points(path: &Path, points: &[ReconPoint]) -> Result<()> {
    let rows = points
        .iter()
        .map(|p| [p.x_m.to_string(), p.y_m.to_string(), p.power_db.to_string()]);
    crate::io::write_csv(path, &POINT_COLUMNS, rows)
}

pub fn write_cdf(path: &Path, cdf: &[(f64, f64)]) -> Result<()> {
    let rows = cdf.iter().map(|(v, p)| [v.to_string(), p.to_string()]);
    crate::io::write_csv(path, &CDF_COLUMNS, rows)
}

/// Writes spreads keyed by `context_name` (`angle_deg`, `pose`).
pub fn write_spreads(path: &Path, context_name: &str, value_name: &str, samples: &[SpreadSample]) -> Result<()> {
    let rows = samples.iter().map(|s| [s.context.to_string(), s.value.to_string()]);
    crate::io::write_csv(path, &[context_name, value_name], rows)
}
