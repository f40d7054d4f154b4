//! Element-wise SAGE extraction of per-angle path amplitudes and delays.
//!
//! Each row is treated independently. New paths are initialized at the
//! strongest residual peak (successive cancellation), delays are refined on a
//! grid `refine_grid_factor` times finer than the IDFT grid followed by a
//! parabolic vertex, and every addition is followed by per-path
//! expectation/maximization sweeps and a joint least-squares amplitude fit.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::FreqGrid;
use crate::exec::Execution;
use crate::padp::{estimate_noise_floor, PdpTransform, Window, DEFAULT_GUARD_S};
use crate::synth::{add_tone, delay_phasor, DirectionalCfr};
use crate::{db10, from_db10, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SageConfig {
    pub threshold_offset_db: f64,
    pub max_paths: usize,
    pub em_max_iters: usize,
    pub delay_tol_s: f64,
    pub refine_grid_factor: usize,
    /// Paths closer than this many IDFT bins are merged.
    pub merge_bins: f64,
}

impl Default for SageConfig {
    fn default() -> Self {
        Self {
            threshold_offset_db: 10.0,
            max_paths: 50,
            em_max_iters: 20,
            delay_tol_s: 1e-13,
            refine_grid_factor: 64,
            merge_bins: 0.25,
        }
    }
}

impl SageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_offset_db > 0.0 && self.threshold_offset_db.is_finite()) {
            return Err(Error::invalid("threshold_offset_db must be positive"));
        }
        if self.max_paths == 0 || self.em_max_iters == 0 || self.refine_grid_factor == 0 {
            return Err(Error::invalid("max_paths, em_max_iters and refine_grid_factor must be positive"));
        }
        if !(self.delay_tol_s > 0.0) || !(self.merge_bins > 0.0) {
            return Err(Error::invalid("delay_tol_s and merge_bins must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcEstimate {
    pub amplitude: C64,
    pub delay_s: f64,
    pub power_db: f64,
}

impl MpcEstimate {
    pub fn new(amplitude: C64, delay_s: f64) -> Self {
        Self {
            amplitude,
            delay_s,
            power_db: db10(amplitude.norm_sqr()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    pub angle_deg: f64,
    /// Sorted by descending power.
    pub mpcs: Vec<MpcEstimate>,
    /// Mean residual power per PDP bin after extraction, dB.
    pub residual_power_db: f64,
    pub noise_floor_db: f64,
}

impl AngleEstimate {
    pub fn empty(angle_deg: f64, noise_floor_db: f64) -> Self {
        Self {
            angle_deg,
            mpcs: Vec::new(),
            residual_power_db: f64::NEG_INFINITY,
            noise_floor_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub pose_index: usize,
    pub angles: Vec<AngleEstimate>,
}

impl EstimateSet {
    pub fn total_mpcs(&self) -> usize {
        self.angles.iter().map(|a| a.mpcs.len()).sum()
    }

    /// Rotation step of the angle grid, degrees.
    pub fn step_deg(&self) -> f64 {
        if self.angles.len() < 2 {
            360.0
        } else {
            self.angles[1].angle_deg - self.angles[0].angle_deg
        }
    }
}

/// Matched-filter correlation `(1/N) Σ x_n exp(+j2π f_n τ)`.
pub fn correlate(x: &[C64], grid: &FreqGrid, tau_s: f64) -> C64 {
    const CHUNK: usize = 32;
    let step = delay_phasor(grid.step_hz, tau_s).conj();
    let mut acc = C64::new(0.0, 0.0);
    for (c, chunk) in x.chunks(CHUNK).enumerate() {
        let mut z = delay_phasor(grid.freq(c * CHUNK), tau_s).conj();
        for v in chunk {
            acc += v * z;
            z *= step;
        }
    }
    acc / x.len() as f64
}

/// `(1/N) Σ_n exp(+j2π f_n d)`, the normalized inner product of two steering
/// vectors whose delays differ by `d`.
pub fn steering_inner(grid: &FreqGrid, d: f64) -> C64 {
    let n = grid.len as f64;
    let x = grid.step_hz * d;
    let den = (std::f64::consts::PI * x).sin();
    if den.abs() < 1e-9 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..grid.len {
            acc += delay_phasor(grid.freq(k), d).conj();
        }
        return acc / n;
    }
    let num = (std::f64::consts::PI * n * x).sin();
    let mid = grid.start_hz + 0.5 * (n - 1.0) * grid.step_hz;
    delay_phasor(mid, d).conj() * (num / (n * den))
}

/// Gram matrix `G_lm = (1/N) s_l^H s_m` of steering vectors at `taus`.
pub fn gram(grid: &FreqGrid, taus: &[f64]) -> DMatrix<C64> {
    let l = taus.len();
    DMatrix::from_fn(l, l, |i, j| {
        if i == j {
            C64::new(1.0, 0.0)
        } else {
            steering_inner(grid, taus[i] - taus[j])
        }
    })
}

/// Least-squares amplitudes of `x` for fixed delays, or `None` if the
/// steering vectors are numerically dependent.
pub fn ls_amplitudes(x: &[C64], grid: &FreqGrid, taus: &[f64]) -> Option<Vec<C64>> {
    if taus.is_empty() {
        return Some(Vec::new());
    }
    let g = gram(grid, taus);
    let b = DVector::from_iterator(taus.len(), taus.iter().map(|&t| correlate(x, grid, t)));
    let sol = g.lu().solve(&b)?;
    if sol.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return None;
    }
    Some(sol.iter().copied().collect())
}

/// `Σ α̂ exp(-j2π f τ̂)` over the estimated paths.
pub fn reconstruct_row(est: &AngleEstimate, grid: &FreqGrid) -> Vec<C64> {
    let mut row = vec![C64::new(0.0, 0.0); grid.len];
    for m in &est.mpcs {
        add_tone(&mut row, grid, m.amplitude, m.delay_s);
    }
    row
}

struct Row<'a> {
    grid: &'a FreqGrid,
    step: f64,
    period: f64,
}

impl Row<'_> {
    fn mag2(&self, x: &[C64], tau: f64) -> f64 {
        correlate(x, self.grid, tau).norm_sqr()
    }

    fn wrap(&self, tau: f64) -> f64 {
        tau.rem_euclid(self.period)
    }

    /// Vertex of the parabola through three equally spaced magnitudes, as an
    /// offset in steps from the middle sample, clamped to ±0.5.
    fn vertex(left: f64, mid: f64, right: f64) -> f64 {
        let den = left - 2.0 * mid + right;
        if den >= 0.0 {
            return 0.0;
        }
        (0.5 * (left - right) / den).clamp(-0.5, 0.5)
    }

    /// Parabolic polish around the grid maximum at `tau`; the vertex is kept
    /// only when it does not lower the correlation.
    fn polish(&self, x: &[C64], tau: f64, best: f64, left: f64, right: f64) -> (f64, f64) {
        let d = Self::vertex(left.sqrt(), best.sqrt(), right.sqrt());
        if d == 0.0 {
            return (tau, best);
        }
        let tv = tau + d * self.step;
        let v = self.mag2(x, tv);
        if v > best {
            (tv, v)
        } else {
            (tau, best)
        }
    }

    /// Exhaustive scan of ±`span` steps around `center` followed by a
    /// parabolic polish.
    fn scan(&self, x: &[C64], center: f64, span: usize) -> f64 {
        let vals: Vec<f64> = (-(span as i64)..=span as i64)
            .map(|j| self.mag2(x, center + j as f64 * self.step))
            .collect();
        let (k, &best) = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty scan");
        let tau = center + (k as f64 - span as f64) * self.step;
        let left = if k > 0 { vals[k - 1] } else { self.mag2(x, tau - self.step) };
        let right = if k + 1 < vals.len() { vals[k + 1] } else { self.mag2(x, tau + self.step) };
        self.polish(x, tau, best, left, right).0
    }

    /// Hill climb on the fine grid anchored at `tau0`, then polish. Never
    /// returns a delay with lower correlation than `tau0`.
    fn climb(&self, x: &[C64], tau0: f64, max_steps: usize) -> f64 {
        let mut cur = self.mag2(x, tau0);
        let mut left = self.mag2(x, tau0 - self.step);
        let mut right = self.mag2(x, tau0 + self.step);
        let mut tau = tau0;
        let dir = if right > cur && right >= left {
            1.0
        } else if left > cur {
            -1.0
        } else {
            0.0
        };
        if dir != 0.0 {
            for _ in 0..max_steps {
                let next_tau = tau + dir * self.step;
                let next = if dir > 0.0 { right } else { left };
                if next <= cur {
                    break;
                }
                let beyond = self.mag2(x, next_tau + dir * self.step);
                if dir > 0.0 {
                    left = cur;
                    right = beyond;
                } else {
                    right = cur;
                    left = beyond;
                }
                cur = next;
                tau = next_tau;
            }
        }
        self.polish(x, tau, cur, left, right).0
    }
}

/// Diagnostics of one row extraction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SageTrace {
    /// Residual energy after every EM sweep, grouped by EM run (one run per
    /// path addition or merge).
    pub residual_runs: Vec<Vec<f64>>,
    pub em_sweeps: usize,
}

fn energy(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Sweep budget of the EM runs between path additions.
const INTERIM_SWEEPS: usize = 5;

struct Extraction<'a> {
    row: &'a [C64],
    grid: &'a FreqGrid,
    cfg: &'a SageConfig,
    helper: Row<'a>,
    taus: Vec<f64>,
    alphas: Vec<C64>,
    residual: Vec<C64>,
    trace: SageTrace,
}

impl<'a> Extraction<'a> {
    fn new(row: &'a [C64], grid: &'a FreqGrid, cfg: &'a SageConfig) -> Self {
        let bin = grid.delay_bin_s();
        Self {
            row,
            grid,
            cfg,
            helper: Row {
                grid,
                step: bin / cfg.refine_grid_factor as f64,
                period: grid.max_delay_s(),
            },
            taus: Vec::new(),
            alphas: Vec::new(),
            residual: row.to_vec(),
            trace: SageTrace::default(),
        }
    }

    fn rebuild_residual(&mut self) {
        self.residual.copy_from_slice(self.row);
        for (a, t) in self.alphas.iter().zip(&self.taus) {
            add_tone(&mut self.residual, self.grid, -*a, *t);
        }
    }

    fn joint_ls(&mut self) {
        if let Some(a) = ls_amplitudes(self.row, self.grid, &self.taus) {
            self.alphas = a;
            self.rebuild_residual();
        }
    }

    /// EM sweeps over all paths until no delay moves more than `tol_s`, at
    /// most `max_sweeps` times.
    fn em(&mut self, tol_s: f64, max_sweeps: usize) {
        let mut run = vec![energy(&self.residual)];
        let climb_limit = 2 * self.cfg.refine_grid_factor;
        for _ in 0..max_sweeps {
            let mut max_move: f64 = 0.0;
            for l in 0..self.taus.len() {
                // Expectation: the path's own contribution plus the residual.
                add_tone(&mut self.residual, self.grid, self.alphas[l], self.taus[l]);
                let t = self.helper.climb(&self.residual, self.taus[l], climb_limit);
                let a = correlate(&self.residual, self.grid, t);
                add_tone(&mut self.residual, self.grid, -a, t);
                max_move = max_move.max((t - self.taus[l]).abs());
                self.taus[l] = t;
                self.alphas[l] = a;
            }
            self.joint_ls();
            run.push(energy(&self.residual));
            self.trace.em_sweeps += 1;
            if max_move < tol_s {
                break;
            }
        }
        self.trace.residual_runs.push(run);
    }

    /// Interim EM to the refined-grid step, then merges.
    fn settle(&mut self, max_sweeps: usize) {
        let tol = self.helper.step.max(self.cfg.delay_tol_s);
        self.em(tol, max_sweeps);
        while self.merge_close() {
            self.em(tol, max_sweeps);
        }
    }

    /// Merges paths closer than `merge_bins`; returns true if any merged.
    fn merge_close(&mut self) -> bool {
        let lim = self.cfg.merge_bins * self.grid.delay_bin_s();
        for i in 0..self.taus.len() {
            for j in i + 1..self.taus.len() {
                if (self.taus[i] - self.taus[j]).abs() < lim {
                    let weak = if self.alphas[i].norm_sqr() >= self.alphas[j].norm_sqr() { j } else { i };
                    self.taus.remove(weak);
                    self.alphas.remove(weak);
                    self.joint_ls();
                    return true;
                }
            }
        }
        false
    }

    /// Drops the weakest path below `threshold` (linear); true if dropped.
    fn prune_one(&mut self, threshold: f64) -> bool {
        let weakest = self
            .alphas
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() < threshold)
            .min_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .map(|(i, _)| i);
        match weakest {
            Some(i) => {
                self.taus.remove(i);
                self.alphas.remove(i);
                self.joint_ls();
                true
            }
            None => false,
        }
    }
}

/// Extracts the paths of one CFR row. `noise_floor_db` is the mean noise
/// power per PDP bin.
pub fn estimate_angle(
    row: &[C64],
    grid: &FreqGrid,
    cfg: &SageConfig,
    noise_floor_db: f64,
    angle_deg: f64,
) -> Result<AngleEstimate> {
    estimate_angle_traced(row, grid, cfg, noise_floor_db, angle_deg).map(|(e, _)| e)
}

/// [`estimate_angle`] returning extraction diagnostics as well.
pub fn estimate_angle_traced(
    row: &[C64],
    grid: &FreqGrid,
    cfg: &SageConfig,
    noise_floor_db: f64,
    angle_deg: f64,
) -> Result<(AngleEstimate, SageTrace)> {
    cfg.validate()?;
    if row.len() != grid.len {
        return Err(Error::invalid(format!(
            "row length {} does not match n_freq {}",
            row.len(),
            grid.len
        )));
    }
    if noise_floor_db.is_nan() || noise_floor_db == f64::INFINITY {
        return Err(Error::invalid("noise floor must be a number below +inf"));
    }
    if row.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok((AngleEstimate::empty(angle_deg, noise_floor_db), SageTrace::default()));
    }
    let threshold = from_db10(noise_floor_db + cfg.threshold_offset_db).max(f64::MIN_POSITIVE);
    let transform = PdpTransform::new(*grid, Window::Rect);
    let bin = grid.delay_bin_s();
    let mut ex = Extraction::new(row, grid, cfg);

    while ex.taus.len() < cfg.max_paths {
        let h = transform.impulse(&ex.residual)?;
        let k = h
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .map(|(k, _)| k)
            .expect("non-empty row");
        let tau = ex.helper.wrap(ex.helper.scan(&ex.residual, k as f64 * bin, cfg.refine_grid_factor));
        let alpha = correlate(&ex.residual, grid, tau);
        if alpha.norm_sqr() < threshold {
            break;
        }
        add_tone(&mut ex.residual, grid, -alpha, tau);
        ex.taus.push(tau);
        ex.alphas.push(alpha);
        ex.settle(INTERIM_SWEEPS);
    }
    // Closely coupled paths converge slowly; the interim runs only settle
    // them to the refined grid and the final run goes to full tolerance.
    loop {
        ex.em(cfg.delay_tol_s, cfg.em_max_iters);
        if ex.merge_close() {
            continue;
        }
        if !ex.prune_one(threshold) {
            break;
        }
    }
    for t in ex.taus.iter_mut() {
        *t = t.rem_euclid(grid.max_delay_s());
    }

    let mut mpcs: Vec<MpcEstimate> = ex
        .alphas
        .iter()
        .zip(&ex.taus)
        .map(|(a, t)| MpcEstimate::new(*a, *t))
        .collect();
    mpcs.sort_by(|a, b| {
        b.power_db
            .total_cmp(&a.power_db)
            .then(a.delay_s.total_cmp(&b.delay_s))
    });
    let residual_power_db = db10(energy(&ex.residual) / (grid.len as f64 * grid.len as f64));
    Ok((
        AngleEstimate {
            angle_deg,
            mpcs,
            residual_power_db,
            noise_floor_db,
        },
        ex.trace,
    ))
}

/// How each row's noise floor is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FloorMode {
    /// Median of the PDP tail beyond the guard delay.
    Estimate { guard_delay_s: f64 },
    /// A fixed floor for every row, dB.
    Fixed(f64),
}

impl Default for FloorMode {
    fn default() -> Self {
        FloorMode::Estimate {
            guard_delay_s: DEFAULT_GUARD_S,
        }
    }
}

/// Runs [`estimate_angle`] over every row. Rows that fail (including noisy
/// rows whose floor cannot be estimated) yield empty estimates and a warning;
/// noiseless rows without a measurable floor use the CFR's nominal floor.
pub fn estimate_all(cfr: &DirectionalCfr, cfg: &SageConfig, floor: FloorMode, exec: Execution) -> Result<EstimateSet> {
    cfg.validate()?;
    cfr.validate()?;
    let transform = PdpTransform::new(cfr.grid, Window::Rect);
    let angles = exec.map_indices(cfr.n_angles(), |i| {
        let row = cfr.row(i);
        let angle = cfr.angles_deg[i];
        let floor_db = match floor {
            FloorMode::Fixed(db) => Ok(db),
            FloorMode::Estimate { guard_delay_s } => transform
                .pdp(row, angle)
                .and_then(|p| estimate_noise_floor(&p, guard_delay_s))
                .and_then(|f| {
                    if f.is_finite() {
                        Ok(f)
                    } else if !cfr.noise_enabled {
                        Ok(cfr.noise_floor_db)
                    } else {
                        Err(Error::Numerical("noise floor undefined on a noisy row".into()))
                    }
                }),
        };
        match floor_db.and_then(|f| estimate_angle(row, &cfr.grid, cfg, f, angle)) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("pose {} angle {angle}: {e}; row left empty", cfr.pose_index);
                AngleEstimate::empty(angle, f64::NAN)
            }
        }
    });
    Ok(EstimateSet {
        pose_index: cfr.pose_index,
        angles,
    })
}

pub const ESTIMATE_COLUMNS: [&str; 5] = ["angle_deg", "path_index", "delay_ns", "power_db", "phase_rad"];
pub const ROW_COLUMNS: [&str; 4] = ["angle_deg", "noise_floor_db", "residual_power_db", "n_paths"];

/// Writes the per-path CSV and the per-row summary CSV.
pub fn write_estimates(paths_csv: &Path, rows_csv: &Path, set: &EstimateSet) -> Result<()> {
    let rows = set.angles.iter().flat_map(|a| {
        a.mpcs.iter().enumerate().map(move |(i, m)| {
            [
                a.angle_deg.to_string(),
                i.to_string(),
                (m.delay_s * 1e9).to_string(),
                m.power_db.to_string(),
                m.amplitude.arg().to_string(),
            ]
        })
    });
    crate::io::write_csv(paths_csv, &ESTIMATE_COLUMNS, rows)?;
    let summary = set.angles.iter().map(|a| {
        [
            a.angle_deg.to_string(),
            a.noise_floor_db.to_string(),
            a.residual_power_db.to_string(),
            a.mpcs.len().to_string(),
        ]
    });
    crate::io::write_csv(rows_csv, &ROW_COLUMNS, summary)
}

/// Reads the CSVs written by [`write_estimates`].
pub fn read_estimates(paths_csv: &Path, rows_csv: &Path, pose_index: usize) -> Result<EstimateSet> {
    use crate::io::{field, read_csv};
    let mut angles: Vec<AngleEstimate> = Vec::new();
    for rec in read_csv(rows_csv, &ROW_COLUMNS)? {
        angles.push(AngleEstimate {
            angle_deg: field(&rec, 0, "angle_deg", rows_csv)?,
            mpcs: Vec::new(),
            residual_power_db: field(&rec, 2, "residual_power_db", rows_csv)?,
            noise_floor_db: field(&rec, 1, "noise_floor_db", rows_csv)?,
        });
    }
    for rec in read_csv(paths_csv, &ESTIMATE_COLUMNS)? {
        let angle: f64 = field(&rec, 0, "angle_deg", paths_csv)?;
        let delay_ns: f64 = field(&rec, 2, "delay_ns", paths_csv)?;
        let power_db: f64 = field(&rec, 3, "power_db", paths_csv)?;
        let phase: f64 = field(&rec, 4, "phase_rad", paths_csv)?;
        let slot = angles
            .iter_mut()
            .find(|a| a.angle_deg == angle)
            .ok_or_else(|| Error::schema(paths_csv.display().to_string(), format!("field `angle_deg`: {angle} not in row summary")))?;
        slot.mpcs.push(MpcEstimate {
            amplitude: C64::from_polar(from_db10(power_db).sqrt(), phase),
            delay_s: delay_ns * 1e-9,
            power_db,
        });
    }
    Ok(EstimateSet { pose_index, angles })
}
