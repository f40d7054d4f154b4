//! Delay-domain profiles: per-angle PDPs by inverse DFT of the CFR rows,
//! the full PADP, and a robust noise-floor estimate.

use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::config::FreqGrid;
use crate::exec::Execution;
use crate::synth::DirectionalCfr;
use crate::{db10, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rect,
    Hann,
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(Window::Rect),
            "hann" => Ok(Window::Hann),
            other => Err(Error::invalid(format!("unknown window `{other}` (rect|hann)"))),
        }
    }
}

impl Window {
    /// Weights scaled so that their mean square is one.
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => {
                let raw: Vec<f64> = (0..n)
                    .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n as f64 - 1.0).max(1.0)).cos())
                    .collect();
                let ms = raw.iter().map(|w| w * w).sum::<f64>() / n as f64;
                let s = ms.sqrt().recip();
                raw.into_iter().map(|w| w * s).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pdp {
    pub delays_s: Vec<f64>,
    pub power_db: Vec<f64>,
    pub angle_deg: f64,
}

impl Pdp {
    pub fn delay_step_s(&self) -> f64 {
        self.delays_s.get(1).copied().unwrap_or(0.0)
    }

    /// Index of the strongest bin.
    pub fn peak_index(&self) -> usize {
        self.power_db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Local maxima above `threshold_db`, in delay order.
    pub fn peaks_above(&self, threshold_db: f64) -> Vec<usize> {
        let p = &self.power_db;
        let n = p.len();
        (0..n)
            .filter(|&k| {
                p[k] > threshold_db
                    && (k == 0 || p[k] > p[k - 1])
                    && (k + 1 == n || p[k] >= p[k + 1])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Padp {
    pub angles_deg: Vec<f64>,
    pub delays_s: Vec<f64>,
    /// `power_db[angle][delay]`.
    pub power_db: Vec<Vec<f64>>,
}

/// Reusable IDFT plan for rows on a fixed grid.
#[derive(Clone)]
pub struct PdpTransform {
    fft: Arc<dyn Fft<f64>>,
    weights: Vec<f64>,
    grid: FreqGrid,
    factor: usize,
}

impl PdpTransform {
    pub fn new(grid: FreqGrid, window: Window) -> Self {
        Self::oversampled(grid, window, 1)
    }

    /// Zero-padded transform with `factor` delay samples per native bin.
    pub fn oversampled(grid: FreqGrid, window: Window, factor: usize) -> Self {
        let factor = factor.max(1);
        let fft = FftPlanner::new().plan_fft_inverse(grid.len * factor);
        Self {
            fft,
            weights: window.weights(grid.len),
            grid,
            factor,
        }
    }

    /// Complex impulse response `(1/N) Σ w_n H_n e^{+j2π nk/(MN)}` on the
    /// delay grid `k / (M N Δf)`, `M` being the oversampling factor.
    pub fn impulse(&self, row: &[C64]) -> Result<Vec<C64>> {
        if row.len() != self.grid.len {
            return Err(Error::invalid(format!(
                "row length {} does not match n_freq {}",
                row.len(),
                self.grid.len
            )));
        }
        let inv = 1.0 / row.len() as f64;
        let mut buf: Vec<C64> = row.iter().zip(&self.weights).map(|(z, w)| z * (w * inv)).collect();
        buf.resize(row.len() * self.factor, C64::new(0.0, 0.0));
        self.fft.process(&mut buf);
        Ok(buf)
    }

    pub fn delays_s(&self) -> Vec<f64> {
        let d = self.grid.delay_bin_s() / self.factor as f64;
        (0..self.grid.len * self.factor).map(|k| k as f64 * d).collect()
    }

    pub fn pdp(&self, row: &[C64], angle_deg: f64) -> Result<Pdp> {
        let h = self.impulse(row)?;
        Ok(Pdp {
            delays_s: self.delays_s(),
            power_db: h.iter().map(|z| db10(z.norm_sqr())).collect(),
            angle_deg,
        })
    }
}

/// PDP of a single CFR row.
pub fn cfr_to_pdp(row: &[C64], grid: &FreqGrid, window: Window, angle_deg: f64) -> Result<Pdp> {
    PdpTransform::new(*grid, window).pdp(row, angle_deg)
}

/// PDP of every angle row of `cfr`.
pub fn compute_padp(cfr: &DirectionalCfr, window: Window, exec: Execution) -> Result<Padp> {
    cfr.validate()?;
    let t = PdpTransform::new(cfr.grid, window);
    let rows = exec.map_indices(cfr.n_angles(), |i| {
        let h = t.impulse(cfr.row(i)).expect("row length checked");
        h.iter().map(|z| db10(z.norm_sqr())).collect::<Vec<f64>>()
    });
    Ok(Padp {
        angles_deg: cfr.angles_deg.clone(),
        delays_s: t.delays_s(),
        power_db: rows,
    })
}

/// Guard delay used when none is given.
pub const DEFAULT_GUARD_S: f64 = 70e-9;

/// Dynamic range below the peak at which the tail is treated as empty.
const UNDEFINED_RANGE_DB: f64 = 200.0;

/// Mean-equivalent noise power of the PDP tail beyond `guard_delay_s`, from
/// the tail median (an exponential variable's median is `ln 2` times its
/// mean). Returns `-inf` when the tail holds no noise (noiseless data).
pub fn estimate_noise_floor(pdp: &Pdp, guard_delay_s: f64) -> Result<f64> {
    let mut tail: Vec<f64> = pdp
        .delays_s
        .iter()
        .zip(&pdp.power_db)
        .filter(|(d, _)| **d > guard_delay_s)
        .map(|(_, p)| *p)
        .collect();
    if tail.is_empty() {
        return Err(Error::invalid(format!(
            "no PDP bins beyond the guard delay {:.3} ns",
            guard_delay_s * 1e9
        )));
    }
    tail.sort_by(|a, b| a.total_cmp(b));
    let m = tail.len();
    let median_db = if m % 2 == 1 {
        tail[m / 2]
    } else {
        db10(0.5 * (crate::from_db10(tail[m / 2 - 1]) + crate::from_db10(tail[m / 2])))
    };
    let peak = pdp.power_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !median_db.is_finite() || median_db <= peak - UNDEFINED_RANGE_DB {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(median_db - db10(LN_2))
}

/// PADP as CSV rows `(angle_deg, delay_ns, power_db)`.
pub fn write_padp_csv(path: &Path, padp: &Padp) -> Result<()> {
    let rows = padp.angles_deg.iter().zip(&padp.power_db).flat_map(|(a, row)| {
        padp.delays_s
            .iter()
            .zip(row)
            .map(move |(d, p)| [a.to_string(), (d * 1e9).to_string(), p.to_string()])
    });
    crate::io::write_csv(path, &["angle_deg", "delay_ns", "power_db"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SounderConfig;
    use crate::exec::Execution;
    use crate::scene::{SceneModel, Vec2};
    use crate::synth::{add_noise, add_tone, synthesize_cfr};
    use proptest::prelude::*;

    fn grid() -> FreqGrid {
        SounderConfig::default().grid().unwrap()
    }

    fn tone(tau: f64, amp: C64) -> Vec<C64> {
        let g = grid();
        let mut row = vec![C64::new(0.0, 0.0); g.len];
        add_tone(&mut row, &g, amp, tau);
        row
    }

    #[test]
    fn delay_grid_invariants() {
        let g = grid();
        let t = PdpTransform::new(g, Window::Rect);
        let d = t.delays_s();
        assert_eq!(d.len(), 2001);
        // Native IDFT spacing 1/(N Δf) is within 0.05% of 1/B.
        assert!((d[1] - 0.05e-9).abs() < 0.05e-9 * 5e-4);
        assert!((d[2000] + d[1] - 100e-9).abs() < 1e-18);
    }

    #[test]
    fn single_tone_peak() {
        let g = grid();
        let pdp = cfr_to_pdp(&tone(5e-9, C64::new(1.0, 0.0)), &g, Window::Rect, 0.0).unwrap();
        let k = pdp.peak_index();
        let nearest = (5e-9 / g.delay_bin_s()).round() as usize;
        assert_eq!(k, nearest);
        // 5 ns is not exactly on the grid, so the peak sits slightly below 0 dB.
        let on_grid = nearest as f64 * g.delay_bin_s();
        let pdp = cfr_to_pdp(&tone(on_grid, C64::new(1.0, 0.0)), &g, Window::Rect, 0.0).unwrap();
        assert!(pdp.power_db[nearest].abs() < 1e-9);
    }

    #[test]
    fn all_ones_peaks_at_zero() {
        let g = grid();
        let row = vec![C64::new(1.0, 0.0); g.len];
        let pdp = cfr_to_pdp(&row, &g, Window::Hann, 0.0).unwrap();
        assert_eq!(pdp.peak_index(), 0);
        let pdp = cfr_to_pdp(&row, &g, Window::Rect, 0.0).unwrap();
        assert!(pdp.power_db[0].abs() < 1e-12);
    }

    #[test]
    fn two_tones_resolved() {
        // 1.2 native bins apart. In phase the two main lobes merge into one
        // maximum; in antiphase an interpolated PDP shows both.
        let g = grid();
        let t = PdpTransform::oversampled(g, Window::Rect, 16);
        let maxima = |second: C64| {
            let mut row = tone(5e-9, C64::new(1.0, 0.0));
            add_tone(&mut row, &g, second, 5.06e-9);
            let pdp = t.pdp(&row, 0.0).unwrap();
            pdp.peaks_above(-6.0)
                .iter()
                .map(|&k| pdp.delays_s[k])
                .filter(|d| (d - 5.03e-9).abs() < 0.2e-9)
                .collect::<Vec<f64>>()
        };
        // Carrier phase difference referred to the band center.
        let rel = crate::synth::delay_phasor(g.freq(g.len / 2), 0.06e-9).conj();
        let near = maxima(-rel);
        assert_eq!(near.len(), 2, "{near:?}");
        assert!(near[1] - near[0] > g.delay_bin_s(), "{near:?}");
        assert_eq!(maxima(rel).len(), 1);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(cfr_to_pdp(&[C64::new(1.0, 0.0); 10], &grid(), Window::Rect, 0.0).is_err());
    }

    #[test]
    fn noise_floor_estimates() {
        let g = grid();
        let mut row = vec![C64::new(0.0, 0.0); g.len];
        add_noise(&mut row, -120.0, 11, 0);
        let pdp = cfr_to_pdp(&row, &g, Window::Rect, 0.0).unwrap();
        let est = estimate_noise_floor(&pdp, DEFAULT_GUARD_S).unwrap();
        assert!((est + 120.0).abs() < 1.0, "{est}");

        let mut row = tone(20e-9, C64::new(1e-4, 0.0));
        add_noise(&mut row, -110.0, 12, 0);
        let pdp = cfr_to_pdp(&row, &g, Window::Rect, 0.0).unwrap();
        let est = estimate_noise_floor(&pdp, DEFAULT_GUARD_S).unwrap();
        assert!((est + 110.0).abs() < 1.0, "{est}");
    }

    #[test]
    fn noiseless_floor_undefined() {
        let g = grid();
        let t = 10.0 * g.delay_bin_s();
        let pdp = cfr_to_pdp(&tone(t, C64::new(1.0, 0.0)), &g, Window::Rect, 0.0).unwrap();
        assert_eq!(estimate_noise_floor(&pdp, DEFAULT_GUARD_S).unwrap(), f64::NEG_INFINITY);
        assert!(estimate_noise_floor(&pdp, 200e-9).is_err());
    }

    #[test]
    fn pure_noise_padp_stays_below_bound() {
        let scene = SceneModel::new("none", vec![], &[(Vec2::new(0.0, 0.0), 0.2)]).unwrap();
        let cfg = SounderConfig {
            rotation_step_deg: 10.0,
            ..SounderConfig::default()
        };
        let cfr = synthesize_cfr(&scene, &scene.trx_poses[0], &cfg, 5, Execution::default()).unwrap();
        let padp = compute_padp(&cfr, Window::Rect, Execution::default()).unwrap();
        let max = padp.power_db.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max < cfg.noise_floor_db + 15.0, "{max}");
    }

    #[test]
    fn single_wall_specular_peak() {
        let scene = SceneModel::single_wall(1.2, 8.0);
        let cfg = SounderConfig {
            noise_enabled: false,
            ..SounderConfig::default()
        };
        let cfr = synthesize_cfr(&scene, &scene.trx_poses[0], &cfg, 1, Execution::default()).unwrap();
        let padp = compute_padp(&cfr, Window::Rect, Execution::default()).unwrap();
        let row = &padp.power_db[90];
        let k = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let spec = crate::geometry::wall_specular_delay(1.2, 0.2, 90.0).unwrap();
        assert!((k as f64 * cfr.grid.delay_bin_s() - spec).abs() <= cfr.grid.delay_bin_s());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn parseval(seed in 0u64..1000) {
            let g = grid();
            let mut row = vec![C64::new(0.0, 0.0); g.len];
            add_noise(&mut row, -90.0, seed, 0);
            add_tone(&mut row, &g, C64::new(1e-4, 2e-5), 13.3e-9);
            let t = PdpTransform::new(g, Window::Rect);
            let h = t.impulse(&row).unwrap();
            let lhs: f64 = h.iter().map(|z| z.norm_sqr()).sum();
            let rhs: f64 = row.iter().map(|z| z.norm_sqr()).sum::<f64>() / row.len() as f64;
            prop_assert!(((lhs - rhs) / rhs).abs() < 1e-9);
        }

        #[test]
        fn shift_theorem(tau in 1e-9f64..60e-9, dt in 0.0f64..30e-9) {
            let g = grid();
            let a = cfr_to_pdp(&tone(tau, C64::new(1.0, 0.0)), &g, Window::Rect, 0.0).unwrap();
            let mut row = tone(tau, C64::new(1.0, 0.0));
            for (n, z) in row.iter_mut().enumerate() {
                *z *= crate::synth::delay_phasor(g.freq(n), dt);
            }
            let b = cfr_to_pdp(&row, &g, Window::Rect, 0.0).unwrap();
            let moved = (b.peak_index() as f64 - a.peak_index() as f64) * g.delay_bin_s();
            prop_assert!((moved - dt).abs() <= g.delay_bin_s());
        }

        #[test]
        fn window_power_invariant_for_white_input(seed in 0u64..200) {
            let g = grid();
            let mut row = vec![C64::new(0.0, 0.0); g.len];
            add_noise(&mut row, -100.0, seed, 1);
            let p = |w: Window| {
                let h = PdpTransform::new(g, w).impulse(&row).unwrap();
                h.iter().map(|z| z.norm_sqr()).sum::<f64>()
            };
            let (r, h) = (p(Window::Rect), p(Window::Hann));
            prop_assert!((db10(h) - db10(r)).abs() < 0.5);
        }
    }
}
