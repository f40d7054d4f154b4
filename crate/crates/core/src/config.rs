//! Sounder and antenna configuration.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Horn antenna model shared by the co-located Tx and Rx.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaPattern {
    /// Boresight gain G0 in dBi.
    pub boresight_gain_dbi: f64,
    /// Azimuthal half-power beamwidth in degrees.
    pub hpbw_deg: f64,
    /// Minimum gain relative to boresight (sidelobe floor), dB, negative.
    pub floor_db: f64,
    /// Peak phase ripple of the pattern in radians. Zero gives the real-valued
    /// pattern the pipeline assumes; non-zero values inject a synthetic
    /// pattern phase to probe robustness.
    #[serde(default)]
    pub phase_ripple_rad: f64,
}

impl Default for AntennaPattern {
    fn default() -> Self {
        Self {
            boresight_gain_dbi: 25.5,
            hpbw_deg: 8.0,
            floor_db: -40.0,
            phase_ripple_rad: 0.0,
        }
    }
}

impl AntennaPattern {
    /// A 0 dBi pattern with no angular dependence.
    pub fn isotropic() -> Self {
        Self {
            boresight_gain_dbi: 0.0,
            hpbw_deg: f64::INFINITY,
            floor_db: -300.0,
            phase_ripple_rad: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.boresight_gain_dbi.is_finite() {
            return Err(Error::invalid("antenna boresight_gain_dbi must be finite"));
        }
        if !(self.hpbw_deg > 0.0) {
            return Err(Error::invalid("antenna hpbw_deg must be > 0"));
        }
        if !(self.floor_db < 0.0) {
            return Err(Error::invalid("antenna floor_db must be < 0"));
        }
        if !self.phase_ripple_rad.is_finite() {
            return Err(Error::invalid("antenna phase_ripple_rad must be finite"));
        }
        Ok(())
    }

    /// Half-width (degrees) of the region where the parabolic main lobe stays
    /// above the floor.
    pub fn floor_half_width_deg(&self) -> f64 {
        if self.hpbw_deg.is_infinite() {
            return 180.0;
        }
        (0.5 * self.hpbw_deg * (-self.floor_db / 3.0).sqrt()).min(180.0)
    }
}

/// Uniform frequency grid `f_n = start + n * step`, `n = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqGrid {
    pub start_hz: f64,
    pub step_hz: f64,
    pub len: usize,
}

impl FreqGrid {
    pub fn new(f_start_hz: f64, f_stop_hz: f64, n_freq: usize) -> Result<Self> {
        if !(f_start_hz.is_finite() && f_stop_hz.is_finite()) || f_start_hz <= 0.0 {
            return Err(Error::invalid("frequency bounds must be finite and positive"));
        }
        if f_stop_hz <= f_start_hz {
            return Err(Error::invalid("f_stop must exceed f_start"));
        }
        if n_freq < 2 {
            return Err(Error::invalid("n_freq must be at least 2"));
        }
        Ok(Self {
            start_hz: f_start_hz,
            step_hz: (f_stop_hz - f_start_hz) / (n_freq - 1) as f64,
            len: n_freq,
        })
    }

    pub fn freq(&self, n: usize) -> f64 {
        self.start_hz + n as f64 * self.step_hz
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.len).map(|n| self.freq(n)).collect()
    }

    pub fn stop_hz(&self) -> f64 {
        self.freq(self.len - 1)
    }

    /// Delay spacing of the IDFT grid, `1 / (N * step)`.
    pub fn delay_bin_s(&self) -> f64 {
        1.0 / (self.len as f64 * self.step_hz)
    }

    /// Unambiguous delay range of the IDFT, `1 / step`.
    pub fn max_delay_s(&self) -> f64 {
        1.0 / self.step_hz
    }
}

/// Directional scanning sounder configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SounderConfig {
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub n_freq: usize,
    /// Centering frequency used for path-loss bookkeeping.
    pub f_c_hz: f64,
    pub rotation_step_deg: f64,
    pub antenna: AntennaPattern,
    pub tx_power_dbm: f64,
    /// Mean noise power per delay bin of the rectangular-window PDP, dB.
    pub noise_floor_db: f64,
    /// When false the CFR is noiseless; `noise_floor_db` still serves as the
    /// nominal detection floor.
    pub noise_enabled: bool,
    /// Diffuse backscatter is not generated within this angle of a wall's
    /// specular direction; that region is represented by the specular return.
    pub diffuse_exclusion_deg: f64,
    /// Facet length used to discretize walls for diffuse backscatter, m.
    pub facet_len_m: f64,
}

impl Default for SounderConfig {
    fn default() -> Self {
        Self {
            f_start_hz: 290e9,
            f_stop_hz: 310e9,
            n_freq: 2001,
            f_c_hz: 300e9,
            rotation_step_deg: 1.0,
            antenna: AntennaPattern::default(),
            tx_power_dbm: 10.0,
            noise_floor_db: -120.0,
            noise_enabled: true,
            diffuse_exclusion_deg: 3.0,
            facet_len_m: 0.02,
        }
    }
}

impl SounderConfig {
    pub fn validate(&self) -> Result<()> {
        FreqGrid::new(self.f_start_hz, self.f_stop_hz, self.n_freq)?;
        if !(self.f_c_hz > 0.0) || !self.f_c_hz.is_finite() {
            return Err(Error::invalid("f_c_hz must be positive"));
        }
        let step = self.rotation_step_deg;
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid("rotation_step_deg must be positive"));
        }
        let n = (360.0 / step).round();
        if n < 1.0 || (n * step - 360.0).abs() > 1e-9 {
            return Err(Error::invalid("rotation_step_deg must divide 360"));
        }
        if !self.noise_floor_db.is_finite() {
            return Err(Error::invalid("noise_floor_db must be finite"));
        }
        if !(self.diffuse_exclusion_deg >= 0.0) {
            return Err(Error::invalid("diffuse_exclusion_deg must be >= 0"));
        }
        if !(self.facet_len_m > 0.0) {
            return Err(Error::invalid("facet_len_m must be > 0"));
        }
        self.antenna.validate()
    }

    pub fn grid(&self) -> Result<FreqGrid> {
        FreqGrid::new(self.f_start_hz, self.f_stop_hz, self.n_freq)
    }

    pub fn n_angles(&self) -> usize {
        (360.0 / self.rotation_step_deg).round() as usize
    }

    pub fn angles_deg(&self) -> Vec<f64> {
        (0..self.n_angles())
            .map(|i| i as f64 * self.rotation_step_deg)
            .collect()
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.f_stop_hz - self.f_start_hz
    }

    /// Nominal delay resolution, `1 / B`.
    pub fn delay_resolution_s(&self) -> f64 {
        1.0 / self.bandwidth_hz()
    }

    /// Nominal space resolution of the round-trip path, `c / B`.
    pub fn space_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.bandwidth_hz()
    }

    /// One-way range resolution, `c / (2B)`.
    pub fn range_resolution_m(&self) -> f64 {
        0.5 * self.space_resolution_m()
    }

    /// Maximum detectable round-trip distance, `c / step`.
    pub fn max_distance_m(&self) -> f64 {
        SPEED_OF_LIGHT * (self.n_freq - 1) as f64 / self.bandwidth_hz()
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c_hz
    }
}
