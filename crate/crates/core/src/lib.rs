//! Terahertz monostatic-sensing channel toolkit.
//!
//! A geometric forward simulator produces directional channel frequency
//! responses (CFRs) of 2D indoor scenes as seen by a rotating, co-located
//! Tx/Rx pair. The inverse pipeline recovers the scene from those CFRs:
//!
//! 1. [`padp`]: IDFT of each rotation angle into power-delay profiles.
//! 2. [`sage`]: per-angle multipath extraction (element-wise SAGE).
//! 3. [`tracking`]: MCD-based trajectory tracking across rotation angles and
//!    antenna-pattern de-embedding by max-power selection.
//! 4. [`hybrid`]: specular / diffuse classification, diffuse power-law fit and
//!    hybrid CIR synthesis.
//! 5. [`analytics`]: environment reconstruction, distance errors, reflection
//!    loss, delay and angular spreads.
//!
//! Every stage can be run against the simulator's ground truth, which makes
//! the whole chain testable in closed loop.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod analytics;
pub mod config;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod hybrid;
pub mod io;
pub mod padp;
pub mod sage;
pub mod scene;
pub mod synth;
pub mod tracking;
pub mod trace;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;

pub(crate) fn db10(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub(crate) fn from_db10(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap_deg(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Normalizes an angle in degrees to [0, 360).
pub fn norm_deg(angle: f64) -> f64 {
    let a = angle.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}
