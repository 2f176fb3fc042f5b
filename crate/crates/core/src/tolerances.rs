//! Pass/fail tolerances shared by the acceptance suite and the CLI.

use serde::{Deserialize, Serialize};

/// Relative tolerance of the mirror-bin ratio against its closed form.
pub const R_REL: f64 = 0.02;
/// Relative tolerance of the two-pulse echo efficiency.
pub const ECHO_REL: f64 = 0.02;
/// Relative tolerance of the ASE occupation per mode.
pub const ASE_REL: f64 = 0.02;
/// Relative tolerance of the mean-field amplitude transmission.
pub const TRANSMISSION_REL: f64 = 0.01;
/// Largest admissible commutator residual of a composed map.
pub const SYMPLECTIC_MAX: f64 = 1e-8;
/// Relative max-norm distance between engine and ODE-oracle maps.
pub const ORACLE_REL: f64 = 1e-6;
/// Absolute tolerance of Wick fourth moments against brute force.
pub const WICK_ABS: f64 = 1e-10;
/// Relative tolerance of the propagated pi-pulse area.
pub const AREA_REL: f64 = 0.01;
/// Residual polarization must fall below `eps * IMPERFECT_PI_FRACTION`
/// within `IMPERFECT_PI_TIME / W` of the pulse.
pub const IMPERFECT_PI_FRACTION: f64 = 0.1;
pub const IMPERFECT_PI_TIME: f64 = 10.0;
/// Relative tolerance of per-pair R against the 1-D ratio.
pub const PAIR_R_REL: f64 = 0.01;
/// Allowed window for the classical-bound crossing of the closed form.
pub const CROSSING: f64 = 1.21;
pub const CROSSING_ABS: f64 = 0.01;

/// Tolerances as configured for a CLI run; defaults are the constants above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub r_rel: f64,
    pub echo_rel: f64,
    pub ase_rel: f64,
    pub transmission_rel: f64,
    pub symplectic_max: f64,
    pub oracle_rel: f64,
    pub area_rel: f64,
    pub imperfect_pi_fraction: f64,
    pub imperfect_pi_time: f64,
    pub pair_r_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            r_rel: R_REL,
            echo_rel: ECHO_REL,
            ase_rel: ASE_REL,
            transmission_rel: TRANSMISSION_REL,
            symplectic_max: SYMPLECTIC_MAX,
            oracle_rel: ORACLE_REL,
            area_rel: AREA_REL,
            imperfect_pi_fraction: IMPERFECT_PI_FRACTION,
            imperfect_pi_time: IMPERFECT_PI_TIME,
            pair_r_rel: PAIR_R_REL,
        }
    }
}
