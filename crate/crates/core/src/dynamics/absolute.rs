//! Absolute-kinematics model of the same vehicles.
//!
//! Used as an independent reference: simulating positions and velocities
//! directly, then projecting into error coordinates, must reproduce the
//! error-state trajectories.

use super::VehicleParams;

/// Kinematic state of one vehicle in road coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsoluteState {
    /// Front-bumper position, meters.
    pub p: f64,
    /// Velocity, m/s.
    pub v: f64,
    /// Acceleration, m/s².
    pub a: f64,
}

impl AbsoluteState {
    pub fn new(p: f64, v: f64, a: f64) -> Self {
        Self { p, v, a }
    }
}

/// Project an ego/predecessor pair into (position error, velocity error).
///
/// The headway is measured front bumper to rear bumper; the desired headway is
/// the ego's standstill distance plus its time gap times its own velocity.
pub fn absolute_to_error(
    ego: &AbsoluteState,
    pred: &AbsoluteState,
    pred_length: f64,
    params: &VehicleParams,
) -> (f64, f64) {
    let d = pred.p - ego.p - pred_length;
    let d_r = params.r + params.h * ego.v;
    (d - d_r, pred.v - ego.v)
}

/// Advance one vehicle by one forward-Euler sample.
pub fn step_absolute(s: &AbsoluteState, u: f64, params: &VehicleParams, step: f64) -> AbsoluteState {
    AbsoluteState {
        p: s.p + step * s.v,
        v: s.v + step * s.a,
        a: s.a + step * (-s.a / params.tau + u / params.tau),
    }
}
