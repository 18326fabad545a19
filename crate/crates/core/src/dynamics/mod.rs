//! Discrete-time CACC platoon dynamics.
//!
//! Follower vehicles track their predecessor under a constant time-headway
//! policy. The controlled state per vehicle is the error vector
//! `[e_p, e_v, a, a_pred]` (position error, velocity error, own acceleration,
//! predecessor acceleration), advanced by a forward-Euler discretization of
//! the linear continuous model. An absolute-kinematics model of the same
//! vehicles lives in [`absolute`] and serves as an independent reference for
//! equivalence testing.

mod absolute;
mod leader;
mod platoon;

pub use absolute::{absolute_to_error, step_absolute, AbsoluteState};
pub use leader::{LeaderGen, LeaderInputModel};
pub use platoon::{Platoon, PlatoonStep};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Position error beyond which an episode is cut short as diverged.
pub const DIVERGENCE_EP_LIMIT: f64 = 50.0;

/// Physical constants of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Drivetrain time constant, seconds.
    pub tau: f64,
    /// Time gap kept behind the predecessor, seconds.
    pub h: f64,
    /// Maximum absolute control input, m/s².
    pub u_max: f64,
    /// Standstill distance, meters.
    #[serde(default = "VehicleParams::default_r")]
    pub r: f64,
    /// Vehicle length, meters.
    #[serde(default = "VehicleParams::default_length")]
    pub length: f64,
}

impl VehicleParams {
    fn default_r() -> f64 {
        2.0
    }

    fn default_length() -> f64 {
        4.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.h > 0.0) {
            return Err(Error::InvalidParameter(format!("h must be > 0, got {}", self.h)));
        }
        if !(self.u_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "u_max must be > 0, got {}",
                self.u_max
            )));
        }
        if self.r < 0.0 || self.length < 0.0 {
            return Err(Error::InvalidParameter(
                "standstill distance and length must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Forward-Euler discretization of one follower's error dynamics.
///
/// `a_d` couples the error state to itself, `b_d` to the own control input and
/// `c_d` to the predecessor's control input.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMatrices {
    pub a_d: [[f64; 4]; 4],
    pub b_d: [f64; 4],
    pub c_d: [f64; 4],
    /// Sample time, seconds.
    pub step: f64,
}

/// Error-space observation of one follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorState {
    /// Position error against the desired headway, meters.
    pub e_p: f64,
    /// Velocity error against the predecessor, m/s.
    pub e_v: f64,
    /// Own acceleration, m/s².
    pub a: f64,
    /// Predecessor acceleration, m/s².
    pub a_pred: f64,
}

impl ErrorState {
    pub fn new(e_p: f64, e_v: f64, a: f64, a_pred: f64) -> Self {
        Self { e_p, e_v, a, a_pred }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.e_p, self.e_v, self.a, self.a_pred]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Weights and normalizers of the per-step cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Position-error normalizer, meters.
    #[serde(default = "RewardCoeffs::default_max_ep")]
    pub max_ep: f64,
    /// Velocity-error normalizer, m/s.
    #[serde(default = "RewardCoeffs::default_max_ev")]
    pub max_ev: f64,
    /// Control-input normalizer, m/s².
    #[serde(default = "RewardCoeffs::default_max_u")]
    pub max_u: f64,
    /// Acceleration normalizer for the jerk term, m/s².
    #[serde(default = "RewardCoeffs::default_max_a")]
    pub max_a: f64,
}

impl RewardCoeffs {
    fn default_max_ep() -> f64 {
        15.0
    }

    fn default_max_ev() -> f64 {
        10.0
    }

    fn default_max_u() -> f64 {
        2.5
    }

    fn default_max_a() -> f64 {
        2.5
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if w < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "reward weight {name} must be non-negative, got {w}"
                )));
            }
        }
        for (name, n) in [
            ("max_ep", self.max_ep),
            ("max_ev", self.max_ev),
            ("max_u", self.max_u),
            ("max_a", self.max_a),
        ] {
            if !(n > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "reward normalizer {name} must be > 0, got {n}"
                )));
            }
        }
        Ok(())
    }
}

/// Episode length and initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSpec {
    /// Steps per episode.
    pub steps: usize,
    /// Sample time, seconds.
    pub step_time: f64,
    /// Initial position error, meters.
    pub init_ep: f64,
    /// Initial velocity error, m/s.
    pub init_ev: f64,
    /// Initial acceleration (all vehicles, leader included), m/s².
    pub init_a: f64,
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::InvalidParameter("episode needs at least one step".into()));
        }
        if !(self.step_time > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step_time must be > 0, got {}",
                self.step_time
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> ErrorState {
        ErrorState::new(self.init_ep, self.init_ev, self.init_a, self.init_a)
    }
}

/// Build the forward-Euler matrices for one follower.
///
/// `own` is the controlled vehicle, `pred` its predecessor (the vehicle whose
/// control input enters through `c_d`).
pub fn build_discrete_matrices(
    own: &VehicleParams,
    pred: &VehicleParams,
    step: f64,
) -> Result<DiscreteMatrices> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    if !(own.tau > 0.0) || !(pred.tau > 0.0) {
        return Err(Error::InvalidParameter(
            "drivetrain time constants must be > 0".into(),
        ));
    }
    let t = step;
    let a_d = [
        [1.0, t, -t * own.h, 0.0],
        [0.0, 1.0, -t, t],
        [0.0, 0.0, 1.0 - t / own.tau, 0.0],
        [0.0, 0.0, 0.0, 1.0 - t / pred.tau],
    ];
    let b_d = [0.0, 0.0, t / own.tau, 0.0];
    let c_d = [0.0, 0.0, 0.0, t / pred.tau];
    Ok(DiscreteMatrices { a_d, b_d, c_d, step })
}

/// Advance one follower's error state by one sample.
///
/// Pure function: `x' = A_d x + B_d u + C_d u_pred`.
pub fn step_error_state(
    m: &DiscreteMatrices,
    x: &ErrorState,
    u: f64,
    u_pred: f64,
) -> Result<ErrorState> {
    if !x.is_finite() || !u.is_finite() || !u_pred.is_finite() {
        return Err(Error::NumericDomain("state and inputs must be finite".into()));
    }
    let xv = x.to_array();
    let mut next = [0.0; 4];
    for (i, row) in m.a_d.iter().enumerate() {
        let mut acc = 0.0;
        for (j, &a_ij) in row.iter().enumerate() {
            acc += a_ij * xv[j];
        }
        next[i] = acc + m.b_d[i] * u + m.c_d[i] * u_pred;
    }
    Ok(ErrorState::from_array(next))
}

/// Per-step cost of one vehicle: the weighted, normalized magnitudes of
/// position error, velocity error, control effort and jerk. Always ≤ 0.
///
/// Jerk is the backward difference `(x.a - a_prev) / step`.
pub fn reward(
    x: &ErrorState,
    u: f64,
    a_prev: f64,
    coeffs: &RewardCoeffs,
    step: f64,
) -> Result<f64> {
    coeffs.validate()?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    let jerk = (x.a - a_prev) / step;
    Ok(-(coeffs.a * x.e_p.abs() / coeffs.max_ep
        + coeffs.b * x.e_v.abs() / coeffs.max_ev
        + coeffs.c * u.abs() / coeffs.max_u
        + coeffs.d * jerk.abs() / (2.0 * coeffs.max_a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(tau: f64, h: f64) -> VehicleParams {
        VehicleParams { tau, h, u_max: 2.5, r: 2.0, length: 4.0 }
    }

    fn paper_coeffs() -> RewardCoeffs {
        RewardCoeffs {
            a: 0.4,
            b: 0.2,
            c: 0.2,
            d: 0.2,
            max_ep: 15.0,
            max_ev: 10.0,
            max_u: 2.5,
            max_a: 2.5,
        }
    }

    #[test]
    fn discrete_matrices_match_symbolic_substitution() {
        let p = params(0.1, 1.0);
        let m = build_discrete_matrices(&p, &p, 0.1).unwrap();
        assert_eq!(m.a_d[2][2], 0.0);
        assert_eq!(m.b_d[2], 1.0);
        assert_eq!(m.a_d[0], [1.0, 0.1, -0.1, 0.0]);

        let own = params(0.2, 1.0);
        let pred = params(0.4, 1.0);
        let m = build_discrete_matrices(&own, &pred, 0.1).unwrap();
        assert!((m.a_d[2][2] - 0.5).abs() < 1e-15);
        assert!((m.a_d[3][3] - 0.75).abs() < 1e-15);
        assert!((m.c_d[3] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn discrete_matrices_equal_euler_of_continuous_model() {
        // a_d == I + T*A, b_d == T*B, c_d == T*C for the continuous-time
        // matrices of the error dynamics, checked elementwise over a grid.
        for &tau in &[0.05, 0.1, 0.3, 1.0] {
            for &tau_pred in &[0.05, 0.2, 0.8] {
                for &h in &[0.5, 1.0, 2.0] {
                    for &t in &[0.01, 0.1, 0.5] {
                        let own = params(tau, h);
                        let pred = params(tau_pred, h);
                        let m = build_discrete_matrices(&own, &pred, t).unwrap();

                        let a_cont = [
                            [0.0, 1.0, -h, 0.0],
                            [0.0, 0.0, -1.0, 1.0],
                            [0.0, 0.0, -1.0 / tau, 0.0],
                            [0.0, 0.0, 0.0, -1.0 / tau_pred],
                        ];
                        let b_cont = [0.0, 0.0, 1.0 / tau, 0.0];
                        let c_cont = [0.0, 0.0, 0.0, 1.0 / tau_pred];
                        for i in 0..4 {
                            for j in 0..4 {
                                let expect =
                                    if i == j { 1.0 + t * a_cont[i][j] } else { t * a_cont[i][j] };
                                assert_eq!(m.a_d[i][j], expect, "a_d[{i}][{j}]");
                            }
                            assert_eq!(m.b_d[i], t * b_cont[i]);
                            assert_eq!(m.c_d[i], t * c_cont[i]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_step_rejected() {
        let p = params(0.1, 1.0);
        assert!(build_discrete_matrices(&p, &p, 0.0).is_err());
        assert!(build_discrete_matrices(&p, &p, -0.1).is_err());
    }

    #[test]
    fn step_zero_state_is_fixed_point() {
        let p = params(0.1, 1.0);
        let m = build_discrete_matrices(&p, &p, 0.1).unwrap();
        let next = step_error_state(&m, &ErrorState::zero(), 0.0, 0.0).unwrap();
        assert_eq!(next, ErrorState::zero());
    }

    #[test]
    fn step_matches_matrix_vector_oracle() {
        let p = params(0.1, 1.0);
        let m = build_discrete_matrices(&p, &p, 0.1).unwrap();
        let x = ErrorState::new(1.0, 1.0, 0.03, 0.0);
        let next = step_error_state(&m, &x, 0.0, 0.0).unwrap();
        assert!((next.e_p - 1.097).abs() < 1e-12);
        assert!((next.e_v - 0.997).abs() < 1e-12);
        assert!(next.a.abs() < 1e-12);
        assert!(next.a_pred.abs() < 1e-12);

        let next = step_error_state(&m, &ErrorState::zero(), 2.5, 0.0).unwrap();
        assert_eq!(next.to_array(), [0.0, 0.0, 2.5, 0.0]);
    }

    #[test]
    fn step_is_superposition() {
        let own = params(0.2, 1.5);
        let pred = params(0.35, 1.5);
        let m = build_discrete_matrices(&own, &pred, 0.1).unwrap();
        let x1 = ErrorState::new(1.0, -2.0, 0.5, 0.25);
        let x2 = ErrorState::new(-0.3, 0.7, -1.1, 0.9);
        let (u1, u2) = (0.8, -0.4);
        let (w1, w2) = (-1.2, 0.6);

        let sum_state = ErrorState::new(
            x1.e_p + x2.e_p,
            x1.e_v + x2.e_v,
            x1.a + x2.a,
            x1.a_pred + x2.a_pred,
        );
        let combined = step_error_state(&m, &sum_state, u1 + u2, w1 + w2).unwrap();
        let s1 = step_error_state(&m, &x1, u1, w1).unwrap();
        let s2 = step_error_state(&m, &x2, u2, w2).unwrap();
        for i in 0..4 {
            assert!((combined.to_array()[i] - (s1.to_array()[i] + s2.to_array()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_state_rejected() {
        let p = params(0.1, 1.0);
        let m = build_discrete_matrices(&p, &p, 0.1).unwrap();
        let x = ErrorState::new(f64::NAN, 0.0, 0.0, 0.0);
        assert!(step_error_state(&m, &x, 0.0, 0.0).is_err());
        assert!(step_error_state(&m, &ErrorState::zero(), f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn reward_zero_at_perfect_tracking() {
        let r = reward(&ErrorState::zero(), 0.0, 0.0, &paper_coeffs(), 0.1).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn reward_matches_direct_evaluation() {
        let c = paper_coeffs();
        // Only the position-error term active, at its normalizer.
        let x = ErrorState::new(c.max_ep, 0.0, 0.0, 0.0);
        let r = reward(&x, 0.0, 0.0, &c, 0.1).unwrap();
        assert!((r - (-0.4)).abs() < 1e-15);

        // Every term saturated at its normalizer.
        let x = ErrorState::new(-c.max_ep, c.max_ev, 2.0 * c.max_a * 0.1, 0.0);
        let r = reward(&x, 0.0, c.max_u, &c, 0.1).unwrap();
        assert!((r - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn reward_bounded_within_normalizers() {
        let c = paper_coeffs();
        let lo = -(c.a + c.b + c.c + c.d);
        for i in 0..200 {
            let f = i as f64 / 199.0;
            let x = ErrorState::new(
                (2.0 * f - 1.0) * c.max_ep,
                (1.0 - 2.0 * f) * c.max_ev,
                f * 0.2,
                0.0,
            );
            let a_prev = f * 0.2 - (2.0 * f - 1.0) * 2.0 * c.max_a * 0.1;
            let r = reward(&x, (2.0 * f - 1.0) * c.max_u, a_prev, &c, 0.1).unwrap();
            assert!(r <= 0.0 && r >= lo, "reward {r} outside [{lo}, 0]");
        }
    }

    #[test]
    fn reward_zero_normalizer_rejected() {
        let mut c = paper_coeffs();
        c.max_u = 0.0;
        assert!(reward(&ErrorState::zero(), 0.0, 0.0, &c, 0.1).is_err());
    }
}
