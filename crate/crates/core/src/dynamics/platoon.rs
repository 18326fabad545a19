//! Episode environment for one platoon.
//!
//! Holds the per-follower error states, advances them in lockstep and
//! computes per-vehicle rewards. Follower 0 reacts to the scripted leader;
//! follower `i > 0` reacts to the control input of follower `i - 1`.

use super::{
    build_discrete_matrices, reward, step_error_state, DiscreteMatrices, EpisodeSpec, ErrorState,
    RewardCoeffs, VehicleParams, DIVERGENCE_EP_LIMIT,
};
use crate::{Error, Result};

/// Outcome of advancing a platoon by one sample.
#[derive(Debug, Clone)]
pub struct PlatoonStep {
    /// Per-follower reward for the step just taken.
    pub rewards: Vec<f64>,
    /// Per-follower jerk at the step just taken, m/s³.
    pub jerks: Vec<f64>,
    /// Episode is over: step budget reached or the divergence guard tripped.
    pub terminal: bool,
    /// The divergence guard tripped on the new states.
    pub diverged: bool,
}

/// One platoon of DDPG-controlled followers behind a scripted leader.
#[derive(Debug, Clone)]
pub struct Platoon {
    followers: Vec<VehicleParams>,
    mats: Vec<DiscreteMatrices>,
    states: Vec<ErrorState>,
    a_prev: Vec<f64>,
    coeffs: RewardCoeffs,
    episode: EpisodeSpec,
    step_idx: usize,
    diverged: bool,
}

impl Platoon {
    /// Build a platoon. `followers[0]` trails the leader; each later follower
    /// trails the previous entry.
    pub fn new(
        leader: VehicleParams,
        followers: Vec<VehicleParams>,
        episode: EpisodeSpec,
        coeffs: RewardCoeffs,
    ) -> Result<Self> {
        if followers.is_empty() {
            return Err(Error::Config("a platoon needs at least one follower".into()));
        }
        leader.validate()?;
        episode.validate()?;
        coeffs.validate()?;
        let mut mats = Vec::with_capacity(followers.len());
        for (i, own) in followers.iter().enumerate() {
            own.validate()?;
            let pred = if i == 0 { &leader } else { &followers[i - 1] };
            mats.push(build_discrete_matrices(own, pred, episode.step_time)?);
        }
        let n = followers.len();
        let mut platoon = Self {
            followers,
            mats,
            states: vec![ErrorState::zero(); n],
            a_prev: vec![0.0; n],
            coeffs,
            episode,
            step_idx: 0,
            diverged: false,
        };
        platoon.reset();
        Ok(platoon)
    }

    /// Restore the episode start: initial error states, zero step count.
    pub fn reset(&mut self) {
        let init = self.episode.initial_state();
        for s in self.states.iter_mut() {
            *s = init;
        }
        // Jerk of the very first step is zero by convention.
        for a in self.a_prev.iter_mut() {
            *a = self.episode.init_a;
        }
        self.step_idx = 0;
        self.diverged = false;
    }

    pub fn follower_count(&self) -> usize {
        self.followers.len()
    }

    pub fn states(&self) -> &[ErrorState] {
        &self.states
    }

    pub fn step_index(&self) -> usize {
        self.step_idx
    }

    pub fn episode_spec(&self) -> &EpisodeSpec {
        &self.episode
    }

    pub fn follower_params(&self, i: usize) -> &VehicleParams {
        &self.followers[i]
    }

    /// Advance every follower by one sample.
    ///
    /// `actions[i]` is follower `i`'s control input, already clipped by the
    /// caller; `leader_u` is the scripted leader's input. Rewards are computed
    /// on the pre-step states.
    pub fn step(&mut self, actions: &[f64], leader_u: f64) -> Result<PlatoonStep> {
        if actions.len() != self.followers.len() {
            return Err(Error::Config(format!(
                "expected {} actions, got {}",
                self.followers.len(),
                actions.len()
            )));
        }

        let t = self.episode.step_time;
        let mut rewards = Vec::with_capacity(actions.len());
        let mut jerks = Vec::with_capacity(actions.len());
        for (i, (&u, state)) in actions.iter().zip(self.states.iter()).enumerate() {
            rewards.push(reward(state, u, self.a_prev[i], &self.coeffs, t)?);
            jerks.push((state.a - self.a_prev[i]) / t);
        }
        for (i, state) in self.states.iter().enumerate() {
            self.a_prev[i] = state.a;
        }

        let mut next = Vec::with_capacity(actions.len());
        for (i, &u) in actions.iter().enumerate() {
            let u_pred = if i == 0 { leader_u } else { actions[i - 1] };
            next.push(step_error_state(&self.mats[i], &self.states[i], u, u_pred)?);
        }
        self.states = next;
        self.step_idx += 1;

        let diverged = self
            .states
            .iter()
            .any(|s| !s.is_finite() || s.e_p.abs() > DIVERGENCE_EP_LIMIT);
        self.diverged = self.diverged || diverged;
        let terminal = diverged || self.step_idx >= self.episode.steps;
        Ok(PlatoonStep { rewards, jerks, terminal, diverged })
    }
}
