//! Scripted platoon leader.
//!
//! The leader is not a learner: it emits a clipped Gaussian control input,
//! resampled every step, as persistent excitation for the followers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Distribution of the leader's control input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderInputModel {
    /// Gaussian standard deviation, m/s².
    #[serde(default = "LeaderInputModel::default_std")]
    pub std: f64,
    /// Gaussian mean, m/s².
    #[serde(default)]
    pub mean: f64,
    /// Symmetric clipping bound, m/s².
    #[serde(default = "LeaderInputModel::default_clip")]
    pub clip: f64,
}

impl Default for LeaderInputModel {
    fn default() -> Self {
        Self { std: Self::default_std(), mean: 0.0, clip: Self::default_clip() }
    }
}

impl LeaderInputModel {
    fn default_std() -> f64 {
        0.1
    }

    fn default_clip() -> f64 {
        2.5
    }

    pub fn validate(&self) -> Result<()> {
        if self.std < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "leader std must be >= 0, got {}",
                self.std
            )));
        }
        if !(self.clip > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "leader clip must be > 0, got {}",
                self.clip
            )));
        }
        Ok(())
    }
}

/// Seeded generator of leader control inputs.
#[derive(Debug, Clone)]
pub struct LeaderGen {
    model: LeaderInputModel,
    rng: ChaCha8Rng,
}

impl LeaderGen {
    pub fn new(model: LeaderInputModel, rng: ChaCha8Rng) -> Self {
        Self { model, rng }
    }

    /// Draw the next control input, clipped to the model's bound.
    pub fn next_input(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        (self.model.mean + self.model.std * z).clamp(-self.model.clip, self.model.clip)
    }
}
