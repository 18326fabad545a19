//! One DDPG learner per follower vehicle.
//!
//! Each agent owns an actor, a critic, their target networks, an Adam
//! optimizer per online network, a replay buffer and an Ornstein-Uhlenbeck
//! exploration process. Training follows the standard pattern: Bellman-target
//! critic regression, deterministic policy-gradient actor ascent through the
//! critic's action input, then a soft update of both targets.

mod agent;
mod noise;
mod replay;

pub use agent::{Agent, NetworkRole, StepGrads, TrainOutcome};
pub use noise::OuNoise;
pub use replay::{ReplayBuffer, Transition};

use serde::{Deserialize, Serialize};

use crate::net::{Activation, LayerSpec, NetworkSpec};
use crate::{Error, Result};

/// Observation arity: `[e_p, e_v, a, a_pred]`.
pub const OBS_DIM: usize = 4;
/// Action arity: the scalar control input.
pub const ACTION_DIM: usize = 1;

/// Learner hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Discount factor.
    #[serde(default = "AgentConfig::default_gamma")]
    pub gamma: f64,
    /// Soft-update coefficient for the target networks.
    #[serde(default = "AgentConfig::default_target_mix")]
    pub target_mix: f64,
    /// Replay-buffer capacity in transitions.
    #[serde(default = "AgentConfig::default_buffer_capacity")]
    pub buffer_capacity: usize,
    /// Ornstein-Uhlenbeck mean-reversion rate.
    #[serde(default = "AgentConfig::default_ou_theta")]
    pub ou_theta: f64,
    /// Ornstein-Uhlenbeck diffusion.
    #[serde(default = "AgentConfig::default_ou_sigma")]
    pub ou_sigma: f64,
}

impl AgentConfig {
    fn default_gamma() -> f64 {
        0.99
    }

    fn default_target_mix() -> f64 {
        0.001
    }

    fn default_buffer_capacity() -> usize {
        100_000
    }

    fn default_ou_theta() -> f64 {
        0.15
    }

    fn default_ou_sigma() -> f64 {
        0.02
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma must be in [0,1]: {}", self.gamma)));
        }
        if !(self.target_mix > 0.0 && self.target_mix <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target_mix must be in (0,1]: {}",
                self.target_mix
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "batch_size must be at least 2: {}",
                self.batch_size
            )));
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(Error::InvalidParameter("learning rates must be > 0".into()));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::InvalidParameter(
                "buffer capacity must hold at least one batch".into(),
            ));
        }
        if self.ou_theta < 0.0 || self.ou_sigma < 0.0 {
            return Err(Error::InvalidParameter("noise parameters must be >= 0".into()));
        }
        Ok(())
    }
}

/// Network architecture shared by every agent in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Actor hidden-layer widths.
    pub actor_hidden: Vec<usize>,
    /// Width of the critic's state input branch.
    pub critic_state_units: usize,
    /// Width of the critic's action input branch.
    pub critic_action_units: usize,
    /// Critic trunk hidden-layer widths after the concatenation.
    pub critic_hidden: Vec<usize>,
    #[serde(default = "NetworkConfig::default_bn_momentum")]
    pub bn_momentum: f64,
    #[serde(default = "NetworkConfig::default_bn_epsilon")]
    pub bn_epsilon: f64,
    #[serde(default = "NetworkConfig::default_adam_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "NetworkConfig::default_adam_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "NetworkConfig::default_adam_epsilon")]
    pub adam_epsilon: f64,
}

impl NetworkConfig {
    fn default_bn_momentum() -> f64 {
        0.99
    }

    fn default_bn_epsilon() -> f64 {
        1e-3
    }

    fn default_adam_beta1() -> f64 {
        0.9
    }

    fn default_adam_beta2() -> f64 {
        0.999
    }

    fn default_adam_epsilon() -> f64 {
        1e-7
    }

    /// Actor: hidden relu layers with batch norm, tanh output scaled to the
    /// control bound.
    pub fn actor_spec(&self, u_max: f64) -> Result<NetworkSpec> {
        if self.actor_hidden.is_empty() {
            return Err(Error::Config("actor needs at least one hidden layer".into()));
        }
        let mut layers = Vec::new();
        let mut fan_in = OBS_DIM;
        for &width in &self.actor_hidden {
            layers.push(LayerSpec::new(fan_in, width, Activation::Relu, true));
            fan_in = width;
        }
        layers.push(LayerSpec::new(fan_in, ACTION_DIM, Activation::Tanh, false));
        NetworkSpec::single(layers, u_max)?.with_bn(self.bn_momentum, self.bn_epsilon)
    }

    /// Critic: separate state and action branches (relu + batch norm)
    /// concatenated into a relu trunk with a linear scalar output.
    pub fn critic_spec(&self) -> Result<NetworkSpec> {
        if self.critic_hidden.is_empty() {
            return Err(Error::Config("critic needs at least one trunk layer".into()));
        }
        let state = vec![LayerSpec::new(OBS_DIM, self.critic_state_units, Activation::Relu, true)];
        let action =
            vec![LayerSpec::new(ACTION_DIM, self.critic_action_units, Activation::Relu, true)];
        let mut trunk = Vec::new();
        let mut fan_in = self.critic_state_units + self.critic_action_units;
        for &width in &self.critic_hidden {
            trunk.push(LayerSpec::new(fan_in, width, Activation::Relu, true));
            fan_in = width;
        }
        trunk.push(LayerSpec::new(fan_in, 1, Activation::Linear, false));
        NetworkSpec::dual(state, action, trunk, 1.0)?.with_bn(self.bn_momentum, self.bn_epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_network() -> NetworkConfig {
        NetworkConfig {
            actor_hidden: vec![256, 128],
            critic_state_units: 48,
            critic_action_units: 256,
            critic_hidden: vec![128],
            bn_momentum: 0.99,
            bn_epsilon: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-7,
        }
    }

    #[test]
    fn actor_architecture_shapes() {
        let spec = paper_network().actor_spec(2.5).unwrap();
        let dims: Vec<(usize, usize)> = spec.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect();
        assert_eq!(dims, vec![(4, 256), (256, 128), (128, 1)]);
        assert!(spec.layers[0].batch_norm && spec.layers[1].batch_norm);
        assert!(!spec.layers[2].batch_norm);
        assert_eq!(spec.layers[2].activation, Activation::Tanh);
        assert_eq!(spec.output_scale, 2.5);
    }

    #[test]
    fn critic_architecture_shapes() {
        let spec = paper_network().critic_spec().unwrap();
        let dims: Vec<(usize, usize)> = spec.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect();
        assert_eq!(dims, vec![(4, 48), (1, 256), (304, 128), (128, 1)]);
        assert_eq!(spec.layers[3].activation, Activation::Linear);
        assert_eq!(spec.output_scale, 1.0);
    }

    #[test]
    fn config_bounds_checked() {
        let mut cfg = AgentConfig {
            batch_size: 64,
            actor_lr: 5e-5,
            critic_lr: 5e-4,
            gamma: 0.99,
            target_mix: 0.001,
            buffer_capacity: 100_000,
            ou_theta: 0.15,
            ou_sigma: 0.02,
        };
        assert!(cfg.validate().is_ok());
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.99;
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
    }
}
