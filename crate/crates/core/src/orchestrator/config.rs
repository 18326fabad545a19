use serde::{Deserialize, Serialize};

use crate::ddpg::{AgentConfig, NetworkConfig};
use crate::dynamics::{EpisodeSpec, LeaderInputModel, RewardCoeffs, VehicleParams};
use crate::fed::{AggregationKind, FrlSchedule, IntraGroupMode, Topology};
use crate::{Error, Result};

/// Replace the physical parameters of one vehicle. Vehicle index 0 is the
/// scripted leader; followers are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleOverride {
    pub platoon: usize,
    pub vehicle: usize,
    pub params: VehicleParams,
}

/// A fully declarative experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: Topology,
    /// Required unless the topology is `none`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationKind>,
    /// Required unless the topology is `none`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<FrlSchedule>,
    #[serde(default)]
    pub intra_group: IntraGroupMode,
    /// Number of platoons, each with the same follower count.
    pub platoons: usize,
    /// DDPG-controlled followers per platoon; the scripted leader is extra.
    pub followers: usize,
    /// Training episodes.
    pub episodes: usize,
    pub train_seed: u64,
    #[serde(default = "ExperimentConfig::default_eval_seed")]
    pub eval_seed: u64,
    pub episode: EpisodeSpec,
    /// Fleet-wide physical parameters.
    pub vehicle: VehicleParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vehicle_overrides: Vec<VehicleOverride>,
    pub reward: RewardCoeffs,
    #[serde(default)]
    pub leader: LeaderInputModel,
    pub agent: AgentConfig,
    pub network: NetworkConfig,
}

impl ExperimentConfig {
    fn default_eval_seed() -> u64 {
        6
    }

    pub fn validate(&self) -> Result<()> {
        if self.platoons == 0 {
            return Err(Error::Config("need at least one platoon".into()));
        }
        if self.followers == 0 {
            return Err(Error::Config("need at least one follower per platoon".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("need at least one training episode".into()));
        }
        match self.topology {
            Topology::None => {}
            Topology::Inter => {
                if self.platoons < 2 {
                    return Err(Error::Config("inter topology needs at least two platoons".into()));
                }
            }
            Topology::Intra => {
                if self.platoons != 1 {
                    return Err(Error::Config("intra topology operates on a single platoon".into()));
                }
            }
        }
        if self.topology != Topology::None {
            if self.aggregation.is_none() {
                return Err(Error::Config("federated topology needs an aggregation kind".into()));
            }
            let schedule = self
                .schedule
                .ok_or_else(|| Error::Config("federated topology needs a schedule".into()))?;
            crate::fed::ResolvedSchedule::new(schedule, self.episode.step_time, self.episodes)?;
        }
        self.episode.validate()?;
        self.vehicle.validate()?;
        for o in &self.vehicle_overrides {
            if o.platoon >= self.platoons || o.vehicle > self.followers {
                return Err(Error::Config(format!(
                    "override for ({}, {}) outside {} platoons x {} followers",
                    o.platoon, o.vehicle, self.platoons, self.followers
                )));
            }
            o.params.validate()?;
        }
        self.reward.validate()?;
        self.leader.validate()?;
        self.agent.validate()?;
        self.network.actor_spec(self.vehicle.u_max)?;
        self.network.critic_spec()?;
        Ok(())
    }

    /// Physical parameters of `vehicle` (0 = leader) in `platoon`.
    pub fn vehicle_params(&self, platoon: usize, vehicle: usize) -> VehicleParams {
        self.vehicle_overrides
            .iter()
            .find(|o| o.platoon == platoon && o.vehicle == vehicle)
            .map(|o| o.params)
            .unwrap_or(self.vehicle)
    }

    /// Follower parameters (0-based follower index) in `platoon`.
    pub fn follower_params(&self, platoon: usize, follower: usize) -> VehicleParams {
        self.vehicle_params(platoon, follower + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            topology: Topology::None,
            aggregation: None,
            schedule: None,
            intra_group: IntraGroupMode::default(),
            platoons: 1,
            followers: 2,
            episodes: 10,
            train_seed: 1,
            eval_seed: 6,
            episode: EpisodeSpec {
                steps: 600,
                step_time: 0.1,
                init_ep: 1.0,
                init_ev: 1.0,
                init_a: 0.03,
            },
            vehicle: VehicleParams { tau: 0.1, h: 1.0, u_max: 2.5, r: 2.0, length: 4.0 },
            vehicle_overrides: vec![],
            reward: RewardCoeffs {
                a: 0.4,
                b: 0.2,
                c: 0.2,
                d: 0.2,
                max_ep: 15.0,
                max_ev: 10.0,
                max_u: 2.5,
                max_a: 2.5,
            },
            leader: LeaderInputModel::default(),
            agent: AgentConfig {
                batch_size: 64,
                actor_lr: 5e-5,
                critic_lr: 5e-4,
                gamma: 0.99,
                target_mix: 0.001,
                buffer_capacity: 100_000,
                ou_theta: 0.15,
                ou_sigma: 0.02,
            },
            network: NetworkConfig {
                actor_hidden: vec![256, 128],
                critic_state_units: 48,
                critic_action_units: 256,
                critic_hidden: vec![128],
                bn_momentum: 0.99,
                bn_epsilon: 1e-3,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                adam_epsilon: 1e-7,
            },
        }
    }

    #[test]
    fn valid_config_passes() {
        assert!(base_config().validate().is_ok());
    }

    #[test]
    fn topology_constraints_enforced() {
        let mut cfg = base_config();
        cfg.topology = Topology::Inter;
        cfg.aggregation = Some(AggregationKind::Weights);
        cfg.schedule = Some(FrlSchedule { update_delay: 30.0, cutoff_ratio: 1.0 });
        assert!(cfg.validate().is_err(), "inter with one platoon");
        cfg.platoons = 2;
        assert!(cfg.validate().is_ok());

        cfg.topology = Topology::Intra;
        assert!(cfg.validate().is_err(), "intra with two platoons");
        cfg.platoons = 1;
        assert!(cfg.validate().is_ok());

        cfg.schedule = None;
        assert!(cfg.validate().is_err(), "federated topology without schedule");
    }

    #[test]
    fn overrides_looked_up_per_vehicle() {
        let mut cfg = base_config();
        let special = VehicleParams { tau: 0.2, h: 1.5, u_max: 2.5, r: 3.0, length: 5.0 };
        cfg.vehicle_overrides = vec![VehicleOverride { platoon: 0, vehicle: 2, params: special }];
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.follower_params(0, 1), special);
        assert_eq!(cfg.follower_params(0, 0), cfg.vehicle);
        cfg.vehicle_overrides[0].vehicle = 3;
        assert!(cfg.validate().is_err(), "override beyond follower count");
    }
}
