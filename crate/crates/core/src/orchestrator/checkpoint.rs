//! Checkpoint directory layout: one tensor file per network per vehicle.
//! Online networks carry their optimizer state in the same file.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::ddpg::{Agent, NetworkRole};
use crate::net::tensor_io::{read_tensors, write_tensors};
use crate::orchestrator::{build_agents, ExperimentConfig};
use crate::{Error, Result};

/// File name of one network checkpoint; platoon and vehicle are 1-based in
/// file names.
pub fn checkpoint_file(platoon: usize, follower: usize, role: NetworkRole) -> String {
    format!("p{}_v{}_{}.tensors", platoon + 1, follower + 1, role.stem())
}

/// Write every agent's four networks under `dir`.
pub fn save_checkpoints(dir: &Path, agents: &[Vec<Agent>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (p, row) in agents.iter().enumerate() {
        for (v, agent) in row.iter().enumerate() {
            for role in NetworkRole::ALL {
                let path = dir.join(checkpoint_file(p, v, role));
                let mut file = BufWriter::new(File::create(path)?);
                write_tensors(&mut file, &agent.checkpoint_tensors(role))?;
            }
        }
    }
    Ok(())
}

/// Rebuild the agent grid of `config` and restore every network from `dir`.
pub fn load_checkpoints(dir: &Path, config: &ExperimentConfig) -> Result<Vec<Vec<Agent>>> {
    let mut agents = build_agents(config)?;
    for (p, row) in agents.iter_mut().enumerate() {
        for (v, agent) in row.iter_mut().enumerate() {
            for role in NetworkRole::ALL {
                let path = dir.join(checkpoint_file(p, v, role));
                let mut file = BufReader::new(File::open(&path).map_err(|e| {
                    Error::Checkpoint(format!("cannot open {}: {e}", path.display()))
                })?);
                let tensors = read_tensors(&mut file)?;
                agent.restore_tensors(role, &tensors)?;
            }
        }
    }
    Ok(agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::{AgentConfig, NetworkConfig};
    use crate::dynamics::{EpisodeSpec, LeaderInputModel, RewardCoeffs, VehicleParams};
    use crate::fed::{IntraGroupMode, Topology};

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            topology: Topology::None,
            aggregation: None,
            schedule: None,
            intra_group: IntraGroupMode::default(),
            platoons: 1,
            followers: 2,
            episodes: 1,
            train_seed: 1,
            eval_seed: 6,
            episode: EpisodeSpec {
                steps: 20,
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
                batch_size: 4,
                actor_lr: 1e-3,
                critic_lr: 1e-3,
                gamma: 0.99,
                target_mix: 0.01,
                buffer_capacity: 1000,
                ou_theta: 0.15,
                ou_sigma: 0.02,
            },
            network: NetworkConfig {
                actor_hidden: vec![8, 6],
                critic_state_units: 6,
                critic_action_units: 8,
                critic_hidden: vec![6],
                bn_momentum: 0.99,
                bn_epsilon: 1e-3,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                adam_epsilon: 1e-7,
            },
        }
    }

    #[test]
    fn save_load_round_trip_preserves_networks() {
        let config = tiny_config();
        let output = crate::orchestrator::run_training(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoints(dir.path(), &output.agents).unwrap();
        let loaded = load_checkpoints(dir.path(), &config).unwrap();
        for (orig_row, load_row) in output.agents.iter().zip(&loaded) {
            for (orig, load) in orig_row.iter().zip(load_row) {
                assert_eq!(orig.network_flats(), load.network_flats());
            }
        }
        // Evaluation of loaded agents matches the originals exactly.
        let a = crate::orchestrator::evaluate(&output.agents, &config, 6).unwrap();
        let b = crate::orchestrator::evaluate(&loaded, &config, 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let config = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_checkpoints(dir.path(), &config),
            Err(Error::Checkpoint(_))
        ));
    }
}
