//! End-to-end training and evaluation.
//!
//! Training follows a per-step cycle: every agent picks an exploratory
//! action, the platoons advance in lockstep, transitions are stored, and then
//! each agent either trains locally or takes part in a scheduled federated
//! update — never both in the same step. Evaluation replays a single
//! fixed-seed episode with exploration disabled.

mod checkpoint;
mod config;
mod logs;

pub use checkpoint::{checkpoint_file, load_checkpoints, save_checkpoints};
pub use config::{ExperimentConfig, VehicleOverride};
pub use logs::{
    aggregate_seeds, moving_average, EpisodeRecord, EvalReport, SeedSummary, TrainingLog,
    TrajPoint, VehicleEval, VehicleReward,
};

use std::time::Instant;

use rayon::prelude::*;

use crate::ddpg::{Agent, StepGrads, Transition};
use crate::dynamics::{LeaderGen, Platoon};
use crate::fed::{should_aggregate, AggregationKind, FedServer, ResolvedSchedule, Topology};
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Everything a finished training run produces.
pub struct TrainingOutput {
    pub log: TrainingLog,
    pub agents: Vec<Vec<Agent>>,
}

/// Build the fresh agents of an experiment, indexed `[platoon][follower]`.
///
/// Streams are derived per (seed, platoon, vehicle, purpose) with the leader
/// as vehicle 0, so fleet-size changes never shift unrelated draws.
pub fn build_agents(config: &ExperimentConfig) -> Result<Vec<Vec<Agent>>> {
    config.validate()?;
    let mut agents = Vec::with_capacity(config.platoons);
    for p in 0..config.platoons {
        let mut row = Vec::with_capacity(config.followers);
        for f in 0..config.followers {
            let vehicle_id = (f + 1) as u32;
            let params = config.follower_params(p, f);
            row.push(Agent::new(
                config.agent,
                &config.network,
                params.u_max,
                stream(config.train_seed, p as u32, vehicle_id, Purpose::Init),
                stream(config.train_seed, p as u32, vehicle_id, Purpose::Replay),
                stream(config.train_seed, p as u32, vehicle_id, Purpose::Noise),
            )?);
        }
        agents.push(row);
    }
    Ok(agents)
}

fn build_platoons(config: &ExperimentConfig) -> Result<Vec<Platoon>> {
    (0..config.platoons)
        .map(|p| {
            let followers =
                (0..config.followers).map(|f| config.follower_params(p, f)).collect();
            Platoon::new(config.vehicle_params(p, 0), followers, config.episode, config.reward)
        })
        .collect()
}

/// Run the full training protocol.
pub fn run_training(config: &ExperimentConfig) -> Result<TrainingOutput> {
    run_training_inner(config, true)
}

/// Training with the federated machinery entirely disconnected: no server is
/// built and no schedule is consulted. The reference for degenerate-topology
/// equivalence checks.
pub fn run_training_local_only(config: &ExperimentConfig) -> Result<TrainingOutput> {
    run_training_inner(config, false)
}

fn run_training_inner(config: &ExperimentConfig, use_fed: bool) -> Result<TrainingOutput> {
    config.validate()?;
    let mut agents = build_agents(config)?;
    let mut platoons = build_platoons(config)?;
    let mut leaders: Vec<LeaderGen> = (0..config.platoons)
        .map(|p| {
            LeaderGen::new(config.leader, stream(config.train_seed, p as u32, 0, Purpose::Leader))
        })
        .collect();

    let fed: Option<(FedServer, ResolvedSchedule)> = match (use_fed, config.schedule) {
        (true, Some(schedule)) => {
            let kind = config.aggregation.unwrap_or(AggregationKind::Weights);
            let server = FedServer::new(
                config.topology,
                kind,
                config.intra_group,
                config.platoons,
                config.followers,
            )?;
            let resolved =
                ResolvedSchedule::new(schedule, config.episode.step_time, config.episodes)?;
            Some((server, resolved))
        }
        _ => {
            if use_fed && config.topology != Topology::None {
                return Err(Error::Config("federated topology needs a schedule".into()));
            }
            None
        }
    };

    let mut log = TrainingLog::default();
    for episode in 0..config.episodes {
        let started = Instant::now();
        for platoon in platoons.iter_mut() {
            platoon.reset();
        }
        for agent in agents.iter_mut().flatten() {
            agent.reset_noise();
        }

        let frl_active = fed
            .as_ref()
            .map(|(_, s)| episode < s.active_episodes())
            .unwrap_or(false);
        let mut cumulative = vec![vec![0.0f64; config.followers]; config.platoons];
        let mut diverged_platoons: Vec<usize> = Vec::new();
        let mut steps_taken = 0usize;

        for k in 0..config.episode.steps {
            let mut episode_over = false;
            for (p, platoon) in platoons.iter_mut().enumerate() {
                let states = platoon.states().to_vec();
                let mut actions = Vec::with_capacity(config.followers);
                for (agent, state) in agents[p].iter_mut().zip(&states) {
                    actions.push(agent.select_action(state, true)?);
                }
                let leader_u = leaders[p].next_input();
                let outcome = platoon.step(&actions, leader_u)?;
                for v in 0..config.followers {
                    cumulative[p][v] += outcome.rewards[v];
                    agents[p][v].observe(Transition {
                        state: states[v],
                        next_state: platoon.states()[v],
                        action: actions[v],
                        reward: outcome.rewards[v],
                        terminal: outcome.diverged,
                    })?;
                }
                if outcome.diverged {
                    diverged_platoons.push(p);
                }
                episode_over |= outcome.terminal;
            }

            let fires = fed
                .as_ref()
                .map(|(_, schedule)| should_aggregate(schedule, episode, k))
                .unwrap_or(false);
            match (fires, fed.as_ref()) {
                (false, _) | (true, None) => {
                    train_locally(&mut agents, &[])?;
                }
                (true, Some((server, _))) => match server.kind() {
                    AggregationKind::Weights => {
                        let recipients = server.recipients();
                        train_locally(&mut agents, &recipients)?;
                        if server.apply_weights(&mut agents)? > 0 {
                            log.fed_updates += 1;
                        }
                    }
                    AggregationKind::Gradients => {
                        let recipients = server.recipients();
                        let grads = compute_all_grads(&mut agents)?;
                        apply_own_grads(&mut agents, &grads, &recipients)?;
                        if server.apply_gradients(&mut agents, &grads)? > 0 {
                            log.fed_updates += 1;
                        }
                    }
                },
            }

            steps_taken = k + 1;
            if episode_over {
                break;
            }
        }

        let mut rewards = Vec::with_capacity(config.platoons * config.followers);
        for (p, row) in cumulative.iter().enumerate() {
            for (v, &c) in row.iter().enumerate() {
                rewards.push(VehicleReward { platoon: p, vehicle: v + 1, cumulative: c });
            }
        }
        log.episodes.push(EpisodeRecord {
            episode,
            frl_active,
            steps_taken,
            rewards,
            diverged_platoons,
            wall_clock_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainingOutput { log, agents })
}

/// Local training step for every agent not in `skip`, in parallel. Each agent
/// owns its random streams, so the result is independent of scheduling.
fn train_locally(agents: &mut [Vec<Agent>], skip: &[(usize, usize)]) -> Result<()> {
    with_agents_parallel(agents, |p, v, agent| {
        if skip.contains(&(p, v)) {
            return Ok(());
        }
        agent.train_step().map(|_| ())
    })
    .map(|_| ())
}

/// Fresh gradients from every agent, in parallel, without applying them.
fn compute_all_grads(agents: &mut [Vec<Agent>]) -> Result<Vec<Vec<Option<StepGrads>>>> {
    let results = with_agents_parallel(agents, |_, _, agent| agent.compute_grads())?;
    Ok(results)
}

/// Apply each non-recipient's own gradients locally (with target updates).
fn apply_own_grads(
    agents: &mut [Vec<Agent>],
    grads: &[Vec<Option<StepGrads>>],
    recipients: &[(usize, usize)],
) -> Result<()> {
    with_agents_parallel(agents, |p, v, agent| {
        if recipients.contains(&(p, v)) {
            return Ok(());
        }
        match &grads[p][v] {
            Some(g) => agent.apply_own(g),
            None => Ok(()),
        }
    })
    .map(|_| ())
}

fn with_agents_parallel<R, F>(agents: &mut [Vec<Agent>], f: F) -> Result<Vec<Vec<R>>>
where
    R: Send,
    F: Fn(usize, usize, &mut Agent) -> Result<R> + Sync,
{
    let cols = agents.first().map(|row| row.len()).unwrap_or(0);
    let mut refs: Vec<(usize, usize, &mut Agent)> = Vec::new();
    for (p, row) in agents.iter_mut().enumerate() {
        for (v, agent) in row.iter_mut().enumerate() {
            refs.push((p, v, agent));
        }
    }
    let mut flat: Vec<(usize, usize, R)> = refs
        .into_par_iter()
        .map(|(p, v, agent)| f(p, v, agent).map(|r| (p, v, r)))
        .collect::<Result<_>>()?;
    flat.sort_by_key(|&(p, v, _)| (p, v));
    let mut out: Vec<Vec<R>> = Vec::new();
    for (p, v, r) in flat {
        if out.len() <= p {
            out.push(Vec::with_capacity(cols));
        }
        debug_assert_eq!(out[p].len(), v);
        out[p].push(r);
    }
    Ok(out)
}

/// Replay one fixed-seed episode with exploration disabled and eval-mode
/// forwards. The episode always runs its full step budget.
pub fn evaluate(
    agents: &[Vec<Agent>],
    config: &ExperimentConfig,
    eval_seed: u64,
) -> Result<EvalReport> {
    config.validate()?;
    if agents.len() != config.platoons
        || agents.iter().any(|row| row.len() != config.followers)
    {
        return Err(Error::Config("agent grid does not match the experiment".into()));
    }
    let steps = config.episode.steps;
    let dt = config.episode.step_time;

    let mut vehicles = Vec::with_capacity(config.platoons * config.followers);
    for p in 0..config.platoons {
        let followers = (0..config.followers).map(|f| config.follower_params(p, f)).collect();
        let mut platoon =
            Platoon::new(config.vehicle_params(p, 0), followers, config.episode, config.reward)?;
        let mut leader =
            LeaderGen::new(config.leader, stream(eval_seed, p as u32, 0, Purpose::Leader));

        let mut cumulative = vec![0.0f64; config.followers];
        let mut trajectories: Vec<Vec<TrajPoint>> =
            (0..config.followers).map(|_| Vec::with_capacity(steps)).collect();
        for k in 0..steps {
            let states = platoon.states().to_vec();
            let mut actions = Vec::with_capacity(config.followers);
            for (agent, state) in agents[p].iter().zip(&states) {
                actions.push(agent.policy_action(state)?);
            }
            let leader_u = leader.next_input();
            let outcome = platoon.step(&actions, leader_u)?;
            for v in 0..config.followers {
                cumulative[v] += outcome.rewards[v];
                trajectories[v].push(TrajPoint {
                    step: k,
                    time_s: k as f64 * dt,
                    e_p: states[v].e_p,
                    e_v: states[v].e_v,
                    a: states[v].a,
                    u: actions[v],
                    jerk: outcome.jerks[v],
                    reward: outcome.rewards[v],
                });
            }
        }
        for (v, trajectory) in trajectories.into_iter().enumerate() {
            vehicles.push(VehicleEval {
                platoon: p,
                vehicle: v + 1,
                cumulative_reward: cumulative[v],
                trajectory,
            });
        }
    }
    let system_average =
        vehicles.iter().map(|v| v.cumulative_reward).sum::<f64>() / vehicles.len() as f64;
    Ok(EvalReport { eval_seed, vehicles, system_average })
}
