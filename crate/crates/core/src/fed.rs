//! Synchronous federated aggregation.
//!
//! Groups are formed per recipient: same-index vehicles across platoons
//! (inter), or predecessors-plus-self within one platoon (intra, directional).
//! A scheduled barrier collects either network weights or fresh gradients
//! from every group member, averages them uniformly and hands each recipient
//! its own group's mean. Vehicles whose group is only themselves are not
//! recipients; they train locally even on barrier steps, which keeps the
//! first intra vehicle bit-identical to local-only training.

use serde::{Deserialize, Serialize};

use crate::ddpg::{Agent, StepGrads};
use crate::net::Gradients;
use crate::{Error, Result};

/// What the server averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    /// All four networks (actor, critic and both targets), including
    /// batch-norm running statistics. Optimizer moments stay local.
    Weights,
    /// Actor and critic gradients, applied through each member's own
    /// optimizer.
    Gradients,
}

/// Who aggregates with whom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// No federated exchange; every agent trains on its own.
    None,
    /// Same vehicle index across platoons.
    Inter,
    /// Directional groups within one platoon.
    Intra,
}

/// Which predecessors an intra group includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraGroupMode {
    /// Every predecessor plus the vehicle itself.
    PredecessorsAndSelf,
    /// Only the immediate predecessor plus the vehicle itself.
    PredecessorOnly,
}

impl Default for IntraGroupMode {
    fn default() -> Self {
        IntraGroupMode::PredecessorsAndSelf
    }
}

/// Timing of federated updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrlSchedule {
    /// Seconds between federated updates within an episode.
    pub update_delay: f64,
    /// Fraction of the training episodes during which updates occur.
    pub cutoff_ratio: f64,
}

/// Schedule resolved against an episode shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedSchedule {
    pub update_delay: f64,
    pub cutoff_ratio: f64,
    pub step_time: f64,
    pub episodes_total: usize,
}

impl ResolvedSchedule {
    pub fn new(
        schedule: FrlSchedule,
        step_time: f64,
        episodes_total: usize,
    ) -> Result<Self> {
        if !(step_time > 0.0) {
            return Err(Error::InvalidParameter("step_time must be > 0".into()));
        }
        if schedule.update_delay < step_time {
            return Err(Error::InvalidParameter(format!(
                "update_delay {} shorter than one step ({step_time})",
                schedule.update_delay
            )));
        }
        if !(0.0..=1.0).contains(&schedule.cutoff_ratio) {
            return Err(Error::InvalidParameter(format!(
                "cutoff_ratio must be in [0,1]: {}",
                schedule.cutoff_ratio
            )));
        }
        Ok(Self {
            update_delay: schedule.update_delay,
            cutoff_ratio: schedule.cutoff_ratio,
            step_time,
            episodes_total,
        })
    }

    /// Number of leading episodes with federated updates enabled.
    pub fn active_episodes(&self) -> usize {
        let raw = self.cutoff_ratio * self.episodes_total as f64;
        ((raw - 1e-9).ceil()).max(0.0) as usize
    }

    /// Federated updates per episode of `steps` samples.
    pub fn updates_per_episode(&self, steps: usize) -> usize {
        (1..=steps).filter(|&k| self.step_aligns(k)).count()
    }

    /// Closed-form total federated updates over a full run.
    pub fn predicted_updates(&self, steps: usize) -> usize {
        self.active_episodes() * self.updates_per_episode(steps)
    }

    fn step_aligns(&self, steps_done: usize) -> bool {
        // Nanosecond integer arithmetic keeps the multiple-of test exact.
        let t_ns = steps_done as u128 * (self.step_time * 1e9).round() as u128;
        let delay_ns = (self.update_delay * 1e9).round() as u128;
        delay_ns > 0 && t_ns % delay_ns == 0
    }
}

/// True when a federated update fires at this zero-based episode and step.
pub fn should_aggregate(s: &ResolvedSchedule, episode_index: usize, step_index: usize) -> bool {
    episode_index < s.active_episodes() && s.step_aligns(step_index + 1)
}

/// Elementwise uniform mean of equal-length vectors.
///
/// The mean is computed per element as `min + sum(sorted deltas)/n`, which is
/// bitwise permutation-invariant and exactly idempotent on consensus inputs.
pub fn average_flat(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Shape("cannot average zero vectors".into()))?;
    let len = first.len();
    if vectors.iter().any(|v| v.len() != len) {
        return Err(Error::Shape("flat vectors differ in length".into()));
    }
    match vectors.len() {
        1 => Ok(first.to_vec()),
        2 => Ok(vectors[0]
            .iter()
            .zip(vectors[1].iter())
            .map(|(&a, &b)| (a + b) / 2.0)
            .collect()),
        n => {
            let mut out = Vec::with_capacity(len);
            let mut vals = vec![0.0f64; n];
            for j in 0..len {
                for (slot, v) in vals.iter_mut().zip(vectors.iter()) {
                    *slot = v[j];
                }
                vals.sort_by(f64::total_cmp);
                let base = vals[0];
                let sum: f64 = vals.iter().map(|&v| v - base).sum();
                out.push(base + sum / n as f64);
            }
            Ok(out)
        }
    }
}

/// Group membership and barrier application for one experiment.
#[derive(Debug, Clone)]
pub struct FedServer {
    topology: Topology,
    kind: AggregationKind,
    intra_mode: IntraGroupMode,
    platoons: usize,
    vehicles: usize,
}

impl FedServer {
    pub fn new(
        topology: Topology,
        kind: AggregationKind,
        intra_mode: IntraGroupMode,
        platoons: usize,
        vehicles: usize,
    ) -> Result<Self> {
        if platoons == 0 || vehicles == 0 {
            return Err(Error::Config("need at least one platoon and one vehicle".into()));
        }
        if topology == Topology::Inter && platoons < 2 {
            return Err(Error::Config(
                "inter aggregation needs at least two platoons".into(),
            ));
        }
        if topology == Topology::Intra && platoons != 1 {
            return Err(Error::Config("intra aggregation operates within one platoon".into()));
        }
        Ok(Self { topology, kind, intra_mode, platoons, vehicles })
    }

    pub fn kind(&self) -> AggregationKind {
        self.kind
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Participants averaged into `(platoon_index, vehicle_index)`, the
    /// recipient included, zero-based.
    pub fn group(&self, platoon_index: usize, vehicle_index: usize) -> Result<Vec<(usize, usize)>> {
        if platoon_index >= self.platoons || vehicle_index >= self.vehicles {
            return Err(Error::Config(format!(
                "participant ({platoon_index},{vehicle_index}) outside {}x{}",
                self.platoons, self.vehicles
            )));
        }
        Ok(match self.topology {
            Topology::None => vec![(platoon_index, vehicle_index)],
            Topology::Inter => (0..self.platoons).map(|p| (p, vehicle_index)).collect(),
            Topology::Intra => match self.intra_mode {
                IntraGroupMode::PredecessorsAndSelf => {
                    (0..=vehicle_index).map(|v| (platoon_index, v)).collect()
                }
                IntraGroupMode::PredecessorOnly => {
                    if vehicle_index == 0 {
                        vec![(platoon_index, 0)]
                    } else {
                        vec![(platoon_index, vehicle_index - 1), (platoon_index, vehicle_index)]
                    }
                }
            },
        })
    }

    /// Vehicles that actually receive an averaged update (group size > 1).
    pub fn recipients(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for p in 0..self.platoons {
            for v in 0..self.vehicles {
                if self.group(p, v).map(|g| g.len() > 1).unwrap_or(false) {
                    out.push((p, v));
                }
            }
        }
        out
    }

    /// Weights-mode barrier: replace each recipient's four networks with its
    /// group mean. Non-recipients are untouched.
    pub fn apply_weights(&self, agents: &mut [Vec<Agent>]) -> Result<usize> {
        let recipients = self.recipients();
        if recipients.is_empty() {
            return Ok(0);
        }
        // Snapshot every contributing member before any replacement so the
        // barrier semantics (all submit, then all receive) hold.
        let mut snapshots: Vec<Vec<Option<[Vec<f64>; 4]>>> =
            vec![vec![None; self.vehicles]; self.platoons];
        for &(p, v) in &recipients {
            for (mp, mv) in self.group(p, v)? {
                let agent = agents
                    .get(mp)
                    .and_then(|row| row.get(mv))
                    .ok_or_else(|| Error::Sync(format!("member ({mp},{mv}) missing at barrier")))?;
                if snapshots[mp][mv].is_none() {
                    snapshots[mp][mv] = Some(agent.network_flats());
                }
            }
        }
        for &(p, v) in &recipients {
            let group = self.group(p, v)?;
            let mut mean: [Vec<f64>; 4] = Default::default();
            for net in 0..4 {
                let views: Vec<&[f64]> = group
                    .iter()
                    .map(|&(mp, mv)| snapshots[mp][mv].as_ref().expect("snapshotted")[net].as_slice())
                    .collect();
                mean[net] = average_flat(&views)?;
            }
            agents[p][v].set_network_flats(&mean)?;
        }
        Ok(recipients.len())
    }

    /// Gradients-mode barrier: every recipient applies its group's mean
    /// gradients through its own optimizer. `grads[p][v]` must hold the fresh
    /// gradients of every group member.
    pub fn apply_gradients(
        &self,
        agents: &mut [Vec<Agent>],
        grads: &[Vec<Option<StepGrads>>],
    ) -> Result<usize> {
        let recipients = self.recipients();
        for &(p, v) in &recipients {
            let group = self.group(p, v)?;
            let mut actor_views: Vec<Vec<f64>> = Vec::with_capacity(group.len());
            let mut critic_views: Vec<Vec<f64>> = Vec::with_capacity(group.len());
            for &(mp, mv) in &group {
                let g = grads
                    .get(mp)
                    .and_then(|row| row.get(mv))
                    .and_then(|g| g.as_ref())
                    .ok_or_else(|| {
                        Error::Sync(format!("gradients of ({mp},{mv}) missing at barrier"))
                    })?;
                actor_views.push(g.actor.to_flat());
                critic_views.push(g.critic.to_flat());
            }
            let actor_refs: Vec<&[f64]> = actor_views.iter().map(|v| v.as_slice()).collect();
            let critic_refs: Vec<&[f64]> = critic_views.iter().map(|v| v.as_slice()).collect();
            let mean = StepGrads {
                actor: Gradients::from_flat(
                    agents[p][v].actor_spec(),
                    &average_flat(&actor_refs)?,
                )?,
                critic: Gradients::from_flat(
                    agents[p][v].critic_spec(),
                    &average_flat(&critic_refs)?,
                )?,
            };
            agents[p][v].apply_averaged(&mean)?;
        }
        Ok(recipients.len())
    }
}
