use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::{AgentConfig, NetworkConfig, OuNoise, ReplayBuffer, Transition, ACTION_DIM, OBS_DIM};
use crate::dynamics::ErrorState;
use crate::net::{
    backward, forward, forward_eval, init_network, soft_update, tensor_io::NamedTensor, Adam,
    AdamConfig, Gradients, Mode, NetInput, NetworkParams, NetworkSpec,
};
use crate::{Error, Result};

/// Actor and critic gradients from one training step, before application.
#[derive(Debug, Clone)]
pub struct StepGrads {
    pub actor: Gradients,
    pub critic: Gradients,
}

/// What a local training step did.
#[derive(Debug, Clone)]
pub enum TrainOutcome {
    /// The replay buffer is still empty; nothing happened.
    NotReady,
    /// Gradients were computed and applied locally.
    Trained(StepGrads),
}

/// A DDPG learner for one follower vehicle.
#[derive(Debug, Clone)]
pub struct Agent {
    actor_spec: NetworkSpec,
    critic_spec: NetworkSpec,
    actor: NetworkParams,
    critic: NetworkParams,
    actor_target: NetworkParams,
    critic_target: NetworkParams,
    opt_actor: Adam,
    opt_critic: Adam,
    buffer: ReplayBuffer,
    noise: OuNoise,
    cfg: AgentConfig,
    u_max: f64,
    rng_replay: ChaCha8Rng,
    rng_noise: ChaCha8Rng,
}

impl Agent {
    /// Initialize a fresh learner. Target networks start as copies of the
    /// online networks.
    pub fn new(
        cfg: AgentConfig,
        net: &NetworkConfig,
        u_max: f64,
        mut rng_init: ChaCha8Rng,
        rng_replay: ChaCha8Rng,
        rng_noise: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let actor_spec = net.actor_spec(u_max)?;
        let critic_spec = net.critic_spec()?;
        let actor = init_network(&actor_spec, &mut rng_init)?;
        let critic = init_network(&critic_spec, &mut rng_init)?;
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let adam = |lr: f64| AdamConfig {
            lr,
            beta1: net.adam_beta1,
            beta2: net.adam_beta2,
            epsilon: net.adam_epsilon,
        };
        let opt_actor = Adam::new(adam(cfg.actor_lr), &actor)?;
        let opt_critic = Adam::new(adam(cfg.critic_lr), &critic)?;
        Ok(Self {
            actor_spec,
            critic_spec,
            actor,
            critic,
            actor_target,
            critic_target,
            opt_actor,
            opt_critic,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            noise: OuNoise::new(cfg.ou_theta, cfg.ou_sigma),
            cfg,
            u_max,
            rng_replay,
            rng_noise,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Zero the exploration noise at an episode boundary.
    pub fn reset_noise(&mut self) {
        self.noise.reset();
    }

    /// Map an observation to a clipped control input. With `explore` the
    /// Ornstein-Uhlenbeck process advances and its value is added before
    /// clipping.
    pub fn select_action(&mut self, state: &ErrorState, explore: bool) -> Result<f64> {
        if !explore {
            return self.policy_action(state);
        }
        let x = Array2::from_shape_vec((1, OBS_DIM), state.to_array().to_vec())
            .expect("fixed shape");
        let (out, _) = forward_eval(&self.actor, &self.actor_spec, NetInput::Single(x.view()))?;
        let action = out[(0, 0)] + self.noise.step(&mut self.rng_noise);
        Ok(action.clamp(-self.u_max, self.u_max))
    }

    /// The deterministic policy: an eval-mode forward with no exploration and
    /// no state mutation.
    pub fn policy_action(&self, state: &ErrorState) -> Result<f64> {
        let x = Array2::from_shape_vec((1, OBS_DIM), state.to_array().to_vec())
            .expect("fixed shape");
        let (out, _) = forward_eval(&self.actor, &self.actor_spec, NetInput::Single(x.view()))?;
        Ok(out[(0, 0)].clamp(-self.u_max, self.u_max))
    }

    /// Record one transition.
    pub fn observe(&mut self, t: Transition) -> Result<()> {
        t.validate(self.u_max)?;
        self.buffer.push(t);
        Ok(())
    }

    /// One local training step: compute gradients from a sampled batch, apply
    /// them, soft-update the targets. Returns the pre-application gradients
    /// for federated use.
    pub fn train_step(&mut self) -> Result<TrainOutcome> {
        match self.compute_grads()? {
            None => Ok(TrainOutcome::NotReady),
            Some(grads) => {
                self.apply_own(&grads)?;
                Ok(TrainOutcome::Trained(grads))
            }
        }
    }

    /// Sample a batch and compute actor and critic gradients without applying
    /// them. Returns `None` while the buffer is empty.
    ///
    /// Train-mode forwards refresh the batch-norm running statistics as a
    /// side effect, exactly as a local step would.
    pub fn compute_grads(&mut self) -> Result<Option<StepGrads>> {
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let n = self.cfg.batch_size;
        let idx = self.buffer.sample_indices(&mut self.rng_replay, n);

        let mut states = Array2::zeros((n, OBS_DIM));
        let mut actions = Array2::zeros((n, ACTION_DIM));
        let mut rewards = Array1::zeros(n);
        let mut next_states = Array2::zeros((n, OBS_DIM));
        let mut terminal = vec![false; n];
        for (row, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i);
            for (col, v) in t.state.to_array().into_iter().enumerate() {
                states[(row, col)] = v;
            }
            for (col, v) in t.next_state.to_array().into_iter().enumerate() {
                next_states[(row, col)] = v;
            }
            actions[(row, 0)] = t.action;
            rewards[row] = t.reward;
            terminal[row] = t.terminal;
        }

        // Bellman targets through the frozen target networks.
        let (next_actions, _) =
            forward_eval(&self.actor_target, &self.actor_spec, NetInput::Single(next_states.view()))?;
        let (next_q, _) = forward_eval(
            &self.critic_target,
            &self.critic_spec,
            NetInput::Dual { state: next_states.view(), action: next_actions.view() },
        )?;
        let mut targets = Array2::zeros((n, 1));
        for row in 0..n {
            let bootstrap = if terminal[row] { 0.0 } else { self.cfg.gamma * next_q[(row, 0)] };
            targets[(row, 0)] = rewards[row] + bootstrap;
        }

        // Critic regression on the Bellman targets.
        let (q, critic_cache) = forward(
            &mut self.critic,
            &self.critic_spec,
            NetInput::Dual { state: states.view(), action: actions.view() },
            Mode::Train,
        )?;
        let dq = (&q - &targets) * (2.0 / n as f64);
        let (critic_grads, _) = backward(&self.critic, &self.critic_spec, &critic_cache, dq.view())?;

        // Policy-gradient ascent on the critic's value of the actor's action.
        let (policy_actions, actor_cache) =
            forward(&mut self.actor, &self.actor_spec, NetInput::Single(states.view()), Mode::Train)?;
        let (_, value_cache) = forward(
            &mut self.critic,
            &self.critic_spec,
            NetInput::Dual { state: states.view(), action: policy_actions.view() },
            Mode::Train,
        )?;
        let dvalue = Array2::from_elem((n, 1), -1.0 / n as f64);
        let (_, input_grads) =
            backward(&self.critic, &self.critic_spec, &value_cache, dvalue.view())?;
        let daction = input_grads
            .action()
            .ok_or_else(|| Error::Contract("critic must expose an action-input gradient".into()))?;
        let (actor_grads, _) =
            backward(&self.actor, &self.actor_spec, &actor_cache, daction.view())?;

        Ok(Some(StepGrads { actor: actor_grads, critic: critic_grads }))
    }

    /// Apply gradients locally and soft-update both targets.
    pub fn apply_own(&mut self, grads: &StepGrads) -> Result<()> {
        self.opt_actor.step(&mut self.actor, &grads.actor)?;
        self.opt_critic.step(&mut self.critic, &grads.critic)?;
        soft_update(&mut self.actor_target, &self.actor, self.cfg.target_mix)?;
        soft_update(&mut self.critic_target, &self.critic, self.cfg.target_mix)?;
        self.check_finite()
    }

    /// Apply externally averaged gradients through the local optimizer. The
    /// targets are left untouched for this step.
    pub fn apply_averaged(&mut self, grads: &StepGrads) -> Result<()> {
        self.opt_actor.step(&mut self.actor, &grads.actor)?;
        self.opt_critic.step(&mut self.critic, &grads.critic)?;
        self.check_finite()
    }

    fn check_finite(&self) -> Result<()> {
        if self.actor.all_finite()
            && self.critic.all_finite()
            && self.actor_target.all_finite()
            && self.critic_target.all_finite()
        {
            Ok(())
        } else {
            Err(Error::NumericDomain("parameters became non-finite".into()))
        }
    }

    /// Flat views of the four networks, in the order actor, critic,
    /// target actor, target critic.
    pub fn network_flats(&self) -> [Vec<f64>; 4] {
        [
            self.actor.to_flat(),
            self.critic.to_flat(),
            self.actor_target.to_flat(),
            self.critic_target.to_flat(),
        ]
    }

    /// Replace the four networks from flat views, the counterpart of
    /// [`Self::network_flats`].
    pub fn set_network_flats(&mut self, flats: &[Vec<f64>; 4]) -> Result<()> {
        self.actor = NetworkParams::from_flat(&self.actor_spec, &flats[0])?;
        self.critic = NetworkParams::from_flat(&self.critic_spec, &flats[1])?;
        self.actor_target = NetworkParams::from_flat(&self.actor_spec, &flats[2])?;
        self.critic_target = NetworkParams::from_flat(&self.critic_spec, &flats[3])?;
        Ok(())
    }

    pub fn actor_spec(&self) -> &NetworkSpec {
        &self.actor_spec
    }

    pub fn critic_spec(&self) -> &NetworkSpec {
        &self.critic_spec
    }

    pub fn actor_params(&self) -> &NetworkParams {
        &self.actor
    }

    pub fn critic_params(&self) -> &NetworkParams {
        &self.critic
    }

    /// Checkpoint payload for one network role. Online networks carry their
    /// optimizer state alongside the parameters.
    pub fn checkpoint_tensors(&self, role: NetworkRole) -> Vec<NamedTensor> {
        use crate::net::tensor_io::params_to_tensors;
        match role {
            NetworkRole::Actor => {
                let mut t = params_to_tensors(&self.actor);
                t.extend(self.opt_actor.to_tensors("adam"));
                t
            }
            NetworkRole::Critic => {
                let mut t = params_to_tensors(&self.critic);
                t.extend(self.opt_critic.to_tensors("adam"));
                t
            }
            NetworkRole::ActorTarget => params_to_tensors(&self.actor_target),
            NetworkRole::CriticTarget => params_to_tensors(&self.critic_target),
        }
    }

    /// Restore one network role from checkpoint tensors.
    pub fn restore_tensors(&mut self, role: NetworkRole, tensors: &[NamedTensor]) -> Result<()> {
        use crate::net::tensor_io::params_from_tensors;
        match role {
            NetworkRole::Actor => {
                self.actor = params_from_tensors(&self.actor_spec, tensors)?;
                self.opt_actor =
                    Adam::from_tensors(self.opt_actor.config(), &self.actor_spec, "adam", tensors)?;
            }
            NetworkRole::Critic => {
                self.critic = params_from_tensors(&self.critic_spec, tensors)?;
                self.opt_critic = Adam::from_tensors(
                    self.opt_critic.config(),
                    &self.critic_spec,
                    "adam",
                    tensors,
                )?;
            }
            NetworkRole::ActorTarget => {
                self.actor_target = params_from_tensors(&self.actor_spec, tensors)?;
            }
            NetworkRole::CriticTarget => {
                self.critic_target = params_from_tensors(&self.critic_spec, tensors)?;
            }
        }
        Ok(())
    }
}

/// The four networks a checkpoint stores per vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkRole {
    Actor,
    Critic,
    ActorTarget,
    CriticTarget,
}

impl NetworkRole {
    pub const ALL: [NetworkRole; 4] = [
        NetworkRole::Actor,
        NetworkRole::Critic,
        NetworkRole::ActorTarget,
        NetworkRole::CriticTarget,
    ];

    /// File stem used in checkpoint directories.
    pub fn stem(self) -> &'static str {
        match self {
            NetworkRole::Actor => "actor",
            NetworkRole::Critic => "critic",
            NetworkRole::ActorTarget => "actor_target",
            NetworkRole::CriticTarget => "critic_target",
        }
    }
}
