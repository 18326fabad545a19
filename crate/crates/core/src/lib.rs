//! Longitudinal platoon control with per-vehicle DDPG learners and
//! synchronous federated aggregation.
//!
//! The crate is organized around five subsystems:
//!
//! * [`dynamics`] — the discrete-time CACC error-state environment, the
//!   absolute-kinematics reference model, reward computation and the scripted
//!   platoon leader.
//! * [`net`] — a minimal dense-network kernel (forward, exact backward, batch
//!   normalization, Adam) that backs the actor and critic networks and defines
//!   the tensor format exchanged during aggregation.
//! * [`ddpg`] — one learner per follower vehicle: replay buffer,
//!   Ornstein-Uhlenbeck exploration, Bellman-target critic updates and
//!   deterministic policy-gradient actor updates.
//! * [`fed`] — group formation, flat-vector averaging and the update-delay /
//!   cutoff schedule for federated training.
//! * [`orchestrator`] — end-to-end training and evaluation: episode loops,
//!   the aggregation barrier, checkpoints, logs and seed summaries.

pub mod ddpg;
pub mod dynamics;
mod error;
pub mod fed;
pub mod net;
pub mod orchestrator;
pub mod rng;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
