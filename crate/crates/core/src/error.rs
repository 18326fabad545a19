use thiserror::Error;

/// Errors surfaced by the simulator, the network kernel and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical or algorithmic parameter violates its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A numeric input was NaN or infinite where finite values are required.
    #[error("numeric domain violation: {0}")]
    NumericDomain(String),

    /// Tensor or vector shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Train-mode forward through batch normalization needs at least two rows.
    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    /// A cache or state object was used outside its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An experiment or module configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A federated barrier was entered with a participant missing.
    #[error("synchronization error: {0}")]
    Sync(String),

    /// A checkpoint or tensor file could not be read or does not match.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
