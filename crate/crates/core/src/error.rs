use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum FedError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("state error: {0}")]
    State(String),

    #[error("run diverged at round {round}: ||x|| = {norm:e}")]
    Divergence { round: usize, norm: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, FedError>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(FedError::Argument(msg.into()))
}
