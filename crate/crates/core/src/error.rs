use thiserror::Error;

use crate::types::{AgentId, FrameIndex};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("frame {got} arrived after frame {last}")]
    FrameRegression { last: FrameIndex, got: FrameIndex },
    #[error("singular innovation covariance: {0}")]
    SingularInnovation(String),
    #[error("non-finite loss at {0}")]
    NonFiniteLoss(String),
    #[error("missing prediction for agent {agent} at frame {frame}")]
    MissingQuery { frame: FrameIndex, agent: AgentId },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
