//! Composite loss, Adam with a cyclic learning-rate schedule, loss history
//! and checkpointed training sessions.
//!
//! A [`Trainer`] owns the expression graph. Label records and residual
//! points are two separate coordinate sets feeding one shared set of
//! network parameters, so label and residual batches can have different
//! sizes. In plain-DNN mode the residual graph is never built.

mod adam;
mod checkpoint;
mod config;
mod history;
mod session;
mod trainer;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use config::{Cycle, DivPenalty, EqWeights, LossConfig, LossMode, Schedule};
pub use history::{LossHistory, Record, HEADER as HISTORY_HEADER};
pub use session::{CycleSummary, Session, TrainConfig};
pub use trainer::{StepResult, Trainer};

use crate::autodiff::AutodiffError;
use crate::dataset::DataError;
use crate::network::NetworkError;
use crate::physics::PhysicsError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("non-finite loss at iteration {iteration} in term `{term}`")]
    NonFinite { iteration: u64, term: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
