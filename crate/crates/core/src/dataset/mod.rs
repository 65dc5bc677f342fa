//! Snapshot databases, label and residual point selection, padding and
//! minibatch streams.

mod db;
mod labels;
mod residuals;
mod trainset;

pub use db::{Axis, FieldKind, SnapshotDb};
pub use labels::{all_records, make_labels, test_split, Face, LabelPlan, LabelSet, LabelSpec};
pub use residuals::{make_residual_points, PaddingMode, PaddingSpec, Placement, Region};
pub use trainset::{minibatch_iter, EpochBatches, Manifest, ResidualSpec, TrainingSet};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("not a recognised file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("file is truncated")]
    Truncated,
    #[error("malformed data: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;
