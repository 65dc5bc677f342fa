use plumenet::dataset::DataError;
use plumenet::metrics::MetricsError;
use plumenet::network::NetworkError;
use plumenet::refsolver::SolverError;
use plumenet::training::TrainError;

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(m) => CliError::Config(m),
            DataError::Io(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Architecture(m) | NetworkError::Shape(m) => CliError::Config(m),
            NetworkError::Io(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(m) => CliError::Config(m),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<plumenet::physics::PhysicsError> for CliError {
    fn from(e: plumenet::physics::PhysicsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) | TrainError::Shape(m) => CliError::Config(m),
            TrainError::Format(m) => CliError::Data(m),
            e @ TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Autodiff(e) => CliError::Numeric(e.to_string()),
            TrainError::Network(e) => e.into(),
            TrainError::Physics(e) => e.into(),
            TrainError::Data(e) => e.into(),
            TrainError::Io(e) => e.into(),
        }
    }
}
