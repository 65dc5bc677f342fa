//! Configuration files of each subcommand.

use std::path::PathBuf;

use plumenet::dataset::{Axis, LabelSpec, ResidualSpec};
use plumenet::metrics::Window;
use plumenet::refsolver::{ManufacturedParams, SolverConfig};
use plumenet::training::TrainConfig;

/// Evenly spaced snapshot times, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        Axis::new(self.start, self.end, self.n).coords()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GenDataConfig {
    /// Analytic solution sampled on a grid.
    Manufactured {
        dim: usize,
        ra: f64,
        pr: f64,
        #[serde(default)]
        params: ManufacturedParams,
        axes: Vec<Axis>,
        times: TimeGrid,
    },
    /// 2D Rayleigh–Bénard run of the reference solver.
    RayleighBenard { solver: SolverConfig },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainsetConfig {
    pub db: PathBuf,
    /// Database whose grid hosts the residual points; sets the padding
    /// region when none is given.
    pub residual_db: Option<PathBuf>,
    pub labels: LabelSpec,
    pub residuals: ResidualSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForcingConfig {
    #[default]
    None,
    /// Source terms of the default manufactured solution.
    Manufactured {
        #[serde(default)]
        params: ManufacturedParams,
    },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainCmdConfig {
    pub trainset: PathBuf,
    #[serde(default)]
    pub forcing: ForcingConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PressureGauge {
    /// Remove the mean of each snapshot.
    #[default]
    PerSnapshot,
    /// Remove one global mean.
    Global,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvaluateConfig {
    pub model: PathBuf,
    /// Reference database; predictions are made on its grid.
    pub db: PathBuf,
    /// Optional training set whose label loss is reported.
    pub trainset: Option<PathBuf>,
    #[serde(default)]
    pub pressure_gauge: PressureGauge,
    #[serde(default = "default_bins")]
    pub pdf_bins: usize,
    /// Probe for the temperature spectrum, as grid indices.
    pub probe: Option<Vec<usize>>,
    #[serde(default)]
    pub window: Window,
}

fn default_bins() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictFormat {
    #[default]
    Csv,
    Db,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictConfig {
    pub model: PathBuf,
    pub axes: Vec<Axis>,
    pub times: TimeGrid,
    #[serde(default)]
    pub format: PredictFormat,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HistoryRef {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReportConfig {
    pub histories: Vec<HistoryRef>,
}
