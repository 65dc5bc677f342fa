//! Physics-informed neural network surrogates for incompressible
//! Boussinesq convection.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: computational graph with input-derivative source
//!   transforms and reverse-mode parameter gradients.
//! - [`network`]: tanh MLP surrogate expressed as a graph, Xavier
//!   initialisation and the model file format.
//! - [`physics`]: Boussinesq residuals (momentum, temperature, auxiliary
//!   temperature, continuity) built from the network graph.
//! - [`dataset`]: snapshot databases, label/residual point selection,
//!   padding of residual points and minibatch streams.
//! - [`training`]: composite loss, Adam and the cyclic schedule.
//! - [`metrics`]: accuracy statistics, spectra, densities and the linear
//!   regression baseline.
//! - [`refsolver`]: manufactured solutions and a 2D staggered-grid
//!   projection solver used as ground truth.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod dataset;
pub mod metrics;
pub mod network;
pub mod physics;
pub mod refsolver;
pub mod seed;
pub mod training;

pub use autodiff::{Bindings, Expr, Graph, InputVar, ParamId};
pub use dataset::{SnapshotDb, TrainingSet};
pub use network::{Architecture, Model, Parameters};
pub use physics::{FluidParams, SpatialDim};
