//! Gaussian-process nearest-neighbour (GPnn) regression.
//!
//! Hyperparameters are estimated once on a small random subset of the
//! training data; each prediction is then an exact GP posterior computed
//! from only the `m` nearest training points of the query. A cheap
//! recalibration pass rescales the two variance parameters so that the
//! predictive variances are weakly calibrated without touching the means.
//!
//! The [`simulate`] module contains a Monte-Carlo harness that draws
//! GP data only where predictions need it, which makes it possible to
//! check large-`n` limit behaviour of the predictor at desk scale.

pub mod calibrate;
pub mod data;
mod error;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod nn_index;
pub mod predict;
pub mod simulate;
pub mod train;

pub use calibrate::{calibrate, CalibrationResult};
pub use data::{Dataset, WhiteningTransform};
pub use error::{GpnnError, Result};
pub use gp::PredictiveDistribution;
pub use kernels::{KernelSpec, Theta};
pub use metrics::MetricsReport;
pub use nn_index::NeighbourIndex;
pub use predict::{FitConfig, GpnnModel};
pub use train::TrainConfig;
