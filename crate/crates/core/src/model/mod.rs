//! Dataset, hyperparameters, parameter state and fixed design blocks.

pub(crate) mod data;
mod design;
mod hyper;
mod state;

pub use data::GxEDataset;
pub use design::{CurveBasis, DesignCache, PenalizedBlock};
pub use hyper::Hyperparameters;
pub use state::{assemble_mean, log_likelihood, ModelState, Residual};
