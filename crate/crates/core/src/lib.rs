//! Bayesian semiparametric varying-coefficient models for gene-environment
//! interaction with spike-and-slab selection of constant, varying and
//! linear-interaction effects.

pub mod chainio;
pub mod config;
pub mod dists;
pub mod error;
pub mod gibbs;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod simgen;
pub mod splines;
pub mod stats;
pub mod study;
pub mod variant;

pub use error::{BlockId, Error, Result};
pub use model::{DesignCache, GxEDataset, Hyperparameters, ModelState, Residual};
pub use splines::{SplineConfig, SplineSystem};
pub use variant::{Family, MethodVariant};
