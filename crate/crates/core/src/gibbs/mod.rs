//! Full-conditional updates and chain execution for the five variants.

mod chain;
pub mod geweke;
mod sampler;

pub use chain::{
    run_chain, run_chain_on, run_chains, run_chains_on, BlockColumns, ChainOutput, ChainSettings, Layout,
};
pub use geweke::{geweke_prior_check, GewekeReport, GewekeSettings};
pub use sampler::{sigmoid, BlockConditional, Sampler, RESYNC_EVERY};
