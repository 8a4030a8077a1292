//! The Gibbs sampler: full-conditional updates, chain driver and
//! convergence check.

mod chain;
mod prior;
mod state;
mod updates;

use thiserror::Error;

use crate::model::ModelError;
use crate::samplers::SamplerError;

pub use chain::{
    gibbs_step, initial_state, least_squares_start, rhat, run_chain, split_rhat, McmcConfig,
    PosteriorSamples, SampleMeta,
};
pub use prior::{PriorConfig, PriorScalars};
pub use state::{parameter_names, ChainState, Dims};
pub use updates::{
    alpha_conditional, b0_conditional, hazard_exposures, update_alpha, update_b0, update_beta,
    update_beta_coordinate, update_lambda, update_link_coordinate, update_links, update_sigma,
    update_v0, update_zeta_coordinate, SamplerTuning,
};

#[derive(Debug, Error)]
pub enum GibbsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("invalid MCMC configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("non-finite log-likelihood")]
    NonFinite,
    #[error("no posterior draws")]
    EmptySamples,
    #[error("need at least two chains of equal length (four or more draws each)")]
    InsufficientChains,
    #[error("{update} update failed at iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        update: &'static str,
        #[source]
        source: Box<GibbsError>,
    },
}
