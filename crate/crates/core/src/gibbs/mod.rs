//! Gibbs sampler for the joint Gaussian model, with linear, sign and
//! variance-floor constraints and a Metropolis update of the strata correlation.

pub(crate) mod block;
mod config;
mod draws;
mod sampler;

pub use config::{ChainConfig, ConstraintSet, FloorRule, InvGammaPrior, NormalPrior, PriorSpec};
pub use draws::{pce_column_name, quantile_type7, ColumnSummary, DrawSummary, PosteriorDraws};
pub use draws::{mean, sd};
pub use sampler::{run_chain, Acceptance, ChainState, Sampler, SigmaFloors};
pub(crate) use sampler::{outcome_moments, y_restrictions};
