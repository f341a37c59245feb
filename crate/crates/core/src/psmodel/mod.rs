//! The joint Gaussian outcome/strata model, data handling, and the exact
//! algebra linking generative parameters to the identified observed-data
//! parameters.

mod algebra;
mod dataset;
mod params;

pub use algebra::{marginalize, observed_loglik, pce_from_marginal, pce_true, solve_joint};
pub(crate) use dataset::least_squares;
pub use dataset::{residualize, simulate, CovariateFit, Dataset};
pub use params::{JointParams, MarginalParams, PrincipalStratum, Sign};
