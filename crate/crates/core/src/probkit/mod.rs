//! Seeded random-number and density primitives shared by every sampler.
//!
//! All samplers take `&mut R: Rng` so they are pure functions of their inputs
//! and the generator state; give each chain its own [`RngStream`].

mod interval;
mod mcmc;
mod mvn;
mod rng;
pub mod special;
mod truncated;

pub use interval::Interval;
pub(crate) use mcmc::sample_from_log_weights;
pub use mcmc::{grid_points, grid_sample, mh_step, mh_step_from, MhStep};
pub use mvn::{sample_mvn, sample_mvn_canonical};
pub use rng::RngStream;
pub use truncated::{sample_dirichlet, sample_trunc_invgamma, sample_trunc_normal};
