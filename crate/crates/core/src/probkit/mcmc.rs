use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::Interval;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhStep {
    pub value: f64,
    pub accepted: bool,
}

fn finite_or_neg_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x
    }
}

/// One random-walk Metropolis step with proposals reflected into `bounds`.
///
/// Reflection keeps the proposal symmetric, so the acceptance ratio is the
/// density ratio alone. NaN densities count as zero density.
pub fn mh_step<F, R>(
    current: f64,
    log_density: F,
    proposal_sd: f64,
    bounds: Interval,
    rng: &mut R,
) -> MhStep
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let current_ld = finite_or_neg_inf(log_density(current));
    mh_step_from(current, current_ld, log_density, proposal_sd, bounds, rng).0
}

/// As [`mh_step`] with the current log density supplied; also returns the log
/// density at the returned value.
pub fn mh_step_from<F, R>(
    current: f64,
    current_ld: f64,
    log_density: F,
    proposal_sd: f64,
    bounds: Interval,
    rng: &mut R,
) -> (MhStep, f64)
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let z: f64 = rng.sample(StandardNormal);
    let proposal = bounds.reflect(current + proposal_sd * z);
    let proposal_ld = finite_or_neg_inf(log_density(proposal));
    let u: f64 = rng.random();
    let accept = if proposal_ld == f64::NEG_INFINITY {
        false
    } else if current_ld == f64::NEG_INFINITY {
        true
    } else {
        u.ln() < proposal_ld - current_ld
    };
    if accept {
        (
            MhStep {
                value: proposal,
                accepted: true,
            },
            proposal_ld,
        )
    } else {
        (
            MhStep {
                value: current,
                accepted: false,
            },
            current_ld,
        )
    }
}

/// Midpoints of `n_points` equal cells covering `grid`.
pub fn grid_points(grid: Interval, n_points: usize) -> Vec<f64> {
    let h = grid.width() / n_points as f64;
    (0..n_points)
        .map(|k| grid.lo + (k as f64 + 0.5) * h)
        .collect()
}

/// Draws one grid point with probability proportional to `exp(log_density)`.
///
/// Densities are evaluated in parallel; normalization is sequential so the
/// draw does not depend on the thread count.
pub fn grid_sample<F, R>(log_density: F, grid: Interval, n_points: usize, rng: &mut R) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync,
    R: Rng + ?Sized,
{
    if n_points < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 2 points, got {n_points}"
        )));
    }
    let xs = grid_points(grid, n_points);
    let lds: Vec<f64> = xs
        .par_iter()
        .map(|&x| finite_or_neg_inf(log_density(x)))
        .collect();
    sample_from_log_weights(&xs, &lds, rng)
}

pub(crate) fn sample_from_log_weights<R: Rng + ?Sized>(
    xs: &[f64],
    lds: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let m = lds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return Err(Error::EmptyRegion(
            "log density is -inf on every grid point".into(),
        ));
    }
    let w: Vec<f64> = lds.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (x, wi) in xs.iter().zip(&w) {
        acc += wi;
        if acc > target {
            return Ok(*x);
        }
    }
    // rounding can leave target == total; take the last positive-weight point
    let last = w.iter().rposition(|&wi| wi > 0.0).expect("max weight is 1");
    Ok(xs[last])
}
