//! Tail-accurate normal and gamma distribution functions.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_lr, ln_gamma};
use std::f64::consts::SQRT_2;

/// Upper tail `P(Z > x)` of the standard normal.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `P(Z <= x)` of the standard normal, accurate in the lower tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Inverse of [`normal_sf`].
pub fn normal_isf(p: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse of [`normal_cdf`].
pub fn normal_icdf(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Natural log of the regularized lower incomplete gamma function `P(a, x)`.
///
/// Uses the power series in log space when `x < a + 1`, where `P` can be far
/// below the smallest double.
pub fn ln_gamma_lr(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x >= a + 1.0 {
        return gamma_lr(a, x).ln();
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut denom = a;
    for _ in 0..100_000 {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    a * x.ln() - x - ln_gamma(a + 1.0) + sum.ln()
}
