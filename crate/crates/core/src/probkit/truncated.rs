use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

use super::special::{ln_gamma_lr, normal_cdf, normal_icdf, normal_isf, normal_sf};
use crate::error::{Error, Result};
use statrs::function::gamma::gamma_lr;

const MIN_MASS: f64 = 1e-300;
const TAIL_SWITCH: f64 = 6.0;
const MAX_REJECTIONS: usize = 10_000;

/// Probability mass of `[a, b]` under the standard normal, computed on the
/// tail side that keeps precision.
fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_sf(b) - normal_cdf(a)
    }
}

/// Inverse-CDF draw from the standard normal restricted to `[a, b]`.
fn std_inverse_cdf<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let x = if a >= 0.0 {
        let (qa, qb) = (normal_sf(a), normal_sf(b));
        normal_isf(qb + u * (qa - qb))
    } else {
        let (pa, pb) = (normal_cdf(a), normal_cdf(b));
        normal_icdf(pa + u * (pb - pa))
    };
    x.clamp(a, b)
}

/// Rejection sampler for `[a, b]` with `a >= 0`: uniform proposal on short
/// intervals, shifted exponential proposal otherwise.
fn std_upper_rejection<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Option<f64> {
    if b.is_finite() && (b - a) * (a + b) <= 2.0 {
        for _ in 0..MAX_REJECTIONS {
            let z = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>().ln() <= 0.5 * (a * a - z * z) {
                return Some(z);
            }
        }
        return None;
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(rate).expect("positive rate");
    for _ in 0..MAX_REJECTIONS {
        let z = a + exp.sample(rng);
        if z > b {
            continue;
        }
        if rng.random::<f64>().ln() <= -0.5 * (z - rate).powi(2) {
            return Some(z);
        }
    }
    None
}

/// Draws from `N(mean, var)` restricted to `[lo, hi]`.
///
/// One-sided truncations more than six standard deviations into the tail use
/// the inverse CDF; everything else uses rejection with a capped number of
/// attempts before falling back to the inverse CDF.
pub fn sample_trunc_normal<R: Rng + ?Sized>(
    mean: f64,
    var: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "truncated normal needs finite mean and positive variance, got N({mean}, {var})"
        )));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "truncated normal needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    let sd = var.sqrt();
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        let z: f64 = rng.sample(StandardNormal);
        return Ok(mean + sd * z);
    }
    let mass = std_normal_mass(a, b);
    if !(mass >= MIN_MASS) {
        return Err(Error::NegligibleMass { lo, hi });
    }

    let z = if (b == f64::INFINITY && a > TAIL_SWITCH) || (a == f64::NEG_INFINITY && b < -TAIL_SWITCH)
    {
        std_inverse_cdf(a, b, rng)
    } else if mass >= 0.3 {
        let mut out = None;
        for _ in 0..MAX_REJECTIONS {
            let z: f64 = rng.sample(StandardNormal);
            if a <= z && z <= b {
                out = Some(z);
                break;
            }
        }
        out.unwrap_or_else(|| std_inverse_cdf(a, b, rng))
    } else if a >= 0.0 {
        std_upper_rejection(a, b, rng).unwrap_or_else(|| std_inverse_cdf(a, b, rng))
    } else if b <= 0.0 {
        std_upper_rejection(-b, -a, rng)
            .map(|z| -z)
            .unwrap_or_else(|| std_inverse_cdf(a, b, rng))
    } else {
        // narrow interval straddling zero: uniform proposal against exp(-z²/2)
        let mut out = None;
        for _ in 0..MAX_REJECTIONS {
            let z = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>().ln() <= -0.5 * z * z {
                out = Some(z);
                break;
            }
        }
        out.unwrap_or_else(|| std_inverse_cdf(a, b, rng))
    };
    Ok((mean + sd * z).clamp(lo, hi))
}

/// `ln G` for `G ~ Gamma(shape, 1)`, exact even when `G` underflows.
fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("valid shape").sample(rng).ln()
    } else {
        // G = G' U^{1/shape} with G' ~ Gamma(shape + 1)
        let g = Gamma::new(shape + 1.0, 1.0).expect("valid shape").sample(rng);
        let u: f64 = rng.random();
        g.ln() + u.ln() / shape
    }
}

fn saturating_exp(x: f64) -> f64 {
    x.min(f64::MAX.ln()).exp()
}

/// Draws from `IG(shape, rate)` restricted to `[lo, ∞)`.
///
/// Draws beyond the largest double saturate at `f64::MAX`, which only happens
/// for vague shapes far below one.
pub fn sample_trunc_invgamma<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    lo: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "inverse gamma needs positive finite shape and rate, got IG({shape}, {rate})"
        )));
    }
    if !(lo >= 0.0 && lo.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "inverse gamma truncation must be finite and nonnegative, got {lo}"
        )));
    }
    let plain = |rng: &mut R| saturating_exp(rate.ln() - ln_gamma_draw(shape, rng));
    if lo == 0.0 {
        return Ok(plain(rng));
    }
    // X = rate / G >= lo  <=>  G <= rate / lo
    let c = rate / lo;
    let mass = gamma_lr(shape, c);
    if mass >= 0.1 {
        for _ in 0..MAX_REJECTIONS {
            let x = plain(rng);
            if x >= lo {
                return Ok(x);
            }
        }
    }
    let ln_mass = ln_gamma_lr(shape, c);
    if !(ln_mass >= MIN_MASS.ln()) {
        return Err(Error::NegligibleMass {
            lo,
            hi: f64::INFINITY,
        });
    }
    let u: f64 = rng.random();
    let target = ln_mass + u.ln();
    // bisection on ln g for ln P(shape, g) = target, g in (0, c]
    let mut hi_l = c.ln();
    let mut step = 1.0;
    let mut lo_l = hi_l - step;
    while ln_gamma_lr(shape, lo_l.exp()) > target {
        step *= 2.0;
        lo_l = hi_l - step;
        if step > 1e6 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo_l + hi_l);
        if ln_gamma_lr(shape, mid.exp()) > target {
            hi_l = mid;
        } else {
            lo_l = mid;
        }
        if hi_l - lo_l < 1e-14 {
            break;
        }
    }
    let ln_g = 0.5 * (lo_l + hi_l);
    Ok(saturating_exp(rate.ln() - ln_g).max(lo))
}

/// Draws from `Dirichlet(alphas)`, normalizing gamma draws in log space.
pub fn sample_dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "Dirichlet concentrations must be positive, got {alphas:?}"
        )));
    }
    let logs: Vec<f64> = alphas.iter().map(|&a| ln_gamma_draw(a, rng)).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}
