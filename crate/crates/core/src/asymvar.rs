//! Large-sample posterior variance of the strata correlation when the other
//! parameters are known, and the log-log rate fit used to check it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymVarInputs {
    /// Treated fraction.
    pub t_bar: f64,
    pub beta10: f64,
    pub beta01: f64,
    pub sigma_s0: f64,
    pub sigma_s1: f64,
    pub sigma_y2: f64,
    pub rho: f64,
    pub n: usize,
}

impl AsymVarInputs {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_bar > 0.0
            && self.t_bar < 1.0
            && self.beta10.is_finite()
            && self.beta01.is_finite()
            && self.sigma_s0 > 0.0
            && self.sigma_s1 > 0.0
            && self.sigma_y2 > 0.0
            && self.sigma_s0.is_finite()
            && self.sigma_s1.is_finite()
            && self.sigma_y2.is_finite()
            && self.rho.abs() < 1.0
            && self.n > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid variance inputs {self:?}")))
        }
    }

    /// The same inputs seen from the other arm.
    pub fn swapped(&self) -> Self {
        Self {
            t_bar: 1.0 - self.t_bar,
            beta10: self.beta01,
            beta01: self.beta10,
            sigma_s0: self.sigma_s1,
            sigma_s1: self.sigma_s0,
            ..*self
        }
    }
}

/// Approximate posterior variance of `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PosteriorVar {
    Finite(f64),
    /// No violation coefficient is nonzero, so the data carry no information on `rho`.
    NotEstimable,
}

impl PosteriorVar {
    pub fn value(&self) -> Option<f64> {
        match *self {
            PosteriorVar::Finite(v) => Some(v),
            PosteriorVar::NotEstimable => None,
        }
    }
}

/// Fisher information about `rho` per unit contributed by one arm with
/// violation coefficient `b` on the other arm's intermediate (sd `s`).
fn arm_information(b: f64, s: f64, sigma_y2: f64, rho: f64) -> f64 {
    let bs2 = b * b * s * s;
    // Var(Y | S, T): the conditional variance left after the observed intermediate
    let v = sigma_y2 + (1.0 - rho * rho) * bs2;
    bs2 * (2.0 * rho * rho * bs2 / (v * v) + 1.0 / v)
}

pub fn posterior_var_approx(a: &AsymVarInputs) -> Result<PosteriorVar> {
    a.validate()?;
    let info = a.t_bar * arm_information(a.beta10, a.sigma_s0, a.sigma_y2, a.rho)
        + (1.0 - a.t_bar) * arm_information(a.beta01, a.sigma_s1, a.sigma_y2, a.rho);
    if info == 0.0 {
        return Ok(PosteriorVar::NotEstimable);
    }
    Ok(PosteriorVar::Finite(1.0 / (a.n as f64 * info)))
}

/// Least-squares slope of `ln var` on `ln n`.
pub fn rate_fit(n_values: &[usize], var_values: &[f64]) -> Result<f64> {
    if n_values.len() != var_values.len() {
        return Err(Error::InvalidParameter(format!(
            "{} sample sizes but {} variances",
            n_values.len(),
            var_values.len()
        )));
    }
    if n_values.len() < 3 {
        return Err(Error::InvalidParameter("rate fit needs at least 3 points".into()));
    }
    if n_values.windows(2).any(|w| w[1] <= w[0]) || n_values[0] == 0 {
        return Err(Error::InvalidParameter("sample sizes must be positive and increasing".into()));
    }
    if let Some(v) = var_values.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("variance {v} is not positive")));
    }
    let xs: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = var_values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study_inputs(n: usize) -> AsymVarInputs {
        AsymVarInputs {
            t_bar: 0.5,
            beta10: 1.2,
            beta01: 0.0,
            sigma_s0: 1.0,
            sigma_s1: 1.0,
            sigma_y2: 0.25,
            rho: 0.75,
            n,
        }
    }

    #[test]
    fn hand_evaluated_value() {
        // Var(Y|S,T=1) = 0.25 + 0.4375 * 1.44 = 0.88
        // info = 0.5 * 1.44 * (2 * 0.5625 * 1.44 / 0.88^2 + 1 / 0.88)
        let info = 0.5 * 1.44 * (2.0 * 0.5625 * 1.44 / (0.88 * 0.88) + 1.0 / 0.88);
        let v = posterior_var_approx(&study_inputs(1200)).unwrap().value().unwrap();
        assert!((v - 1.0 / (1200.0 * info)).abs() < 1e-15);
        assert!((v - 3.585e-4).abs() < 1e-6);
    }

    #[test]
    fn doubling_n_halves() {
        let a = posterior_var_approx(&study_inputs(600)).unwrap().value().unwrap();
        let b = posterior_var_approx(&study_inputs(1200)).unwrap().value().unwrap();
        assert_eq!(a, 2.0 * b);
    }

    #[test]
    fn no_violation_is_not_estimable() {
        let a = AsymVarInputs { beta10: 0.0, ..study_inputs(100) };
        assert_eq!(posterior_var_approx(&a).unwrap(), PosteriorVar::NotEstimable);
        let json = serde_json::to_string(&PosteriorVar::NotEstimable).unwrap();
        assert_eq!(json, r#"{"kind":"not_estimable"}"#);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = AsymVarInputs { rho: 1.0, ..study_inputs(100) };
        assert!(posterior_var_approx(&a).is_err());
        let a = AsymVarInputs { t_bar: 0.0, ..study_inputs(100) };
        assert!(posterior_var_approx(&a).is_err());
    }

    #[test]
    fn exact_power_laws() {
        let ns = [300, 600, 1200, 2400];
        let v1: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
        let v2: Vec<f64> = ns.iter().map(|&n| 3.0 / (n as f64).powi(2)).collect();
        assert!((rate_fit(&ns, &v1).unwrap() + 1.0).abs() < 1e-10);
        assert!((rate_fit(&ns, &v2).unwrap() + 2.0).abs() < 1e-10);
    }

    #[test]
    fn rate_fit_preconditions() {
        assert!(rate_fit(&[300, 600], &[1.0, 0.5]).is_err());
        assert!(rate_fit(&[300, 600, 1200], &[1.0, 0.0, 0.5]).is_err());
        assert!(rate_fit(&[600, 300, 1200], &[1.0, 0.5, 0.2]).is_err());
    }
}
