use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generative parameters of the joint outcome/strata model.
///
/// Arm-`t` outcome: `Y = lambda[t] + beta[t]·(S0, S1) + gamma·X + N(0, sigma_y2)`.
/// Strata: `(S0, S1) ~ N((phi[0] + alpha·X, phi[1] + alpha·X), Σ)` with marginal
/// sds `sigma_s` and correlation `rho`.
///
/// `beta[t][t]` is the coefficient of the observed intermediate in arm `t` and
/// `beta[t][1 - t]` the coefficient of the unobserved one; the latter pair
/// carries any violation of principal ignorability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointParams {
    pub beta: [[f64; 2]; 2],
    pub lambda: [f64; 2],
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    pub sigma_y2: f64,
    pub phi: [f64; 2],
    pub sigma_s: [f64; 2],
    pub rho: f64,
}

impl JointParams {
    /// Coverage-study setting with `beta01 = 0`, fitted with `rho` known.
    ///
    /// The mean of `S(1)` is 0.35 so that the reported strata `(0.89, 0.18 | 0.35 | 0.52)`
    /// are the median of `S(0)` crossed with the quartiles of `S(1)`.
    pub fn table1_truth() -> Self {
        Self {
            beta: [[11.5, 0.0], [11.5, 96.0]],
            lambda: [-0.5, -0.5],
            gamma: vec![],
            alpha: vec![],
            sigma_y2: 14.0 * 14.0,
            phi: [0.89, 0.35],
            sigma_s: [0.25, 0.25],
            rho: 0.75,
        }
    }

    /// Setting with `beta01 = 0` and `beta00 = beta10` used for the `rho` studies.
    pub fn rho_study_truth() -> Self {
        Self {
            beta: [[1.2, 0.0], [1.2, 1.2]],
            lambda: [0.9, 0.5],
            gamma: vec![],
            alpha: vec![],
            sigma_y2: 0.25,
            phi: [0.3, 0.5],
            sigma_s: [1.0, 1.0],
            rho: 0.75,
        }
    }

    pub fn beta01(&self) -> f64 {
        self.beta[0][1]
    }

    pub fn beta10(&self) -> f64 {
        self.beta[1][0]
    }

    pub fn n_covariates(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.beta.iter().flatten().all(|v| v.is_finite())
            && self.lambda.iter().all(|v| v.is_finite())
            && self.phi.iter().all(|v| v.is_finite())
            && self.gamma.iter().all(|v| v.is_finite())
            && self.alpha.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if !(self.sigma_y2 > 0.0 && self.sigma_y2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_y2 must be positive, got {}",
                self.sigma_y2
            )));
        }
        if !self.sigma_s.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_s must be positive, got {:?}",
                self.sigma_s
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        if self.gamma.len() != self.alpha.len() {
            return Err(Error::InvalidParameter(format!(
                "gamma has {} entries but alpha has {}",
                self.gamma.len(),
                self.alpha.len()
            )));
        }
        Ok(())
    }

    pub fn strata_cov(&self) -> Matrix2<f64> {
        let [s0, s1] = self.sigma_s;
        let c = self.rho * s0 * s1;
        Matrix2::new(s0 * s0, c, c, s1 * s1)
    }
}

/// The ten identified parameters of the observed `(Y, S) | T` distribution.
///
/// Per arm: `S ~ N(phi, sigma_s²)` and `Y | S ~ N(mu_y + psi (S - phi)/sigma_s, zeta - psi²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalParams {
    pub mu_y: [f64; 2],
    pub phi: [f64; 2],
    pub zeta: [f64; 2],
    pub psi: [f64; 2],
    pub sigma_s: [f64; 2],
}

impl MarginalParams {
    /// `Var(Y | S, T = t)`.
    pub fn cond_var(&self, t: usize) -> f64 {
        self.zeta[t] - self.psi[t] * self.psi[t]
    }

    pub fn validate(&self) -> Result<()> {
        for t in 0..2 {
            if !(self.zeta[t] > 0.0 && self.sigma_s[t] > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "arm {t}: zeta and sigma_s must be positive"
                )));
            }
            if !(self.cond_var(t) > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "arm {t}: zeta - psi^2 must be positive, got {}",
                    self.cond_var(t)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrincipalStratum {
    pub s0: f64,
    pub s1: f64,
}

impl PrincipalStratum {
    pub fn new(s0: f64, s1: f64) -> Self {
        Self { s0, s1 }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.s0, self.s1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x < 0.0 {
            Sign::Neg
        } else {
            Sign::Pos
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Pos => "+",
            Sign::Neg => "-",
        })
    }
}
