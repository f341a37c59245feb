use std::f64::consts::PI;

use super::{Dataset, JointParams, MarginalParams, PrincipalStratum, Sign};
use crate::error::{Error, Result};

const FEASIBILITY_TOL: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Observed-data parameters implied by `params`, optionally at covariate value `at_x`.
pub fn marginalize(params: &JointParams, at_x: Option<&[f64]>) -> MarginalParams {
    let (ax, gx) = match at_x {
        Some(x) => (dot(&params.alpha, x), dot(&params.gamma, x)),
        None => (0.0, 0.0),
    };
    let phi = [params.phi[0] + ax, params.phi[1] + ax];
    let cov = params.strata_cov();
    let [s0, s1] = params.sigma_s;
    let sd = [s0, s1];
    let mut out = MarginalParams {
        mu_y: [0.0; 2],
        phi,
        zeta: [0.0; 2],
        psi: [0.0; 2],
        sigma_s: sd,
    };
    for t in 0..2 {
        let b = params.beta[t];
        let o = 1 - t;
        out.mu_y[t] = params.lambda[t] + b[0] * phi[0] + b[1] * phi[1] + gx;
        out.zeta[t] = params.sigma_y2
            + b[0] * b[0] * cov[(0, 0)]
            + 2.0 * b[0] * b[1] * cov[(0, 1)]
            + b[1] * b[1] * cov[(1, 1)];
        out.psi[t] = sd[t] * b[t] + params.rho * sd[o] * b[o];
    }
    out
}

/// Joint parameters on the identified set of `marg` at the given `rho`,
/// outcome variance and signs `[sign of beta01, sign of beta10]`.
///
/// The returned parameters carry no covariates.
pub fn solve_joint(
    marg: &MarginalParams,
    rho: f64,
    sigma_y2: f64,
    signs: [Sign; 2],
) -> Result<JointParams> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let v_min = marg.cond_var(0).min(marg.cond_var(1));
    if !(sigma_y2 >= 0.0 && sigma_y2 <= v_min * (1.0 + FEASIBILITY_TOL)) {
        return Err(Error::Infeasible(format!(
            "sigma_y2 = {sigma_y2} outside [0, {v_min}]"
        )));
    }
    let one_m_r2 = 1.0 - rho * rho;
    let mut beta = [[0.0; 2]; 2];
    let mut lambda = [0.0; 2];
    for t in 0..2 {
        let o = 1 - t;
        let excess = (marg.cond_var(t) - sigma_y2).max(0.0);
        let cross = signs[t].value() * (excess / (one_m_r2 * marg.sigma_s[o].powi(2))).sqrt();
        let own = (marg.psi[t] - rho * marg.sigma_s[o] * cross) / marg.sigma_s[t];
        beta[t][o] = cross;
        beta[t][t] = own;
        lambda[t] = marg.mu_y[t] - (beta[t][0] * marg.phi[0] + beta[t][1] * marg.phi[1]);
    }
    Ok(JointParams {
        beta,
        lambda,
        gamma: vec![],
        alpha: vec![],
        sigma_y2: sigma_y2.max(f64::MIN_POSITIVE),
        phi: marg.phi,
        sigma_s: marg.sigma_s,
        rho,
    })
}

/// `E{Y(1) - Y(0) | U = u}` under the joint parameters.
pub fn pce_true(params: &JointParams, u: PrincipalStratum) -> f64 {
    let b = &params.beta;
    (b[1][0] - b[0][0]) * u.s0 + (b[1][1] - b[0][1]) * u.s1 + params.lambda[1] - params.lambda[0]
}

/// The same effect written through the identified parameters and the two
/// violation coefficients.
pub fn pce_from_marginal(
    marg: &MarginalParams,
    rho: f64,
    beta01: f64,
    beta10: f64,
    u: PrincipalStratum,
) -> f64 {
    let [s0, s1] = marg.sigma_s;
    let c0 = beta10 - marg.psi[0] / s0 + (s1 / s0) * rho * beta01;
    let c1 = marg.psi[1] / s1 - (s0 / s1) * rho * beta10 - beta01;
    c0 * (u.s0 - marg.phi[0]) + c1 * (u.s1 - marg.phi[1]) + marg.mu_y[1] - marg.mu_y[0]
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
}

/// Log-likelihood of covariate-free data under the observed-data model.
pub fn observed_loglik(marg: &MarginalParams, data: &Dataset) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n() {
        let t = data.t[i] as usize;
        let (y, s) = (data.y[i], data.s[i]);
        let sd = marg.sigma_s[t];
        total += ln_normal(s, marg.phi[t], sd * sd);
        let mean = marg.mu_y[t] + marg.psi[t] * (s - marg.phi[t]) / sd;
        total += ln_normal(y, mean, marg.cond_var(t));
    }
    total
}
