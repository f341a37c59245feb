use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::block::{BlockRestrictions, LinearBlock};
use super::draws::{pce_column_name, PosteriorDraws};
use super::{ChainConfig, ConstraintSet, FloorRule, PriorSpec};
use crate::error::{Error, Result};
use crate::pir::{moments_from_data, ObservedMoments};
use crate::probkit::{
    mh_step_from, sample_mvn_canonical, sample_trunc_invgamma, Interval, RngStream,
};
use crate::psmodel::{least_squares, pce_true, residualize, Dataset, JointParams, Sign};

// full outcome-coefficient layout: beta00, beta01, beta10, beta11, lambda0, lambda1, gamma…
const B00: usize = 0;
const B01: usize = 1;
const B10: usize = 2;
const B11: usize = 3;
const LAM0: usize = 4;

/// Lower truncation points for `sigma_y2`, fixed from plug-in moments at chain start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaFloors {
    pub generic: f64,
    pub dominant: Option<f64>,
}

impl SigmaFloors {
    pub fn lower(&self) -> f64 {
        self.generic.max(self.dominant.unwrap_or(0.0))
    }

    pub fn from_moments(m: &ObservedMoments, c: &ConstraintSet) -> Self {
        let generic = c.sigma_y2_floor_frac * m.var_y[0].min(m.var_y[1]);
        let dominant = c.dominant_effect.then(|| {
            let r = |t: usize| m.var_y_given_s[t].powi(2) / m.var_y[t];
            let v = match c.dominant_floor_rule {
                FloorRule::Min => r(0).min(r(1)),
                FloorRule::Max => r(0).max(r(1)),
            };
            c.dominant_floor_factor * v
        });
        Self { generic, dominant }
    }
}

/// Current sampler state: parameters plus the imputed unobserved intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub params: JointParams,
    /// `S(1 - t_i)` for every unit.
    pub s_missing: Vec<f64>,
    pub iteration: usize,
}

impl ChainState {
    /// `(S(0), S(1))` of unit `i` with the missing one imputed.
    pub fn strata(&self, data: &Dataset, i: usize) -> [f64; 2] {
        if data.t[i] == 0 {
            [data.s[i], self.s_missing[i]]
        } else {
            [self.s_missing[i], data.s[i]]
        }
    }
}

fn dot(a: &[f64], b: impl Iterator<Item = f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gibbs sampler for the joint outcome/strata model with covariates.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    data: &'a Dataset,
    prior: PriorSpec,
    constraints: ConstraintSet,
    config: ChainConfig,
    y_block: LinearBlock,
    s_block: LinearBlock,
    floors: SigmaFloors,
    moments: ObservedMoments,
    sum_x: DVector<f64>,
    sum_xx: DMatrix<f64>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        data: &'a Dataset,
        prior: PriorSpec,
        constraints: ConstraintSet,
        config: ChainConfig,
    ) -> Result<Self> {
        data.validate()?;
        data.require_arms(3)?;
        prior.validate()?;
        constraints.validate()?;
        config.validate()?;
        if let Some(r) = constraints.rho_fixed {
            if r.abs() >= 1.0 {
                return Err(Error::Config(format!("rho_fixed {r} outside (-1, 1)")));
            }
        }
        let moments = moments_from_data(&residualize(data)?)?;
        let floors = SigmaFloors::from_moments(&moments, &constraints);
        let p = data.p();

        let mut y_priors = vec![
            prior.beta[0][0],
            prior.beta[0][1],
            prior.beta[1][0],
            prior.beta[1][1],
            prior.lambda[0],
            prior.lambda[1],
        ];
        y_priors.extend(std::iter::repeat(prior.gamma).take(p));
        let y_block = LinearBlock::new(&y_priors, &y_restrictions(&constraints, &moments))?;

        let mut s_priors = vec![prior.phi[0], prior.phi[1]];
        s_priors.extend(std::iter::repeat(prior.alpha).take(p));
        let s_block = LinearBlock::new(&s_priors, &BlockRestrictions::default())?;

        let sum_x = DVector::from_fn(p, |k, _| data.x.column(k).sum());
        let sum_xx = data.x.transpose() * &data.x;
        Ok(Self {
            data,
            prior,
            constraints,
            config,
            y_block,
            s_block,
            floors,
            moments,
            sum_x,
            sum_xx,
        })
    }

    pub fn floors(&self) -> SigmaFloors {
        self.floors
    }

    pub fn moments(&self) -> &ObservedMoments {
        &self.moments
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    /// Least-squares start with zero violation coefficients, projected onto the constraints.
    pub fn initial_state(&self) -> Result<ChainState> {
        let d = self.data;
        let (n, p) = (d.n(), d.p());
        let mut names: Vec<String> =
            ["beta00", "beta11", "lambda0", "lambda1"].map(String::from).to_vec();
        names.extend(d.x_names.iter().cloned());
        let design = DMatrix::from_fn(n, 4 + p, |i, j| {
            let t = d.t[i] as f64;
            match j {
                0 => d.s[i] * (1.0 - t),
                1 => d.s[i] * t,
                2 => 1.0 - t,
                3 => t,
                _ => d.x[(i, j - 4)],
            }
        });
        let y = DVector::from_column_slice(&d.y);
        let coef = least_squares(&design, &names, &y)?;
        let resid_y = &y - &design * &coef;

        let mut full = vec![coef[0], 0.0, 0.0, coef[1], coef[2], coef[3]];
        full.extend(coef.iter().skip(4));
        let theta_y = self.y_block.expand(&self.y_block.reduce(&full));

        let mut s_names: Vec<String> = ["phi0", "phi1"].map(String::from).to_vec();
        s_names.extend(d.x_names.iter().cloned());
        let s_design = DMatrix::from_fn(n, 2 + p, |i, j| match j {
            0 => 1.0 - d.t[i] as f64,
            1 => d.t[i] as f64,
            _ => d.x[(i, j - 2)],
        });
        let s = DVector::from_column_slice(&d.s);
        let s_coef = least_squares(&s_design, &s_names, &s)?;
        let resid_s = &s - &s_design * &s_coef;
        let theta_s = self.s_block.expand(&self.s_block.reduce(s_coef.as_slice()));

        let counts = d.arm_counts();
        let mut ss = [0.0; 2];
        for i in 0..n {
            ss[d.t[i] as usize] += resid_s[i] * resid_s[i];
        }
        let sigma_s = if self.constraints.equal_sigma_s {
            let v = (ss[0] + ss[1]) / (n as f64 - 2.0);
            [v.sqrt(); 2]
        } else {
            [0, 1].map(|t| (ss[t] / (counts[t] as f64 - 1.0)).sqrt())
        };
        let sigma_y2 =
            (resid_y.norm_squared() / (n as f64 - (4 + p) as f64)).max(self.floors.lower() * 1.001);
        let rho = self.constraints.rho_fixed.unwrap_or(self.prior.rho.midpoint());
        let params = params_from_blocks(&theta_y, &theta_s, sigma_y2, sigma_s, rho);
        params.validate()?;
        let s_missing = (0..n)
            .map(|i| {
                let m = 1 - d.t[i] as usize;
                params.phi[m] + dot(&params.alpha, d.x.row(i).iter().copied())
            })
            .collect();
        Ok(ChainState { params, s_missing, iteration: 0 })
    }

    /// Normal conditional `(mean, var)` of the unobserved intermediate of unit `i`.
    pub fn impute_conditional(&self, params: &JointParams, i: usize) -> (f64, f64) {
        let d = self.data;
        let t = d.t[i] as usize;
        let m = 1 - t;
        let [s0, s1] = params.sigma_s;
        let one_m_r2 = 1.0 - params.rho * params.rho;
        let ax = dot(&params.alpha, d.x.row(i).iter().copied());
        let gx = dot(&params.gamma, d.x.row(i).iter().copied());
        let (b_own, b_cross) = (params.beta[t][t], params.beta[t][m]);
        let s = d.s[i];
        let sm2 = params.sigma_s[m].powi(2);
        let prec = b_cross * b_cross / params.sigma_y2 + 1.0 / (sm2 * one_m_r2);
        let lin = -(b_own * s + params.lambda[t] + gx - d.y[i]) * b_cross / params.sigma_y2
            + (params.phi[m] + ax) / (sm2 * one_m_r2)
            + params.rho * (s - params.phi[t] - ax) / (s0 * s1 * one_m_r2);
        (lin / prec, 1.0 / prec)
    }

    /// Step a: redraw every unobserved intermediate.
    pub fn impute_missing<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        for i in 0..self.data.n() {
            let (mean, var) = self.impute_conditional(&state.params, i);
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            state.s_missing[i] = mean + var.sqrt() * z;
        }
    }

    /// `(Σ d dᵀ, Σ y d)` over outcome design rows at the current strata.
    pub fn outcome_moments(&self, state: &ChainState) -> (DMatrix<f64>, DVector<f64>) {
        outcome_moments(self.data, |i| state.strata(self.data, i))
    }

    /// Step b: conjugate draw of the outcome coefficients.
    pub fn update_theta_y<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let (xtx, xty) = self.outcome_moments(state);
        let current = theta_y_of(&state.params);
        let theta = self.y_block.draw(&xtx, &xty, 1.0 / state.params.sigma_y2, &current, rng)?;
        set_theta_y(&mut state.params, &theta);
        Ok(())
    }

    /// Canonical-form conditional `(precision, linear)` of the strata means
    /// `(phi0, phi1, alpha…)`.
    pub fn theta_s_conditional(&self, state: &ChainState) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.data;
        let p = d.p();
        let w = state.params.strata_cov().try_inverse().expect("validated strata covariance");
        let n = d.n() as f64;
        let mut xtx = DMatrix::zeros(2 + p, 2 + p);
        let w_row = [w[(0, 0)] + w[(0, 1)], w[(1, 0)] + w[(1, 1)]];
        let w_all = w_row[0] + w_row[1];
        for a in 0..2 {
            for b in 0..2 {
                xtx[(a, b)] = n * w[(a, b)];
            }
            for k in 0..p {
                xtx[(a, 2 + k)] = w_row[a] * self.sum_x[k];
                xtx[(2 + k, a)] = w_row[a] * self.sum_x[k];
            }
        }
        for r in 0..p {
            for c in 0..p {
                xtx[(2 + r, 2 + c)] = w_all * self.sum_xx[(r, c)];
            }
        }
        let mut xty = DVector::zeros(2 + p);
        for i in 0..d.n() {
            let u = state.strata(d, i);
            let wu: Vector2<f64> = w * Vector2::new(u[0], u[1]);
            xty[0] += wu[0];
            xty[1] += wu[1];
            let sw = wu[0] + wu[1];
            for k in 0..p {
                xty[2 + k] += d.x[(i, k)] * sw;
            }
        }
        self.s_block.conditional(&xtx, &xty, 1.0)
    }

    /// Step c: conjugate draw of the strata means.
    pub fn update_theta_s<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let (q, b) = self.theta_s_conditional(state);
        let free = sample_mvn_canonical(&q, &b, rng)?;
        let theta = self.s_block.expand(free.as_slice());
        state.params.phi = [theta[0], theta[1]];
        state.params.alpha = theta[2..].to_vec();
        Ok(())
    }

    /// Residual sum of squares of the outcome model at the current state.
    pub fn outcome_ss(&self, state: &ChainState) -> f64 {
        let d = self.data;
        let pr = &state.params;
        (0..d.n())
            .map(|i| {
                let t = d.t[i] as usize;
                let u = state.strata(d, i);
                let fit = pr.lambda[t]
                    + pr.beta[t][0] * u[0]
                    + pr.beta[t][1] * u[1]
                    + dot(&pr.gamma, d.x.row(i).iter().copied());
                (d.y[i] - fit).powi(2)
            })
            .sum()
    }

    /// Untruncated inverse-gamma `(shape, rate)` of the `sigma_y2` conditional.
    pub fn sigma_y2_conditional(&self, state: &ChainState) -> (f64, f64) {
        let g = self.prior.sigma_y2;
        (
            self.data.n() as f64 / 2.0 + g.shape,
            self.outcome_ss(state) / 2.0 + g.rate,
        )
    }

    /// Step d: truncated inverse-gamma draw of `sigma_y2`.
    pub fn update_sigma_y2<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let (shape, rate) = self.sigma_y2_conditional(state);
        let lo = self.floors.lower();
        state.params.sigma_y2 = sample_trunc_invgamma(shape, rate, lo, rng).map_err(|e| match e {
            Error::NegligibleMass { .. } => Error::NegligibleMass { lo, hi: f64::INFINITY },
            other => other,
        })?;
        Ok(())
    }

    /// `(S00, S11, S01)`: sums of squares and cross-products of the strata residuals.
    pub fn strata_residual_sums(&self, state: &ChainState) -> [f64; 3] {
        let d = self.data;
        let pr = &state.params;
        let mut out = [0.0; 3];
        for i in 0..d.n() {
            let u = state.strata(d, i);
            let ax = dot(&pr.alpha, d.x.row(i).iter().copied());
            let r0 = u[0] - pr.phi[0] - ax;
            let r1 = u[1] - pr.phi[1] - ax;
            out[0] += r0 * r0;
            out[1] += r1 * r1;
            out[2] += r0 * r1;
        }
        out
    }

    /// Inverse-gamma `(shape, rate)` of the common strata variance.
    pub fn sigma_s_equal_conditional(&self, state: &ChainState) -> (f64, f64) {
        let [s00, s11, s01] = self.strata_residual_sums(state);
        let rho = state.params.rho;
        let q = (s00 - 2.0 * rho * s01 + s11) / (1.0 - rho * rho);
        let g = self.prior.sigma2_s[0];
        (self.data.n() as f64 + g.shape, q / 2.0 + g.rate)
    }

    /// Unnormalized log conditional of `ln sigma_s[t]²`, other strata sd fixed.
    pub fn log_sigma_s_density(&self, state: &ChainState, sums: [f64; 3], t: usize, ln_v: f64) -> f64 {
        let v = ln_v.exp();
        let other = state.params.sigma_s[1 - t];
        let rho = state.params.rho;
        let g = self.prior.sigma2_s[t];
        let n = self.data.n() as f64;
        let stt = sums[t];
        let quad = (stt / v - 2.0 * rho * sums[2] / (v.sqrt() * other)) / (2.0 * (1.0 - rho * rho));
        // the trailing ln v is the Jacobian of the log scale
        -(n / 2.0 + g.shape + 1.0) * ln_v - quad - g.rate / v + ln_v
    }

    /// Step e. Returns the acceptance flags of the two MH moves, if made.
    pub fn update_sigma_s<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        rng: &mut R,
    ) -> Result<Option<[bool; 2]>> {
        if self.constraints.equal_sigma_s {
            let (shape, rate) = self.sigma_s_equal_conditional(state);
            let v = sample_trunc_invgamma(shape, rate, 0.0, rng)?;
            state.params.sigma_s = [v.sqrt(); 2];
            return Ok(None);
        }
        let sums = self.strata_residual_sums(state);
        let mut acc = [false; 2];
        for t in 0..2 {
            let cur = 2.0 * state.params.sigma_s[t].ln();
            let ld = |l: f64| self.log_sigma_s_density(state, sums, t, l);
            let cur_ld = ld(cur);
            let (step, _) = mh_step_from(
                cur,
                cur_ld,
                ld,
                self.config.sigma_s_proposal_sd,
                Interval::REAL_LINE,
                rng,
            );
            state.params.sigma_s[t] = (0.5 * step.value).exp();
            acc[t] = step.accepted;
        }
        Ok(Some(acc))
    }

    /// Per-arm sums `[n, Σy″², Σy″s″, Σs″²]` of the observed-data residuals
    /// that drive the `rho` update.
    pub fn rho_sufficient_sums(&self, state: &ChainState) -> [[f64; 4]; 2] {
        let d = self.data;
        let pr = &state.params;
        let mut out = [[0.0; 4]; 2];
        for i in 0..d.n() {
            let t = d.t[i] as usize;
            let ax = dot(&pr.alpha, d.x.row(i).iter().copied());
            let gx = dot(&pr.gamma, d.x.row(i).iter().copied());
            let mu = [pr.phi[0] + ax, pr.phi[1] + ax];
            let yy = d.y[i] - pr.lambda[t] - gx - pr.beta[t][0] * mu[0] - pr.beta[t][1] * mu[1];
            let ss = d.s[i] - pr.phi[t] - ax;
            let o = &mut out[t];
            o[0] += 1.0;
            o[1] += yy * yy;
            o[2] += yy * ss;
            o[3] += ss * ss;
        }
        out
    }

    /// Marginal log posterior of `rho` under its flat prior, up to a constant.
    pub fn rho_log_density(params: &JointParams, sums: &[[f64; 4]; 2], rho: f64) -> f64 {
        let mut total = 0.0;
        for t in 0..2 {
            let m = 1 - t;
            let b = params.beta[t];
            let (st, sm) = (params.sigma_s[t], params.sigma_s[m]);
            let v = params.sigma_y2 + (1.0 - rho * rho) * sm * sm * b[m] * b[m];
            let c = (st * b[t] + rho * sm * b[m]) / st;
            let [n, syy, sys, sss] = sums[t];
            total += -0.5 * n * v.ln() - (syy - 2.0 * c * sys + c * c * sss) / (2.0 * v);
        }
        total
    }

    /// Step f. Returns whether the MH move was accepted, or `None` when `rho` is fixed.
    pub fn update_rho<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Option<bool> {
        if self.constraints.rho_fixed.is_some() {
            return None;
        }
        let sums = self.rho_sufficient_sums(state);
        let params = &state.params;
        let ld = |r: f64| Self::rho_log_density(params, &sums, r);
        let cur_ld = ld(params.rho);
        let (step, _) =
            mh_step_from(params.rho, cur_ld, ld, self.config.rho_proposal_sd, self.prior.rho, rng);
        state.params.rho = step.value;
        Some(step.accepted)
    }

    pub fn column_names(&self) -> Vec<String> {
        let p = self.data.p();
        let mut c: Vec<String> = ["beta00", "beta01", "beta10", "beta11", "lambda0", "lambda1"]
            .map(String::from)
            .to_vec();
        c.extend((1..=p).map(|k| format!("gamma{k}")));
        c.extend(["phi0", "phi1"].map(String::from));
        c.extend((1..=p).map(|k| format!("alpha{k}")));
        c.extend(["sigma_y2", "sigma2_s0", "sigma2_s1", "rho"].map(String::from));
        c.extend(self.config.pce_strata.iter().map(|&u| pce_column_name(u)));
        c
    }

    fn record(&self, params: &JointParams, row: &mut Vec<f64>) {
        row.clear();
        row.extend(params.beta.iter().flatten());
        row.extend(params.lambda);
        row.extend(&params.gamma);
        row.extend(params.phi);
        row.extend(&params.alpha);
        row.push(params.sigma_y2);
        row.extend(params.sigma_s.map(|s| s * s));
        row.push(params.rho);
        row.extend(self.config.pce_strata.iter().map(|&u| pce_true(params, u)));
    }

    /// One full sweep a→f.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R, acc: &mut Acceptance) -> Result<()> {
        let it = state.iteration + 1;
        let wrap = |step: &'static str| move |e: Error| Error::Chain { iteration: it, step, source: Box::new(e) };
        self.impute_missing(state, rng);
        self.update_theta_y(state, rng).map_err(wrap("theta_y"))?;
        self.update_theta_s(state, rng).map_err(wrap("theta_s"))?;
        self.update_sigma_y2(state, rng).map_err(wrap("sigma_y2"))?;
        if let Some(a) = self.update_sigma_s(state, rng).map_err(wrap("sigma_s"))? {
            acc.sigma_s[0] += a[0] as usize;
            acc.sigma_s[1] += a[1] as usize;
        }
        if let Some(a) = self.update_rho(state, rng) {
            acc.rho += a as usize;
        }
        acc.iterations += 1;
        state.iteration = it;
        Ok(())
    }

    pub fn run(&self) -> Result<PosteriorDraws> {
        let mut rng = RngStream::new(self.config.seed, self.config.stream);
        let mut state = self.initial_state()?;
        let mut draws = PosteriorDraws::new(self.column_names());
        draws.values.reserve(self.config.n_retained() * draws.columns.len());
        let mut acc = Acceptance::default();
        let mut row = vec![];
        for it in 1..=self.config.n_iter {
            self.step(&mut state, &mut rng, &mut acc)?;
            if self.config.keeps(it) {
                self.record(&state.params, &mut row);
                draws.push_row(&row);
            }
        }
        let n = acc.iterations as f64;
        if self.constraints.rho_fixed.is_none() {
            draws.acceptance.insert("rho".into(), acc.rho as f64 / n);
        }
        if !self.constraints.equal_sigma_s {
            draws.acceptance.insert("sigma2_s0".into(), acc.sigma_s[0] as f64 / n);
            draws.acceptance.insert("sigma2_s1".into(), acc.sigma_s[1] as f64 / n);
        }
        draws.sigma_y2_floor = self.floors.lower();
        draws.config = serde_json::json!({
            "model": "continuous",
            "prior": self.prior,
            "constraints": self.constraints,
            "chain": self.config,
            "floors": self.floors,
        });
        Ok(draws)
    }
}

/// MH acceptance counters.
#[derive(Debug, Clone, Copy, Default)]
pub struct Acceptance {
    pub iterations: usize,
    pub rho: usize,
    pub sigma_s: [usize; 2],
}

/// `(Σ d dᵀ, Σ y d)` over the outcome design rows
/// `d = (u·(1-t), u·t, 1-t, t, x)` given each unit's strata `u`.
pub(crate) fn outcome_moments(
    d: &Dataset,
    strata: impl Fn(usize) -> [f64; 2],
) -> (DMatrix<f64>, DVector<f64>) {
    let p = d.p();
    let k = 3 + p;
    // per arm, over z = (u0, u1, 1, x…)
    let mut zz = [vec![0.0; k * k], vec![0.0; k * k]];
    let mut zy = [vec![0.0; k], vec![0.0; k]];
    let mut z = vec![0.0; k];
    for i in 0..d.n() {
        let t = d.t[i] as usize;
        let u = strata(i);
        z[0] = u[0];
        z[1] = u[1];
        z[2] = 1.0;
        for j in 0..p {
            z[3 + j] = d.x[(i, j)];
        }
        let (a, b) = (&mut zz[t], &mut zy[t]);
        for r in 0..k {
            let zr = z[r];
            b[r] += zr * d.y[i];
            for c in r..k {
                a[r * k + c] += zr * z[c];
            }
        }
    }
    let dim = 6 + p;
    let map = |t: usize, r: usize| match r {
        0 | 1 => 2 * t + r,
        2 => LAM0 + t,
        _ => 6 + (r - 3),
    };
    let mut xtx = DMatrix::zeros(dim, dim);
    let mut xty = DVector::zeros(dim);
    for t in 0..2 {
        for r in 0..k {
            xty[map(t, r)] += zy[t][r];
            for c in r..k {
                let v = zz[t][r * k + c];
                let (fr, fc) = (map(t, r), map(t, c));
                xtx[(fr, fc)] += v;
                if fr != fc {
                    xtx[(fc, fr)] += v;
                }
            }
        }
    }
    (xtx, xty)
}

pub(crate) fn y_restrictions(c: &ConstraintSet, m: &ObservedMoments) -> BlockRestrictions {
    let mut r = BlockRestrictions::default();
    if c.pi {
        r.fixed.push((B01, 0.0));
        r.fixed.push((B10, 0.0));
    }
    if c.zero_beta01 {
        r.fixed.push((B01, 0.0));
    }
    if c.shared_baseline {
        r.merged.push((B00, B10));
    }
    let sign_bound = |s: Sign| match s {
        Sign::Pos => Interval::new(0.0, f64::INFINITY),
        Sign::Neg => Interval::new(f64::NEG_INFINITY, 0.0),
    };
    if c.same_sign_arm0 {
        let b = sign_bound(m.sign_beta_tt[0]);
        r.bounds.extend([(B00, b), (B01, b)]);
    }
    if c.same_sign_arm1 {
        let b = sign_bound(m.sign_beta_tt[1]);
        r.bounds.extend([(B10, b), (B11, b)]);
    }
    if c.sign_positive {
        let b = sign_bound(Sign::Pos);
        r.bounds.extend([(B01, b), (B10, b)]);
    }
    r
}

pub(crate) fn theta_y_of(p: &JointParams) -> Vec<f64> {
    let mut v = vec![p.beta[0][0], p.beta[0][1], p.beta[1][0], p.beta[1][1], p.lambda[0], p.lambda[1]];
    v.extend(&p.gamma);
    v
}

pub(crate) fn set_theta_y(p: &mut JointParams, theta: &[f64]) {
    p.beta = [[theta[B00], theta[B01]], [theta[B10], theta[B11]]];
    p.lambda = [theta[LAM0], theta[LAM0 + 1]];
    p.gamma = theta[6..].to_vec();
}

fn params_from_blocks(
    theta_y: &[f64],
    theta_s: &[f64],
    sigma_y2: f64,
    sigma_s: [f64; 2],
    rho: f64,
) -> JointParams {
    let mut p = JointParams {
        beta: [[0.0; 2]; 2],
        lambda: [0.0; 2],
        gamma: vec![],
        alpha: theta_s[2..].to_vec(),
        sigma_y2,
        phi: [theta_s[0], theta_s[1]],
        sigma_s,
        rho,
    };
    set_theta_y(&mut p, theta_y);
    p
}

/// Runs one chain; see [`Sampler`].
pub fn run_chain(
    data: &Dataset,
    prior: &PriorSpec,
    constraints: &ConstraintSet,
    config: &ChainConfig,
) -> Result<PosteriorDraws> {
    Sampler::new(data, prior.clone(), constraints.clone(), config.clone())?.run()
}
