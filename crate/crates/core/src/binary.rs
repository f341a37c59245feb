//! Binary intermediate: `S(0), S(1) ∈ {0, 1}` with a four-cell joint
//! distribution, no covariates, and normal outcomes given the strata.
//!
//! Each arm's observed `(Y, S)` is a two-component normal mixture over the
//! missing stratum, which identifies the violation coefficients up to sign.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::block::LinearBlock;
use crate::gibbs::{
    outcome_moments, pce_column_name, y_restrictions, ChainConfig, ConstraintSet, PosteriorDraws,
    PriorSpec,
};
use crate::pir::moments_from_data;
use crate::probkit::{
    grid_points, sample_dirichlet, sample_from_log_weights, sample_trunc_invgamma, Interval,
    RngStream,
};
use crate::psmodel::{least_squares, Dataset, PrincipalStratum};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Grid points more than this many log-units below the mode are skipped.
const GRID_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryParams {
    /// `beta[t][k]` multiplies `S(k)` in arm `t`.
    pub beta: [[f64; 2]; 2],
    pub lambda: [f64; 2],
    pub sigma_y2: f64,
    /// `p_ab = P(S(0) = a, S(1) = b)`.
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl BinaryParams {
    /// Setting of the sign-identification study: well-separated strata
    /// effects with `sigma_y = 0.5`.
    pub fn sign_study_truth() -> Self {
        Self {
            beta: [[1.2, 0.6], [0.8, 1.2]],
            lambda: [0.9, 0.5],
            sigma_y2: 0.25,
            p00: 0.1,
            p01: 0.3,
            p10: 0.2,
            p11: 0.4,
        }
    }

    pub fn cell(&self, s0: u8, s1: u8) -> f64 {
        match (s0, s1) {
            (0, 0) => self.p00,
            (0, _) => self.p01,
            (_, 0) => self.p10,
            _ => self.p11,
        }
    }

    /// `(P(S(0) = 1), P(S(1) = 1))`.
    pub fn margins(&self) -> [f64; 2] {
        [self.p10 + self.p11, self.p01 + self.p11]
    }

    /// Sets the cells from the margins and `p11`.
    pub fn set_from_margins(&mut self, margins: [f64; 2], p11: f64) {
        let [a, b] = margins;
        self.p11 = p11;
        self.p10 = a - p11;
        self.p01 = b - p11;
        self.p00 = 1.0 - a - b + p11;
    }

    pub fn validate(&self) -> Result<()> {
        let coefs = self.beta.iter().flatten().chain(&self.lambda);
        if !coefs.clone().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite outcome coefficient".into()));
        }
        if !(self.sigma_y2 > 0.0 && self.sigma_y2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_y2 must be positive, got {}",
                self.sigma_y2
            )));
        }
        let cells = [self.p00, self.p01, self.p10, self.p11];
        if cells.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative cell probability in {cells:?}")));
        }
        let total: f64 = cells.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "cell probabilities sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// Outcome mean of a unit in arm `t` with strata `(s0, s1)`.
    pub fn outcome_mean(&self, t: usize, s0: f64, s1: f64) -> f64 {
        self.lambda[t] + self.beta[t][0] * s0 + self.beta[t][1] * s1
    }

    /// `ln f_t(y, s)`: the observed-data mixture density over the missing stratum.
    pub fn ln_pdf(&self, y: f64, s: u8, t: u8) -> f64 {
        let sd = self.sigma_y2.sqrt();
        let terms = [0u8, 1].map(|m| {
            let (s0, s1) = if t == 0 { (s, m) } else { (m, s) };
            let p = self.cell(s0, s1);
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let z = (y - self.outcome_mean(t as usize, s0 as f64, s1 as f64)) / sd;
            p.ln() - 0.5 * z * z - sd.ln() - LN_SQRT_2PI
        });
        log_add(terms[0], terms[1])
    }

    pub fn pce(&self, u: PrincipalStratum) -> f64 {
        self.lambda[1] - self.lambda[0]
            + (self.beta[1][0] - self.beta[0][0]) * u.s0
            + (self.beta[1][1] - self.beta[0][1]) * u.s1
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Feasible range of `p11` given the margins; errors when it has no interior.
pub fn p11_bounds(margins: [f64; 2]) -> Result<Interval> {
    let [a, b] = margins;
    let lo = (a + b - 1.0).max(0.0);
    let hi = a.min(b);
    if !(hi > lo) {
        return Err(Error::EmptyRegion(format!(
            "p11 range [{lo}, {hi}] from margins ({a}, {b}) has no interior"
        )));
    }
    Ok(Interval::new(lo, hi))
}

/// `f_t(y, s)`.
pub fn marginal_pdf_binary(y: f64, s: u8, t: u8, params: &BinaryParams) -> f64 {
    params.ln_pdf(y, s, t).exp()
}

/// Draws `n` units: `T ~ Bernoulli(0.5)`, the strata cell from the four-cell
/// multinomial, then the arm's normal outcome.
pub fn simulate_binary<R: Rng + ?Sized>(params: &BinaryParams, n: usize, rng: &mut R) -> Result<Dataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let sd = params.sigma_y2.sqrt();
    let cum = [params.p00, params.p00 + params.p01, params.p00 + params.p01 + params.p10];
    let (mut y, mut t, mut s) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut s0, mut s1) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let arm = u8::from(rng.random::<f64>() < 0.5);
        let u: f64 = rng.random();
        let (u0, u1) = if u < cum[0] {
            (0.0, 0.0)
        } else if u < cum[1] {
            (0.0, 1.0)
        } else if u < cum[2] {
            (1.0, 0.0)
        } else {
            (1.0, 1.0)
        };
        let e: f64 = rng.sample(StandardNormal);
        y.push(params.outcome_mean(arm as usize, u0, u1) + sd * e);
        s.push(if arm == 1 { u1 } else { u0 });
        t.push(arm);
        s0.push(u0);
        s1.push(u1);
    }
    let mut d = Dataset::new(y, t, s)?;
    d.s0 = Some(s0);
    d.s1 = Some(s1);
    Ok(d)
}

/// Largest `|ln f_t(y, s | a) - ln f_t(y, s | b)|` over `y_grid`, both arms
/// and both observed strata. Zero means the two parameter sets are
/// indistinguishable on the grid.
pub fn sign_separation_check(a: &BinaryParams, b: &BinaryParams, y_grid: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for &y in y_grid {
        for t in 0..2 {
            for s in 0..2 {
                let (la, lb) = (a.ln_pdf(y, s, t), b.ln_pdf(y, s, t));
                if la == lb {
                    continue;
                }
                worst = worst.max((la - lb).abs());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryState {
    pub params: BinaryParams,
    /// `S(1 - t_i)` for every unit.
    pub s_missing: Vec<f64>,
    pub iteration: usize,
}

impl BinaryState {
    pub fn strata(&self, data: &Dataset, i: usize) -> [f64; 2] {
        if data.t[i] == 0 {
            [data.s[i], self.s_missing[i]]
        } else {
            [self.s_missing[i], data.s[i]]
        }
    }
}

/// Gibbs sampler for the binary-intermediate model.
///
/// `sigma_y2` is untruncated; the variance floors, `rho` and the strata
/// variance options of [`ConstraintSet`] do not apply here.
#[derive(Debug, Clone)]
pub struct BinarySampler<'a> {
    data: &'a Dataset,
    prior: PriorSpec,
    constraints: ConstraintSet,
    config: ChainConfig,
    y_block: LinearBlock,
}

impl<'a> BinarySampler<'a> {
    pub fn new(
        data: &'a Dataset,
        prior: PriorSpec,
        constraints: ConstraintSet,
        config: ChainConfig,
    ) -> Result<Self> {
        data.validate()?;
        data.require_arms(3)?;
        if !data.is_binary() {
            return Err(Error::Data("binary model needs s in {0, 1}".into()));
        }
        if data.p() > 0 {
            return Err(Error::Data("binary model takes no covariates".into()));
        }
        prior.validate()?;
        constraints.validate()?;
        config.validate()?;
        if constraints.dominant_effect {
            return Err(Error::Config(
                "the dominant-effect floor is defined for continuous intermediates only".into(),
            ));
        }
        let moments = moments_from_data(data)?;
        let priors = [
            prior.beta[0][0],
            prior.beta[0][1],
            prior.beta[1][0],
            prior.beta[1][1],
            prior.lambda[0],
            prior.lambda[1],
        ];
        let y_block = LinearBlock::new(&priors, &y_restrictions(&constraints, &moments))?;
        Ok(Self { data, prior, constraints, config, y_block })
    }

    /// Least-squares start with zero violation coefficients and the
    /// observed arm frequencies as margins.
    pub fn initial_state(&self) -> Result<BinaryState> {
        let d = self.data;
        let n = d.n();
        let names = ["beta00", "beta11", "lambda0", "lambda1"].map(String::from);
        let design = DMatrix::from_fn(n, 4, |i, j| {
            let t = d.t[i] as f64;
            match j {
                0 => d.s[i] * (1.0 - t),
                1 => d.s[i] * t,
                2 => 1.0 - t,
                _ => t,
            }
        });
        let y = DVector::from_column_slice(&d.y);
        let coef = least_squares(&design, &names, &y)?;
        let resid = &y - &design * &coef;
        let full = [coef[0], 0.0, 0.0, coef[1], coef[2], coef[3]];
        let theta = self.y_block.expand(&self.y_block.reduce(&full));

        let margins = [0, 1].map(|t| {
            let idx = d.arm_indices(t);
            let m = idx.iter().map(|&i| d.s[i]).sum::<f64>() / idx.len() as f64;
            m.clamp(0.02, 0.98)
        });
        let range = p11_bounds(margins)?;
        let p11 = match self.constraints.p11_fixed {
            Some(p) if !(range.lo..=range.hi).contains(&p) => {
                return Err(Error::Config(format!(
                    "p11_fixed {p} lies outside [{}, {}], the range allowed by the observed margins",
                    range.lo, range.hi
                )))
            }
            Some(p) => p,
            None => (margins[0] * margins[1]).clamp(range.lo, range.hi),
        };
        let mut params = BinaryParams {
            beta: [[theta[0], theta[1]], [theta[2], theta[3]]],
            lambda: [theta[4], theta[5]],
            sigma_y2: (resid.norm_squared() / (n as f64 - 4.0)).max(1e-8),
            p00: 0.0,
            p01: 0.0,
            p10: 0.0,
            p11: 0.0,
        };
        params.set_from_margins(margins, p11);
        params.validate()?;
        Ok(BinaryState { params, s_missing: vec![0.0; n], iteration: 0 })
    }

    /// `P(S(1 - t_i) = 1 | y_i, s_i, t_i)` under `params`.
    pub fn impute_prob(&self, params: &BinaryParams, i: usize) -> f64 {
        let d = self.data;
        let t = d.t[i] as usize;
        let s = d.s[i] as u8;
        let ln_h = |m: u8| {
            let (s0, s1) = if t == 0 { (s, m) } else { (m, s) };
            let mu = params.outcome_mean(t, s0 as f64, s1 as f64);
            params.cell(s0, s1).ln() - (d.y[i] - mu).powi(2) / (2.0 * params.sigma_y2)
        };
        let (l1, l0) = (ln_h(1), ln_h(0));
        if l1 == f64::NEG_INFINITY {
            return 0.0;
        }
        1.0 / (1.0 + (l0 - l1).exp())
    }

    /// Step 1: Bernoulli imputation of every missing stratum.
    pub fn impute_missing<R: Rng + ?Sized>(&self, state: &mut BinaryState, rng: &mut R) {
        for i in 0..self.data.n() {
            let p = self.impute_prob(&state.params, i);
            state.s_missing[i] = f64::from(u8::from(rng.random::<f64>() < p));
        }
    }

    /// Step 2: conjugate draw of `(beta, lambda)`.
    pub fn update_theta_y<R: Rng + ?Sized>(&self, state: &mut BinaryState, rng: &mut R) -> Result<()> {
        let (xtx, xty) = outcome_moments(self.data, |i| state.strata(self.data, i));
        let p = &state.params;
        let current = [p.beta[0][0], p.beta[0][1], p.beta[1][0], p.beta[1][1], p.lambda[0], p.lambda[1]];
        let th = self.y_block.draw(&xtx, &xty, 1.0 / p.sigma_y2, &current, rng)?;
        state.params.beta = [[th[0], th[1]], [th[2], th[3]]];
        state.params.lambda = [th[4], th[5]];
        Ok(())
    }

    /// `IG(shape, rate)` conditional of `sigma_y2`.
    pub fn sigma_y2_conditional(&self, state: &BinaryState) -> (f64, f64) {
        let d = self.data;
        let ss: f64 = (0..d.n())
            .map(|i| {
                let [s0, s1] = state.strata(d, i);
                (d.y[i] - state.params.outcome_mean(d.t[i] as usize, s0, s1)).powi(2)
            })
            .sum();
        (self.prior.sigma_y2.shape + 0.5 * d.n() as f64, self.prior.sigma_y2.rate + 0.5 * ss)
    }

    /// Step 3.
    pub fn update_sigma_y2<R: Rng + ?Sized>(&self, state: &mut BinaryState, rng: &mut R) -> Result<()> {
        let (shape, rate) = self.sigma_y2_conditional(state);
        state.params.sigma_y2 = sample_trunc_invgamma(shape, rate, 0.0, rng)?;
        Ok(())
    }

    /// Completed-data cell counts `[n00, n01, n10, n11]`.
    pub fn cell_counts(&self, state: &BinaryState) -> [usize; 4] {
        let mut c = [0; 4];
        for i in 0..self.data.n() {
            let [s0, s1] = state.strata(self.data, i);
            c[2 * (s0 as usize) + s1 as usize] += 1;
        }
        c
    }

    /// Step 4: with `p11` held, `(p10, p01, p00) / (1 - p11)` is Dirichlet.
    pub fn update_margins<R: Rng + ?Sized>(&self, state: &mut BinaryState, rng: &mut R) -> Result<()> {
        let [n00, n01, n10, _] = self.cell_counts(state).map(|c| c as f64);
        let w = sample_dirichlet(&[n10 + 1.0, n01 + 1.0, n00 + 1.0], rng)?;
        let p = &mut state.params;
        let rest = 1.0 - p.p11;
        p.p10 = w[0] * rest;
        p.p01 = w[1] * rest;
        p.p00 = w[2] * rest;
        Ok(())
    }

    /// Observed-data log-likelihood as a function of `p11` with the margins
    /// and outcome parameters of `params` held fixed.
    pub fn p11_log_likelihood(&self, params: &BinaryParams) -> impl Fn(f64) -> f64 + '_ {
        let d = self.data;
        let sd = params.sigma_y2.sqrt();
        // per unit: group 2t + s and the two component densities scaled by their max
        let units: Vec<(usize, f64, f64)> = (0..d.n())
            .map(|i| {
                let t = d.t[i] as usize;
                let s = d.s[i];
                let ln_c = |m: f64| {
                    let (s0, s1) = if t == 0 { (s, m) } else { (m, s) };
                    let z = (d.y[i] - params.outcome_mean(t, s0, s1)) / sd;
                    -0.5 * z * z
                };
                let (l1, l0) = (ln_c(1.0), ln_c(0.0));
                let m = l1.max(l0);
                (2 * t + s as usize, (l1 - m).exp(), (l0 - m).exp())
            })
            .collect();
        let margins = params.margins();
        let base = *params;
        move |x: f64| {
            let mut p = base;
            p.set_from_margins(margins, x);
            // (P(missing = 1), P(missing = 0)) per group
            let w = [
                (p.p01, p.p00),
                (p.p11, p.p10),
                (p.p10, p.p00),
                (p.p11, p.p01),
            ]
            .map(|(a, b)| (a.max(0.0), b.max(0.0)));
            let ll: f64 = units.iter().map(|&(g, c1, c0)| (w[g].0 * c1 + w[g].1 * c0).ln()).sum();
            if ll.is_nan() {
                f64::NEG_INFINITY
            } else {
                ll
            }
        }
    }

    /// Step 5: grid draw of `p11` over its feasible range under a flat prior.
    pub fn update_p11<R: Rng + ?Sized>(&self, state: &mut BinaryState, rng: &mut R) -> Result<()> {
        let margins = state.params.margins();
        let range = p11_bounds(margins)?;
        let xs = grid_points(range, self.config.grid_points);
        let ll = self.p11_log_likelihood(&state.params);
        let x = sample_concave_grid(&xs, ll, rng)?;
        state.params.set_from_margins(margins, x);
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut c: Vec<String> = [
            "beta00", "beta01", "beta10", "beta11", "lambda0", "lambda1", "sigma_y2", "p00", "p01",
            "p10", "p11",
        ]
        .map(String::from)
        .to_vec();
        c.extend(self.config.pce_strata.iter().map(|&u| pce_column_name(u)));
        c
    }

    fn record(&self, p: &BinaryParams, row: &mut Vec<f64>) {
        row.clear();
        row.extend(p.beta.iter().flatten());
        row.extend(p.lambda);
        row.extend([p.sigma_y2, p.p00, p.p01, p.p10, p.p11]);
        row.extend(self.config.pce_strata.iter().map(|&u| p.pce(u)));
    }

    /// One sweep of steps 1 to 5.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut BinaryState, rng: &mut R) -> Result<()> {
        let it = state.iteration + 1;
        let wrap = |step: &'static str| move |e: Error| Error::Chain { iteration: it, step, source: Box::new(e) };
        self.impute_missing(state, rng);
        self.update_theta_y(state, rng).map_err(wrap("theta_y"))?;
        self.update_sigma_y2(state, rng).map_err(wrap("sigma_y2"))?;
        self.update_margins(state, rng).map_err(wrap("margins"))?;
        if self.constraints.p11_fixed.is_none() {
            self.update_p11(state, rng).map_err(wrap("p11"))?;
        }
        state.iteration = it;
        Ok(())
    }

    pub fn run(&self) -> Result<PosteriorDraws> {
        let mut rng = RngStream::new(self.config.seed, self.config.stream);
        let mut state = self.initial_state()?;
        let mut draws = PosteriorDraws::new(self.column_names());
        draws.values.reserve(self.config.n_retained() * draws.columns.len());
        let mut row = vec![];
        for it in 1..=self.config.n_iter {
            self.step(&mut state, &mut rng)?;
            if self.config.keeps(it) {
                self.record(&state.params, &mut row);
                draws.push_row(&row);
            }
        }
        draws.config = serde_json::json!({
            "model": "binary",
            "prior": self.prior,
            "constraints": self.constraints,
            "chain": self.config,
        });
        Ok(draws)
    }
}

/// Draws a grid point with probability proportional to `exp(f)` for a
/// concave `f`, evaluating `f` at few points.
///
/// The mode and the range where `f` is within [`GRID_CUTOFF`] of it are found
/// by bisection, which concavity makes valid; points outside carry relative
/// weight below double precision. Within the range, points are proposed
/// uniformly and accepted with probability `exp(f - f_mode)`.
pub(crate) fn sample_concave_grid<R: Rng + ?Sized>(
    xs: &[f64],
    f: impl Fn(f64) -> f64,
    rng: &mut R,
) -> Result<f64> {
    let g = xs.len();
    let mut memo = vec![f64::NAN; g];
    let mut eval = |k: usize| {
        if memo[k].is_nan() {
            let v = f(xs[k]);
            memo[k] = if v.is_nan() { f64::NEG_INFINITY } else { v };
        }
        memo[k]
    };
    // first k with f(k) >= f(k + 1): forward differences are nonincreasing
    let (mut lo, mut hi) = (0, g - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if eval(mid) >= eval(mid + 1) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mode = lo;
    let top = eval(mode);
    if top == f64::NEG_INFINITY {
        // -inf plateaus defeat the bisection
        let full: Vec<f64> = (0..g).map(&mut eval).collect();
        return sample_from_log_weights(xs, &full, rng);
    }
    let cut = top - GRID_CUTOFF;
    // f is nondecreasing on [0, mode] and nonincreasing on [mode, g)
    let (mut a, mut b) = (0, mode);
    while a < b {
        let mid = (a + b) / 2;
        if eval(mid) >= cut {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    let left = a;
    let (mut a, mut b) = (mode, g - 1);
    while a < b {
        let mid = (a + b).div_ceil(2);
        if eval(mid) >= cut {
            a = mid;
        } else {
            b = mid - 1;
        }
    }
    let right = a;
    loop {
        let k = rng.random_range(left..=right);
        let u: f64 = rng.random();
        if u.ln() <= eval(k) - top {
            return Ok(xs[k]);
        }
    }
}

/// Runs one binary-model chain; see [`BinarySampler`].
pub fn gibbs_binary(
    data: &Dataset,
    prior: &PriorSpec,
    constraints: &ConstraintSet,
    config: &ChainConfig,
) -> Result<PosteriorDraws> {
    BinarySampler::new(data, prior.clone(), constraints.clone(), config.clone())?.run()
}

#[cfg(test)]
mod tests {
    use statrs::distribution::{Continuous, Normal};

    use super::*;

    fn truth() -> BinaryParams {
        BinaryParams::sign_study_truth()
    }

    fn short(seed: u64) -> ChainConfig {
        ChainConfig { n_iter: 1500, burn_in: 500, thin: 5, seed, ..Default::default() }
    }

    #[test]
    fn simulated_cell_frequencies() {
        let p = truth();
        let d = simulate_binary(&p, 100_000, &mut RngStream::new(3, 0)).unwrap();
        let (s0, s1) = (d.s0.as_ref().unwrap(), d.s1.as_ref().unwrap());
        let mut c = [0.0; 4];
        for i in 0..d.n() {
            c[2 * s0[i] as usize + s1[i] as usize] += 1.0 / d.n() as f64;
        }
        for (got, want) in c.iter().zip([p.p00, p.p01, p.p10, p.p11]) {
            assert!((got - want).abs() < 0.005, "{got} vs {want}");
        }
    }

    #[test]
    fn degenerate_cell_gives_one_stratum() {
        let mut p = truth();
        p.set_from_margins([1.0, 1.0], 1.0);
        let d = simulate_binary(&p, 500, &mut RngStream::new(1, 0)).unwrap();
        assert!(d.s0.unwrap().iter().chain(d.s1.as_ref().unwrap()).all(|&v| v == 1.0));
    }

    #[test]
    fn treated_outcome_mean_is_the_mixture_mean() {
        let p = truth();
        let d = simulate_binary(&p, 100_000, &mut RngStream::new(4, 0)).unwrap();
        let idx = d.arm_indices(1);
        let ys: Vec<f64> = idx.iter().map(|&i| d.y[i]).collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
        let [a, b] = p.margins();
        let want = 0.5 + 0.8 * a + 1.2 * b;
        assert!((m - want).abs() < 4.0 * (v / ys.len() as f64).sqrt(), "{m} vs {want}");
    }

    #[test]
    fn no_violation_density_is_a_single_normal() {
        let mut p = truth();
        p.beta[0][1] = 0.0;
        let sd = p.sigma_y2.sqrt();
        for &(y, s) in &[(0.3, 0u8), (2.2, 1), (-1.0, 1)] {
            let marg = if s == 1 { p.margins()[0] } else { 1.0 - p.margins()[0] };
            let want = marg * Normal::new(p.lambda[0] + p.beta[0][0] * s as f64, sd).unwrap().pdf(y);
            let got = marginal_pdf_binary(y, s, 0, &p);
            assert!((got - want).abs() < 1e-14 * want.max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn density_at_a_point_matches_simulation() {
        let p = truth();
        let n = 1_000_000;
        let d = simulate_binary(&p, n, &mut RngStream::new(5, 0)).unwrap();
        let h = 0.025;
        let arm0 = d.arm_indices(0);
        let hits = arm0
            .iter()
            .filter(|&&i| d.s[i] == 1.0 && (d.y[i] - 1.5).abs() < h)
            .count() as f64;
        let frac = hits / arm0.len() as f64;
        let est = frac / (2.0 * h);
        let se = (frac * (1.0 - frac) / arm0.len() as f64).sqrt() / (2.0 * h);
        let want = marginal_pdf_binary(1.5, 1, 0, &p);
        assert!((est - want).abs() < 3.0 * se, "box estimate {est} vs {want} (se {se})");
    }

    /// Adaptive Simpson quadrature to absolute tolerance `tol`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    fn random_params(rng: &mut RngStream) -> BinaryParams {
        let mut u = || rng.random::<f64>();
        let w: Vec<f64> = (0..4).map(|_| u() + 0.01).collect();
        let tot: f64 = w.iter().sum();
        BinaryParams {
            beta: [[4.0 * u() - 2.0, 4.0 * u() - 2.0], [4.0 * u() - 2.0, 4.0 * u() - 2.0]],
            lambda: [2.0 * u() - 1.0, 2.0 * u() - 1.0],
            sigma_y2: 0.05 + 2.0 * u(),
            p00: w[0] / tot,
            p01: w[1] / tot,
            p10: w[2] / tot,
            p11: w[3] / tot,
        }
    }

    #[test]
    fn density_normalizes() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let span = 14.0 * p.sigma_y2.sqrt();
            for t in 0..2u8 {
                let mut total = 0.0;
                for s in 0..2u8 {
                    let f = |y: f64| marginal_pdf_binary(y, s, t, &p);
                    total += simpson(&f, -5.0 - span, 5.0 + span, 1e-12);
                }
                assert!((total - 1.0).abs() < 1e-8, "arm {t}: {total} for {p:?}");
            }
        }
    }

    #[test]
    fn imputation_is_the_two_term_bayes_posterior() {
        let p = truth();
        let d = simulate_binary(&p, 200, &mut RngStream::new(6, 0)).unwrap();
        let s = BinarySampler::new(&d, PriorSpec::default(), ConstraintSet::default(), short(1)).unwrap();
        let sd = p.sigma_y2.sqrt();
        for i in 0..d.n() {
            let t = d.t[i] as usize;
            let obs = d.s[i];
            let joint = |m: f64| {
                let (s0, s1) = if t == 0 { (obs, m) } else { (m, obs) };
                let mu = p.lambda[t] + p.beta[t][0] * s0 + p.beta[t][1] * s1;
                p.cell(s0 as u8, s1 as u8) * Normal::new(mu, sd).unwrap().pdf(d.y[i])
            };
            let want = joint(1.0) / (joint(1.0) + joint(0.0));
            let got = s.impute_prob(&p, i);
            assert!((got - want).abs() < 1e-13, "unit {i}: {got} vs {want}");
        }
    }

    #[test]
    fn sigma_y2_conditional_is_conjugate() {
        let p = truth();
        let d = simulate_binary(&p, 300, &mut RngStream::new(7, 0)).unwrap();
        let s = BinarySampler::new(&d, PriorSpec::default(), ConstraintSet::default(), short(1)).unwrap();
        let mut st = s.initial_state().unwrap();
        st.params = p;
        st.s_missing = (0..d.n())
            .map(|i| if d.t[i] == 0 { d.s1.as_ref().unwrap()[i] } else { d.s0.as_ref().unwrap()[i] })
            .collect();
        let (shape, rate) = s.sigma_y2_conditional(&st);
        let mut rng = RngStream::new(8, 0);
        let reps = 100_000;
        let draws: Vec<f64> = (0..reps)
            .map(|_| {
                s.update_sigma_y2(&mut st, &mut rng).unwrap();
                st.params.sigma_y2
            })
            .collect();
        let m = draws.iter().sum::<f64>() / reps as f64;
        let want = rate / (shape - 1.0);
        let var = want * want / (shape - 2.0);
        assert!((m - want).abs() < 3.0 * (var / reps as f64).sqrt(), "{m} vs {want}");
    }

    #[test]
    fn margins_update_is_dirichlet() {
        let p = truth();
        let d = simulate_binary(&p, 400, &mut RngStream::new(9, 0)).unwrap();
        let s = BinarySampler::new(&d, PriorSpec::default(), ConstraintSet::default(), short(1)).unwrap();
        let mut st = s.initial_state().unwrap();
        st.params = p;
        let [n00, n01, n10, _] = s.cell_counts(&st).map(|c| c as f64);
        let a0 = n00 + n01 + n10 + 3.0;
        let mut rng = RngStream::new(10, 0);
        let reps = 50_000;
        let mut m10 = 0.0;
        for _ in 0..reps {
            s.update_margins(&mut st, &mut rng).unwrap();
            assert_eq!(st.params.p11, p.p11);
            m10 += st.params.p10 / reps as f64;
        }
        let e = (n10 + 1.0) / a0;
        let sd = (e * (1.0 - e) / (a0 + 1.0)).sqrt() * (1.0 - p.p11);
        assert!((m10 - e * (1.0 - p.p11)).abs() < 4.0 * sd / (reps as f64).sqrt());
    }

    #[test]
    fn concave_grid_draws_match_exact_weights() {
        let xs = grid_points(Interval::new(0.0, 1.0), 512);
        let f = |x: f64| -((x - 0.37) / 0.03).powi(2) / 2.0 + 2.0 * x;
        let w: Vec<f64> = xs.iter().map(|&x| f(x).exp()).collect();
        let tot: f64 = w.iter().sum();
        let mean: f64 = xs.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>() / tot;
        let var: f64 = xs.iter().zip(&w).map(|(x, wi)| (x - mean).powi(2) * wi).sum::<f64>() / tot;
        let mut rng = RngStream::new(12, 0);
        let reps = 40_000;
        let draws: Vec<f64> = (0..reps).map(|_| sample_concave_grid(&xs, f, &mut rng).unwrap()).collect();
        let m = draws.iter().sum::<f64>() / reps as f64;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((m - mean).abs() < 4.0 * (var / reps as f64).sqrt(), "{m} vs {mean}");
        assert!((v / var - 1.0).abs() < 0.05, "{v} vs {var}");
        // mode at an end of the grid
        let edge = |x: f64| -50.0 * x;
        let d = sample_concave_grid(&xs, edge, &mut rng).unwrap();
        assert!(d < 0.2);
    }

    #[test]
    fn empty_p11_range_is_an_error() {
        assert!(matches!(p11_bounds([1.0, 0.5]), Err(Error::EmptyRegion(_))));
        let r = p11_bounds([0.6, 0.7]).unwrap();
        assert!((r.lo - 0.3).abs() < 1e-15 && (r.hi - 0.6).abs() < 1e-15);
    }

    #[test]
    fn sign_constraint_holds_and_runs_repeat() {
        let p = truth();
        let d = simulate_binary(&p, 600, &mut RngStream::new(13, 0)).unwrap();
        let c = ConstraintSet::from_tokens("sign_positive").unwrap();
        let a = gibbs_binary(&d, &PriorSpec::default(), &c, &short(2)).unwrap();
        for name in ["beta01", "beta10"] {
            assert!(a.column(name).unwrap().iter().all(|&v| v > 0.0), "{name}");
        }
        let b = gibbs_binary(&d, &PriorSpec::default(), &c, &short(2)).unwrap();
        assert_eq!(a.values, b.values);
        for r in 0..a.n_draws() {
            let row = a.row(r);
            let cells: f64 = row[7..11].iter().sum();
            assert!((cells - 1.0).abs() < 1e-12 && row[7..11].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn fixed_p11_is_held() {
        let d = simulate_binary(&truth(), 600, &mut RngStream::new(14, 0)).unwrap();
        let c = ConstraintSet { p11_fixed: Some(0.4), ..Default::default() };
        let dr = gibbs_binary(&d, &PriorSpec::default(), &c, &short(3)).unwrap();
        assert!(dr.column("p11").unwrap().iter().all(|&v| v == 0.4));
    }

    #[test]
    fn rejects_continuous_or_covariate_data() {
        let mut d = simulate_binary(&truth(), 100, &mut RngStream::new(15, 0)).unwrap();
        d.s[0] = 0.5;
        let e = BinarySampler::new(&d, PriorSpec::default(), ConstraintSet::default(), short(1));
        assert!(matches!(e, Err(Error::Data(_))));
        let d = simulate_binary(&truth(), 100, &mut RngStream::new(15, 0)).unwrap();
        let c = ConstraintSet { dominant_effect: true, ..Default::default() };
        assert!(matches!(BinarySampler::new(&d, PriorSpec::default(), c, short(1)), Err(Error::Config(_))));
    }

    #[test]
    fn identical_parameters_are_not_separated() {
        let p = truth();
        let grid: Vec<f64> = (0..200).map(|k| -4.0 + 0.05 * k as f64).collect();
        assert_eq!(sign_separation_check(&p, &p, &grid), 0.0);
    }
}
