//! Closed-form partial-identification regions for the violation coefficients
//! `beta01` and `beta10` at a given strata correlation.
//!
//! Every region here is the image of an interval of admissible outcome
//! variances `sigma_y2` under the identified-set solution: the cross-arm
//! coefficient of arm `t` has magnitude
//! `sqrt((V_t - sigma_y2) / ((1 - rho²) Var S(1-t)))`, decreasing in `sigma_y2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probkit::Interval;
use crate::psmodel::{pce_from_marginal, solve_joint, Dataset, MarginalParams, PrincipalStratum, Sign};

/// Plug-in or population moments of the observed `(Y, S) | T` distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedMoments {
    /// `Var(Y | S, T = t)`.
    pub var_y_given_s: [f64; 2],
    pub var_s: [f64; 2],
    pub var_y: [f64; 2],
    pub cor_ys: [f64; 2],
    /// Sign of the within-arm slope of `Y` on `S`, the estimate of `sign(beta_tt)`.
    pub sign_beta_tt: [Sign; 2],
    /// t-statistics of those slopes; absent for population moments.
    pub slope_t_stat: Option<[f64; 2]>,
}

impl ObservedMoments {
    pub fn from_marginal(marg: &MarginalParams) -> Self {
        let mut m = ObservedMoments {
            var_y_given_s: [0.0; 2],
            var_s: [0.0; 2],
            var_y: [0.0; 2],
            cor_ys: [0.0; 2],
            sign_beta_tt: [Sign::Pos; 2],
            slope_t_stat: None,
        };
        for t in 0..2 {
            m.var_y_given_s[t] = marg.cond_var(t);
            m.var_s[t] = marg.sigma_s[t].powi(2);
            m.var_y[t] = marg.zeta[t];
            m.cor_ys[t] = marg.psi[t] / marg.zeta[t].sqrt();
            m.sign_beta_tt[t] = Sign::of(marg.psi[t]);
        }
        m
    }

    /// True when the roles of the arms are exchanged relative to the
    /// `V1 >= V0` orientation.
    pub fn arms_swapped(&self) -> bool {
        self.var_y_given_s[1] < self.var_y_given_s[0]
    }
}

/// Per-arm sample moments of covariate-free data.
pub fn moments_from_data(data: &Dataset) -> Result<ObservedMoments> {
    if data.p() > 0 {
        return Err(Error::Data(
            "moments need covariate-free data; residualize first".into(),
        ));
    }
    data.require_arms(3)?;
    let mut m = ObservedMoments {
        var_y_given_s: [0.0; 2],
        var_s: [0.0; 2],
        var_y: [0.0; 2],
        cor_ys: [0.0; 2],
        sign_beta_tt: [Sign::Pos; 2],
        slope_t_stat: Some([0.0; 2]),
    };
    let mut tstats = [0.0; 2];
    for arm in 0..2u8 {
        let t = arm as usize;
        let idx = data.arm_indices(arm);
        let n = idx.len() as f64;
        let my = idx.iter().map(|&i| data.y[i]).sum::<f64>() / n;
        let ms = idx.iter().map(|&i| data.s[i]).sum::<f64>() / n;
        let (mut syy, mut sss, mut sys) = (0.0, 0.0, 0.0);
        for &i in &idx {
            let (dy, ds) = (data.y[i] - my, data.s[i] - ms);
            syy += dy * dy;
            sss += ds * ds;
            sys += dy * ds;
        }
        if syy <= 0.0 {
            return Err(Error::Data(format!("outcome is constant in arm t={t}")));
        }
        if sss <= 0.0 {
            return Err(Error::Data(format!("intermediate is constant in arm t={t}")));
        }
        let vy = syy / (n - 1.0);
        let vs = sss / (n - 1.0);
        let cor = sys / (syy * sss).sqrt();
        let slope = sys / sss;
        let rss = syy - sys * sys / sss;
        let se = (rss / (n - 2.0) / sss).sqrt();
        m.var_y[t] = vy;
        m.var_s[t] = vs;
        m.cor_ys[t] = cor;
        m.var_y_given_s[t] = vy * (1.0 - cor * cor);
        m.sign_beta_tt[t] = Sign::of(slope);
        tstats[t] = if se > 0.0 { slope / se } else { f64::MAX.copysign(slope) };
    }
    m.slope_t_stat = Some(tstats);
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    None,
    SameSign,
    Dominant,
}

impl Assumption {
    pub const ALL: [Assumption; 3] = [Assumption::None, Assumption::SameSign, Assumption::Dominant];

    pub fn name(self) -> &'static str {
        match self {
            Assumption::None => "none",
            Assumption::SameSign => "same_sign",
            Assumption::Dominant => "dominant",
        }
    }
}

impl std::str::FromStr for Assumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Assumption::None),
            "same_sign" => Ok(Assumption::SameSign),
            "dominant" => Ok(Assumption::Dominant),
            other => Err(Error::Config(format!(
                "unknown assumption `{other}`; expected none, same_sign or dominant"
            ))),
        }
    }
}

/// Union of one or two disjoint intervals, with the right side of the
/// coupling constraint between the two coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PirRegion {
    pub intervals: Vec<Interval>,
    pub constraint_rhs: f64,
}

impl PirRegion {
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        self.intervals
            .iter()
            .any(|iv| iv.lo - tol <= x && x <= iv.hi + tol)
    }

    pub fn hull(&self) -> Interval {
        Interval::new(
            self.intervals.first().map_or(f64::NAN, |iv| iv.lo),
            self.intervals.last().map_or(f64::NAN, |iv| iv.hi),
        )
    }

    /// Largest magnitude in the region.
    pub fn outer(&self) -> f64 {
        let h = self.hull();
        h.lo.abs().max(h.hi.abs())
    }

    /// Smallest magnitude in the region.
    pub fn inner(&self) -> f64 {
        self.intervals
            .iter()
            .map(|iv| {
                if iv.contains(0.0) {
                    0.0
                } else {
                    iv.lo.abs().min(iv.hi.abs())
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Every interval is contained in some interval of `other`.
    pub fn is_subset_of(&self, other: &PirRegion, tol: f64) -> bool {
        self.intervals
            .iter()
            .all(|a| other.intervals.iter().any(|b| a.is_subset_of(b, tol)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PirPair {
    pub beta01: PirRegion,
    pub beta10: PirRegion,
    /// `Var(Y|S,T=1) < Var(Y|S,T=0)`, so the wide and the gapped regions
    /// trade places.
    pub arms_swapped: bool,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("rho must lie in (-1, 1), got {rho}")))
    }
}

/// Right side of the coupling constraint, in the stated `V1 - V0` orientation.
pub fn constraint_rhs(m: &ObservedMoments, rho: f64) -> f64 {
    (m.var_y_given_s[1] - m.var_y_given_s[0]) / (1.0 - rho * rho)
}

/// Magnitude of the cross-arm coefficient of arm `t` at outcome variance `sigma_y2`.
pub fn cross_magnitude(m: &ObservedMoments, rho: f64, t: usize, sigma_y2: f64) -> f64 {
    let k = (1.0 - rho * rho) * m.var_s[1 - t];
    ((m.var_y_given_s[t] - sigma_y2).max(0.0) / k).sqrt()
}

/// Admissible outcome variances: `[0, min V_t]` with no assumption,
/// `[max V_t²/Var(Y|T=t), min V_t]` under the dominant-effect assumption.
pub fn sigma_y2_bounds(m: &ObservedMoments, assumption: Assumption) -> Result<Interval> {
    let v = m.var_y_given_s;
    let hi = v[0].min(v[1]);
    let lo = match assumption {
        Assumption::Dominant => {
            let f = [v[0] * v[0] / m.var_y[0], v[1] * v[1] / m.var_y[1]];
            f[0].max(f[1])
        }
        _ => 0.0,
    };
    if lo > hi {
        let binding = if v[0] * v[0] / m.var_y[0] >= v[1] * v[1] / m.var_y[1] { 0 } else { 1 };
        return Err(Error::AssumptionRefuted(format!(
            "dominant observed effect requires Var(Y|S,T={binding})^2/Var(Y|T={binding}) = {lo} \
             <= min_t Var(Y|S,T=t) = {hi}"
        )));
    }
    Ok(Interval::new(lo, hi))
}

fn arm_region(
    m: &ObservedMoments,
    rho: f64,
    t: usize,
    bounds: Interval,
    sign: Option<Sign>,
) -> PirRegion {
    let outer = cross_magnitude(m, rho, t, bounds.lo);
    let inner = cross_magnitude(m, rho, t, bounds.hi);
    let intervals = match sign {
        Some(Sign::Pos) => vec![Interval::new(inner, outer)],
        Some(Sign::Neg) => vec![Interval::new(-outer, -inner)],
        None if inner == 0.0 => vec![Interval::new(-outer, outer)],
        None => vec![Interval::new(-outer, -inner), Interval::new(inner, outer)],
    };
    PirRegion {
        intervals,
        constraint_rhs: constraint_rhs(m, rho),
    }
}

fn check_moments(m: &ObservedMoments) -> Result<()> {
    for t in 0..2 {
        if !(m.var_y_given_s[t] >= 0.0 && m.var_s[t] > 0.0 && m.var_y[t] > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "arm {t}: variances must be positive"
            )));
        }
    }
    Ok(())
}

fn regions(m: &ObservedMoments, rho: f64, assumption: Assumption) -> Result<PirPair> {
    check_rho(rho)?;
    check_moments(m)?;
    let bounds = sigma_y2_bounds(m, assumption)?;
    let signs = match assumption {
        // the cross-arm coefficient shares the sign of the same arm's own coefficient
        Assumption::SameSign => [Some(m.sign_beta_tt[0]), Some(m.sign_beta_tt[1])],
        _ => [None, None],
    };
    Ok(PirPair {
        beta01: arm_region(m, rho, 0, bounds, signs[0]),
        beta10: arm_region(m, rho, 1, bounds, signs[1]),
        arms_swapped: m.arms_swapped(),
    })
}

/// Regions with no assumption beyond the model.
pub fn pir_unconstrained(m: &ObservedMoments, rho: f64) -> Result<PirPair> {
    regions(m, rho, Assumption::None)
}

/// Regions when each arm's two intermediate effects share a sign.
pub fn pir_same_sign(m: &ObservedMoments, rho: f64) -> Result<PirPair> {
    regions(m, rho, Assumption::SameSign)
}

/// Regions under the dominant observed effect assumption. Errors when the
/// moments refute the assumption.
pub fn pir_dominant(m: &ObservedMoments, rho: f64) -> Result<PirPair> {
    regions(m, rho, Assumption::Dominant)
}

pub fn pir(m: &ObservedMoments, rho: f64, assumption: Assumption) -> Result<PirPair> {
    regions(m, rho, assumption)
}

/// Residual of the coupling constraint; zero exactly on the identified set.
pub fn eq4_residual(beta01: f64, beta10: f64, m: &ObservedMoments, rho: f64) -> f64 {
    m.var_s[0] * beta10 * beta10 - m.var_s[1] * beta01 * beta01 - constraint_rhs(m, rho)
}

/// Sign pairs `[sign beta01, sign beta10]` admitted by an assumption.
pub fn admissible_signs(m: &ObservedMoments, assumption: Assumption) -> Vec<[Sign; 2]> {
    match assumption {
        Assumption::SameSign => vec![m.sign_beta_tt],
        _ => vec![
            [Sign::Pos, Sign::Pos],
            [Sign::Pos, Sign::Neg],
            [Sign::Neg, Sign::Pos],
            [Sign::Neg, Sign::Neg],
        ],
    }
}

/// One point of the identified set: outcome variance and the two coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub sigma_y2: f64,
    pub beta01: f64,
    pub beta10: f64,
}

/// Points of the identified set on an even grid of `n_grid` outcome variances
/// spanning the admissible interval, for every admissible sign pair.
pub fn sweep(
    m: &ObservedMoments,
    rho: f64,
    assumption: Assumption,
    n_grid: usize,
) -> Result<Vec<SweepPoint>> {
    check_rho(rho)?;
    let b = sigma_y2_bounds(m, assumption)?;
    let n_grid = n_grid.max(2);
    let mut out = Vec::with_capacity(n_grid * 4);
    for signs in admissible_signs(m, assumption) {
        for k in 0..n_grid {
            let s2 = b.lo + (b.hi - b.lo) * k as f64 / (n_grid - 1) as f64;
            out.push(SweepPoint {
                sigma_y2: s2,
                beta01: signs[0].value() * cross_magnitude(m, rho, 0, s2),
                beta10: signs[1].value() * cross_magnitude(m, rho, 1, s2),
            });
        }
    }
    Ok(out)
}

/// Range of the principal causal effect at `u` over the identified set.
pub fn pce_band(
    m: &ObservedMoments,
    marg: &MarginalParams,
    rho: f64,
    u: PrincipalStratum,
    assumption: Assumption,
) -> Result<Interval> {
    pce_band_with_grid(m, marg, rho, u, assumption, 10_000)
}

pub fn pce_band_with_grid(
    m: &ObservedMoments,
    marg: &MarginalParams,
    rho: f64,
    u: PrincipalStratum,
    assumption: Assumption,
    n_grid: usize,
) -> Result<Interval> {
    let v_max = marg.cond_var(0).min(marg.cond_var(1));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in sweep(m, rho, assumption, n_grid)? {
        let signs = [Sign::of(p.beta01), Sign::of(p.beta10)];
        let j = solve_joint(marg, rho, p.sigma_y2.clamp(0.0, v_max), signs)?;
        let v = pce_from_marginal(marg, rho, j.beta01(), j.beta10(), u);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo <= hi) {
        return Err(Error::EmptyRegion("no admissible point for the PCE band".into()));
    }
    Ok(Interval::new(lo, hi))
}

/// Serializable region report for one assumption and correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub assumption: Assumption,
    pub rho: f64,
    pub beta01: RegionIntervals,
    pub beta10: RegionIntervals,
    pub sigma_y2_bounds: Interval,
    pub constraint_rhs: f64,
    pub arms_swapped: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pce_bands: Vec<PceBand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionIntervals {
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceBand {
    pub stratum: PrincipalStratum,
    pub band: Interval,
}

pub fn region_report(m: &ObservedMoments, rho: f64, assumption: Assumption) -> Result<RegionReport> {
    let pair = pir(m, rho, assumption)?;
    Ok(RegionReport {
        assumption,
        rho,
        beta01: RegionIntervals {
            intervals: pair.beta01.intervals,
        },
        beta10: RegionIntervals {
            intervals: pair.beta10.intervals,
        },
        sigma_y2_bounds: sigma_y2_bounds(m, assumption)?,
        constraint_rhs: constraint_rhs(m, rho),
        arms_swapped: pair.arms_swapped,
        pce_bands: vec![],
    })
}
