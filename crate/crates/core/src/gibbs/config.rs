use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probkit::Interval;
use crate::psmodel::PrincipalStratum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalPrior {
    pub mean: f64,
    pub var: f64,
}

impl NormalPrior {
    pub const VAGUE: NormalPrior = NormalPrior { mean: 0.0, var: 1e5 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl InvGammaPrior {
    pub const VAGUE: InvGammaPrior = InvGammaPrior { shape: 1e-3, rate: 1e-3 };
}

/// Independent conjugate priors. Coefficient priors are per coordinate;
/// `gamma` and `alpha` priors apply to every covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// `beta[t][k]`, matching [`JointParams::beta`](crate::psmodel::JointParams).
    pub beta: [[NormalPrior; 2]; 2],
    pub lambda: [NormalPrior; 2],
    pub gamma: NormalPrior,
    pub alpha: NormalPrior,
    pub phi: [NormalPrior; 2],
    pub sigma_y2: InvGammaPrior,
    /// Variances of `S(0)`, `S(1)`; with equal strata variances only the first is used.
    pub sigma2_s: [InvGammaPrior; 2],
    /// Flat prior support for `rho`.
    pub rho: Interval,
}

impl Default for PriorSpec {
    fn default() -> Self {
        let v = NormalPrior::VAGUE;
        Self {
            beta: [[v; 2]; 2],
            lambda: [v; 2],
            gamma: v,
            alpha: v,
            phi: [v; 2],
            sigma_y2: InvGammaPrior::VAGUE,
            sigma2_s: [InvGammaPrior::VAGUE; 2],
            rho: Interval::new(0.0, 0.95),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let normals = self
            .beta
            .iter()
            .flatten()
            .chain(&self.lambda)
            .chain(&self.phi)
            .chain([&self.gamma, &self.alpha]);
        for p in normals {
            // zero variance pins the coordinate at its mean
            if !(p.var >= 0.0 && p.var.is_finite() && p.mean.is_finite()) {
                return Err(Error::Config(format!("invalid normal prior {p:?}")));
            }
        }
        for g in [&self.sigma_y2, &self.sigma2_s[0], &self.sigma2_s[1]] {
            if !(g.shape > 0.0 && g.rate > 0.0) {
                return Err(Error::Config(format!("inverse-gamma prior needs shape, rate > 0, got {g:?}")));
            }
        }
        if !(self.rho.lo > -1.0 && self.rho.hi < 1.0 && self.rho.lo < self.rho.hi) {
            return Err(Error::Config(format!(
                "rho prior interval must be a nonempty subset of (-1, 1), got [{}, {}]",
                self.rho.lo, self.rho.hi
            )));
        }
        Ok(())
    }
}

/// Which statistic of the per-arm plug-in ratios sets the dominant-effect floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorRule {
    Min,
    /// Matches the exact equivalence between the dominant-effect assumption
    /// and a lower bound on `sigma_y2`.
    #[default]
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSet {
    /// `beta01 = beta10 = 0`.
    pub pi: bool,
    pub zero_beta01: bool,
    /// `beta00 = beta10`.
    pub shared_baseline: bool,
    /// Both arm-0 coefficients share the sign of the observed-data arm-0 slope.
    pub same_sign_arm0: bool,
    pub same_sign_arm1: bool,
    /// `beta01 > 0` and `beta10 > 0`.
    pub sign_positive: bool,
    pub dominant_effect: bool,
    /// Generic `sigma_y2` floor as a fraction of `min_t Var(Y | T = t)`.
    pub sigma_y2_floor_frac: f64,
    pub dominant_floor_factor: f64,
    pub dominant_floor_rule: FloorRule,
    pub rho_fixed: Option<f64>,
    pub equal_sigma_s: bool,
    /// Known `P(S(0) = 1, S(1) = 1)` for the binary model; sampled when absent.
    pub p11_fixed: Option<f64>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            pi: false,
            zero_beta01: false,
            shared_baseline: false,
            same_sign_arm0: false,
            same_sign_arm1: false,
            sign_positive: false,
            dominant_effect: false,
            sigma_y2_floor_frac: 0.05,
            dominant_floor_factor: 0.9,
            dominant_floor_rule: FloorRule::Max,
            rho_fixed: None,
            equal_sigma_s: false,
            p11_fixed: None,
        }
    }
}

impl ConstraintSet {
    pub const TOKENS: [&'static str; 10] = [
        "none",
        "pi",
        "zero_beta01",
        "shared_baseline",
        "two",
        "dominant",
        "same_sign_arm0",
        "same_sign_arm1",
        "same_sign",
        "sign_positive",
    ];

    /// Builds a set from comma-separated flag names; `two` is
    /// `zero_beta01 + shared_baseline` and `same_sign` covers both arms.
    pub fn from_tokens(spec: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_tokens(spec)?;
        Ok(c)
    }

    pub fn apply_tokens(&mut self, spec: &str) -> Result<()> {
        for tok in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match tok {
                "none" => {}
                "pi" => self.pi = true,
                "zero_beta01" => self.zero_beta01 = true,
                "shared_baseline" => self.shared_baseline = true,
                "two" => {
                    self.zero_beta01 = true;
                    self.shared_baseline = true;
                }
                "dominant" | "dominant_effect" => self.dominant_effect = true,
                "same_sign_arm0" => self.same_sign_arm0 = true,
                "same_sign_arm1" => self.same_sign_arm1 = true,
                "same_sign" => {
                    self.same_sign_arm0 = true;
                    self.same_sign_arm1 = true;
                }
                "sign_positive" => self.sign_positive = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown constraint `{other}`; valid: {}",
                        Self::TOKENS.join(", ")
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_y2_floor_frac >= 0.0 && self.sigma_y2_floor_frac.is_finite()) {
            return Err(Error::Config("sigma_y2_floor_frac must be finite and >= 0".into()));
        }
        if !(self.dominant_floor_factor > 0.0 && self.dominant_floor_factor.is_finite()) {
            return Err(Error::Config("dominant_floor_factor must be positive".into()));
        }
        if let Some(r) = self.rho_fixed {
            if !(r.abs() < 1.0) {
                return Err(Error::Config(format!("rho_fixed must lie in (-1, 1), got {r}")));
            }
        }
        if let Some(p) = self.p11_fixed {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("p11_fixed must lie in [0, 1], got {p}")));
            }
        }
        if self.pi && (self.same_sign_arm0 || self.same_sign_arm1 || self.sign_positive) {
            return Err(Error::Config(
                "pi fixes the violation coefficients at 0; sign constraints on them cannot hold".into(),
            ));
        }
        if self.zero_beta01 && (self.same_sign_arm0 || self.sign_positive) {
            return Err(Error::Config(
                "zero_beta01 conflicts with a strict sign constraint on beta01".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub stream: u64,
    pub rho_proposal_sd: f64,
    /// Random-walk sd for `ln sigma_s²` when the strata variances differ.
    pub sigma_s_proposal_sd: f64,
    /// Strata at which each retained draw evaluates the principal causal effect.
    pub pce_strata: Vec<PrincipalStratum>,
    /// Grid resolution for the binary-model `p11` update.
    pub grid_points: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 25_000,
            burn_in: 5_000,
            thin: 30,
            seed: 0,
            stream: 0,
            rho_proposal_sd: 0.05,
            sigma_s_proposal_sd: 0.1,
            pce_strata: vec![],
            grid_points: 512,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn_in ({}) must be below n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.rho_proposal_sd > 0.0 && self.sigma_s_proposal_sd > 0.0) {
            return Err(Error::Config("proposal sds must be positive".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        Ok(())
    }

    /// Retained draws: `(n_iter - burn_in) / thin`.
    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    /// Whether the 1-based iteration `it` is kept.
    pub fn keeps(&self, it: usize) -> bool {
        it > self.burn_in && (it - self.burn_in) % self.thin == 0
    }
}
