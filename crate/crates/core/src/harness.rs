//! Simulation studies: repeated simulate-and-fit runs with coverage and
//! width summaries, the `rho` posterior across sample sizes, and the rate at
//! which its posterior variance shrinks.
//!
//! Every chain has its own random stream. Replicate `r` draws its data from
//! stream `r << 8` and fits regime `k` on stream `(r << 8) | (k + 1)`, all
//! under the base seed, so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymvar::{posterior_var_approx, rate_fit, AsymVarInputs, PosteriorVar};
use crate::binary::{gibbs_binary, simulate_binary, BinaryParams};
use crate::error::{Error, Result};
use crate::gibbs::{
    pce_column_name, quantile_type7, run_chain, ChainConfig, ColumnSummary, ConstraintSet,
    PosteriorDraws, PriorSpec,
};
use crate::probkit::RngStream;
use crate::psmodel::{pce_true, simulate, Dataset, JointParams, PrincipalStratum};

/// Largest share of failed chains a study tolerates.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

pub fn data_stream(replicate: usize) -> u64 {
    (replicate as u64) << 8
}

pub fn chain_stream(replicate: usize, regime: usize) -> u64 {
    data_stream(replicate) | (regime as u64 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Table1,
    RhoIdent,
    BinarySign,
    BinaryP11,
    RateStudy,
    Custom,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [
        ScenarioId::Table1,
        ScenarioId::RhoIdent,
        ScenarioId::BinarySign,
        ScenarioId::BinaryP11,
        ScenarioId::RateStudy,
        ScenarioId::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Table1 => "table1",
            ScenarioId::RhoIdent => "rho_ident",
            ScenarioId::BinarySign => "binary_sign",
            ScenarioId::BinaryP11 => "binary_p11",
            ScenarioId::RateStudy => "rate_study",
            ScenarioId::Custom => "custom",
        }
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|id| id.name()).collect();
            Error::Config(format!("unknown scenario `{s}`; valid: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Continuous(JointParams),
    Binary(BinaryParams),
}

impl Truth {
    pub fn validate(&self) -> Result<()> {
        match self {
            Truth::Continuous(p) => p.validate(),
            Truth::Binary(p) => p.validate(),
        }
    }

    pub fn pce(&self, u: PrincipalStratum) -> f64 {
        match self {
            Truth::Continuous(p) => pce_true(p, u),
            Truth::Binary(p) => p.pce(u),
        }
    }

    /// Simulates `n` units; covariates, when the truth has any, are iid standard normal.
    pub fn simulate(&self, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
        let mut rng = RngStream::new(seed, stream);
        match self {
            Truth::Continuous(p) => {
                let k = p.n_covariates();
                let x = (k > 0).then(|| DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal)));
                simulate(p, n, x, &mut rng)
            }
            Truth::Binary(p) => simulate_binary(p, n, &mut rng),
        }
    }

    pub fn fit(
        &self,
        data: &Dataset,
        prior: &PriorSpec,
        constraints: &ConstraintSet,
        config: &ChainConfig,
    ) -> Result<PosteriorDraws> {
        match self {
            Truth::Continuous(_) => run_chain(data, prior, constraints, config),
            Truth::Binary(_) => gibbs_binary(data, prior, constraints, config),
        }
    }
}

/// A named constraint set fitted to every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub name: String,
    #[serde(default)]
    pub constraints: ConstraintSet,
}

impl Regime {
    pub fn new(name: &str, constraints: ConstraintSet) -> Self {
        Self { name: name.into(), constraints }
    }

    /// `base` with the comma-separated constraint tokens applied.
    pub fn from_tokens(name: &str, tokens: &str, base: &ConstraintSet) -> Result<Self> {
        let mut c = base.clone();
        c.apply_tokens(tokens)?;
        Ok(Self::new(name, c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub truth: Truth,
    /// Units per replicate.
    pub n: usize,
    /// Sample sizes for the `rho` studies, one dataset each.
    pub n_ladder: Vec<usize>,
    pub n_replicates: usize,
    pub regimes: Vec<Regime>,
    /// Strata whose principal causal effects are summarized.
    pub strata: Vec<PrincipalStratum>,
    pub prior: PriorSpec,
    pub chain: ChainConfig,
    pub base_seed: u64,
    /// Persist every chain's draws under `{dir}/{scenario}/{regime}/rep{k}.csv`.
    pub draws_dir: Option<PathBuf>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::table1()
    }
}

fn strata(pairs: &[(f64, f64)]) -> Vec<PrincipalStratum> {
    pairs.iter().map(|&(a, b)| PrincipalStratum::new(a, b)).collect()
}

impl ScenarioSpec {
    /// Coverage study with `rho` known: no assumption, the dominant-effect
    /// floor, and same-sign coefficients in the treated arm.
    pub fn table1() -> Self {
        let base = ConstraintSet { rho_fixed: Some(0.75), equal_sigma_s: true, ..Default::default() };
        let regime = |name: &str, tokens: &str| Regime::from_tokens(name, tokens, &base).expect("known tokens");
        Self {
            id: ScenarioId::Table1,
            truth: Truth::Continuous(JointParams::table1_truth()),
            n: 300,
            n_ladder: vec![],
            n_replicates: 50,
            regimes: vec![
                regime("none", "none"),
                regime("dominant", "dominant"),
                regime("same_sign", "same_sign_arm1"),
            ],
            strata: strata(&[(0.89, 0.18), (0.89, 0.35), (0.89, 0.52)]),
            prior: PriorSpec::default(),
            chain: ChainConfig::default(),
            base_seed: 20_240_601,
            draws_dir: None,
        }
    }

    /// `rho` posterior with no, one and two identifying constraints.
    pub fn rho_ident() -> Self {
        let base = ConstraintSet { equal_sigma_s: true, ..Default::default() };
        let regime = |name: &str, tokens: &str| Regime::from_tokens(name, tokens, &base).expect("known tokens");
        Self {
            id: ScenarioId::RhoIdent,
            truth: Truth::Continuous(JointParams::rho_study_truth()),
            n: 1200,
            n_ladder: vec![300, 600, 1200],
            n_replicates: 1,
            regimes: vec![regime("none", "none"), regime("one", "zero_beta01"), regime("two", "two")],
            strata: vec![],
            prior: PriorSpec::default(),
            chain: ChainConfig::default(),
            base_seed: 20_240_602,
            draws_dir: None,
        }
    }

    /// Posterior variance of `rho` across a sample-size ladder under two constraints.
    pub fn rate_study() -> Self {
        let base = ConstraintSet { equal_sigma_s: true, ..Default::default() };
        Self {
            id: ScenarioId::RateStudy,
            n_ladder: vec![300, 600, 1200, 2400, 4800],
            regimes: vec![Regime::from_tokens("two", "two", &base).expect("known tokens")],
            base_seed: 20_240_603,
            ..Self::rho_ident()
        }
    }

    fn binary(id: ScenarioId, n: usize, regimes: Vec<Regime>, base_seed: u64) -> Self {
        Self {
            id,
            truth: Truth::Binary(BinaryParams::sign_study_truth()),
            n,
            n_ladder: vec![],
            n_replicates: 1,
            regimes,
            strata: strata(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]),
            prior: PriorSpec::default(),
            chain: ChainConfig { n_iter: 8000, burn_in: 2000, thin: 20, ..Default::default() },
            base_seed,
            draws_dir: None,
        }
    }

    /// Binary intermediate with `p11` known, with and without the positive-sign constraint.
    pub fn binary_sign() -> Self {
        let base = ConstraintSet { p11_fixed: Some(0.4), ..Default::default() };
        let regimes = vec![
            Regime::from_tokens("sign_positive", "sign_positive", &base).expect("known tokens"),
            Regime::new("none", base.clone()),
        ];
        Self::binary(ScenarioId::BinarySign, 5000, regimes, 20_240_604)
    }

    /// Binary intermediate with `p11` sampled.
    pub fn binary_p11() -> Self {
        let regimes = vec![Regime::from_tokens("sign_positive", "sign_positive", &ConstraintSet::default())
            .expect("known tokens")];
        Self::binary(ScenarioId::BinaryP11, 10_000, regimes, 20_240_605)
    }

    pub fn preset(id: ScenarioId) -> Self {
        match id {
            ScenarioId::Table1 | ScenarioId::Custom => Self { id, ..Self::table1() },
            ScenarioId::RhoIdent => Self::rho_ident(),
            ScenarioId::BinarySign => Self::binary_sign(),
            ScenarioId::BinaryP11 => Self::binary_p11(),
            ScenarioId::RateStudy => Self::rate_study(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::Config("n_replicates must be at least 1".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("at least one regime is required".into()));
        }
        if self.regimes.len() >= 255 {
            return Err(Error::Config("at most 254 regimes fit the stream layout".into()));
        }
        if self.n == 0 || self.n_ladder.contains(&0) {
            return Err(Error::Config("sample sizes must be positive".into()));
        }
        self.truth.validate()?;
        self.prior.validate()?;
        self.chain.validate()?;
        for r in &self.regimes {
            r.constraints.validate().map_err(|e| Error::Config(format!("regime `{}`: {e}", r.name)))?;
        }
        Ok(())
    }

    fn chain_for(&self, stream: u64) -> ChainConfig {
        ChainConfig {
            seed: self.base_seed,
            stream,
            pce_strata: self.strata.clone(),
            ..self.chain.clone()
        }
    }

    fn persist(&self, regime: &str, replicate: usize, draws: &PosteriorDraws) -> Result<()> {
        if let Some(dir) = &self.draws_dir {
            let dir = dir.join(self.id.name()).join(regime);
            std::fs::create_dir_all(&dir)?;
            draws.write_csv(dir.join(format!("rep{replicate}.csv")))?;
        }
        Ok(())
    }
}

/// Interval summary of one principal causal effect in one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceRecord {
    pub stratum: PrincipalStratum,
    pub truth: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub covered: bool,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    /// Absent when `rho` is held fixed.
    pub acceptance: Option<f64>,
}

impl RhoSummary {
    fn of(draws: &PosteriorDraws) -> Option<Self> {
        let mut c = draws.column("rho").ok()?;
        if c.is_empty() {
            return None;
        }
        let (mean, sd) = (crate::gibbs::mean(&c), crate::gibbs::sd(&c));
        c.sort_by(f64::total_cmp);
        Some(Self {
            mean,
            sd,
            q025: quantile_type7(&c, 0.025),
            q975: quantile_type7(&c, 0.975),
            acceptance: draws.acceptance.get("rho").copied(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub regime: String,
    pub seed: u64,
    pub stream: u64,
    /// Set when simulation or the chain failed; the record then has no summaries.
    pub error: Option<String>,
    pub pce: Vec<PceRecord>,
    pub rho: Option<RhoSummary>,
    pub fraction_at_floor: f64,
    /// Posterior summary of every draw column.
    pub columns: Vec<ColumnSummary>,
    /// Share of negative draws of each violation coefficient.
    pub negative_share: BTreeMap<String, f64>,
}

impl ReplicateRecord {
    pub fn column_mean(&self, name: &str) -> Option<f64> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.mean)
    }
}

/// Averages over successful replicates for one (regime, stratum) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub regime: String,
    pub s0: f64,
    pub s1: f64,
    pub truth: f64,
    pub mean: f64,
    /// Empirical coverage rate of the 95% intervals.
    pub ecr: f64,
    pub width: f64,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: String,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Average posterior mean and sd of `rho`, when it is sampled.
    pub rho_mean: Option<f64>,
    pub rho_sd: Option<f64>,
    pub fraction_at_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioId,
    pub base_seed: u64,
    pub spec: ScenarioSpec,
    pub cells: Vec<CellSummary>,
    pub regimes: Vec<RegimeSummary>,
    pub records: Vec<ReplicateRecord>,
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_SHARE * total as f64 {
        return Err(Error::Scenario(format!(
            "{failed} of {total} chains failed, above the {:.0}% limit",
            100.0 * MAX_FAILURE_SHARE
        )));
    }
    Ok(())
}

fn summarize(spec: &ScenarioSpec, replicate: usize, k: usize, draws: &PosteriorDraws) -> Result<ReplicateRecord> {
    let regime = &spec.regimes[k];
    let pce = spec
        .strata
        .iter()
        .map(|&u| {
            let name = pce_column_name(u);
            let ci = draws.ci95(&name)?;
            let truth = spec.truth.pce(u);
            Ok(PceRecord {
                stratum: u,
                truth,
                mean: draws.mean(&name)?,
                lo: ci.lo,
                hi: ci.hi,
                covered: ci.lo <= truth && truth <= ci.hi,
                width: ci.width(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateRecord {
        replicate,
        regime: regime.name.clone(),
        seed: spec.base_seed,
        stream: chain_stream(replicate, k),
        error: None,
        pce,
        rho: RhoSummary::of(draws),
        fraction_at_floor: draws.fraction_at_floor(),
        columns: draws.summary().columns,
        negative_share: ["beta01", "beta10"]
            .into_iter()
            .filter_map(|name| {
                let c = draws.column(name).ok()?;
                let neg = c.iter().filter(|&&v| v < 0.0).count() as f64 / c.len().max(1) as f64;
                Some((name.to_string(), neg))
            })
            .collect(),
    })
}

/// Simulates every replicate and fits one chain per regime to each.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioReport> {
    spec.validate()?;
    let reps = spec.n_replicates;
    let n_reg = spec.regimes.len();
    let datasets: Vec<std::result::Result<Dataset, String>> = (0..reps)
        .into_par_iter()
        .map(|r| spec.truth.simulate(spec.n, spec.base_seed, data_stream(r)).map_err(|e| e.to_string()))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..reps).flat_map(|r| (0..n_reg).map(move |k| (r, k))).collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(r, k)| {
            let regime = &spec.regimes[k];
            let stream = chain_stream(r, k);
            let outcome = datasets[r].clone().map_err(Error::Data).and_then(|d| {
                let draws = spec.truth.fit(&d, &spec.prior, &regime.constraints, &spec.chain_for(stream))?;
                spec.persist(&regime.name, r, &draws)?;
                summarize(spec, r, k, &draws)
            });
            outcome.unwrap_or_else(|e| ReplicateRecord {
                replicate: r,
                regime: regime.name.clone(),
                seed: spec.base_seed,
                stream,
                error: Some(e.to_string()),
                pce: vec![],
                rho: None,
                fraction_at_floor: 0.0,
                columns: vec![],
                negative_share: BTreeMap::new(),
            })
        })
        .collect();
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    check_failures(failed, records.len())?;
    Ok(aggregate(spec, records))
}

fn aggregate(spec: &ScenarioSpec, records: Vec<ReplicateRecord>) -> ScenarioReport {
    let mut cells = vec![];
    let mut regimes = vec![];
    for regime in &spec.regimes {
        let ok: Vec<&ReplicateRecord> =
            records.iter().filter(|r| r.regime == regime.name && r.error.is_none()).collect();
        let n_ok = ok.len();
        let avg = |f: &dyn Fn(&ReplicateRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n_ok as f64;
        for (j, &u) in spec.strata.iter().enumerate() {
            cells.push(CellSummary {
                regime: regime.name.clone(),
                s0: u.s0,
                s1: u.s1,
                truth: spec.truth.pce(u),
                mean: avg(&|r| r.pce[j].mean),
                ecr: avg(&|r| f64::from(u8::from(r.pce[j].covered))),
                width: avg(&|r| r.pce[j].width),
                n_ok,
            });
        }
        let rho: Vec<&RhoSummary> = ok.iter().filter_map(|r| r.rho.as_ref()).collect();
        let sampled = !rho.is_empty() && regime.constraints.rho_fixed.is_none();
        let rho_avg = |f: &dyn Fn(&RhoSummary) -> f64| {
            sampled.then(|| rho.iter().map(|s| f(s)).sum::<f64>() / rho.len() as f64)
        };
        regimes.push(RegimeSummary {
            regime: regime.name.clone(),
            n_ok,
            n_failed: records.iter().filter(|r| r.regime == regime.name).count() - n_ok,
            rho_mean: rho_avg(&|s| s.mean),
            rho_sd: rho_avg(&|s| s.sd),
            fraction_at_floor: avg(&|r| r.fraction_at_floor),
        });
    }
    ScenarioReport {
        scenario: spec.id,
        base_seed: spec.base_seed,
        spec: spec.clone(),
        cells,
        regimes,
        records,
    }
}

impl ScenarioReport {
    /// Average over successful replicates of a column's posterior mean.
    pub fn column_mean(&self, regime: &str, name: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.regime == regime && r.error.is_none())
            .filter_map(|r| r.column_mean(name))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn cell(&self, regime: &str, u: PrincipalStratum) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.regime == regime && c.s0 == u.s0 && c.s1 == u.s1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`; valid: csv, json, markdown"))),
        }
    }
}

/// Serializes a report. CSV holds the per-(regime, stratum) table; JSON
/// holds everything including the spec echo and per-replicate records.
pub fn emit_report(report: &ScenarioReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(vec![]);
            for c in &report.cells {
                w.serialize(c)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
        }
        ReportFormat::Markdown => Ok(markdown(report)),
    }
}

/// Parses the CSV form of [`emit_report`].
pub fn parse_cells_csv(text: &str) -> Result<Vec<CellSummary>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn markdown(report: &ScenarioReport) -> String {
    let names: Vec<&str> = report.regimes.iter().map(|r| r.regime.as_str()).collect();
    let mut s = String::new();
    let _ = write!(s, "| Stratum | Truth |");
    for n in &names {
        let _ = write!(s, " {n} Mean | {n} ECR | {n} Width |");
    }
    s.push('\n');
    s.push_str("|---|---|");
    s.push_str(&"---|---|---|".repeat(names.len()));
    s.push('\n');
    for u in &report.spec.strata {
        let row: Vec<&CellSummary> = report.cells.iter().filter(|c| c.s0 == u.s0 && c.s1 == u.s1).collect();
        let Some(first) = row.first() else { continue };
        let _ = write!(s, "| ({}, {}) | {:.2} |", u.s0, u.s1, first.truth);
        for n in &names {
            match row.iter().find(|c| c.regime == *n) {
                Some(c) => {
                    let _ = write!(s, " {:.2} | {:.3} | {:.2} |", c.mean, c.ecr, c.width);
                }
                None => s.push_str(" | | |"),
            }
        }
        s.push('\n');
    }
    s
}

/// `rho` posterior of one chain in a sample-size study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoCell {
    pub n: usize,
    pub regime: String,
    pub seed: u64,
    pub stream: u64,
    /// Treated fraction of the simulated dataset.
    pub t_bar: f64,
    pub error: Option<String>,
    pub summary: Option<RhoSummary>,
    /// Retained `rho` draws, for density plots.
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoStudy {
    pub scenario: ScenarioId,
    pub base_seed: u64,
    pub spec: ScenarioSpec,
    pub cells: Vec<RhoCell>,
}

impl RhoStudy {
    pub fn cell(&self, n: usize, regime: &str) -> Option<&RhoCell> {
        self.cells.iter().find(|c| c.n == n && c.regime == regime)
    }

    /// Plot-ready histogram densities of the `rho` draws on `[lo, hi]`.
    pub fn density_csv(&self, n_bins: usize, lo: f64, hi: f64) -> String {
        let mut s = String::from("n,regime,rho,density\n");
        let h = (hi - lo) / n_bins as f64;
        for c in self.cells.iter().filter(|c| !c.draws.is_empty()) {
            let mut counts = vec![0usize; n_bins];
            for &d in &c.draws {
                let b = ((d - lo) / h).floor();
                if b >= 0.0 && (b as usize) < n_bins {
                    counts[b as usize] += 1;
                }
            }
            for (b, k) in counts.iter().enumerate() {
                let dens = *k as f64 / (c.draws.len() as f64 * h);
                let _ = writeln!(s, "{},{},{},{}", c.n, c.regime, lo + (b as f64 + 0.5) * h, dens);
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("n,regime,seed,stream,mean,sd,q025,q975,acceptance,error\n");
        for c in &self.cells {
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let sm = c.summary.as_ref();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                c.n,
                c.regime,
                c.seed,
                c.stream,
                f(sm.map(|x| x.mean)),
                f(sm.map(|x| x.sd)),
                f(sm.map(|x| x.q025)),
                f(sm.map(|x| x.q975)),
                f(sm.and_then(|x| x.acceptance)),
                c.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        s
    }
}

fn ladder(spec: &ScenarioSpec) -> Vec<usize> {
    if spec.n_ladder.is_empty() {
        vec![spec.n]
    } else {
        spec.n_ladder.clone()
    }
}

/// One dataset per sample size, one chain per regime, full `rho` draws kept.
pub fn rho_ident_study(spec: &ScenarioSpec) -> Result<RhoStudy> {
    spec.validate()?;
    if !matches!(spec.truth, Truth::Continuous(_)) {
        return Err(Error::Config("the rho studies need a continuous truth".into()));
    }
    let ns = ladder(spec);
    let datasets: Vec<std::result::Result<Dataset, String>> = ns
        .par_iter()
        .enumerate()
        .map(|(j, &n)| spec.truth.simulate(n, spec.base_seed, data_stream(j)).map_err(|e| e.to_string()))
        .collect();
    let jobs: Vec<(usize, usize)> =
        (0..ns.len()).flat_map(|j| (0..spec.regimes.len()).map(move |k| (j, k))).collect();
    let cells: Vec<RhoCell> = jobs
        .par_iter()
        .map(|&(j, k)| {
            let regime = &spec.regimes[k];
            let stream = chain_stream(j, k);
            let mut cell = RhoCell {
                n: ns[j],
                regime: regime.name.clone(),
                seed: spec.base_seed,
                stream,
                t_bar: f64::NAN,
                error: None,
                summary: None,
                draws: vec![],
            };
            let outcome = datasets[j].clone().map_err(Error::Data).and_then(|d| {
                cell.t_bar = d.t.iter().map(|&t| t as f64).sum::<f64>() / d.n() as f64;
                let draws = spec.truth.fit(&d, &spec.prior, &regime.constraints, &spec.chain_for(stream))?;
                spec.persist(&regime.name, j, &draws)?;
                Ok(draws)
            });
            match outcome {
                Ok(draws) => {
                    cell.summary = RhoSummary::of(&draws);
                    cell.draws = draws.column("rho").unwrap_or_default();
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect();
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    check_failures(failed, cells.len())?;
    Ok(RhoStudy { scenario: spec.id, base_seed: spec.base_seed, spec: spec.clone(), cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub regime: String,
    pub n: usize,
    pub empirical_var: f64,
    /// Large-sample value at the truth with the realized treated fraction.
    pub approx_var: PosteriorVar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSlope {
    pub regime: String,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub base_seed: u64,
    pub rows: Vec<RateRow>,
    pub slopes: Vec<RateSlope>,
    pub study: RhoStudy,
}

impl RateStudy {
    /// Plot-ready `(ln n, ln var)` pairs.
    pub fn loglog_csv(&self) -> String {
        let mut s = String::from("regime,n,log_n,log_var,log_approx_var\n");
        for r in &self.rows {
            let a = r.approx_var.value().map(|v| v.ln().to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.regime, r.n, (r.n as f64).ln(), r.empirical_var.ln(), a);
        }
        s
    }
}

/// Empirical posterior variance of `rho` along the sample-size ladder with
/// its log-log slope per regime.
pub fn rate_study(spec: &ScenarioSpec) -> Result<RateStudy> {
    if ladder(spec).len() < 3 {
        return Err(Error::Config("the rate study needs at least 3 sample sizes".into()));
    }
    let Truth::Continuous(truth) = &spec.truth else {
        return Err(Error::Config("the rho studies need a continuous truth".into()));
    };
    let study = rho_ident_study(spec)?;
    let mut rows = vec![];
    let mut slopes = vec![];
    for regime in &spec.regimes {
        let mut ns = vec![];
        let mut vs = vec![];
        for c in study.cells.iter().filter(|c| c.regime == regime.name) {
            let Some(sm) = &c.summary else { continue };
            let approx = posterior_var_approx(&AsymVarInputs {
                t_bar: c.t_bar,
                beta10: truth.beta10(),
                beta01: truth.beta01(),
                sigma_s0: truth.sigma_s[0],
                sigma_s1: truth.sigma_s[1],
                sigma_y2: truth.sigma_y2,
                rho: truth.rho,
                n: c.n,
            })?;
            let v = sm.sd * sm.sd;
            rows.push(RateRow { regime: regime.name.clone(), n: c.n, empirical_var: v, approx_var: approx });
            ns.push(c.n);
            vs.push(v);
        }
        slopes.push(RateSlope { regime: regime.name.clone(), slope: rate_fit(&ns, &vs)? });
    }
    Ok(RateStudy { base_seed: spec.base_seed, rows, slopes, study })
}

/// Outcome of one pass/fail threshold on a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl GateResult {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }
}

/// Reference means and interval widths of the coverage study per regime, at
/// the strata `(0.89, 0.18 | 0.35 | 0.52)`.
pub const COVERAGE_REFERENCE: [(&str, [f64; 3], [f64; 3]); 3] = [
    ("none", [17.0, 34.0, 50.0], [43.0, 13.0, 43.0]),
    ("dominant", [16.0, 34.0, 51.0], [25.0, 9.0, 25.0]),
    ("same_sign", [23.0, 34.0, 45.0], [32.0, 12.0, 32.0]),
];

/// Thresholds for the preset studies; custom studies get coverage only.
pub fn scenario_gates(report: &ScenarioReport) -> Vec<GateResult> {
    let mut out = vec![];
    match report.scenario {
        ScenarioId::Table1 => {
            let low: Vec<String> = report
                .cells
                .iter()
                .filter(|c| c.ecr < 0.90)
                .map(|c| format!("{} ({}, {}) {:.2}", c.regime, c.s0, c.s1, c.ecr))
                .collect();
            out.push(GateResult::new("coverage >= 0.90", low.is_empty(), low.join("; ")));
            let strata = [(0.89, 0.18), (0.89, 0.35), (0.89, 0.52)].map(|(a, b)| PrincipalStratum::new(a, b));
            let (mut mean_bad, mut width_bad) = (vec![], vec![]);
            for (regime, means, widths) in COVERAGE_REFERENCE {
                for (j, &u) in strata.iter().enumerate() {
                    let Some(c) = report.cell(regime, u) else {
                        mean_bad.push(format!("{regime} ({}, {}) missing", u.s0, u.s1));
                        continue;
                    };
                    if (c.mean - means[j]).abs() > 3.0 {
                        mean_bad.push(format!("{regime} ({}, {}) {:.2} vs {}", u.s0, u.s1, c.mean, means[j]));
                    }
                    if (c.width / widths[j] - 1.0).abs() > 0.4 {
                        width_bad.push(format!("{regime} ({}, {}) {:.2} vs {}", u.s0, u.s1, c.width, widths[j]));
                    }
                }
            }
            out.push(GateResult::new("means within 3 of reference", mean_bad.is_empty(), mean_bad.join("; ")));
            out.push(GateResult::new("widths within 40% of reference", width_bad.is_empty(), width_bad.join("; ")));
            let mut order = vec![];
            for &u in [strata[0], strata[2]].iter() {
                let w = |r: &str| report.cell(r, u).map_or(f64::NAN, |c| c.width);
                let (d, s, n) = (w("dominant"), w("same_sign"), w("none"));
                if !(d < s && s < n) {
                    order.push(format!("({}, {}): {d:.2}, {s:.2}, {n:.2}", u.s0, u.s1));
                }
            }
            out.push(GateResult::new("width order dominant < same_sign < none", order.is_empty(), order.join("; ")));
        }
        ScenarioId::BinarySign => {
            if let Truth::Binary(p) = &report.spec.truth {
                let m01 = report.column_mean("sign_positive", "beta01");
                let m10 = report.column_mean("sign_positive", "beta10");
                let ok = |m: Option<f64>, t: f64| m.is_some_and(|m| (m - t).abs() <= 0.15);
                out.push(GateResult::new(
                    "signed violation means within 0.15",
                    ok(m01, p.beta[0][1]) && ok(m10, p.beta[1][0]),
                    format!("beta01 {}, beta10 {}", fmt_opt(m01), fmt_opt(m10)),
                ));
                let shares: Vec<f64> = report
                    .records
                    .iter()
                    .filter(|r| r.regime == "none")
                    .filter_map(|r| r.negative_share.get("beta10").copied())
                    .collect();
                let pass = !shares.is_empty() && shares.iter().all(|&s| (0.1..=0.9).contains(&s));
                out.push(GateResult::new(
                    "unconstrained beta10 on both signs",
                    pass,
                    format!("negative share per chain {}", shares.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(", ")),
                ));
            }
        }
        ScenarioId::BinaryP11 => {
            if let Truth::Binary(p) = &report.spec.truth {
                let m = report.column_mean("sign_positive", "p11");
                out.push(GateResult::new(
                    "p11 mean within 0.07",
                    m.is_some_and(|m| (m - p.p11).abs() <= 0.07),
                    format!("p11 mean {} vs {}", fmt_opt(m), p.p11),
                ));
            }
        }
        _ => {
            let low: Vec<String> = report
                .cells
                .iter()
                .filter(|c| c.ecr < 0.90)
                .map(|c| format!("{} ({}, {}) {:.2}", c.regime, c.s0, c.s1, c.ecr))
                .collect();
            out.push(GateResult::new("coverage >= 0.90", low.is_empty(), low.join("; ")));
        }
    }
    out
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "missing".into(), |v| format!("{v:.4}"))
}

/// Two identifying constraints concentrate the `rho` posterior near the
/// truth; none leave it diffuse.
pub fn rho_gates(study: &RhoStudy) -> Vec<GateResult> {
    let mut out = vec![];
    let Some(&n_max) = study.cells.iter().map(|c| c.n).collect::<Vec<_>>().iter().max() else {
        return out;
    };
    let summary = |n: usize, r: &str| study.cell(n, r).and_then(|c| c.summary.clone());
    if let Some(s) = summary(n_max, "two") {
        out.push(GateResult::new(
            "two constraints: mean in [0.65, 0.85], sd < 0.10",
            (0.65..=0.85).contains(&s.mean) && s.sd < 0.10,
            format!("n = {n_max}: mean {:.3}, sd {:.3}", s.mean, s.sd),
        ));
    }
    if let Some(s) = summary(n_max, "none") {
        out.push(GateResult::new("no constraints: sd > 0.15", s.sd > 0.15, format!("n = {n_max}: sd {:.3}", s.sd)));
    }
    let mut ns: Vec<usize> = study.cells.iter().map(|c| c.n).collect();
    ns.dedup();
    let bad: Vec<String> = ns
        .iter()
        .filter_map(|&n| match (summary(n, "none"), summary(n, "two")) {
            (Some(a), Some(b)) if a.sd <= b.sd => Some(format!("n = {n}: {:.3} <= {:.3}", a.sd, b.sd)),
            _ => None,
        })
        .collect();
    out.push(GateResult::new("sd(none) > sd(two) at every n", bad.is_empty(), bad.join("; ")));
    out
}

pub fn rate_gates(study: &RateStudy) -> Vec<GateResult> {
    let mut out = vec![];
    for s in &study.slopes {
        out.push(GateResult::new(
            &format!("{}: log-log slope in [-1.2, -0.8]", s.regime),
            (-1.2..=-0.8).contains(&s.slope),
            format!("slope {:.3}", s.slope),
        ));
        let last = study.rows.iter().filter(|r| r.regime == s.regime).max_by_key(|r| r.n);
        if let Some(r) = last {
            let ratio = r.approx_var.value().map(|a| r.empirical_var / a);
            out.push(GateResult::new(
                &format!("{}: empirical variance within factor 2 of the approximation", s.regime),
                ratio.is_some_and(|q| (0.5..=2.0).contains(&q)),
                format!("n = {}: ratio {}", r.n, fmt_opt(ratio)),
            ));
        }
    }
    out
}
