//! Command-line front end. Every command reads an optional JSON config
//! (unknown keys rejected), applies flag overrides, and echoes the effective
//! config into its output so a run is reproducible from that echo alone.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::asymvar::{posterior_var_approx, AsymVarInputs};
use crate::binary::{gibbs_binary, BinaryParams};
use crate::error::{Error, ErrorKind, Result};
use crate::gibbs::{mean, quantile_type7, run_chain, sd, ChainConfig, ConstraintSet, PosteriorDraws, PriorSpec};
use crate::harness::{
    emit_report, rate_gates, rate_study, rho_gates, rho_ident_study, run_scenario, scenario_gates,
    GateResult, ReportFormat, ScenarioId, ScenarioSpec, Truth,
};
use crate::pir::{moments_from_data, pce_band_with_grid, region_report, Assumption, ObservedMoments, PceBand, RegionReport};
use crate::psmodel::{marginalize, residualize, Dataset, JointParams, MarginalParams, PrincipalStratum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_GATE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "prinstrat", version, about = "Principal stratification without principal ignorability")]
struct Cli {
    /// Worker threads for replicate runs.
    #[arg(long, global = true, env = "PRINSTRAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset from a known truth.
    Simulate(SimulateArgs),
    /// Run one Gibbs chain on a dataset.
    Fit(FitArgs),
    /// Partial-identification regions of the violation coefficients.
    Pir(PirArgs),
    /// Large-sample posterior variance of the strata correlation.
    Asym(AsymArgs),
    /// Run a simulation study.
    Scenario(ScenarioArgs),
}

fn parse_stratum_list(s: &str) -> std::result::Result<Vec<PrincipalStratum>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| format!("stratum `{p}` is not `s0:s1`"))?;
            let f = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("stratum `{p}`: {e}"));
            Ok(PrincipalStratum::new(f(a)?, f(b)?))
        })
        .collect()
}

fn parse_f64_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TruthPreset {
    /// Coverage-study truth.
    Table1,
    /// Strata-correlation study truth.
    RhoStudy,
    /// Binary-intermediate truth.
    BinarySign,
}

impl TruthPreset {
    pub fn truth(self) -> Truth {
        match self {
            TruthPreset::Table1 => Truth::Continuous(JointParams::table1_truth()),
            TruthPreset::RhoStudy => Truth::Continuous(JointParams::rho_study_truth()),
            TruthPreset::BinarySign => Truth::Binary(BinaryParams::sign_study_truth()),
        }
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub truth: Truth,
    pub n: usize,
    pub seed: u64,
    pub stream: u64,
    pub out: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { truth: TruthPreset::Table1.truth(), n: 300, seed: 0, stream: 0, out: None }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<TruthPreset>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stream: Option<u64>,
    /// Dataset CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    config: &'a SimulateConfig,
    n: usize,
    arm_counts: [usize; 2],
    mean_y: [f64; 2],
    mean_s: [f64; 2],
    moments: Option<ObservedMoments>,
}

fn arm_means(d: &Dataset, v: &[f64]) -> [f64; 2] {
    [0u8, 1].map(|t| mean(&d.arm_indices(t).iter().map(|&i| v[i]).collect::<Vec<_>>()))
}

fn cmd_simulate(a: SimulateArgs) -> Result<String> {
    let mut cfg: SimulateConfig = load_config(a.config.as_deref())?;
    if let Some(p) = a.preset {
        cfg.truth = p.truth();
    }
    override_opt(&mut cfg.n, a.n);
    override_opt(&mut cfg.seed, a.seed);
    override_opt(&mut cfg.stream, a.stream);
    if a.out.is_some() {
        cfg.out = a.out;
    }
    cfg.truth.validate()?;
    let data = cfg.truth.simulate(cfg.n, cfg.seed, cfg.stream)?;
    let moments = if data.p() == 0 { moments_from_data(&data).ok() } else { None };
    let report = SimulateReport {
        config: &cfg,
        n: data.n(),
        arm_counts: data.arm_counts(),
        mean_y: arm_means(&data, &data.y),
        mean_s: arm_means(&data, &data.s),
        moments,
    };
    let summary = to_json(&report)?;
    match &cfg.out {
        Some(path) => {
            data.write_csv(path)?;
            Ok(summary)
        }
        None => {
            let mut buf = vec![];
            data.to_writer(&mut buf)?;
            eprint!("{summary}");
            Ok(String::from_utf8(buf).expect("csv is utf-8"))
        }
    }
}

// --------------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Binary sampler when every `s` is 0 or 1, continuous otherwise.
    #[default]
    Auto,
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub model: ModelKind,
    pub prior: PriorSpec,
    pub constraints: ConstraintSet,
    pub chain: ChainConfig,
    /// Directory receiving `draws.csv` and `summary.json`.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Known strata correlation.
    #[arg(long)]
    rho: Option<f64>,
    /// Known `P(S(0) = 1, S(1) = 1)` for binary data.
    #[arg(long)]
    p11: Option<f64>,
    /// Comma-separated constraint names, added to the config's.
    #[arg(long)]
    constraints: Option<String>,
    #[arg(long)]
    equal_sigma_s: bool,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stream: Option<u64>,
    /// Strata as `s0:s1,s0:s1`; defaults to quartile combinations of the observed `s`.
    #[arg(long)]
    strata: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Arm-0 quartiles of `s` crossed with arm-1 quartiles; the four cells for binary `s`.
pub fn default_strata(d: &Dataset, binary: bool) -> Vec<PrincipalStratum> {
    if binary {
        return [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
            .map(|(a, b)| PrincipalStratum::new(a, b))
            .to_vec();
    }
    let q = |t: u8| {
        let mut v: Vec<f64> = d.arm_indices(t).iter().map(|&i| d.s[i]).collect();
        v.sort_by(f64::total_cmp);
        [0.25, 0.5, 0.75].map(|p| quantile_type7(&v, p))
    };
    let (q0, q1) = (q(0), q(1));
    q0.iter().flat_map(|&a| q1.iter().map(move |&b| PrincipalStratum::new(a, b))).collect()
}

#[derive(Debug, Serialize)]
struct FitOutput<'a> {
    config: &'a FitConfig,
    model: ModelKind,
    summary: crate::gibbs::DrawSummary,
}

fn posterior_table(draws: &PosteriorDraws) -> String {
    let mut s = format!("{:<24} {:>12} {:>12} {:>12} {:>12}\n", "parameter", "mean", "sd", "q2.5", "q97.5");
    for c in draws.summary().columns {
        let _ = writeln!(s, "{:<24} {:>12.5} {:>12.5} {:>12.5} {:>12.5}", c.name, c.mean, c.sd, c.q025, c.q975);
    }
    s
}

/// Resolves the model and the default strata in `cfg`, then runs one chain.
pub fn fit_dataset(data: &Dataset, cfg: &mut FitConfig) -> Result<(ModelKind, PosteriorDraws)> {
    let model = match cfg.model {
        ModelKind::Auto if data.is_binary() => ModelKind::Binary,
        ModelKind::Auto => ModelKind::Continuous,
        m => m,
    };
    if cfg.chain.pce_strata.is_empty() {
        cfg.chain.pce_strata = default_strata(data, model == ModelKind::Binary);
    }
    let draws = match model {
        ModelKind::Binary => gibbs_binary(data, &cfg.prior, &cfg.constraints, &cfg.chain)?,
        _ => run_chain(data, &cfg.prior, &cfg.constraints, &cfg.chain)?,
    };
    Ok((model, draws))
}

fn cmd_fit(a: FitArgs) -> Result<String> {
    let mut cfg: FitConfig = load_config(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data;
    }
    override_opt(&mut cfg.model, a.model);
    if let Some(r) = a.rho {
        cfg.constraints.rho_fixed = Some(r);
    }
    if let Some(p) = a.p11 {
        cfg.constraints.p11_fixed = Some(p);
    }
    if let Some(tokens) = &a.constraints {
        cfg.constraints.apply_tokens(tokens)?;
    }
    cfg.constraints.equal_sigma_s |= a.equal_sigma_s;
    override_opt(&mut cfg.chain.n_iter, a.n_iter);
    override_opt(&mut cfg.chain.burn_in, a.burn_in);
    override_opt(&mut cfg.chain.thin, a.thin);
    override_opt(&mut cfg.chain.seed, a.seed);
    override_opt(&mut cfg.chain.stream, a.stream);
    if let Some(s) = &a.strata {
        cfg.chain.pce_strata = parse_stratum_list(s).map_err(Error::Config)?;
    }
    if a.out_dir.is_some() {
        cfg.out_dir = a.out_dir;
    }
    let path = cfg.data.clone().ok_or_else(|| Error::Config("fit needs a dataset (`--data`)".into()))?;
    let data = Dataset::read_csv(&path)?;
    let (model, draws) = fit_dataset(&data, &mut cfg)?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        draws.write_csv(dir.join("draws.csv"))?;
        let out = FitOutput { config: &cfg, model, summary: draws.summary() };
        std::fs::write(dir.join("summary.json"), to_json(&out)?)?;
    }
    Ok(posterior_table(&draws))
}

// --------------------------------------------------------------------- pir

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PirConfig {
    /// Exactly one of `data`, `moments` and `truth` supplies the moments.
    pub data: Option<PathBuf>,
    pub moments: Option<ObservedMoments>,
    /// Population moments of a continuous truth.
    pub truth: Option<JointParams>,
    pub rho: Vec<f64>,
    pub assumptions: Vec<Assumption>,
    /// Strata for principal-causal-effect bands; needs `data` or `truth`.
    pub strata: Vec<PrincipalStratum>,
    pub n_grid: usize,
    pub out: Option<PathBuf>,
}

impl Default for PirConfig {
    fn default() -> Self {
        Self {
            data: None,
            moments: None,
            truth: None,
            rho: vec![],
            assumptions: Assumption::ALL.to_vec(),
            strata: vec![],
            n_grid: 2_000,
            out: None,
        }
    }
}

#[derive(Debug, Args)]
struct PirArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON file holding observed moments.
    #[arg(long)]
    moments: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<TruthPreset>,
    /// One value or a comma-separated sweep.
    #[arg(long)]
    rho: Option<String>,
    /// Comma-separated: none, same_sign, dominant.
    #[arg(long)]
    assumptions: Option<String>,
    #[arg(long)]
    strata: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PirOutput<'a> {
    config: &'a PirConfig,
    moments: ObservedMoments,
    arms_swapped: bool,
    note: Option<&'static str>,
    regions: Vec<RegionReport>,
}

/// Plug-in marginal parameters of covariate-free data.
fn marginal_from_data(d: &Dataset) -> MarginalParams {
    let mut m = MarginalParams { mu_y: [0.0; 2], phi: [0.0; 2], zeta: [0.0; 2], psi: [0.0; 2], sigma_s: [0.0; 2] };
    for t in 0..2 {
        let idx = d.arm_indices(t as u8);
        let y: Vec<f64> = idx.iter().map(|&i| d.y[i]).collect();
        let s: Vec<f64> = idx.iter().map(|&i| d.s[i]).collect();
        let (my, ms) = (mean(&y), mean(&s));
        let k = (idx.len() - 1) as f64;
        let cov = y.iter().zip(&s).map(|(a, b)| (a - my) * (b - ms)).sum::<f64>() / k;
        m.mu_y[t] = my;
        m.phi[t] = ms;
        m.sigma_s[t] = sd(&s);
        m.zeta[t] = sd(&y).powi(2);
        m.psi[t] = cov / m.sigma_s[t];
    }
    m
}

fn cmd_pir(a: PirArgs) -> Result<String> {
    let mut cfg: PirConfig = load_config(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data;
    }
    if let Some(p) = &a.moments {
        cfg.moments = Some(serde_json::from_str(&read_text(p)?)?);
    }
    match a.preset.map(TruthPreset::truth) {
        Some(Truth::Continuous(p)) => cfg.truth = Some(p),
        Some(Truth::Binary(_)) => {
            return Err(Error::Config("identification regions need a continuous truth".into()))
        }
        None => {}
    }
    if let Some(r) = &a.rho {
        cfg.rho = parse_f64_list(r).map_err(Error::Config)?;
    }
    if let Some(s) = &a.assumptions {
        cfg.assumptions = s.split(',').map(|t| t.trim().parse()).collect::<Result<_>>()?;
    }
    if let Some(s) = &a.strata {
        cfg.strata = parse_stratum_list(s).map_err(Error::Config)?;
    }
    if a.out.is_some() {
        cfg.out = a.out;
    }
    let sources = [cfg.data.is_some(), cfg.moments.is_some(), cfg.truth.is_some()];
    if sources.iter().filter(|&&b| b).count() != 1 {
        return Err(Error::Config("give exactly one of data, moments and truth".into()));
    }
    if cfg.rho.is_empty() {
        return Err(Error::Config("pir needs at least one rho value".into()));
    }
    if cfg.n_grid < 2 {
        return Err(Error::Config("n_grid must be at least 2".into()));
    }
    if let Some(r) = cfg.rho.iter().find(|r| !(r.abs() < 1.0)) {
        return Err(Error::Config(format!("rho must lie in (-1, 1), got {r}")));
    }
    let (moments, marg) = if let Some(path) = &cfg.data {
        let mut d = Dataset::read_csv(path)?;
        if d.p() > 0 {
            d = residualize(&d)?;
        }
        (moments_from_data(&d)?, Some(marginal_from_data(&d)))
    } else if let Some(t) = &cfg.truth {
        t.validate()?;
        let marg = marginalize(t, None);
        (ObservedMoments::from_marginal(&marg), Some(marg))
    } else {
        (cfg.moments.expect("one source"), None)
    };
    if !cfg.strata.is_empty() && marg.is_none() {
        return Err(Error::Config("PCE bands need data or a truth, not moments alone".into()));
    }
    let mut regions = vec![];
    for &rho in &cfg.rho {
        for &assumption in &cfg.assumptions {
            let mut r = region_report(&moments, rho, assumption)?;
            if let Some(marg) = &marg {
                for &u in &cfg.strata {
                    let band = pce_band_with_grid(&moments, marg, rho, u, assumption, cfg.n_grid)?;
                    r.pce_bands.push(PceBand { stratum: u, band });
                }
            }
            regions.push(r);
        }
    }
    let swapped = moments.arms_swapped();
    let out = PirOutput {
        config: &cfg,
        moments,
        arms_swapped: swapped,
        note: swapped.then_some("Var(Y | S, T = 0) > Var(Y | S, T = 1): arm roles exchanged"),
        regions,
    };
    let text = to_json(&out)?;
    match &cfg.out {
        Some(p) => {
            std::fs::write(p, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

// -------------------------------------------------------------------- asym

#[derive(Debug, Args)]
struct AsymArgs {
    /// JSON file with all variance inputs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fill the model parameters from a continuous truth, with `t_bar = 0.5`.
    #[arg(long, value_enum)]
    preset: Option<TruthPreset>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_bar: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AsymOutput {
    config: AsymVarInputs,
    posterior_var: crate::asymvar::PosteriorVar,
}

fn cmd_asym(a: AsymArgs) -> Result<String> {
    let mut cfg: Option<AsymVarInputs> = match &a.config {
        Some(p) => Some(serde_json::from_str(&read_text(p)?)?),
        None => None,
    };
    match a.preset.map(TruthPreset::truth) {
        Some(Truth::Continuous(p)) => {
            cfg = Some(AsymVarInputs {
                t_bar: 0.5,
                beta10: p.beta10(),
                beta01: p.beta01(),
                sigma_s0: p.sigma_s[0],
                sigma_s1: p.sigma_s[1],
                sigma_y2: p.sigma_y2,
                rho: p.rho,
                n: cfg.map_or(1, |c| c.n),
            })
        }
        Some(Truth::Binary(_)) => return Err(Error::Config("the variance formula needs a continuous truth".into())),
        None => {}
    }
    let mut cfg = cfg.ok_or_else(|| Error::Config("asym needs `--config` or `--preset`".into()))?;
    override_opt(&mut cfg.n, a.n);
    override_opt(&mut cfg.t_bar, a.t_bar);
    override_opt(&mut cfg.rho, a.rho);
    let v = posterior_var_approx(&cfg)?;
    to_json(&AsymOutput { config: cfg, posterior_var: v })
}

// ---------------------------------------------------------------- scenario

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Preset id; ignored when `--config` is given.
    #[arg(long)]
    scenario: Option<String>,
    /// Full scenario spec as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Exit with status 5 unless every acceptance threshold passes.
    #[arg(long)]
    check: bool,
    /// Writes `report.json`, a CSV table and plot-ready CSVs here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Persist every chain's draws under this directory.
    #[arg(long)]
    draws_dir: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    format: String,
}

struct ScenarioOutcome {
    stdout: String,
    gates: Vec<GateResult>,
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn gates_markdown(gates: &[GateResult]) -> String {
    let mut s = String::from("| gate | result | detail |\n|---|---|---|\n");
    for g in gates {
        let _ = writeln!(s, "| {} | {} | {} |", g.name, if g.pass { "PASS" } else { "FAIL" }, g.detail);
    }
    s
}

fn cmd_scenario(a: ScenarioArgs) -> Result<ScenarioOutcome> {
    let format: ReportFormat = a.format.parse()?;
    let mut spec: ScenarioSpec = match (&a.config, &a.scenario) {
        (Some(p), _) => serde_json::from_str(&read_text(p)?)?,
        (None, Some(id)) => ScenarioSpec::preset(id.parse::<ScenarioId>()?),
        (None, None) => return Err(Error::Config("scenario needs `--scenario` or `--config`".into())),
    };
    override_opt(&mut spec.n_replicates, a.replicates);
    override_opt(&mut spec.n, a.n);
    override_opt(&mut spec.base_seed, a.seed);
    override_opt(&mut spec.chain.n_iter, a.n_iter);
    override_opt(&mut spec.chain.burn_in, a.burn_in);
    override_opt(&mut spec.chain.thin, a.thin);
    if a.draws_dir.is_some() {
        spec.draws_dir = a.draws_dir;
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let (stdout, gates) = match spec.id {
        ScenarioId::RhoIdent | ScenarioId::RateStudy => {
            let (study, rate) = if spec.id == ScenarioId::RateStudy {
                let r = rate_study(&spec)?;
                (r.study.clone(), Some(r))
            } else {
                (rho_ident_study(&spec)?, None)
            };
            let gates = match &rate {
                Some(r) => rate_gates(r),
                None => rho_gates(&study),
            };
            if let Some(dir) = &a.out_dir {
                match &rate {
                    Some(r) => {
                        write_file(dir, "report.json", &to_json(r)?)?;
                        write_file(dir, "loglog.csv", &r.loglog_csv())?;
                    }
                    None => write_file(dir, "report.json", &to_json(&study)?)?,
                }
                write_file(dir, "rho_summary.csv", &study.summary_csv())?;
                write_file(dir, "rho_density.csv", &study.density_csv(50, -1.0, 1.0))?;
            }
            let text = match (format, &rate) {
                (ReportFormat::Json, Some(r)) => to_json(r)?,
                (ReportFormat::Json, None) => to_json(&study)?,
                (ReportFormat::Csv, Some(r)) => r.loglog_csv(),
                (ReportFormat::Csv, None) => study.summary_csv(),
                (ReportFormat::Markdown, _) => gates_markdown(&gates),
            };
            (text, gates)
        }
        _ => {
            let report = run_scenario(&spec)?;
            if let Some(dir) = &a.out_dir {
                write_file(dir, "report.json", &emit_report(&report, ReportFormat::Json)?)?;
                write_file(dir, "cells.csv", &emit_report(&report, ReportFormat::Csv)?)?;
                write_file(dir, "table.md", &emit_report(&report, ReportFormat::Markdown)?)?;
            }
            (emit_report(&report, format)?, scenario_gates(&report))
        }
    };
    Ok(ScenarioOutcome { stdout, gates })
}

// ------------------------------------------------------------------ common

fn override_opt<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))
}

/// Defaults when no file is given; unknown keys are rejected by the types.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&read_text(p)?)?),
        None => Ok(T::default()),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_CONFIG;
        }
        // a pool already installed by an earlier call in this process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|s| (s, vec![])),
        Command::Fit(a) => cmd_fit(a).map(|s| (s, vec![])),
        Command::Pir(a) => cmd_pir(a).map(|s| (s, vec![])),
        Command::Asym(a) => cmd_asym(a).map(|s| (s, vec![])),
        Command::Scenario(a) => {
            let check = a.check;
            cmd_scenario(a).map(|o| (o.stdout, if check { o.gates } else { vec![] }))
        }
    };
    match result {
        Ok((stdout, gates)) => {
            print!("{stdout}");
            let mut failed = false;
            for g in &gates {
                eprintln!("{} {}: {}", if g.pass { "PASS" } else { "FAIL" }, g.name, g.detail);
                failed |= !g.pass;
            }
            if failed {
                EXIT_GATE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
