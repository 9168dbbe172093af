//! Command-line front end.
//!
//! Every subcommand reads an optional JSON config (`--config`) and lets
//! flags override it. Parameters are validated before any work starts.
//! Output is a text table, or with `--json` a document carrying
//! `"schema": 1`. `--out DIR` also writes the report, the resolved config
//! and CSV artifacts.
//!
//! Exit codes: 0 pass, 1 usage or configuration error, 2 numeric failure,
//! 3 a certificate or verdict failed.
//!
//! The environment variable `LANGEVIN_DP_SEED`, when set, overrides the
//! seed of any run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::accountant::{
    composed_baseline, eps_delta_from_c, renyi_from_c, Bound, DriftSpec, EpsilonForm, GenericDiffusionSpec,
};
use crate::error::{Error, Result};
use crate::oracle_verify::{
    audit_sweep, check_dp_brute_force, check_dp_threshold, ula_gaussian_audit, verify_tv_propagation,
    verify_tv_separation, write_audit_csv, FiniteDist,
};
use crate::pathwise::{moment_report, tail_report, DriftFamily, GirsanovExperiment};
use crate::privacy::PrivacyBudget;
use crate::release::{
    default_threshold_grid, empirical_closeness, estimator_budget, laplace_assumption_check, release_ergodic_average,
    ClosenessRun, EstimatorSpec, Laplace, NoiseMechanism,
};
use crate::rng::{stream_rng, CONFIG_STREAM, SEED_ENV};
use crate::samplers::{
    check_gap_domination, check_gap_domination_constant_grad, contraction_certificate, run_coupled_sgld,
    run_coupled_ula, spread_curvatures, CoupledPath, LossSpec, PotentialFamily,
};
use crate::stats::Verdict;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "langevin-dp",
    version,
    about = "Privacy budgets and certificates for Langevin samplers"
)]
pub struct Cli {
    /// Print JSON instead of a table.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form budget of one bound.
    Account(Invocation<AccountParams>),
    /// Coupled-chain contraction certificate.
    Certify(Invocation<CertifyParams>),
    /// Oracle and Monte Carlo verification suites.
    Verify(Invocation<VerifyParams>),
    /// Release a noised ergodic average with its budget.
    Release(Invocation<ReleaseParams>),
}

#[derive(Debug, Args)]
pub struct Invocation<P: Args> {
    /// JSON config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Directory for the report, the resolved config and CSV files.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub params: P,
}

/// Lets flag values override config values field by field.
trait Overlay: Sized {
    fn overlay(self, top: Self) -> Self;
}

macro_rules! overlay_fields {
    ($ty:ty; $($f:ident),* ; vecs: $($v:ident),*) => {
        impl Overlay for $ty {
            fn overlay(mut self, top: Self) -> Self {
                $( if top.$f.is_some() { self.$f = top.$f; } )*
                $( if !top.$v.is_empty() { self.$v = top.$v; } )*
                self
            }
        }
    };
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required parameter --{flag}")))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountParams {
    #[arg(skip)]
    #[serde(default, skip_serializing)]
    pub schema: Option<u32>,
    /// Which bound: ula-final, ula-limit, ula-path, sgld-final,
    /// sgld-constant-grad, sgld-path, generic-path, generic-final (or C1..C8).
    #[arg(long)]
    pub bound: Option<Bound>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Minibatch size.
    #[arg(long)]
    pub s: Option<u64>,
    /// Dataset size.
    #[arg(long)]
    pub m: Option<u64>,
    /// Iteration count.
    #[arg(long)]
    pub n: Option<u64>,
    /// Horizon of a generic diffusion.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    /// Almost-sure gap bound of a generic diffusion.
    #[arg(long)]
    pub c_gap: Option<f64>,
    /// δ values for the (ε, δ) column; repeatable.
    #[arg(long = "delta")]
    #[serde(default)]
    pub delta: Vec<f64>,
    /// Rényi orders; repeatable.
    #[arg(long = "alpha")]
    #[serde(default)]
    pub alpha: Vec<f64>,
    /// Use the ε_δ expression printed with each bound (unquartered for the
    /// SGLD constant-gradient and path bounds) instead of C/4 + √(C log 1/δ).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub printed_form: Option<bool>,
}

overlay_fields!(AccountParams; bound, c, lipschitz, mu, gamma, beta, s, m, n, horizon, c_gap, printed_form; vecs: delta, alpha);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Ula,
    Sgld,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    #[arg(skip)]
    #[serde(default, skip_serializing)]
    pub schema: Option<u32>,
    #[arg(long, value_enum)]
    pub family: Option<PotentialFamily>,
    #[arg(long, value_enum)]
    pub sampler: Option<Sampler>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Inverse temperature (SGLD).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Dataset size (SGLD).
    #[arg(long)]
    pub m: Option<usize>,
    /// Minibatch size (SGLD).
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub replicates: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Halve the true curvature while keeping the declared μ and L.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub misdeclare: Option<bool>,
    /// Closeness radius for the ergodic-average certificate (ULA only);
    /// defaults to the contraction bound.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub closeness_replicates: Option<u64>,
}

overlay_fields!(CertifyParams; family, sampler, dim, mu, lipschitz, c, gamma, beta, m, s, steps, replicates, seed, misdeclare, eta, closeness_replicates; vecs: );

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Finite,
    GaussianAudit,
    Girsanov,
    Laplace,
    All,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    #[arg(skip)]
    #[serde(default, skip_serializing)]
    pub schema: Option<u32>,
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Randomized trials of the TV-propagation check.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Support size of the TV-propagation check.
    #[arg(long)]
    pub k: Option<usize>,
    /// TV perturbation sizes; repeatable.
    #[arg(long = "tv-bounds")]
    #[serde(default)]
    pub tv_bounds: Vec<f64>,
    /// Random pairs on which brute force and ratio thresholds must agree.
    #[arg(long)]
    pub agreement_pairs: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta_mu: Option<f64>,
    #[arg(long)]
    pub delta_nu: Option<f64>,
    /// Random admissible configurations for the Gaussian audit.
    #[arg(long)]
    pub configs: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum)]
    pub drift_family: Option<DriftFamily>,
    #[arg(long)]
    pub replicates: Option<u64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
}

overlay_fields!(VerifyParams; suite, seed, trials, k, agreement_pairs, epsilon, delta_mu, delta_nu, configs, steps, alpha, c, lipschitz, mu, gamma, beta, dim, drift_family, replicates, eta, grid_points; vecs: tv_bounds);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReleaseParams {
    #[arg(skip)]
    #[serde(default, skip_serializing)]
    pub schema: Option<u32>,
    #[arg(long, value_enum)]
    pub family: Option<PotentialFamily>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coordinate of the state whose ergodic average is released.
    #[arg(long)]
    pub coordinate: Option<usize>,
    /// Per-release ε of the Laplace mechanism.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Closeness scale of the mechanism; must equal 2·c_conc + gamma_f.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub c_conc: Option<f64>,
    #[arg(long)]
    pub gamma_f: Option<f64>,
    #[arg(long)]
    pub delta_tilde: Option<f64>,
}

overlay_fields!(ReleaseParams; family, dim, mu, lipschitz, c, gamma, steps, seed, coordinate, epsilon, eta, c_conc, gamma_f, delta_tilde; vecs: );

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub report: Value,
    pub text: String,
    pub pass: bool,
    /// CSV artifacts: file name and contents.
    pub files: Vec<(String, Vec<u8>)>,
}

fn load<P>(inv: &Invocation<P>) -> Result<P>
where
    P: Args + Overlay + Default + Clone + DeserializeOwned,
{
    let base = match &inv.config {
        None => P::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
            if let Some(s) = v.get("schema") {
                if s.as_u64() != Some(SCHEMA_VERSION as u64) {
                    return Err(Error::Config(format!("unsupported config schema {s}")));
                }
            }
            serde_json::from_value(v).map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?
        }
    };
    Ok(base.overlay(inv.params.clone()))
}

/// Seed from the environment override, else the resolved config, else 0.
fn resolve_seed(configured: Option<u64>) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not a 64-bit unsigned integer"))),
        Err(_) => Ok(configured.unwrap_or(0)),
    }
}

fn envelope(command: &str, config: &impl Serialize, body: Value) -> Value {
    let mut v = json!({
        "schema": SCHEMA_VERSION,
        "command": command,
        "config": config,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    v
}

fn account(p: &AccountParams) -> Result<Outcome> {
    let bound = required(p.bound, "bound")?;
    let form = if p.printed_form.unwrap_or(false) {
        bound.printed_form()
    } else {
        EpsilonForm::Quartered
    };
    let deltas = if p.delta.is_empty() {
        vec![1e-5]
    } else {
        p.delta.clone()
    };
    let alphas = if p.alpha.is_empty() { vec![2.0] } else { p.alpha.clone() };
    let beta = p.beta.unwrap_or(1.0);
    let (value, baseline_step, n) = if bound.is_generic() {
        let c = required(p.c, "c")?;
        let spec = match bound {
            Bound::GenericPath => GenericDiffusionSpec {
                c,
                lipschitz: 0.0,
                c_gap: 0.0,
                horizon: required(p.horizon, "T")?,
                beta,
            },
            _ => GenericDiffusionSpec {
                c,
                lipschitz: required(p.lipschitz, "L")?,
                c_gap: required(p.c_gap, "c-gap")?,
                horizon: p.horizon.unwrap_or(1.0),
                beta,
            },
        };
        (bound.generic_constant(&spec)?, None, 0)
    } else {
        let path = bound.is_path_bound();
        let spec = DriftSpec {
            c: required(p.c, "c")?,
            lipschitz: if path {
                p.lipschitz.unwrap_or(f64::NAN)
            } else {
                required(p.lipschitz, "L")?
            },
            mu: if path {
                p.mu.unwrap_or(f64::NAN)
            } else {
                required(p.mu, "mu")?
            },
            gamma: if bound == Bound::UlaLimit {
                p.gamma.unwrap_or(f64::NAN)
            } else {
                required(p.gamma, "gamma")?
            },
            beta,
            s: p.s.unwrap_or(1),
            m: p.m.unwrap_or_else(|| p.s.unwrap_or(1)),
            n: if path { required(p.n, "n")? } else { p.n.unwrap_or(1) },
        };
        let value = bound.constant(&spec)?;
        let step = if path && spec.n >= 1 {
            bound.per_step_constant(&spec)
        } else {
            None
        };
        (value, step, spec.n)
    };

    let mut eps_rows = Vec::new();
    let mut baseline_rows = Vec::new();
    for &d in &deltas {
        let b = eps_delta_from_c(value, d, form)?;
        eps_rows.push(json!({"delta": d, "epsilon": b.epsilon}));
        if let Some(cs) = baseline_step {
            let base = composed_baseline(cs, n, d)?;
            baseline_rows.push(json!({"delta": d, "epsilon": base.epsilon, "composed_delta": base.delta}));
        }
    }
    let renyi_rows: Vec<Value> = alphas
        .iter()
        .map(|&a| Ok(json!({"alpha": a, "epsilon": renyi_from_c(value, a)?.epsilon})))
        .collect::<Result<_>>()?;

    let mut text = String::new();
    let _ = writeln!(text, "bound      {} ({})", bound.label(), bound.constant_name());
    let _ = writeln!(text, "constant   {} = {}", bound.constant_name(), value);
    let _ = writeln!(text, "form       {}", form_name(form));
    for r in &eps_rows {
        let _ = writeln!(
            text,
            "(ε, δ)     δ = {:<10} ε = {}",
            r["delta"].to_string(),
            r["epsilon"]
        );
    }
    for r in &renyi_rows {
        let _ = writeln!(
            text,
            "Rényi      α = {:<10} ε = {}",
            r["alpha"].to_string(),
            r["epsilon"]
        );
    }
    for r in &baseline_rows {
        let _ = writeln!(
            text,
            "composed   δ = {:<10} ε = {} (per-step composition of {n} steps)",
            r["delta"].to_string(),
            r["epsilon"]
        );
    }
    let report = envelope(
        "account",
        p,
        json!({
            "bound": bound.label(),
            "constant": bound.constant_name(),
            "value": value,
            "form": form_name(form),
            "epsilon_delta": eps_rows,
            "renyi": renyi_rows,
            "composition_baseline": if baseline_step.is_some() { Value::Array(baseline_rows) } else { Value::Null },
        }),
    );
    Ok(Outcome {
        report,
        text,
        pass: true,
        files: Vec::new(),
    })
}

fn form_name(f: EpsilonForm) -> &'static str {
    match f {
        EpsilonForm::Quartered => "quartered",
        EpsilonForm::Unquartered => "unquartered",
    }
}

/// Resolved certify settings with defaults filled in.
#[derive(Debug, Clone, Serialize)]
struct CertifySettings {
    family: PotentialFamily,
    sampler: Sampler,
    dim: usize,
    mu: f64,
    #[serde(rename = "L")]
    lipschitz: f64,
    c: f64,
    gamma: f64,
    beta: f64,
    m: usize,
    s: usize,
    steps: usize,
    replicates: u64,
    seed: u64,
    misdeclare: bool,
    eta: Option<f64>,
    closeness_replicates: u64,
}

fn certify_settings(p: &CertifyParams) -> Result<CertifySettings> {
    let s = CertifySettings {
        family: p.family.unwrap_or(PotentialFamily::Gaussian),
        sampler: p.sampler.unwrap_or(Sampler::Ula),
        dim: p.dim.unwrap_or(2),
        mu: p.mu.unwrap_or(1.0),
        lipschitz: p.lipschitz.unwrap_or(2.0),
        c: p.c.unwrap_or(1.0),
        gamma: p.gamma.unwrap_or(0.1),
        beta: p.beta.unwrap_or(1.0),
        m: p.m.unwrap_or(10),
        s: p.s.unwrap_or(2),
        steps: p.steps.unwrap_or(1000),
        replicates: p.replicates.unwrap_or(1000),
        seed: resolve_seed(p.seed)?,
        misdeclare: p.misdeclare.unwrap_or(false),
        eta: p.eta,
        closeness_replicates: p.closeness_replicates.unwrap_or(1000),
    };
    if s.steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    if s.replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if s.sampler == Sampler::Ula && s.beta != 1.0 {
        return Err(Error::Config(
            "the ULA sampler runs at beta = 1; use --sampler sgld".into(),
        ));
    }
    Ok(s)
}

/// Per-replicate outcome of a coupled run.
struct RunSummary {
    contraction_pass: bool,
    max_gap: f64,
    domination_violations: usize,
    first_violation: Option<usize>,
    constant_grad_violations: usize,
}

fn sgld_data(s: &CertifySettings) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = stream_rng(s.seed, CONFIG_STREAM);
    let mut z = vec![0.0; s.dim];
    let data: Vec<Vec<f64>> = (0..s.m)
        .map(|i| {
            crate::rng::fill_standard_normal(&mut rng, &mut z);
            let norm = crate::samplers::norm(&z).max(f64::MIN_POSITIVE);
            // The differing datum sits on the boundary of the ball.
            let radius = if i == 0 {
                s.c
            } else {
                s.c * rand::Rng::random::<f64>(&mut rng)
            };
            z.iter().map(|v| v * radius / norm).collect()
        })
        .collect();
    let mut other = data.clone();
    other[0] = data[0].iter().map(|v| -v).collect();
    (data, other)
}

fn certify(p: &CertifyParams) -> Result<Outcome> {
    let s = certify_settings(p)?;
    let spec = DriftSpec {
        c: s.c,
        lipschitz: s.lipschitz,
        mu: s.mu,
        gamma: s.gamma,
        beta: s.beta,
        s: if s.sampler == Sampler::Sgld { s.s as u64 } else { 1 },
        m: if s.sampler == Sampler::Sgld { s.m as u64 } else { 1 },
        n: s.steps as u64,
    };
    spec.check_step_window()?;
    let shrink = if s.misdeclare { 0.5 } else { 1.0 };
    let x0 = vec![0.0; s.dim];

    let summarize = |path: &CoupledPath| -> Result<RunSummary> {
        let c = contraction_certificate(path, &spec);
        let d = check_gap_domination(path, &spec);
        let cg = if path.batch_hits.is_some() {
            check_gap_domination_constant_grad(path, &spec)?.violations
        } else {
            0
        };
        Ok(RunSummary {
            contraction_pass: c.pass,
            max_gap: c.max_gap,
            domination_violations: d.violations,
            first_violation: d.first_violation,
            constant_grad_violations: cg,
        })
    };

    let (summaries, first_path, closeness) = match s.sampler {
        Sampler::Ula => {
            let potential = s
                .family
                .build(s.dim, s.mu * shrink, s.lipschitz * shrink, s.c)?
                .with_declared(s.lipschitz, s.mu);
            let (a, b) = s.family.adjacent_pair(s.dim, s.c);
            let run = |i: u64| run_coupled_ula(&potential, &a, &b, &x0, s.steps, s.gamma, s.seed, i);
            let summaries: Vec<RunSummary> = (0..s.replicates)
                .into_par_iter()
                .map(|i| summarize(&run(i)?))
                .collect::<Result<_>>()?;
            let first = run(0)?;
            let eta = s.eta.unwrap_or_else(|| spec.contraction_gap_bound());
            let cert = empirical_closeness(
                ClosenessRun {
                    potential: &potential,
                    dataset_a: &a,
                    dataset_b: &b,
                    steps: s.steps,
                    gamma: s.gamma,
                    seed: s.seed,
                },
                |x| x[0],
                eta,
                s.closeness_replicates,
            )?;
            (summaries, first, Some(cert))
        }
        Sampler::Sgld => {
            let (data, other) = sgld_data(&s);
            let mut loss = LossSpec::constant_gradient(
                spread_curvatures(s.dim, s.mu * shrink, s.lipschitz * shrink),
                data,
                s.s,
                s.c,
                s.beta,
            )?;
            loss.mu = s.mu;
            loss.lipschitz = s.lipschitz;
            let run = |i: u64| run_coupled_sgld(&loss, &other, &x0, s.steps, s.gamma, s.seed, i);
            let summaries: Vec<RunSummary> = (0..s.replicates)
                .into_par_iter()
                .map(|i| summarize(&run(i)?))
                .collect::<Result<_>>()?;
            (summaries, run(0)?, None)
        }
    };

    let bound = spec.contraction_gap_bound();
    let contraction_violations = summaries.iter().filter(|r| !r.contraction_pass).count();
    let max_gap = summaries.iter().map(|r| r.max_gap).fold(0.0, f64::max);
    let domination_violations: usize = summaries.iter().map(|r| r.domination_violations).sum();
    let first_violation = summaries
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.first_violation.map(|step| json!({"replicate": i, "step": step})));
    let cg_violations: usize = summaries.iter().map(|r| r.constant_grad_violations).sum();
    let pass = contraction_violations == 0 && domination_violations == 0 && cg_violations == 0;

    let mut csv = Vec::new();
    first_path.write_csv(&mut csv, true)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "sampler           {:?} / {:?}, d = {}",
        s.sampler, s.family, s.dim
    );
    let _ = writeln!(
        text,
        "replicates        {} × {} steps (seed {})",
        s.replicates, s.steps, s.seed
    );
    let _ = writeln!(text, "gap bound         {bound}");
    let _ = writeln!(text, "max gap           {max_gap}");
    let _ = writeln!(text, "bound violations  {contraction_violations}");
    let _ = writeln!(text, "step violations   {domination_violations}");
    if s.sampler == Sampler::Sgld {
        let _ = writeln!(text, "minibatch-aware   {cg_violations}");
    }
    if let Some(c) = &closeness {
        let _ = writeln!(
            text,
            "closeness         η = {}, δ̃ = {} (point {})",
            c.eta, c.delta_tilde, c.delta_tilde_point
        );
    }
    let _ = writeln!(text, "verdict           {}", if pass { "PASS" } else { "FAIL" });

    let report = envelope(
        "certify",
        &s,
        json!({
            "contraction": {
                "replicates": s.replicates,
                "bound": bound,
                "max_gap": max_gap,
                "violations": contraction_violations,
                "pass": contraction_violations == 0,
            },
            "domination": {
                "steps_checked": s.replicates * s.steps as u64,
                "violations": domination_violations,
                "first_violation": first_violation,
                "pass": domination_violations == 0,
            },
            "constant_grad_domination": if s.sampler == Sampler::Sgld {
                json!({"violations": cg_violations, "pass": cg_violations == 0})
            } else {
                Value::Null
            },
            "closeness": closeness,
            "pass": pass,
        }),
    );
    Ok(Outcome {
        report,
        text,
        pass,
        files: vec![("gaps.csv".into(), csv)],
    })
}

struct SuiteOut {
    name: &'static str,
    reports: Value,
    pass: bool,
    lines: Vec<String>,
    files: Vec<(String, Vec<u8>)>,
}

fn finite_suite(p: &VerifyParams, seed: u64) -> Result<SuiteOut> {
    let trials = p.trials.unwrap_or(10_000);
    let k = p.k.unwrap_or(4);
    let bounds = if p.tv_bounds.is_empty() {
        vec![0.01, 0.05]
    } else {
        p.tv_bounds.clone()
    };
    let prop = verify_tv_propagation(trials, k, &bounds, seed)?;
    let sep = verify_tv_separation(
        p.epsilon.unwrap_or(0.0),
        p.delta_mu.unwrap_or(0.5),
        p.delta_nu.unwrap_or(0.1),
    )?;
    let pairs = p.agreement_pairs.unwrap_or(1_000);
    let mismatches: u64 = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let mut rng = stream_rng(seed ^ 0x005e_ed0f_a9e3, i);
            let k = 1 + (i % 12) as usize;
            let a = FiniteDist::random(&mut rng, k);
            let b = FiniteDist::random(&mut rng, k);
            let eps = 2.0 * rand::Rng::random::<f64>(&mut rng);
            let budget = PrivacyBudget::new(eps, 0.0)?;
            let x = check_dp_brute_force(&a, &b, budget)?;
            let y = check_dp_threshold(&a, &b, budget)?;
            Ok(u64::from(x.minimal_delta.to_bits() != y.minimal_delta.to_bits()))
        })
        .sum::<Result<u64>>()?;
    let agreement = json!({"pairs": pairs, "mismatches": mismatches, "pass": mismatches == 0});
    let pass = prop.pass && sep.pass && mismatches == 0;
    let lines = vec![
        format!(
            "tv-propagation    {} trials, k = {}, violations {}, worst budget use {:.4}",
            prop.trials, prop.support, prop.violations, prop.max_budget_used
        ),
        format!(
            "tv-separation     bound {}, observed {}, fixed-point residual {:e}",
            sep.lower_bound, sep.observed_tv, sep.fixed_point_residual
        ),
        format!("event agreement   {pairs} pairs, {mismatches} mismatches"),
    ];
    Ok(SuiteOut {
        name: "finite",
        reports: json!({"tv_propagation": prop, "tv_separation": sep, "agreement": agreement}),
        pass,
        lines,
        files: Vec::new(),
    })
}

fn audit_suite(p: &VerifyParams, seed: u64) -> Result<SuiteOut> {
    let steps = p.steps.unwrap_or(10_000);
    let alpha = p.alpha.unwrap_or(2.0);
    let configs = p.configs.unwrap_or(1_000);
    let sweep = audit_sweep(configs, steps, alpha, seed)?;
    let spec = DriftSpec {
        beta: p.beta.unwrap_or(1.0),
        ..DriftSpec::ula(
            p.c.unwrap_or(0.1),
            p.lipschitz.unwrap_or(1.0),
            p.mu.unwrap_or(1.0),
            p.gamma.unwrap_or(0.5),
            steps,
        )
    };
    let single = ula_gaussian_audit(&spec, steps, alpha)?;
    let mut csv = Vec::new();
    write_audit_csv(&spec, steps, alpha, &mut csv)?;
    let lines = vec![
        format!(
            "random sweep      {} configs × {} steps, violations {}, min slack ×{:.3}",
            sweep.configs, sweep.steps, sweep.violations, sweep.min_slack_factor
        ),
        format!(
            "reference config  max divergence {} at n = {}, budget {}",
            single.max_divergence, single.argmax_n, single.budget
        ),
    ];
    Ok(SuiteOut {
        name: "gaussian_audit",
        pass: sweep.pass && single.pass,
        reports: json!({"sweep": sweep, "reference": {"spec": spec, "audit": single}}),
        lines,
        files: vec![("audit.csv".into(), csv)],
    })
}

fn girsanov_suite(p: &VerifyParams, seed: u64) -> Result<SuiteOut> {
    let exp = GirsanovExperiment {
        dim: p.dim.unwrap_or(1),
        family: p.drift_family.unwrap_or(DriftFamily::ConstantGap),
        c: p.c.unwrap_or(1.0),
        mu: p.mu.unwrap_or(0.5),
        gamma: p.gamma.unwrap_or(0.01),
        beta: p.beta.unwrap_or(1.0),
        steps: p.steps.unwrap_or(100) as usize,
        seed,
    };
    let alpha = p.alpha.unwrap_or(2.0);
    let replicates = p.replicates.unwrap_or(100_000);
    if replicates < crate::pathwise::MIN_REPLICATES {
        return Err(Error::Config(format!(
            "need at least {} replicates, got {replicates}",
            crate::pathwise::MIN_REPLICATES
        )));
    }
    if alpha <= 1.0 {
        return Err(Error::Config(format!("alpha must exceed 1, got {alpha}")));
    }
    let llrs: Vec<f64> = exp.samples(replicates, false)?.into_iter().map(|s| s.llr).collect();
    let moment = moment_report(&exp, &llrs, alpha);
    let c = exp.path_constant();
    let thresholds: Vec<f64> = [0.5, 0.1, 0.01]
        .iter()
        .map(|&d: &f64| c / 4.0 + (c * (1.0 / d).ln()).sqrt())
        .collect();
    let tails: Vec<_> = thresholds.iter().map(|&eps| tail_report(&exp, &llrs, eps)).collect();
    let verdict = Verdict::all(std::iter::once(moment.verdict).chain(tails.iter().map(|t| t.verdict)));
    let mut lines = vec![format!(
        "moment α = {alpha}     estimate {} vs bound {} → {:?}",
        moment.estimated, moment.predicted, moment.verdict
    )];
    for (eps, t) in thresholds.iter().zip(&tails) {
        lines.push(format!(
            "tail ε = {eps:<9.6} freq {} (99% ≤ {}) vs {} → {:?}",
            t.estimated, t.ci_high, t.predicted, t.verdict
        ));
    }
    Ok(SuiteOut {
        name: "girsanov",
        reports: json!({"experiment": exp, "moment": moment, "tail": tails, "verdict": verdict}),
        pass: verdict == Verdict::Pass,
        lines,
        files: Vec::new(),
    })
}

fn laplace_suite(p: &VerifyParams) -> Result<SuiteOut> {
    let eta = p.eta.unwrap_or(1.0);
    let epsilon = p.epsilon.unwrap_or(1.0);
    let grid = default_threshold_grid(eta, p.grid_points.unwrap_or(1_000));
    let check = laplace_assumption_check(eta, epsilon, &grid)?;
    let lines = vec![format!(
        "laplace           {} events, max log-ratio {} vs ε = {}",
        check.events, check.max_log_ratio, check.epsilon
    )];
    Ok(SuiteOut {
        name: "laplace",
        pass: check.pass,
        reports: serde_json::to_value(check).expect("serializable"),
        lines,
        files: Vec::new(),
    })
}

fn verify(p: &VerifyParams) -> Result<Outcome> {
    let suite = p.suite.unwrap_or(Suite::All);
    let seed = resolve_seed(p.seed)?;
    let mut outs = Vec::new();
    if matches!(suite, Suite::Finite | Suite::All) {
        outs.push(finite_suite(p, seed)?);
    }
    if matches!(suite, Suite::GaussianAudit | Suite::All) {
        outs.push(audit_suite(p, seed)?);
    }
    if matches!(suite, Suite::Girsanov | Suite::All) {
        outs.push(girsanov_suite(p, seed)?);
    }
    if matches!(suite, Suite::Laplace | Suite::All) {
        outs.push(laplace_suite(p)?);
    }
    let pass = outs.iter().all(|o| o.pass);
    let mut text = String::new();
    let mut reports = serde_json::Map::new();
    let mut files = Vec::new();
    for o in outs {
        let _ = writeln!(text, "[{}] {}", o.name, if o.pass { "PASS" } else { "FAIL" });
        for l in &o.lines {
            let _ = writeln!(text, "  {l}");
        }
        reports.insert(o.name.into(), o.reports);
        files.extend(o.files);
    }
    let mut resolved = p.clone();
    resolved.seed = Some(seed);
    let report = envelope("verify", &resolved, json!({"reports": reports, "pass": pass}));
    Ok(Outcome {
        report,
        text,
        pass,
        files,
    })
}

fn release(p: &ReleaseParams) -> Result<Outcome> {
    let epsilon = required(p.epsilon, "epsilon")?;
    let eta = p
        .eta
        .ok_or_else(|| Error::Config("missing mechanism scale: set --eta (= 2·c_conc + gamma_f)".into()))?;
    let spec = EstimatorSpec {
        c_conc: required(p.c_conc, "c-conc")?,
        delta_tilde: required(p.delta_tilde, "delta-tilde")?,
        gamma_f: required(p.gamma_f, "gamma-f")?,
        n: p.steps.unwrap_or(1000) as u64,
    };
    spec.validate()?;
    if spec.n == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    let expected = spec.eta();
    if (eta - expected).abs() > 1e-12 * expected.abs().max(1.0) {
        return Err(Error::Config(format!(
            "refusing to release: eta = {eta} but 2·c_conc + gamma_f = {expected}"
        )));
    }
    let mech = Laplace::new(eta, epsilon)?;
    let family = p.family.unwrap_or(PotentialFamily::Gaussian);
    let dim = p.dim.unwrap_or(1);
    let (mu, lipschitz, c) = (p.mu.unwrap_or(1.0), p.lipschitz.unwrap_or(1.0), p.c.unwrap_or(1.0));
    let gamma = p.gamma.unwrap_or(0.1);
    let seed = resolve_seed(p.seed)?;
    let coordinate = p.coordinate.unwrap_or(0);
    if coordinate >= dim {
        return Err(Error::Config(format!(
            "coordinate {coordinate} out of range for dim {dim}"
        )));
    }
    let potential = family.build(dim, mu, lipschitz, c)?;
    let (data, _) = family.adjacent_pair(dim, c);
    // A coupled run against itself is a single chain on `data`.
    let path = run_coupled_ula(
        &potential,
        &data,
        &data,
        &vec![0.0; dim],
        spec.n as usize,
        gamma,
        seed,
        0,
    )?;
    let samples: Vec<f64> = (1..=spec.n as usize).map(|k| path.state_a(k)[coordinate]).collect();
    let value = release_ergodic_average(&samples, &mech, seed)?;
    let budget = estimator_budget(&spec, mech.budget())?;
    let text = format!(
        "released   {value}\nbudget     {budget}\nmechanism  Laplace, η = {eta}, ε = {epsilon}, scale {}\nnoise var  {}\n",
        mech.scale(),
        mech.variance()
    );
    let mut resolved = p.clone();
    resolved.seed = Some(seed);
    let report = envelope(
        "release",
        &resolved,
        json!({
            "value": value,
            "budget": budget,
            "mechanism": {"kind": "laplace", "eta": eta, "epsilon": epsilon, "scale": mech.scale()},
            "noise_variance": mech.variance(),
            "estimator": spec,
        }),
    );
    Ok(Outcome {
        report,
        text,
        pass: true,
        files: Vec::new(),
    })
}

fn execute(cli: &Cli) -> Result<(Outcome, Option<PathBuf>)> {
    Ok(match &cli.command {
        Command::Account(inv) => (account(&load(inv)?)?, inv.out.clone()),
        Command::Certify(inv) => (certify(&load(inv)?)?, inv.out.clone()),
        Command::Verify(inv) => (verify(&load(inv)?)?, inv.out.clone()),
        Command::Release(inv) => (release(&load(inv)?)?, inv.out.clone()),
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Account(_) => "account",
        Command::Certify(_) => "certify",
        Command::Verify(_) => "verify",
        Command::Release(_) => "release",
    }
}

/// Writes the report, the resolved config (replayable through `--config`)
/// and any CSV artifacts.
fn write_outputs(dir: &Path, name: &str, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut echo = json!({"schema": SCHEMA_VERSION});
    if let (Value::Object(dst), Some(Value::Object(src))) = (&mut echo, outcome.report.get("config").cloned()) {
        dst.extend(src.into_iter().filter(|(_, v)| !v.is_null()));
    }
    fs::write(dir.join("config.json"), pretty(&echo))?;
    let report = if name == "certify" {
        "certificate".to_string()
    } else {
        name.to_string()
    };
    fs::write(dir.join(format!("{report}.json")), pretty(&outcome.report))?;
    for (file, bytes) in &outcome.files {
        fs::write(dir.join(file), bytes)?;
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric { .. } => 2,
        _ => 1,
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    let result = pool.install(|| execute(&cli));
    let (outcome, out) = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Some(dir) = &out {
        if let Err(e) = write_outputs(dir, command_name(&cli.command), &outcome) {
            eprintln!("error: {e}");
            return 1;
        }
    }
    if cli.json {
        print!("{}", pretty(&outcome.report));
    } else {
        print!("{}", outcome.text);
    }
    if outcome.pass {
        0
    } else {
        3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("langevin-dp").chain(args.iter().copied())).unwrap()
    }

    fn run_account(args: &[&str]) -> Outcome {
        match parse(args).command {
            Command::Account(inv) => account(&load(&inv).unwrap()).unwrap(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn account_final_draw_row() {
        let o = run_account(&[
            "account",
            "--bound",
            "ula-final",
            "--c",
            "1",
            "--L",
            "1",
            "--mu",
            "1",
            "--gamma",
            "1",
            "--delta",
            "0.01",
            "--alpha",
            "2",
        ]);
        assert!((o.report["value"].as_f64().unwrap() - 81.0).abs() < 1e-12);
        assert_eq!(o.report["constant"], "C3");
        assert_eq!(o.report["schema"], 1);
        assert!((o.report["renyi"][0]["epsilon"].as_f64().unwrap() - 40.5).abs() < 1e-12);
    }

    #[test]
    fn account_path_row() {
        let o = run_account(&[
            "account", "--bound", "ula-path", "--n", "100", "--gamma", "0.01", "--c", "1",
        ]);
        assert!((o.report["value"].as_f64().unwrap() - 1.0).abs() < 1e-14);
        assert!(o.report["composition_baseline"].is_array());
    }

    #[test]
    fn account_missing_flag_is_config_error() {
        let inv = match parse(&["account", "--bound", "ula-final", "--c", "1"]).command {
            Command::Account(inv) => inv,
            _ => unreachable!(),
        };
        assert!(matches!(account(&load(&inv).unwrap()), Err(Error::Config(_))));
        assert_eq!(run(["langevin-dp", "account", "--bogus"]), 1);
    }

    #[test]
    fn step_window_violation_names_hypothesis() {
        let inv = match parse(&[
            "account", "--bound", "C3", "--c", "1", "--L", "1", "--mu", "1", "--gamma", "2",
        ])
        .command
        {
            Command::Account(inv) => inv,
            _ => unreachable!(),
        };
        let err = account(&load(&inv).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(_)));
        assert!(err.to_string().contains("2μ/L²"));
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(
            &cfg,
            r#"{"schema": 1, "bound": "ula-path", "c": 3.0, "gamma": 0.01, "n": 100}"#,
        )
        .unwrap();
        let o = run_account(&["account", "--config", cfg.to_str().unwrap(), "--c", "1"]);
        assert!((o.report["value"].as_f64().unwrap() - 1.0).abs() < 1e-14);
        fs::write(&cfg, r#"{"schema": 2}"#).unwrap();
        let inv = match parse(&["account", "--config", cfg.to_str().unwrap()]).command {
            Command::Account(inv) => inv,
            _ => unreachable!(),
        };
        assert!(load(&inv).is_err());
    }

    #[test]
    fn certify_rejects_zero_steps_and_flags_misdeclared_mu() {
        let p = CertifyParams {
            steps: Some(0),
            ..Default::default()
        };
        assert!(matches!(certify(&p), Err(Error::Config(_))));
        let base = CertifyParams {
            dim: Some(1),
            mu: Some(1.0),
            lipschitz: Some(1.0),
            gamma: Some(0.05),
            steps: Some(500),
            replicates: Some(20),
            seed: Some(1),
            ..Default::default()
        };
        assert!(certify(&base).unwrap().pass);
        let bad = CertifyParams {
            misdeclare: Some(true),
            ..base
        };
        assert!(!certify(&bad).unwrap().pass);
    }

    #[test]
    fn release_examples() {
        let p = ReleaseParams {
            epsilon: Some(1.0),
            eta: Some(1.1),
            c_conc: Some(0.5),
            gamma_f: Some(0.1),
            delta_tilde: Some(0.1),
            steps: Some(200),
            seed: Some(3),
            ..Default::default()
        };
        let o = release(&p).unwrap();
        assert_eq!(o.report["budget"]["delta"].as_f64().unwrap(), 0.19);
        assert_eq!(o.report["budget"]["epsilon"].as_f64().unwrap(), 1.0);
        let smoke = release(&ReleaseParams {
            delta_tilde: Some(0.0),
            ..p.clone()
        })
        .unwrap();
        assert_eq!(smoke.report["budget"]["delta"].as_f64().unwrap(), 0.0);
        assert!(matches!(
            release(&ReleaseParams { eta: None, ..p.clone() }),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            release(&ReleaseParams { eta: Some(2.0), ..p }),
            Err(Error::Config(_))
        ));
    }
}
