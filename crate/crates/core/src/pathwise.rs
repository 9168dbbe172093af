//! Exact likelihood ratios between the path laws of two Langevin chains.
//!
//! A chain `x_{k+1} = x_k − γb(x_k) + √(2γ/β)z_k` has Gaussian transitions,
//! so the log density ratio of a whole path under drifts `b_D` and `b_{D′}`
//! is a finite sum with no discretization error. Its tail controls the
//! `(ε, δ)` budget of the path and its moments control the Rényi budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{delta_at_epsilon, DriftSpec};
use crate::error::{ensure, Error, Result};
use crate::rng::{fill_standard_normal, stream_rng};
use crate::stats::{log_mean_exp, wilson_interval, Report, Verdict, Z_99};

/// Relative standard error above which a moment estimate is reported as
/// unstable instead of pass/fail.
pub const MAX_RELATIVE_SE: f64 = 0.5;

/// Smallest replicate count accepted by the Monte Carlo verifiers.
pub const MIN_REPLICATES: u64 = 1_000;

/// Per-step and total `log dP/dQ` along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathLLR {
    pub per_step_llr: Vec<f64>,
    pub total: f64,
    /// `Σ γ|b_D(x_k) − b_{D′}(x_k)|²`.
    pub drift_gap_sq_integral: f64,
}

/// `log p_D(x_{k+1} | x_k) − log p_{D′}(x_{k+1} | x_k)` and
/// `γ|b_{D′} − b_D|²` for one transition.
///
/// Evaluates `(β/4γ)(|Δ + γb_{D′}|² − |Δ + γb_D|²)` in the factored form
/// `(β/4)Σ hᵢ(2Δᵢ + γ(b_{D′,i} + b_{D,i}))`, `h = b_{D′} − b_D`.
fn step_llr(x: &[f64], x_next: &[f64], bd: &[f64], bdp: &[f64], gamma: f64, beta: f64) -> (f64, f64) {
    let mut acc = 0.0;
    let mut h2 = 0.0;
    for i in 0..x.len() {
        let h = bdp[i] - bd[i];
        let delta = x_next[i] - x[i];
        acc += h * (2.0 * delta + gamma * (bdp[i] + bd[i]));
        h2 += h * h;
    }
    (beta / 4.0 * acc, gamma * h2)
}

/// `log dP/dQ` of `path` where `P` uses `drift_d` and `Q` uses
/// `drift_dprime`, both with transition law `N(x − γb(x), (2γ/β)I)`.
pub fn path_log_likelihood_ratio<F, G>(
    path: &[Vec<f64>],
    drift_d: F,
    drift_dprime: G,
    gamma: f64,
    beta: f64,
) -> Result<PathLLR>
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
{
    ensure(gamma > 0.0 && beta > 0.0, || {
        format!("need gamma, beta > 0, got gamma={gamma} beta={beta}")
    })?;
    let d = path.first().map_or(0, Vec::len);
    let (mut bd, mut bdp) = (vec![0.0; d], vec![0.0; d]);
    let mut per_step_llr = Vec::with_capacity(path.len().saturating_sub(1));
    let mut drift_gap_sq_integral = 0.0;
    for (k, w) in path.windows(2).enumerate() {
        drift_d(&w[0], &mut bd);
        drift_dprime(&w[0], &mut bdp);
        let (llr, h2) = step_llr(&w[0], &w[1], &bd, &bdp, gamma, beta);
        if !llr.is_finite() {
            return Err(Error::Numeric {
                step: k + 1,
                detail: "log-likelihood ratio is not finite".into(),
            });
        }
        per_step_llr.push(llr);
        drift_gap_sq_integral += h2;
    }
    let total = per_step_llr.iter().sum();
    Ok(PathLLR {
        per_step_llr,
        total,
        drift_gap_sq_integral,
    })
}

/// How the two drifts differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DriftFamily {
    /// `b_{D/D′}(x) = μx ± (c/2)e₁`: the gap is exactly `c` everywhere.
    ConstantGap,
    /// `b_{D/D′}(x) = μx ± (c/2)u(x)` with `uᵢ(x) = cos(xᵢ)/√d`: the gap is
    /// state dependent and at most `c`.
    Sinusoidal,
}

/// A pair of chains on adjacent datasets, started at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirsanovExperiment {
    pub dim: usize,
    pub family: DriftFamily,
    pub c: f64,
    pub mu: f64,
    pub gamma: f64,
    pub beta: f64,
    pub steps: usize,
    pub seed: u64,
}

/// One simulated path summarized by what the verifiers need.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub llr: f64,
    pub drift_gap_sq_integral: f64,
    pub final_state: Vec<f64>,
}

impl GirsanovExperiment {
    pub fn from_spec(spec: &DriftSpec, dim: usize, family: DriftFamily, seed: u64) -> Self {
        Self {
            dim,
            family,
            c: spec.c,
            mu: spec.mu,
            gamma: spec.gamma,
            beta: spec.beta,
            steps: spec.n as usize,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.dim >= 1, || "dimension must be positive".into())?;
        ensure(self.c >= 0.0 && self.c.is_finite(), || {
            format!("c must be nonnegative, got {}", self.c)
        })?;
        ensure(self.mu >= 0.0 && self.mu.is_finite(), || {
            format!("mu must be nonnegative, got {}", self.mu)
        })?;
        ensure(self.gamma > 0.0 && self.beta > 0.0, || {
            "gamma and beta must be positive".into()
        })?;
        ensure(self.steps >= 1, || "need at least one step".into())
    }

    /// `C = βc²nγ`, the constant of the path bound.
    pub fn path_constant(&self) -> f64 {
        self.beta * self.c * self.c * self.steps as f64 * self.gamma
    }

    /// `b_D` when `sign = +1`, `b_{D′}` when `sign = −1`.
    pub fn drift(&self, sign: f64, x: &[f64], out: &mut [f64]) {
        let half = sign * self.c / 2.0;
        match self.family {
            DriftFamily::ConstantGap => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = self.mu * xi;
                }
                out[0] += half;
            }
            DriftFamily::Sinusoidal => {
                let amp = half / (self.dim as f64).sqrt();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = self.mu * xi + amp * xi.cos();
                }
            }
        }
    }

    /// Simulates replicate `stream` under `D` (or under `D′` when
    /// `under_prime`) and returns `log dP_D/dP_{D′}` along the path.
    pub fn sample(&self, stream: u64, under_prime: bool) -> Result<PathSample> {
        let d = self.dim;
        let mut rng = stream_rng(self.seed, stream);
        let scale = (2.0 * self.gamma / self.beta).sqrt();
        let (mut x, mut next) = (vec![0.0; d], vec![0.0; d]);
        let (mut bd, mut bdp, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut llr = 0.0;
        let mut gap = 0.0;
        for step in 1..=self.steps {
            self.drift(1.0, &x, &mut bd);
            self.drift(-1.0, &x, &mut bdp);
            fill_standard_normal(&mut rng, &mut z);
            let b = if under_prime { &bdp } else { &bd };
            for i in 0..d {
                next[i] = x[i] - self.gamma * b[i] + scale * z[i];
            }
            let (l, h2) = step_llr(&x, &next, &bd, &bdp, self.gamma, self.beta);
            llr += l;
            gap += h2;
            if !llr.is_finite() || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    step,
                    detail: "path diverged".into(),
                });
            }
            std::mem::swap(&mut x, &mut next);
        }
        Ok(PathSample {
            llr,
            drift_gap_sq_integral: gap,
            final_state: x,
        })
    }

    /// Replicates `0..replicates` in order. Replicate `i` always reads
    /// stream `i`, whatever the thread count.
    pub fn samples(&self, replicates: u64, under_prime: bool) -> Result<Vec<PathSample>> {
        self.validate()?;
        (0..replicates)
            .into_par_iter()
            .map(|i| self.sample(i, under_prime))
            .collect()
    }

    /// `E_P[(dP/dQ)^{α−1}] = exp((α−1)αβγc²n/4)` when the gap is exactly `c`
    /// at every step.
    pub fn constant_gap_moment(&self, alpha: f64) -> f64 {
        ((alpha - 1.0) * alpha * self.path_constant() / 4.0).exp()
    }
}

fn check_replicates(replicates: u64) -> Result<()> {
    if replicates < MIN_REPLICATES {
        Err(Error::Config(format!(
            "need at least {MIN_REPLICATES} replicates, got {replicates}"
        )))
    } else {
        Ok(())
    }
}

/// Tail check from pre-drawn samples at one threshold.
pub fn tail_report(exp: &GirsanovExperiment, llrs: &[f64], epsilon_target: f64) -> Report {
    let c = exp.path_constant();
    let predicted = delta_at_epsilon(c, epsilon_target);
    let hits = llrs.iter().filter(|&&l| l > epsilon_target).count() as u64;
    let n = llrs.len() as u64;
    let ci = wilson_interval(hits, n, Z_99);
    let verdict = if c == 0.0 {
        // The ratio is identically zero, so the check is exact.
        Verdict::from_bool(hits == 0)
    } else {
        Verdict::from_bool(ci.high <= predicted)
    };
    Report {
        bound_name: format!("path-tail@{epsilon_target}"),
        predicted,
        estimated: hits as f64 / n as f64,
        ci_low: ci.low,
        ci_high: ci.high,
        verdict,
        seed: exp.seed,
        replicates: n,
    }
}

/// Frequency of `log dP/dQ > ε_target` against the sub-Gaussian prediction
/// `exp(−(ε − C/4)²/C)`, `C = βc²nγ`. Passes when the upper 99% Wilson
/// limit is below the prediction.
pub fn verify_tail_bound(exp: &GirsanovExperiment, replicates: u64, epsilon_target: f64) -> Result<Report> {
    check_replicates(replicates)?;
    let llrs: Vec<f64> = exp.samples(replicates, false)?.into_iter().map(|s| s.llr).collect();
    Ok(tail_report(exp, &llrs, epsilon_target))
}

/// Tail checks at the thresholds where the predicted δ equals each entry of
/// `deltas`, sharing one set of paths.
pub fn verify_tail_thresholds(exp: &GirsanovExperiment, replicates: u64, deltas: &[f64]) -> Result<Vec<Report>> {
    check_replicates(replicates)?;
    let c = exp.path_constant();
    let llrs: Vec<f64> = exp.samples(replicates, false)?.into_iter().map(|s| s.llr).collect();
    deltas
        .iter()
        .map(|&d| {
            ensure(d > 0.0 && d < 1.0, || format!("delta must lie in (0, 1), got {d}"))?;
            let eps = c / 4.0 + (c * (1.0 / d).ln()).sqrt();
            Ok(tail_report(exp, &llrs, eps))
        })
        .collect()
}

/// Moment check from pre-drawn ratios.
pub fn moment_report(exp: &GirsanovExperiment, llrs: &[f64], alpha: f64) -> Report {
    let scaled: Vec<f64> = llrs.iter().map(|l| (alpha - 1.0) * l).collect();
    let (log_est, rel_se) = log_mean_exp(&scaled);
    let estimated = log_est.exp();
    let predicted = exp.constant_gap_moment(alpha);
    let verdict = if !estimated.is_finite() || !rel_se.is_finite() || rel_se > MAX_RELATIVE_SE {
        Verdict::Unstable
    } else {
        Verdict::from_bool(estimated <= predicted * (1.0 + 3.0 * rel_se))
    };
    let se = rel_se * estimated;
    Report {
        bound_name: format!("path-moment@alpha={alpha}"),
        predicted,
        estimated,
        ci_low: estimated - 3.0 * se,
        ci_high: estimated + 3.0 * se,
        verdict,
        seed: exp.seed,
        replicates: llrs.len() as u64,
    }
}

/// Monte Carlo estimate of `E_P[(dP/dQ)^{α−1}]` against
/// `exp((α−1)α·C/4)`. The band is three standard errors; an estimate whose
/// relative error exceeds [`MAX_RELATIVE_SE`] is reported unstable.
pub fn verify_moment_bound(exp: &GirsanovExperiment, alpha: f64, replicates: u64) -> Result<Report> {
    ensure(alpha > 1.0, || format!("Rényi order must exceed 1, got {alpha}"))?;
    ensure(replicates >= 2, || "need at least two replicates".into())?;
    let llrs: Vec<f64> = exp.samples(replicates, false)?.into_iter().map(|s| s.llr).collect();
    Ok(moment_report(exp, &llrs, alpha))
}
