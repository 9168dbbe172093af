//! Private release of Monte Carlo estimates.
//!
//! The released value is an ergodic average plus independent Laplace noise
//! of scale `η/ε`. If the averages on adjacent datasets are within `η` of
//! each other except with probability `δ̃`, the release is
//! `(ε, δ + δ̃)`-DP.

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure, Result};
use crate::privacy::PrivacyBudget;
use crate::rng::{stream_rng, MECHANISM_STREAM};
use crate::samplers::{run_coupled_ula, DecomposedPotential};
use crate::stats::{wilson_interval, Interval, Z_99};

/// Tolerance on the log-ratio when certifying a mechanism analytically.
pub const LOG_RATIO_TOLERANCE: f64 = 1e-10;

/// Inputs that make an ergodic average a private estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct EstimatorSpec {
    /// Radius within which the ergodic average concentrates around
    /// `π_D(f)`.
    pub c_conc: f64,
    /// Probability that it does not.
    pub delta_tilde: f64,
    /// Bound on `|π_D(f) − π_{D′}(f)|` over adjacent datasets.
    pub gamma_f: f64,
    /// Chain length.
    pub n: u64,
}

impl EstimatorSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.c_conc >= 0.0 && self.c_conc.is_finite(), || {
            format!("concentration radius must be nonnegative, got {}", self.c_conc)
        })?;
        ensure(self.gamma_f >= 0.0 && self.gamma_f.is_finite(), || {
            format!("sensitivity must be nonnegative, got {}", self.gamma_f)
        })?;
        // δ̃ = 0 (perfect concentration) is accepted as a boundary case.
        ensure((0.0..1.0).contains(&self.delta_tilde), || {
            format!("failure probability must lie in [0, 1), got {}", self.delta_tilde)
        })?;
        ensure(self.n >= 1, || "chain length must be positive".into())
    }

    /// `η = 2C + γ_f`, the closeness scale the mechanism must absorb.
    pub fn eta(&self) -> f64 {
        2.0 * self.c_conc + self.gamma_f
    }
}

/// A randomized map `a ↦ a + noise` whose output laws at points within
/// `eta` of each other satisfy a DP inequality.
pub trait NoiseMechanism {
    fn eta(&self) -> f64;
    fn budget(&self) -> PrivacyBudget;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
    /// Variance of the noise.
    fn variance(&self) -> f64;
}

/// Laplace noise of scale `η/ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Laplace {
    eta: f64,
    epsilon: f64,
}

impl Laplace {
    pub fn new(eta: f64, epsilon: f64) -> Result<Self> {
        ensure(eta >= 0.0 && eta.is_finite(), || {
            format!("eta must be nonnegative, got {eta}")
        })?;
        ensure(epsilon > 0.0 && epsilon.is_finite(), || {
            format!("epsilon must be positive, got {epsilon}")
        })?;
        Ok(Self { eta, epsilon })
    }

    pub fn scale(&self) -> f64 {
        self.eta / self.epsilon
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl NoiseMechanism for Laplace {
    fn eta(&self) -> f64 {
        self.eta
    }

    fn budget(&self) -> PrivacyBudget {
        PrivacyBudget {
            epsilon: self.epsilon,
            delta: 0.0,
        }
    }

    /// Inverse CDF: `−b·sgn(u)·log(1 − 2|u|)` for `u` uniform on `(−½, ½)`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let b = self.scale();
        if b == 0.0 {
            return 0.0;
        }
        let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
        -b * u.signum() * (-2.0 * u.abs()).ln_1p()
    }

    fn variance(&self) -> f64 {
        let b = self.scale();
        2.0 * b * b
    }
}

/// `mean(samples) + noise`, with the noise drawn from the mechanism stream
/// of `seed`, which no chain replicate uses.
pub fn release_ergodic_average<M: NoiseMechanism>(samples: &[f64], mech: &M, seed: u64) -> Result<f64> {
    ensure(!samples.is_empty(), || {
        "cannot release the average of no samples".into()
    })?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut rng = stream_rng(seed, MECHANISM_STREAM);
    Ok(mean + mech.sample(&mut rng))
}

/// Variance of a release: that of the average plus `2b²` for Laplace noise
/// of scale `b`.
pub fn release_variance<M: NoiseMechanism>(average_variance: f64, mech: &M) -> f64 {
    average_variance + mech.variance()
}

/// `log P(lo ≤ L ≤ hi)` for `L ~ Laplace(0, b)`, accurate in both tails.
fn log_interval_mass(lo: f64, hi: f64, b: f64) -> f64 {
    let (l, h) = (lo / b, hi / b);
    if h <= 0.0 {
        // ½e^{h}(1 − e^{l−h})
        (0.5f64).ln() + h + (-(l - h).exp_m1()).ln()
    } else if l >= 0.0 {
        // ½e^{−l}(1 − e^{−(h−l)})
        (0.5f64).ln() - l + (-(-(h - l)).exp_m1()).ln()
    } else {
        // 1 − ½e^{l} − ½e^{−h}
        (-(0.5 * l.exp() + 0.5 * (-h).exp())).ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceCheck {
    pub eta: f64,
    pub epsilon: f64,
    pub scale: f64,
    pub events: u64,
    /// Largest `|log P(a + L ∈ B) − log P(b + L ∈ B)|` over events.
    pub max_log_ratio: f64,
    pub pass: bool,
}

/// Largest absolute log-ratio of `P(a + L ∈ B)` and `P(b + L ∈ B)` over all
/// intervals and half-lines with endpoints in `grid`.
pub fn laplace_max_log_ratio(scale: f64, a: f64, b: f64, grid: &[f64]) -> (u64, f64) {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ends = vec![f64::NEG_INFINITY];
    ends.extend(sorted);
    ends.push(f64::INFINITY);
    let rows: Vec<(u64, f64)> = (0..ends.len())
        .into_par_iter()
        .map(|i| {
            let mut worst: f64 = 0.0;
            let mut count = 0;
            for j in i + 1..ends.len() {
                let (lo, hi) = (ends[i], ends[j]);
                if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                    continue;
                }
                let pa = log_interval_mass(lo - a, hi - a, scale);
                let pb = log_interval_mass(lo - b, hi - b, scale);
                worst = worst.max((pa - pb).abs());
                count += 1;
            }
            (count, worst)
        })
        .collect();
    rows.iter().fold((0, 0.0), |(n, w), &(c, r)| (n + c, w.max(r)))
}

/// Verifies from closed-form CDFs that Laplace noise of scale `η/ε` makes
/// `a = 0` and `b = η` indistinguishable up to `e^ε` on every interval with
/// endpoints in `grid`.
pub fn laplace_assumption_check(eta: f64, epsilon: f64, grid: &[f64]) -> Result<LaplaceCheck> {
    ensure(eta > 0.0 && epsilon > 0.0, || {
        format!("need eta, epsilon > 0, got eta={eta} epsilon={epsilon}")
    })?;
    let mech = Laplace::new(eta, epsilon)?;
    let (events, max_log_ratio) = laplace_max_log_ratio(mech.scale(), 0.0, eta, grid);
    Ok(LaplaceCheck {
        eta,
        epsilon,
        scale: mech.scale(),
        events,
        max_log_ratio,
        pass: max_log_ratio <= epsilon + LOG_RATIO_TOLERANCE,
    })
}

/// `points` evenly spaced thresholds on `[−20η, 20η]`.
pub fn default_threshold_grid(eta: f64, points: usize) -> Vec<f64> {
    let (lo, hi) = (-20.0 * eta, 20.0 * eta);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64)
        .collect()
}

/// Budget of the ergodic-average estimator: `(ε, δ + 2δ̃ − δ̃²)` where
/// `(ε, δ)` is the mechanism's budget at `η = 2C + γ_f`.
pub fn estimator_budget(spec: &EstimatorSpec, mech: PrivacyBudget) -> Result<PrivacyBudget> {
    spec.validate()?;
    let dt = spec.delta_tilde;
    closeness_budget(spec.eta(), 2.0 * dt - dt * dt, mech)
}

/// Budget of a release whose averages on adjacent datasets are within `η`
/// except with probability `δ̃`: `(ε, δ + δ̃)`.
pub fn closeness_budget(eta: f64, delta_tilde: f64, mech: PrivacyBudget) -> Result<PrivacyBudget> {
    ensure(eta >= 0.0, || format!("eta must be nonnegative, got {eta}"))?;
    ensure((0.0..=1.0).contains(&delta_tilde), || {
        format!("failure probability must lie in [0, 1], got {delta_tilde}")
    })?;
    Ok(PrivacyBudget::clamped(mech.epsilon, mech.delta + delta_tilde))
}

/// Empirical evidence that coupled ergodic averages stay within `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosenessCertificate {
    pub eta: f64,
    /// `1 −` the lower 99% Wilson limit of `P(|avg_D − avg_{D′}| ≤ η)`.
    pub delta_tilde: f64,
    /// `1 −` the observed frequency.
    pub delta_tilde_point: f64,
    pub ci: Interval,
    pub replicates: u64,
    pub seed: u64,
}

/// Settings for [`empirical_closeness`].
#[derive(Debug, Clone, Copy)]
pub struct ClosenessRun<'a> {
    pub potential: &'a DecomposedPotential,
    pub dataset_a: &'a [f64],
    pub dataset_b: &'a [f64],
    pub steps: usize,
    pub gamma: f64,
    pub seed: u64,
}

/// Runs `replicates` coupled ULA pairs and estimates how often the ergodic
/// averages `(1/N)Σ_{k=1}^N f(x_k)` differ by at most `η`.
pub fn empirical_closeness<F>(run: ClosenessRun<'_>, f: F, eta: f64, replicates: u64) -> Result<ClosenessCertificate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if replicates < 1_000 {
        return Err(crate::Error::Config(format!(
            "need at least 1000 replicates, got {replicates}"
        )));
    }
    ensure(eta >= 0.0, || format!("eta must be nonnegative, got {eta}"))?;
    ensure(run.steps >= 1, || "need at least one step".into())?;
    let x0 = vec![0.0; run.potential.dim];
    let close: Vec<bool> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let path = run_coupled_ula(
                run.potential,
                run.dataset_a,
                run.dataset_b,
                &x0,
                run.steps,
                run.gamma,
                run.seed,
                i,
            )?;
            let (mut sa, mut sb) = (0.0, 0.0);
            for k in 1..=run.steps {
                sa += f(path.state_a(k));
                sb += f(path.state_b(k));
            }
            let n = run.steps as f64;
            Ok((sa / n - sb / n).abs() <= eta)
        })
        .collect::<Result<_>>()?;
    let successes = close.iter().filter(|&&c| c).count() as u64;
    let ci = wilson_interval(successes, replicates, Z_99);
    Ok(ClosenessCertificate {
        eta,
        delta_tilde: 1.0 - ci.low,
        delta_tilde_point: 1.0 - successes as f64 / replicates as f64,
        ci,
        replicates,
        seed: run.seed,
    })
}
