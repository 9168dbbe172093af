//! Ground-truth checks: exhaustive DP and TV computations on finite
//! probability spaces, and exact Rényi divergences between Gaussians.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::accountant::{renyi_from_c, sgld_final_constant, DriftSpec};
use crate::error::{ensure, Error, Result};
use crate::privacy::{dp_propagate_tv, tv_lower_bound, PrivacyBudget};
use crate::rng::stream_rng;

/// Absolute tolerance on `δ` when deciding a DP verdict from floating
/// sums of probabilities.
pub const FLOAT_SLACK: f64 = 1e-12;

/// Largest support enumerated event by event.
pub const BRUTE_FORCE_MAX_SUPPORT: usize = 20;

/// A probability vector on `{0, …, k−1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteDist {
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        ensure(!probs.is_empty(), || "distribution needs a nonempty support".into())?;
        ensure(probs.iter().all(|&p| p >= 0.0 && p.is_finite()), || {
            "probabilities must be finite and nonnegative".into()
        })?;
        let total: f64 = probs.iter().sum();
        ensure((total - 1.0).abs() <= 1e-12, || {
            format!("probabilities sum to {total}, not 1")
        })?;
        Ok(Self { probs })
    }

    /// A random distribution on `k` points: normalized exponentials, so
    /// uniform on the simplex.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Self {
        let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        Self {
            probs: w.iter().map(|x| x / total).collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `(1 − t)·self + t·other`, which is within `t` of `self` in TV.
    pub fn mix(&self, other: &FiniteDist, t: f64) -> FiniteDist {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (1.0 - t) * p + t * q)
            .collect();
        FiniteDist { probs }
    }
}

fn same_support(p: &FiniteDist, q: &FiniteDist) -> Result<()> {
    ensure(p.len() == q.len(), || {
        format!("supports differ in size: {} vs {}", p.len(), q.len())
    })
}

/// `½Σ|pᵢ − qᵢ|`.
pub fn tv_distance(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    same_support(p, q)?;
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Which way an event violates the DP inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `p(B) > e^ε q(B) + δ`.
    POverQ,
    /// `q(B) > e^ε p(B) + δ`.
    QOverP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BruteForce,
    RatioThreshold,
}

/// Largest `x(B) − e^ε y(B)` over events, with the maximizing event.
#[derive(Debug, Clone, PartialEq)]
struct SideMax {
    value: f64,
    event: Vec<usize>,
}

fn terms(x: &[f64], y: &[f64], scale: f64) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - scale * b).collect()
}

/// Enumerates all `2^k` events, summing each in ascending index order.
fn side_brute(t: &[f64]) -> SideMax {
    let k = t.len();
    let mut best = SideMax {
        value: 0.0,
        event: Vec::new(),
    };
    for mask in 1u32..(1u32 << k) {
        let mut s = 0.0;
        for (i, ti) in t.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s += ti;
            }
        }
        if s > best.value {
            best.value = s;
            best.event = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        }
    }
    best
}

/// The maximizing event is `{i : pᵢ > e^ε qᵢ}`, a superlevel set of the
/// likelihood ratio. Summing its terms in ascending index order gives the
/// same floating value as the brute-force maximum, because rounded
/// addition is monotone.
fn side_threshold(t: &[f64]) -> SideMax {
    let event: Vec<usize> = (0..t.len()).filter(|&i| t[i] > 0.0).collect();
    let mut value = 0.0;
    for &i in &event {
        value += t[i];
    }
    SideMax { value, event }
}

/// Outcome of checking a pair of distributions against a DP budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpCheck {
    pub passes: bool,
    /// Smallest `δ` for which the pair is `(ε, δ)`-DP.
    pub minimal_delta: f64,
    /// An event attaining `minimal_delta`; violating when `passes` is false.
    pub witness: Vec<usize>,
    pub direction: Direction,
    pub method: Method,
}

fn check_with(p: &FiniteDist, q: &FiniteDist, budget: PrivacyBudget, method: Method) -> Result<DpCheck> {
    same_support(p, q)?;
    let scale = budget.epsilon.exp();
    let side = match method {
        Method::BruteForce => side_brute,
        Method::RatioThreshold => side_threshold,
    };
    let pq = side(&terms(&p.probs, &q.probs, scale));
    let qp = side(&terms(&q.probs, &p.probs, scale));
    let (worst, direction) = if qp.value > pq.value {
        (qp, Direction::QOverP)
    } else {
        (pq, Direction::POverQ)
    };
    Ok(DpCheck {
        passes: worst.value <= budget.delta + FLOAT_SLACK,
        minimal_delta: worst.value,
        witness: worst.event,
        direction,
        method,
    })
}

/// Checks `p(B) ≤ e^ε q(B) + δ` and `q(B) ≤ e^ε p(B) + δ` for every event
/// by enumeration. Needs `k ≤ 20`.
pub fn check_dp_brute_force(p: &FiniteDist, q: &FiniteDist, budget: PrivacyBudget) -> Result<DpCheck> {
    ensure(p.len() <= BRUTE_FORCE_MAX_SUPPORT, || {
        format!("support {} too large to enumerate", p.len())
    })?;
    check_with(p, q, budget, Method::BruteForce)
}

/// The same check through likelihood-ratio superlevel sets, in `O(k)`.
pub fn check_dp_threshold(p: &FiniteDist, q: &FiniteDist, budget: PrivacyBudget) -> Result<DpCheck> {
    check_with(p, q, budget, Method::RatioThreshold)
}

/// Enumerates events for `k ≤ 20` and falls back to ratio thresholds above.
pub fn check_dp_finite(p: &FiniteDist, q: &FiniteDist, budget: PrivacyBudget) -> Result<DpCheck> {
    if p.len() <= BRUTE_FORCE_MAX_SUPPORT {
        check_dp_brute_force(p, q, budget)
    } else {
        check_dp_threshold(p, q, budget)
    }
}

/// Symmetrized hockey-stick divergence
/// `max(0, max_B p(B) − e^ε q(B), max_B q(B) − e^ε p(B))`.
pub fn minimal_delta(p: &FiniteDist, q: &FiniteDist, epsilon: f64) -> Result<f64> {
    same_support(p, q)?;
    let scale = epsilon.exp();
    let a = side_threshold(&terms(&p.probs, &q.probs, scale)).value;
    let b = side_threshold(&terms(&q.probs, &p.probs, scale)).value;
    Ok(a.max(b).max(0.0))
}

/// Two-point pair that is `(ε, 0)`-DP, perturbed by `β` in TV so that the
/// needed `δ` becomes exactly `β(1 + e^ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversarialWitness {
    pub epsilon: f64,
    pub beta: f64,
    pub needed_delta: f64,
    /// `δ + β`, which the witness exceeds.
    pub naive_delta: f64,
    pub propagated_delta: f64,
}

pub fn adversarial_tv_witness(epsilon: f64, beta: f64) -> Result<AdversarialWitness> {
    let w = epsilon.exp();
    ensure(beta >= 0.0 && beta <= 1.0 / (1.0 + w), || {
        format!("beta must lie in [0, 1/(1+e^ε)] = [0, {}], got {beta}", 1.0 / (1.0 + w))
    })?;
    let hi = w / (1.0 + w);
    let lo = 1.0 / (1.0 + w);
    let p = FiniteDist::new(vec![hi + beta, lo - beta])?;
    let q = FiniteDist::new(vec![lo - beta, hi + beta])?;
    let needed = minimal_delta(&p, &q, epsilon)?;
    let propagated = dp_propagate_tv(PrivacyBudget::new(epsilon, 0.0)?, beta)?;
    Ok(AdversarialWitness {
        epsilon,
        beta,
        needed_delta: needed,
        naive_delta: beta,
        propagated_delta: propagated.delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvPropagationReport {
    pub bound_name: String,
    pub trials: u64,
    pub support: usize,
    pub tv_bounds: Vec<f64>,
    pub violations: u64,
    /// Largest `(needed δ − source δ)/(β(e^ε + 1))` over trials.
    pub max_budget_used: f64,
    pub adversarial: Vec<AdversarialWitness>,
    pub seed: u64,
    pub pass: bool,
}

/// Randomized check that a pair perturbed by at most `β` in TV satisfies
/// the propagated budget `(ε, δ + β(e^ε + 1))`.
///
/// Each trial draws `(p, q)` on `k` points and `ε ∈ [0, 2]`, takes the
/// pair's exact minimal δ as the source budget, mixes each distribution
/// with a random one at weight `β`, and checks the result by enumeration.
pub fn verify_tv_propagation(trials: u64, k: usize, tv_bounds: &[f64], seed: u64) -> Result<TvPropagationReport> {
    ensure((1..=10).contains(&k), || {
        format!("support size must lie in 1..=10, got {k}")
    })?;
    ensure(!tv_bounds.is_empty(), || "need at least one TV bound".into())?;
    ensure(tv_bounds.iter().all(|b| (0.0..=1.0).contains(b)), || {
        "TV bounds must lie in [0, 1]".into()
    })?;
    let outcomes: Vec<(bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<(bool, f64)> {
            let mut rng = stream_rng(seed, i);
            let beta = tv_bounds[(i % tv_bounds.len() as u64) as usize];
            let p = FiniteDist::random(&mut rng, k);
            let q = FiniteDist::random(&mut rng, k);
            let epsilon = 2.0 * rng.random::<f64>();
            let source = PrivacyBudget::new(epsilon, minimal_delta(&p, &q, epsilon)?.min(1.0))?;
            let p2 = p.mix(&FiniteDist::random(&mut rng, k), beta);
            let q2 = q.mix(&FiniteDist::random(&mut rng, k), beta);
            let target = dp_propagate_tv(source, beta)?;
            let check = check_dp_brute_force(&p2, &q2, target)?;
            let used = if beta > 0.0 {
                (check.minimal_delta - source.delta) / (beta * (epsilon.exp() + 1.0))
            } else {
                0.0
            };
            Ok((check.passes, used))
        })
        .collect::<Result<_>>()?;
    let violations = outcomes.iter().filter(|(ok, _)| !ok).count() as u64;
    let max_budget_used = outcomes.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    let adversarial = tv_bounds
        .iter()
        .filter(|&&b| b > 0.0 && b <= 0.5)
        .map(|&b| adversarial_tv_witness(1.0f64.min(((1.0 - b) / b).ln()), b))
        .collect::<Result<Vec<_>>>()?;
    let witnesses_ok = adversarial
        .iter()
        .all(|w| w.needed_delta > w.naive_delta && w.needed_delta <= w.propagated_delta + FLOAT_SLACK);
    Ok(TvPropagationReport {
        bound_name: "tv-propagation".into(),
        trials,
        support: k,
        tv_bounds: tv_bounds.to_vec(),
        violations,
        max_budget_used,
        adversarial,
        seed,
        pass: violations == 0 && witnesses_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvSeparationReport {
    pub bound_name: String,
    pub epsilon: f64,
    pub delta_mu: f64,
    pub delta_nu: f64,
    /// `e^{−ε}/(1 + e^{−ε})(δ_μ − δ_ν)`.
    pub lower_bound: f64,
    /// Largest TV between `μ_D` and `ν_D` over the two datasets.
    pub observed_tv: f64,
    pub nu_minimal_delta: f64,
    pub mu_minimal_delta: f64,
    /// `|ζ* − e^{−ε}(δ_μ − δ_ν − ζ*)|`.
    pub fixed_point_residual: f64,
    /// Sign changes of `ζ − e^{−ε}(δ_μ − δ_ν − ζ)` on a grid, all at `ζ*`.
    pub sweep_consistent: bool,
    pub pass: bool,
}

/// Explicit pairs showing the TV lower bound is attained.
///
/// `ν` is a two-point pair that is exactly `(ε, δ_ν)`-DP and `μ` a pair that
/// just fails `(ε, δ_μ)`-DP. Both are symmetric, so `TV(μ_D, ν_D)` equals
/// the lower bound plus a small margin at both datasets.
pub fn verify_tv_separation(epsilon: f64, delta_mu: f64, delta_nu: f64) -> Result<TvSeparationReport> {
    ensure(epsilon >= 0.0 && epsilon.is_finite(), || {
        format!("epsilon must be nonnegative, got {epsilon}")
    })?;
    ensure((0.0..1.0).contains(&delta_mu) && (0.0..1.0).contains(&delta_nu), || {
        "deltas must lie in [0, 1)".into()
    })?;
    ensure(delta_mu > delta_nu, || {
        format!("need delta_mu > delta_nu, got {delta_mu} <= {delta_nu}")
    })?;
    let w = epsilon.exp();
    let half_gap = (w - 1.0) / 2.0;
    // A pair (½ ∓ t, ½ ± t) has minimal δ equal to t(1 + e^ε) − (e^ε − 1)/2.
    let u = (delta_nu + half_gap) / (1.0 + w);
    let t_min = (delta_mu + half_gap) / (1.0 + w);
    let margin = (1e-3 * (delta_mu - delta_nu)).min((0.5 - t_min) / 2.0);
    let t = t_min + margin;
    let pair = |s: f64| -> Result<(FiniteDist, FiniteDist)> {
        Ok((
            FiniteDist::new(vec![0.5 - s, 0.5 + s])?,
            FiniteDist::new(vec![0.5 + s, 0.5 - s])?,
        ))
    };
    let (nu_d, nu_dp) = pair(u)?;
    let (mu_d, mu_dp) = pair(t)?;
    let nu_delta = minimal_delta(&nu_d, &nu_dp, epsilon)?;
    let mu_delta = minimal_delta(&mu_d, &mu_dp, epsilon)?;
    let observed_tv = tv_distance(&mu_d, &nu_d)?.max(tv_distance(&mu_dp, &nu_dp)?);
    let lower_bound = tv_lower_bound(epsilon, delta_mu, delta_nu)?;

    let gap = delta_mu - delta_nu;
    let g = |z: f64| z - (-epsilon).exp() * (gap - z);
    let fixed_point_residual = g(lower_bound).abs();
    let sweep_consistent = (0..=200).all(|i| {
        let z = gap * i as f64 / 200.0;
        let v = g(z);
        // g is increasing with slope 1 + e^{−ε}; allow rounding near ζ*.
        if (z - lower_bound).abs() <= 1e-12 {
            true
        } else {
            (v > 0.0) == (z > lower_bound)
        }
    });
    let nu_ok = nu_delta <= delta_nu + FLOAT_SLACK;
    let mu_violates = mu_delta > delta_mu;
    Ok(TvSeparationReport {
        bound_name: "tv-separation".into(),
        epsilon,
        delta_mu,
        delta_nu,
        lower_bound,
        observed_tv,
        nu_minimal_delta: nu_delta,
        mu_minimal_delta: mu_delta,
        fixed_point_residual,
        sweep_consistent,
        pass: nu_ok && mu_violates && observed_tv > lower_bound && fixed_point_residual <= 1e-12 && sweep_consistent,
    })
}

/// Isotropic Gaussian `N(mean, variance·I)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianLaw {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl GaussianLaw {
    pub fn new(mean: Vec<f64>, variance: f64) -> Result<Self> {
        ensure(variance > 0.0 && variance.is_finite(), || {
            format!("variance must be positive, got {variance}")
        })?;
        Ok(Self { mean, variance })
    }
}

/// `D_α(p‖q) = α|m_p − m_q|²/(2σ²)` for equal variances.
pub fn gaussian_renyi(p: &GaussianLaw, q: &GaussianLaw, alpha: f64) -> Result<f64> {
    ensure(alpha > 1.0, || format!("Rényi order must exceed 1, got {alpha}"))?;
    ensure(p.mean.len() == q.mean.len(), || "means differ in dimension".into())?;
    if p.variance != q.variance {
        return Err(Error::Domain(
            "unequal variances are not supported by the closed form".into(),
        ));
    }
    let d2: f64 = p.mean.iter().zip(&q.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(alpha * d2 / (2.0 * p.variance))
}

/// One row of the exact Gaussian audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditRow {
    pub n: u64,
    pub divergence: f64,
    pub budget: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianAudit {
    pub alpha: f64,
    pub steps: u64,
    pub budget: f64,
    pub max_divergence: f64,
    pub argmax_n: u64,
    /// `budget / max_divergence`; infinite when the divergence is zero.
    pub slack_factor: f64,
    pub violations: u64,
    pub pass: bool,
}

/// Iterates the exact laws of the final ULA draw for `K = μ|x|²/2`,
/// `∇V_{D/D′} = ±c·e₁`, started at the origin.
///
/// The two laws are `N(±mₙe₁, vₙI)` with mean gap
/// `Δₙ₊₁ = (1 − γμ)Δₙ + 2γc` and `vₙ₊₁ = (1 − γμ)²vₙ + 2γ/β`.
fn audit_iter(spec: &DriftSpec, steps: u64, alpha: f64) -> Result<(f64, impl Iterator<Item = AuditRow>)> {
    ensure(alpha > 1.0, || format!("Rényi order must exceed 1, got {alpha}"))?;
    ensure(steps >= 1, || "need at least one step".into())?;
    let budget = renyi_from_c(sgld_final_constant(spec)?, alpha)?.epsilon;
    let a = 1.0 - spec.gamma * spec.mu;
    let (drift, noise) = (2.0 * spec.gamma * spec.c, 2.0 * spec.gamma / spec.beta);
    let mut state = (0.0f64, 0.0f64);
    let rows = (1..=steps).map(move |n| {
        state = (a * state.0 + drift, a * a * state.1 + noise);
        let divergence = alpha * state.0 * state.0 / (2.0 * state.1);
        AuditRow {
            n,
            divergence,
            budget,
            slack: budget - divergence,
        }
    });
    Ok((budget, rows))
}

/// Checks `D_α(law(xₙ^D) ‖ law(xₙ^{D′})) ≤ αβC₃/4` for every `n ≤ steps`
/// without sampling. For `β = 1` the budget is `α·C₃/4`.
pub fn ula_gaussian_audit(spec: &DriftSpec, steps: u64, alpha: f64) -> Result<GaussianAudit> {
    let (budget, rows) = audit_iter(spec, steps, alpha)?;
    let mut max_divergence = 0.0;
    let mut argmax_n = 1;
    let mut violations = 0;
    for r in rows {
        if r.divergence > max_divergence {
            max_divergence = r.divergence;
            argmax_n = r.n;
        }
        if r.divergence.is_nan() || r.divergence > budget {
            violations += 1;
        }
    }
    Ok(GaussianAudit {
        alpha,
        steps,
        budget,
        max_divergence,
        argmax_n,
        slack_factor: budget / max_divergence,
        violations,
        pass: violations == 0,
    })
}

/// Writes the audit as CSV with columns `n, divergence, budget, slack`.
pub fn write_audit_csv<W: Write>(spec: &DriftSpec, steps: u64, alpha: f64, writer: W) -> Result<()> {
    let (_, rows) = audit_iter(spec, steps, alpha)?;
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// A random spec inside the step-size window: `μ ∈ [0.05, 3]`,
/// `L/μ ∈ [1, 3]`, `γ/(2μ/L²) ∈ [0.01, 0.99]`, `β ∈ [0.1, 5]`, `c ∈ [0, 3]`.
pub fn random_admissible_spec<R: Rng + ?Sized>(rng: &mut R) -> DriftSpec {
    let mu = 0.05 + 2.95 * rng.random::<f64>();
    let lipschitz = mu * (1.0 + 2.0 * rng.random::<f64>());
    let frac = 0.01 + 0.98 * rng.random::<f64>();
    let beta = 0.1 + 4.9 * rng.random::<f64>();
    let c = 3.0 * rng.random::<f64>();
    DriftSpec {
        beta,
        ..DriftSpec::ula(c, lipschitz, mu, frac * 2.0 * mu / (lipschitz * lipschitz), 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSweep {
    pub configs: u64,
    pub steps: u64,
    pub alpha: f64,
    pub violations: u64,
    /// Smallest `budget / max divergence` over configs.
    pub min_slack_factor: f64,
    pub seed: u64,
    pub pass: bool,
}

/// Runs [`ula_gaussian_audit`] on `configs` random admissible specs; config
/// `i` is drawn from stream `i` of `seed`.
pub fn audit_sweep(configs: u64, steps: u64, alpha: f64, seed: u64) -> Result<AuditSweep> {
    let audits: Vec<GaussianAudit> = (0..configs)
        .into_par_iter()
        .map(|i| ula_gaussian_audit(&random_admissible_spec(&mut stream_rng(seed, i)), steps, alpha))
        .collect::<Result<_>>()?;
    let violations = audits.iter().map(|a| a.violations).sum();
    let min_slack_factor = audits.iter().map(|a| a.slack_factor).fold(f64::INFINITY, f64::min);
    Ok(AuditSweep {
        configs,
        steps,
        alpha,
        violations,
        min_slack_factor,
        seed,
        pass: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn dist(p: &[f64]) -> FiniteDist {
        FiniteDist::new(p.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        let p = dist(&[0.9, 0.1]);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert!((tv_distance(&p, &dist(&[0.5, 0.5])).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(
            tv_distance(&dist(&[1.0, 0.0, 0.0]), &dist(&[0.0, 0.0, 1.0])).unwrap(),
            1.0
        );
        assert!(tv_distance(&p, &dist(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn finite_dist_validates() {
        assert!(FiniteDist::new(vec![0.5, 0.6]).is_err());
        assert!(FiniteDist::new(vec![-0.1, 1.1]).is_err());
        assert!(FiniteDist::new(vec![]).is_err());
    }

    #[test]
    fn dp_check_examples() {
        let p = dist(&[0.9, 0.1]);
        let q = dist(&[0.5, 0.5]);
        let zero = PrivacyBudget::new(0.0, 0.0).unwrap();
        assert!(check_dp_finite(&p, &p, zero).unwrap().passes);
        let r = check_dp_finite(&p, &q, zero).unwrap();
        assert!(!r.passes);
        assert!((r.minimal_delta - 0.4).abs() < 1e-15);
        assert_eq!(r.witness, vec![0]);
        assert_eq!(r.direction, Direction::POverQ);

        let p = dist(&[0.75, 0.25]);
        let q = dist(&[0.25, 0.75]);
        let ln3 = 3f64.ln();
        assert!(
            check_dp_finite(&p, &q, PrivacyBudget::new(ln3, 0.0).unwrap())
                .unwrap()
                .passes
        );
        let tight = check_dp_finite(&p, &q, PrivacyBudget::new(ln3 - 1e-6, 0.0).unwrap()).unwrap();
        assert!(!tight.passes);
    }

    #[test]
    fn minimal_delta_examples() {
        let p = dist(&[0.9, 0.1]);
        let q = dist(&[0.5, 0.5]);
        assert_eq!(minimal_delta(&p, &q, 10.0).unwrap(), 0.0);
        assert!((minimal_delta(&p, &q, 0.0).unwrap() - 0.4).abs() < 1e-15);
        let r = check_dp_finite(&p, &q, PrivacyBudget::new(2f64.ln(), 0.0).unwrap()).unwrap();
        assert!((r.minimal_delta - 0.3).abs() < 1e-15);
        assert_eq!(r.witness, vec![1]);
        assert_eq!(r.direction, Direction::QOverP);
    }

    #[test]
    fn threshold_path_covers_large_supports() {
        let mut rng = stream_rng(3, 0);
        let p = FiniteDist::random(&mut rng, 40);
        let q = FiniteDist::random(&mut rng, 40);
        let b = PrivacyBudget::new(0.3, 0.0).unwrap();
        let r = check_dp_finite(&p, &q, b).unwrap();
        assert_eq!(r.method, Method::RatioThreshold);
        assert_eq!(r.minimal_delta, minimal_delta(&p, &q, 0.3).unwrap());
    }

    #[test]
    fn brute_force_and_threshold_agree_exactly() {
        for i in 0..300 {
            let mut rng = stream_rng(5, i);
            let k = 1 + (i as usize % 12);
            let p = FiniteDist::random(&mut rng, k);
            let q = FiniteDist::random(&mut rng, k);
            let b = PrivacyBudget::new(rng.random::<f64>() * 2.0, rng.random::<f64>() * 0.3).unwrap();
            let x = check_dp_brute_force(&p, &q, b).unwrap();
            let y = check_dp_threshold(&p, &q, b).unwrap();
            assert_eq!(x.minimal_delta.to_bits(), y.minimal_delta.to_bits());
            assert_eq!(x.passes, y.passes);
        }
    }

    #[test]
    fn propagation_holds_and_witness_exceeds_naive_delta() {
        let r = verify_tv_propagation(2_000, 4, &[0.0, 0.01, 0.05], 7).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.pass);
        assert!(r.max_budget_used <= 1.0 + 1e-9);
        for w in &r.adversarial {
            assert!((w.needed_delta - w.beta * (1.0 + w.epsilon.exp())).abs() < 1e-12);
            assert!(w.needed_delta > w.naive_delta);
        }
    }

    #[test]
    fn zero_perturbation_rechecks_source_budget() {
        let r = verify_tv_propagation(500, 3, &[0.0], 1).unwrap();
        assert!(r.pass);
        assert!(r.adversarial.is_empty());
    }

    #[test]
    fn separation_example() {
        let r = verify_tv_separation(0.0, 0.5, 0.1).unwrap();
        assert!((r.lower_bound - 0.2).abs() < 1e-15);
        assert!(r.observed_tv >= 0.2);
        assert!(r.pass, "{r:?}");
        let r = verify_tv_separation(1.3, 0.2000001, 0.2).unwrap();
        assert!(r.lower_bound < 1e-7);
        assert!(r.pass, "{r:?}");
        assert!(verify_tv_separation(1.0, 0.1, 0.1).is_err());
    }

    /// Simpson's rule on `∫ p^α q^{1−α}` over a wide window.
    fn quadrature_renyi(m1: f64, m2: f64, var: f64, alpha: f64) -> f64 {
        let sd = var.sqrt();
        let (lo, hi) = (m1.min(m2) - 40.0 * sd, m1.max(m2) + 40.0 * sd);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
        let f = |x: f64| {
            let lp = log_norm - (x - m1).powi(2) / (2.0 * var);
            let lq = log_norm - (x - m2).powi(2) / (2.0 * var);
            (alpha * lp + (1.0 - alpha) * lq).exp()
        };
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        (s * h / 3.0).ln() / (alpha - 1.0)
    }

    #[test]
    fn gaussian_renyi_examples() {
        let g = |m: f64| GaussianLaw::new(vec![m], 1.0).unwrap();
        assert_eq!(gaussian_renyi(&g(0.3), &g(0.3), 2.0).unwrap(), 0.0);
        assert!((gaussian_renyi(&g(0.0), &g(1.0), 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((quadrature_renyi(0.0, 1.0, 1.0, 2.0) - 1.0).abs() < 1e-6);
        let a = gaussian_renyi(&g(0.0), &g(0.7), 3.0).unwrap();
        let b = gaussian_renyi(&g(0.0), &g(1.4), 3.0).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-14);
        let other = GaussianLaw::new(vec![0.0], 2.0).unwrap();
        assert!(gaussian_renyi(&g(0.0), &other, 2.0).is_err());
    }

    #[test]
    fn gaussian_renyi_matches_quadrature() {
        for i in 0..100 {
            let mut rng = stream_rng(13, i);
            let m1 = 4.0 * rng.random::<f64>() - 2.0;
            let m2 = 4.0 * rng.random::<f64>() - 2.0;
            let var = 0.2 + 2.0 * rng.random::<f64>();
            let alpha = 1.05 + 4.0 * rng.random::<f64>();
            let p = GaussianLaw::new(vec![m1], var).unwrap();
            let q = GaussianLaw::new(vec![m2], var).unwrap();
            let exact = gaussian_renyi(&p, &q, alpha).unwrap();
            assert!((exact - quadrature_renyi(m1, m2, var, alpha)).abs() < 1e-6, "case {i}");
        }
    }

    #[test]
    fn audit_examples() {
        let spec = DriftSpec::ula(0.0, 1.0, 1.0, 0.5, 1);
        let a = ula_gaussian_audit(&spec, 100, 2.0).unwrap();
        assert_eq!(a.max_divergence, 0.0);
        assert_eq!(a.budget, 0.0);
        assert!(a.pass);

        let spec = DriftSpec::ula(0.1, 1.0, 1.0, 0.5, 1);
        let a = ula_gaussian_audit(&spec, 10_000, 2.0).unwrap();
        assert!(a.pass);
        assert!(a.slack_factor > 1.0);
        // Stationary divergence: α(2c/μ)²/(2·2γ/(1−(1−γμ)²)) = αc²(2−γμ)/μ.
        let stationary = 2.0 * 0.01 * 1.5;
        let mut buf = Vec::new();
        write_audit_csv(&spec, 10_000, 2.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let last = text.lines().last().unwrap();
        let div: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert!((div - stationary).abs() < 1e-12);
        assert!(text.starts_with("n,divergence,budget,slack"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn hockey_stick_is_nonincreasing_and_convex_in_exp_eps(seed in any::<u64>(), k in 1usize..8) {
            let mut rng = stream_rng(seed, 0);
            let p = FiniteDist::random(&mut rng, k);
            let q = FiniteDist::random(&mut rng, k);
            // Uniform grid in e^ε, where δ is a sum of convex hinges.
            let eps: Vec<f64> = (0..10).map(|i| (0.3 * i as f64).ln_1p()).collect();
            let d: Vec<f64> = eps.iter().map(|&e| minimal_delta(&p, &q, e).unwrap()).collect();
            prop_assert!((d[0] - tv_distance(&p, &q).unwrap()).abs() < 1e-15);
            for w in d.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
            for w in d.windows(3) {
                prop_assert!(w[1] <= (w[0] + w[2]) / 2.0 + 1e-12);
            }
        }

        #[test]
        fn propagated_budget_certifies_perturbed_pairs(seed in any::<u64>(), k in 1usize..7, beta in 0.0f64..0.2) {
            let mut rng = stream_rng(seed, 0);
            let p = FiniteDist::random(&mut rng, k);
            let q = FiniteDist::random(&mut rng, k);
            let eps = 1.5 * rng.random::<f64>();
            let source = PrivacyBudget::new(eps, minimal_delta(&p, &q, eps).unwrap()).unwrap();
            prop_assert!(check_dp_finite(&p, &q, source).unwrap().passes);
            let p2 = p.mix(&FiniteDist::random(&mut rng, k), beta);
            let q2 = q.mix(&FiniteDist::random(&mut rng, k), beta);
            prop_assert!(tv_distance(&p, &p2).unwrap() <= beta + 1e-15);
            let target = dp_propagate_tv(source, beta).unwrap();
            prop_assert!(check_dp_finite(&p2, &q2, target).unwrap().passes);
        }

        #[test]
        fn audit_never_violates_for_admissible_specs(
            mu in 0.05f64..3.0,
            ratio in 1.0f64..3.0,
            frac in 0.01f64..0.99,
            beta in 0.1f64..5.0,
            c in 0.0f64..3.0,
            alpha in 1.01f64..20.0,
        ) {
            let l = mu * ratio;
            let spec = DriftSpec { beta, ..DriftSpec::ula(c, l, mu, frac * 2.0 * mu / (l * l), 1) };
            let a = ula_gaussian_audit(&spec, 2_000, alpha).unwrap();
            prop_assert!(a.pass, "{:?}", a);
        }
    }
}
