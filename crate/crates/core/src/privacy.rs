//! Privacy-budget algebra.
//!
//! Approximate DP budgets `(ε, δ)`, Rényi budgets `(α, ε)`, the conversion
//! between them, and the results that transfer privacy between a Markov
//! chain and its target through a total-variation bound.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure, Result};

/// An `(ε, δ)` differential-privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        ensure(epsilon >= 0.0 && !epsilon.is_nan(), || {
            format!("epsilon must be nonnegative, got {epsilon}")
        })?;
        ensure((0.0..=1.0).contains(&delta), || {
            format!("delta must lie in [0, 1], got {delta}")
        })?;
        Ok(Self { epsilon, delta })
    }

    /// Builds a budget, clamping δ to 1. A budget with δ ≥ 1 is vacuous.
    pub(crate) fn clamped(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta: delta.min(1.0),
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.delta >= 1.0
    }
}

impl fmt::Display for PrivacyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(ε={}, δ={})", self.epsilon, self.delta)
    }
}

/// An `(α, ε)` Rényi-DP budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenyiBudget {
    pub alpha: f64,
    pub epsilon: f64,
}

impl RenyiBudget {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        ensure(alpha > 1.0, || format!("Rényi order must exceed 1, got {alpha}"))?;
        ensure(epsilon >= 0.0, || {
            format!("Rényi epsilon must be nonnegative, got {epsilon}")
        })?;
        Ok(Self { alpha, epsilon })
    }
}

/// Rate function `R(n)` of a data-uniform TV convergence bound.
#[derive(Clone)]
pub enum Rate {
    /// `R(1), R(2), …` listed explicitly; `R(n) = r̄` past the end.
    Table(Vec<f64>),
    /// Arbitrary evaluator; the caller guarantees it is nonincreasing.
    Evaluator(Arc<dyn Fn(u64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Table(v) => f.debug_tuple("Table").field(v).finish(),
            Rate::Evaluator(_) => f.write_str("Evaluator(..)"),
        }
    }
}

/// A data-uniform convergence bound `‖ν P^n − π‖_TV ≤ ζ R(n)` with
/// `R(n) ↓ r̄`.
#[derive(Debug, Clone)]
pub struct ConvergenceProfile {
    zeta: f64,
    rate: Rate,
    r_bar: f64,
}

impl ConvergenceProfile {
    /// Profile from a table of rates. The table must be positive,
    /// nonincreasing and bounded below by `r_bar`.
    pub fn from_table(zeta: f64, rates: Vec<f64>, r_bar: f64) -> Result<Self> {
        Self::check_scalars(zeta, r_bar)?;
        ensure(!rates.is_empty(), || "rate table is empty".into())?;
        for (i, w) in rates.windows(2).enumerate() {
            ensure(w[1] <= w[0], || {
                format!("rate table increases between n={} and n={}", i + 1, i + 2)
            })?;
        }
        ensure(rates.iter().all(|&r| r > 0.0 && r >= r_bar), || {
            format!("rates must be positive and at least r̄ = {r_bar}")
        })?;
        Ok(Self {
            zeta,
            rate: Rate::Table(rates),
            r_bar,
        })
    }

    pub fn from_fn<F>(zeta: f64, r_bar: f64, rate: F) -> Result<Self>
    where
        F: Fn(u64) -> f64 + Send + Sync + 'static,
    {
        Self::check_scalars(zeta, r_bar)?;
        Ok(Self {
            zeta,
            rate: Rate::Evaluator(Arc::new(rate)),
            r_bar,
        })
    }

    fn check_scalars(zeta: f64, r_bar: f64) -> Result<()> {
        ensure(zeta.is_finite() && zeta >= 0.0, || {
            format!("zeta must be finite and nonnegative, got {zeta}")
        })?;
        ensure(r_bar.is_finite() && r_bar >= 0.0, || {
            format!("r_bar must be finite and nonnegative, got {r_bar}")
        })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn r_bar(&self) -> f64 {
        self.r_bar
    }

    /// `R(n)` for `n ≥ 1`.
    pub fn rate(&self, n: u64) -> Result<f64> {
        ensure(n >= 1, || "iteration count must be at least 1".into())?;
        let r = match &self.rate {
            Rate::Table(t) => t.get((n - 1) as usize).copied().unwrap_or(self.r_bar),
            Rate::Evaluator(f) => f(n),
        };
        ensure(r.is_finite() && r >= self.r_bar, || {
            format!("R({n}) = {r} is below r̄ = {} or not finite", self.r_bar)
        })?;
        Ok(r)
    }
}

/// Converts a Rényi budget to `(ε + log(1/δ)/(α − 1), δ)`.
pub fn renyi_to_dp(r: RenyiBudget, delta: f64) -> Result<PrivacyBudget> {
    ensure(delta > 0.0 && delta < 1.0, || {
        format!("delta must lie in (0, 1), got {delta}")
    })?;
    ensure(r.alpha > 1.0, || format!("Rényi order must exceed 1, got {}", r.alpha))?;
    let epsilon = r.epsilon + (1.0 / delta).ln() / (r.alpha - 1.0);
    Ok(PrivacyBudget { epsilon, delta })
}

/// If `μ` is `(ε, δ)`-DP and each `ν_D` is within `tv_bound` of `μ_D` in
/// total variation, then `ν` is `(ε, δ + tv_bound·(e^ε + 1))`-DP.
pub fn dp_propagate_tv(source: PrivacyBudget, tv_bound: f64) -> Result<PrivacyBudget> {
    ensure((0.0..=1.0).contains(&tv_bound), || {
        format!("TV bound must lie in [0, 1], got {tv_bound}")
    })?;
    if tv_bound == 0.0 {
        return Ok(source);
    }
    Ok(PrivacyBudget::clamped(
        source.epsilon,
        source.delta + tv_bound * (source.epsilon.exp() + 1.0),
    ))
}

/// Budget of the n-th chain state given the target's budget:
/// `(ε, δ + ζ(e^ε + 1)·R(n))`.
pub fn chain_dp_at_n(target_budget: PrivacyBudget, profile: &ConvergenceProfile, n: u64) -> Result<PrivacyBudget> {
    if n == 0 {
        return Err(domain("iteration count must be at least 1"));
    }
    let kappa = profile.zeta * (target_budget.epsilon.exp() + 1.0);
    Ok(PrivacyBudget::clamped(
        target_budget.epsilon,
        target_budget.delta + kappa * profile.rate(n)?,
    ))
}

/// Budget of the target given a budget that holds for every chain state:
/// `(ε, δ + (1 + e^ε)·ζ·r̄)`.
pub fn asymptotic_target_dp(chain_budget: PrivacyBudget, profile: &ConvergenceProfile) -> PrivacyBudget {
    PrivacyBudget::clamped(
        chain_budget.epsilon,
        chain_budget.delta + (1.0 + chain_budget.epsilon.exp()) * profile.zeta * profile.r_bar,
    )
}

/// Strict lower bound `e^{−ε}/(1 + e^{−ε})·(δ − δₙ)` on the TV distance
/// between chain and target at some dataset, when the chain is
/// `(ε, δₙ)`-DP but the target is not `(ε, δ)`-DP.
pub fn tv_lower_bound(epsilon: f64, delta_target: f64, delta_chain: f64) -> Result<f64> {
    ensure(delta_target > delta_chain, || {
        format!("need delta_target > delta_chain, got {delta_target} <= {delta_chain}")
    })?;
    let w = (-epsilon).exp();
    Ok(w / (1.0 + w) * (delta_target - delta_chain))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum ChainVerdict {
    /// The chain fails `(ε, δ)`-DP for at least one iteration count.
    NotDpAtSomeN,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainVerdictReport {
    pub verdict: ChainVerdict,
    /// `δ′ = δ + (1 + e^ε)ζr̄`, the level at which the target was tested.
    pub delta_prime: f64,
}

/// If the target violates `(ε, δ′)`-DP with `δ′ = δ + (1 + e^ε)ζr̄`, some
/// chain state violates `(ε, δ)`-DP. A target that satisfies it tells
/// nothing.
pub fn chain_verdict_from_target(
    posterior_violates: bool,
    epsilon: f64,
    delta: f64,
    profile: &ConvergenceProfile,
) -> ChainVerdictReport {
    let delta_prime = delta + (1.0 + epsilon.exp()) * profile.zeta * profile.r_bar;
    let verdict = if posterior_violates {
        ChainVerdict::NotDpAtSomeN
    } else {
        ChainVerdict::Inconclusive
    };
    ChainVerdictReport { verdict, delta_prime }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
    }

    #[test]
    fn renyi_conversion_examples() {
        let b = renyi_to_dp(RenyiBudget::new(2.0, 1.0).unwrap(), 1.0 / E).unwrap();
        close(b.epsilon, 2.0);
        close(b.delta, 1.0 / E);

        let b = renyi_to_dp(RenyiBudget::new(2.0, 0.0).unwrap(), 1.0 - 1e-12).unwrap();
        assert!(b.epsilon > 0.0 && b.epsilon < 1e-11);

        let b = renyi_to_dp(RenyiBudget::new(11.0, 0.5).unwrap(), 0.01).unwrap();
        close(b.epsilon, 0.5 + 100f64.ln() / 10.0);
        assert!((b.epsilon - 0.9605).abs() < 1e-4);
    }

    #[test]
    fn renyi_conversion_rejects_bad_delta() {
        let r = RenyiBudget::new(2.0, 1.0).unwrap();
        assert!(renyi_to_dp(r, 0.0).is_err());
        assert!(renyi_to_dp(r, 1.0).is_err());
        assert!(RenyiBudget::new(1.0, 1.0).is_err());
    }

    #[test]
    fn tv_propagation_examples() {
        let b = dp_propagate_tv(PrivacyBudget::new(0.0, 0.0).unwrap(), 0.0).unwrap();
        assert_eq!(b, PrivacyBudget::new(0.0, 0.0).unwrap());

        let b = dp_propagate_tv(PrivacyBudget::new(LN_2, 0.1).unwrap(), 0.05).unwrap();
        close(b.epsilon, LN_2);
        close(b.delta, 0.25);

        let b = dp_propagate_tv(PrivacyBudget::new(1.0, 0.9).unwrap(), 0.5).unwrap();
        assert_eq!(b.delta, 1.0);
        assert!(b.is_vacuous());

        assert!(dp_propagate_tv(PrivacyBudget::new(1.0, 0.0).unwrap(), 1.5).is_err());
    }

    #[test]
    fn chain_budget_examples() {
        let zero = ConvergenceProfile::from_fn(0.0, 0.0, |n| 1.0 / n as f64).unwrap();
        for n in [1, 5, 100] {
            let b = chain_dp_at_n(PrivacyBudget::new(1.0, 0.0).unwrap(), &zero, n).unwrap();
            assert_eq!((b.epsilon, b.delta), (1.0, 0.0));
        }

        let geometric = ConvergenceProfile::from_fn(1.0, 0.0, |n| 0.5f64.powi(n as i32)).unwrap();
        let b = chain_dp_at_n(PrivacyBudget::new(0.0, 0.1).unwrap(), &geometric, 3).unwrap();
        close(b.delta, 0.35);

        let harmonic = ConvergenceProfile::from_fn(0.5, 0.0, |n| 1.0 / n as f64).unwrap();
        let b = chain_dp_at_n(PrivacyBudget::new(3f64.ln(), 0.05).unwrap(), &harmonic, 10).unwrap();
        close(b.delta, 0.25);

        assert!(chain_dp_at_n(PrivacyBudget::new(0.0, 0.1).unwrap(), &harmonic, 0).is_err());
    }

    #[test]
    fn table_profile_validation() {
        assert!(ConvergenceProfile::from_table(1.0, vec![0.5, 0.6], 0.0).is_err());
        assert!(ConvergenceProfile::from_table(1.0, vec![0.5, 0.1], 0.2).is_err());
        assert!(ConvergenceProfile::from_table(f64::INFINITY, vec![0.5], 0.0).is_err());
        let p = ConvergenceProfile::from_table(1.0, vec![0.5, 0.3], 0.1).unwrap();
        assert_eq!(p.rate(1).unwrap(), 0.5);
        assert_eq!(p.rate(2).unwrap(), 0.3);
        assert_eq!(p.rate(50).unwrap(), 0.1);
    }

    #[test]
    fn asymptotic_target_examples() {
        let exact = ConvergenceProfile::from_fn(3.0, 0.0, |n| 1.0 / n as f64).unwrap();
        let b = asymptotic_target_dp(PrivacyBudget::new(1.0, 0.1).unwrap(), &exact);
        assert_eq!((b.epsilon, b.delta), (1.0, 0.1));

        let biased = ConvergenceProfile::from_fn(1.0, 0.05, |n| 0.05 + 1.0 / n as f64).unwrap();
        let b = asymptotic_target_dp(PrivacyBudget::new(0.0, 0.1).unwrap(), &biased);
        close(b.delta, 0.2);

        let biased = ConvergenceProfile::from_fn(2.0, 0.1, |n| 0.1 + 1.0 / n as f64).unwrap();
        let b = asymptotic_target_dp(PrivacyBudget::new(LN_2, 0.0).unwrap(), &biased);
        close(b.delta, 0.6);
    }

    #[test]
    fn tv_lower_bound_examples() {
        close(tv_lower_bound(0.0, 0.5, 0.1).unwrap(), 0.2);
        let tiny = tv_lower_bound(0.0, 0.1 + 1e-9, 0.1).unwrap();
        assert!(tiny > 0.0 && (tiny - 5e-10).abs() < 1e-15);
        close(tv_lower_bound(3f64.ln(), 0.4, 0.0).unwrap(), 0.1);
        assert!(tv_lower_bound(0.0, 0.1, 0.1).is_err());
        assert!(tv_lower_bound(0.0, 0.05, 0.1).is_err());
    }

    #[test]
    fn target_violation_implicates_chain() {
        let p = ConvergenceProfile::from_fn(1.0, 0.1, |n| 0.1 + 1.0 / n as f64).unwrap();
        let r = chain_verdict_from_target(true, 0.0, 0.1, &p);
        assert_eq!(r.verdict, ChainVerdict::NotDpAtSomeN);
        assert!(r.delta_prime > 0.1);
        close(r.delta_prime, 0.3);
        assert_eq!(
            chain_verdict_from_target(false, 0.0, 0.1, &p).verdict,
            ChainVerdict::Inconclusive
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn renyi_conversion_is_monotone_in_alpha(
                a1 in 1.01f64..50.0, da in 0.0f64..50.0, eps in 0.0f64..5.0, delta in 1e-9f64..0.99
            ) {
                let lo = renyi_to_dp(RenyiBudget::new(a1, eps).unwrap(), delta).unwrap();
                let hi = renyi_to_dp(RenyiBudget::new(a1 + da, eps).unwrap(), delta).unwrap();
                prop_assert!(hi.epsilon <= lo.epsilon);
            }

            #[test]
            fn zero_tv_is_identity(eps in 0.0f64..10.0, delta in 0.0f64..=1.0) {
                let b = PrivacyBudget::new(eps, delta).unwrap();
                prop_assert_eq!(dp_propagate_tv(b, 0.0).unwrap(), b);
            }

            #[test]
            fn chain_delta_nonincreasing_in_n(
                eps in 0.0f64..3.0, delta in 0.0f64..0.5, zeta in 0.0f64..2.0, rho in 0.1f64..0.99, n in 1u64..200
            ) {
                let p = ConvergenceProfile::from_fn(zeta, 0.0, move |k| rho.powi(k as i32)).unwrap();
                let b = PrivacyBudget::new(eps, delta).unwrap();
                let d1 = chain_dp_at_n(b, &p, n).unwrap().delta;
                let d2 = chain_dp_at_n(b, &p, n + 1).unwrap().delta;
                prop_assert!(d2 <= d1);
            }

            #[test]
            fn tv_lower_bound_positive_and_continuous(
                eps in 0.0f64..5.0, dn in 0.0f64..0.5, gap in 1e-6f64..0.5
            ) {
                let b = tv_lower_bound(eps, dn + gap, dn).unwrap();
                prop_assert!(b > 0.0);
                let h = 1e-9;
                let b2 = tv_lower_bound(eps + h, dn + gap + h, dn).unwrap();
                prop_assert!((b2 - b).abs() < 1e-8);
            }
        }
    }
}
