//! Logging policy designs for each informational regime, and the posterior
//! shrinkage of noisy reward estimates.
//!
//! | regime          | knows rewards | knows target | rule                                  |
//! |-----------------|---------------|--------------|---------------------------------------|
//! | `uniform`       | no            | no           | uniform over all actions              |
//! | `minimax-mu`    | yes           | no           | `mu / (c + mu^2)`, `c` by bisection   |
//! | `match-target`  | no            | yes          | the target itself                     |
//! | `neyman`        | yes           | yes          | `pi_t sqrt(mu)`, normalized           |
//! | `pseudo-target` | yes           | distribution | `sqrt(E[pi_t^2]) sqrt(mu)`, normalized|
//!
//! Designs that need rewards read them from an [`Environment`]; to design
//! from an estimate, plug the model in with [`Environment::plug_in`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{check_simplex, Environment, RewardModel};
use crate::error::{Error, Result};
use crate::eval::{context_terms, LoggedDataset};
use crate::policy::Policy;

/// Bisection stops once `|sum mu / (c + mu^2) - 1|` is below this.
pub const BISECTION_TOL: f64 = 1e-12;
pub const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "minimax-mu")]
    KnownMuMinimax,
    #[serde(rename = "match-target")]
    MatchTarget,
    #[serde(rename = "neyman")]
    Neyman,
    #[serde(rename = "pseudo-target")]
    PseudoTarget,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Uniform,
        Regime::KnownMuMinimax,
        Regime::MatchTarget,
        Regime::Neyman,
        Regime::PseudoTarget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Uniform => "uniform",
            Regime::KnownMuMinimax => "minimax-mu",
            Regime::MatchTarget => "match-target",
            Regime::Neyman => "neyman",
            Regime::PseudoTarget => "pseudo-target",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Regime::Uniform => "unknown-mu/unknown-target minimax",
            Regime::KnownMuMinimax => "known-mu/unknown-target minimax",
            Regime::MatchTarget => "unknown-mu/known-target minimax",
            Regime::Neyman => "known-mu/known-target variance optimum",
            Regime::PseudoTarget => "known-mu/target-distribution variance optimum",
        }
    }

    pub fn needs_target(self) -> bool {
        matches!(self, Regime::MatchTarget | Regime::Neyman)
    }

    pub fn needs_ensemble(self) -> bool {
        matches!(self, Regime::PseudoTarget)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Regime::ALL.iter().map(|r| r.name()).collect();
                Error::invalid(format!("unknown regime `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Per-context condition a design had to work around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DesignFlag {
    /// Zero-reward actions were left out of the support.
    ReducedSupport { context: usize, dropped: usize },
    /// Every reward in the context is zero; uniform was used.
    AllZeroRewards { context: usize },
    /// The allocation denominator vanished; uniform over the target support was used.
    DegenerateDenominator { context: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub regime: Regime,
    pub regime_description: String,
    pub policy: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizing_constants: Option<Vec<f64>>,
    /// `|sum mu / (c + mu^2) - 1|` per context, for the minimax-mu design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization_residuals: Option<Vec<f64>>,
    pub flags: Vec<DesignFlag>,
}

impl DesignReport {
    fn new(regime: Regime, policy: Policy) -> Self {
        Self {
            regime,
            regime_description: regime.description().to_string(),
            policy,
            normalizing_constants: None,
            normalization_residuals: None,
            flags: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Uniform logging: minimax when neither rewards nor the target are known.
pub fn design_uniform(env: &Environment) -> DesignReport {
    let policy = Policy::uniform(env.n_actions(), env.n_contexts())
        .labeled_like(env)
        .expect("shape taken from env");
    DesignReport::new(Regime::Uniform, policy)
}

/// Minimax logging when rewards are known but the target is not.
pub fn design_known_mu_minimax(env: &Environment) -> DesignReport {
    let n_actions = env.n_actions();
    let mut columns = Vec::with_capacity(env.n_contexts());
    let mut constants = Vec::with_capacity(env.n_contexts());
    let mut residuals = Vec::with_capacity(env.n_contexts());
    let mut flags = Vec::new();
    for x in 0..env.n_contexts() {
        let mu = env.mu().column(x);
        let dropped = mu.iter().filter(|&&m| m <= 0.0).count();
        if dropped == n_actions {
            flags.push(DesignFlag::AllZeroRewards { context: x });
            columns.push(vec![1.0 / n_actions as f64; n_actions]);
            constants.push(f64::NAN);
            residuals.push(f64::NAN);
            continue;
        }
        if dropped > 0 {
            flags.push(DesignFlag::ReducedSupport { context: x, dropped });
        }
        let (c, residual) = solve_minimax_constant(mu);
        let raw: Vec<f64> = mu
            .iter()
            .map(|&m| if m > 0.0 { m / (c + m * m) } else { 0.0 })
            .collect();
        let total: f64 = raw.iter().sum();
        columns.push(raw.into_iter().map(|p| p / total).collect());
        constants.push(c);
        residuals.push(residual);
    }
    let policy = Policy::from_valid_columns(n_actions, columns)
        .labeled_like(env)
        .expect("shape taken from env");
    DesignReport {
        normalizing_constants: Some(constants),
        normalization_residuals: Some(residuals),
        flags,
        ..DesignReport::new(Regime::KnownMuMinimax, policy)
    }
}

fn minimax_sum(mu: &[f64], c: f64) -> f64 {
    mu.iter().filter(|&&m| m > 0.0).map(|&m| m / (c + m * m)).sum()
}

/// Solves `sum_{mu > 0} mu / (c + mu^2) = 1` for `c >= 0` by bisection on
/// `[0, sum mu]`. Returns the constant and the final residual.
pub fn solve_minimax_constant(mu: &[f64]) -> (f64, f64) {
    let g = |c: f64| minimax_sum(mu, c) - 1.0;
    let mut lo = 0.0;
    let mut hi: f64 = mu.iter().filter(|&&m| m > 0.0).sum();
    if g(lo) <= BISECTION_TOL {
        // only possible when a single action has reward 1
        return (lo, g(lo).abs());
    }
    let mut best = (hi, g(hi).abs());
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let r = g(mid);
        if r.abs() < best.1 {
            best = (mid, r.abs());
        }
        if r.abs() <= BISECTION_TOL || mid == lo || mid == hi {
            break;
        }
        // g is decreasing in c
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Allocation proportional to `weight(a) * sqrt(mu(a))` per context, with
/// uniform-over-support fallback when every product vanishes.
fn sqrt_reward_allocation(env: &Environment, weights: &[Vec<f64>], flags: &mut Vec<DesignFlag>) -> Policy {
    let n_actions = env.n_actions();
    let columns = weights
        .iter()
        .enumerate()
        .map(|(x, w)| {
            let raw: Vec<f64> = w
                .iter()
                .zip(env.mu().column(x))
                .map(|(&p, &m)| p * m.sqrt())
                .collect();
            let total: f64 = raw.iter().sum();
            if total > 0.0 {
                raw.into_iter().map(|v| v / total).collect()
            } else {
                flags.push(DesignFlag::DegenerateDenominator { context: x });
                let support = w.iter().filter(|&&p| p > 0.0).count();
                w.iter()
                    .map(|&p| if p > 0.0 { 1.0 / support as f64 } else { 0.0 })
                    .collect()
            }
        })
        .collect();
    Policy::from_valid_columns(n_actions, columns)
        .labeled_like(env)
        .expect("shape taken from env")
}

/// Variance-optimal logging for a known target and known rewards.
pub fn design_neyman(env: &Environment, target: &Policy) -> Result<DesignReport> {
    target.check_shape(env)?;
    let weights: Vec<Vec<f64>> = (0..env.n_contexts()).map(|x| target.column(x).to_vec()).collect();
    let mut flags = Vec::new();
    let policy = sqrt_reward_allocation(env, &weights, &mut flags);
    Ok(DesignReport {
        flags,
        ..DesignReport::new(Regime::Neyman, policy)
    })
}

/// Minimax logging when the target is known but rewards are not: log the target.
pub fn design_match_target(target: &Policy) -> DesignReport {
    DesignReport::new(Regime::MatchTarget, target.clone())
}

/// A finite distribution over candidate target policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEnsemble {
    policies: Vec<Policy>,
    weights: Vec<f64>,
}

impl TargetEnsemble {
    pub fn new(policies: Vec<Policy>, weights: Vec<f64>) -> Result<Self> {
        if policies.is_empty() || policies.len() != weights.len() {
            return Err(Error::shape(format!(
                "{} policies with {} weights",
                policies.len(),
                weights.len()
            )));
        }
        check_simplex(&weights, "ensemble weights")?;
        let (na, nx) = (policies[0].n_actions(), policies[0].n_contexts());
        if policies.iter().any(|p| p.n_actions() != na || p.n_contexts() != nx) {
            return Err(Error::shape("ensemble policies differ in shape"));
        }
        Ok(Self { policies, weights })
    }

    /// Equal weight on each policy.
    pub fn uniform(policies: Vec<Policy>) -> Result<Self> {
        let m = policies.len().max(1);
        Self::new(policies, vec![1.0 / m as f64; m])
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sqrt(E[pi_t(a|x)^2])` per action and context, one vector per context.
    pub fn pseudo_target(&self) -> Vec<Vec<f64>> {
        let first = &self.policies[0];
        (0..first.n_contexts())
            .map(|x| {
                (0..first.n_actions())
                    .map(|a| {
                        self.policies
                            .iter()
                            .zip(&self.weights)
                            .map(|(p, w)| {
                                let v = p.prob(a, x);
                                w * (v * v)
                            })
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Variance-optimal logging against a distribution of targets, via the
/// root-second-moment pseudo-target.
pub fn design_pseudo_target(env: &Environment, ensemble: &TargetEnsemble) -> Result<DesignReport> {
    ensemble.policies[0].check_shape(env)?;
    let weights = ensemble.pseudo_target();
    let mut flags = Vec::new();
    let policy = sqrt_reward_allocation(env, &weights, &mut flags);
    Ok(DesignReport {
        flags,
        ..DesignReport::new(Regime::PseudoTarget, policy)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageFit {
    pub weight: f64,
    pub context_means: Vec<f64>,
    pub cov_estimate: f64,
    pub var_estimate: f64,
    /// Set when the estimates had no variance on the auxiliary data.
    pub degenerate: bool,
}

impl ShrinkageFit {
    /// A fit with a chosen weight and the model's per-context means.
    pub fn with_weight(model: &RewardModel, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(format!("shrinkage weight must lie in [0, 1], got {weight}")));
        }
        Ok(Self {
            weight,
            context_means: context_means(model),
            cov_estimate: f64::NAN,
            var_estimate: f64::NAN,
            degenerate: false,
        })
    }
}

fn context_means(model: &RewardModel) -> Vec<f64> {
    (0..model.n_contexts())
        .map(|x| model.column(x).iter().sum::<f64>() / model.n_actions() as f64)
        .collect()
}

/// Empirical shrinkage weight `1 - Cov(mu_hat, R) / Var(mu_hat)` over held-out
/// logged data, clamped to `[0, 1]`.
///
/// The auxiliary data must not overlap the data `model` was trained on; that
/// is the caller's responsibility.
pub fn fit_shrinkage(model: &RewardModel, aux: &LoggedDataset) -> Result<ShrinkageFit> {
    if aux.is_empty() {
        return Err(Error::invalid("shrinkage needs a nonempty auxiliary dataset"));
    }
    let lp = aux.logging_policy();
    if lp.n_actions() != model.n_actions() || lp.n_contexts() != model.n_contexts() {
        return Err(Error::shape("auxiliary data and reward model differ in shape"));
    }
    let m = aux.n() as f64;
    let (mut sum_p, mut sum_r) = (0.0, 0.0);
    for r in aux.records() {
        sum_p += model.get(r.action, r.context);
        sum_r += f64::from(r.reward);
    }
    let (mean_p, mean_r) = (sum_p / m, sum_r / m);
    let (mut cov, mut var) = (0.0, 0.0);
    for r in aux.records() {
        let dp = model.get(r.action, r.context) - mean_p;
        cov += dp * (f64::from(r.reward) - mean_r);
        var += dp * dp;
    }
    cov /= m;
    var /= m;
    let degenerate = var <= 0.0;
    let weight = if degenerate {
        1.0
    } else {
        (1.0 - cov / var).clamp(0.0, 1.0)
    };
    Ok(ShrinkageFit {
        weight,
        context_means: context_means(model),
        cov_estimate: cov,
        var_estimate: var,
        degenerate,
    })
}

/// `(1 - w) mu_hat + w mean_x(mu_hat)`, re-clamped to the model's floor.
pub fn apply_shrinkage(model: &RewardModel, fit: &ShrinkageFit) -> Result<RewardModel> {
    if fit.context_means.len() != model.n_contexts() {
        return Err(Error::shape("shrinkage fit and reward model differ in context count"));
    }
    let w = fit.weight;
    let mut mu = model.mu_hat().clone();
    for (col, &mean) in mu.columns_mut().zip(&fit.context_means) {
        for v in col.iter_mut() {
            *v = (1.0 - w) * *v + w * mean;
        }
    }
    RewardModel::new(mu, model.floor())
}

/// Propensity above which logging `action` at `context` is guaranteed to
/// lower MSE relative to leaving it out: `1 / (mu (n Pr(x) + 1))`.
///
/// Returns `None` when the action has zero reward, since its inclusion
/// changes neither bias nor variance. Values above 1 mean no propensity
/// satisfies the condition.
pub fn sufficiency_threshold(env: &Environment, context: usize, action: usize, n: u64) -> Result<Option<f64>> {
    if context >= env.n_contexts() || action >= env.n_actions() {
        return Err(Error::shape(format!("({action}, {context}) is outside the environment")));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let px = env.arrival_probs()[context];
    if px <= 0.0 {
        return Err(Error::invalid(format!("context {context} never arrives")));
    }
    let mu = env.reward(action, context);
    if mu <= 0.0 {
        return Ok(None);
    }
    Ok(Some(1.0 / (mu * (n as f64 * px + 1.0))))
}

/// Change in squared bias and variance from logging `action` at `context`
/// with `propensity` versus not logging it, every other propensity held
/// fixed (the columns are not renormalized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionDeltas {
    /// `bias^2(excluded) - bias^2(included)`.
    pub delta_bias_sq: f64,
    /// `variance(included) - variance(excluded)`.
    pub delta_variance: f64,
}

pub fn inclusion_deltas(
    env: &Environment,
    target: &Policy,
    logging: &Policy,
    context: usize,
    action: usize,
    propensity: f64,
    n: u64,
) -> Result<InclusionDeltas> {
    target.check_shape(env)?;
    logging.check_shape(env)?;
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    if !(propensity > 0.0 && propensity <= 1.0) {
        return Err(Error::invalid(format!("propensity must lie in (0, 1], got {propensity}")));
    }
    let evaluate = |p: f64| -> (f64, f64) {
        let mut bias = 0.0;
        let mut var = 0.0;
        for x in 0..env.n_contexts() {
            let px = env.arrival_probs()[x];
            let t = if x == context {
                let mut col = logging.column(x).to_vec();
                col[action] = p;
                context_terms(env.mu().column(x), target.column(x), &col)
            } else {
                context_terms(env.mu().column(x), target.column(x), logging.column(x))
            };
            bias += px * t.missing;
            var += px * (t.second_moment - t.covered * t.covered);
        }
        (bias * bias, var / n as f64)
    };
    let (bias_in, var_in) = evaluate(propensity);
    let (bias_out, var_out) = evaluate(0.0);
    Ok(InclusionDeltas {
        delta_bias_sq: bias_out - bias_in,
        delta_variance: var_in - var_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_noisy_model;
    use crate::eval::{closed_form_mse, policy_value, simulate_dataset};
    use crate::matrix::ActionContextMatrix;
    use approx::assert_abs_diff_eq;

    fn env(columns: Vec<Vec<f64>>) -> Environment {
        Environment::from_columns(columns).unwrap()
    }

    fn policy(columns: Vec<Vec<f64>>) -> Policy {
        Policy::from_columns(columns).unwrap()
    }

    #[test]
    fn uniform_design() {
        let r = design_uniform(&env(vec![vec![0.5; 10]]));
        assert!(r.policy.column(0).iter().all(|&p| (p - 0.1).abs() < 1e-15));
        assert_eq!(design_uniform(&env(vec![vec![0.5]])).policy.column(0), &[1.0]);
        let e = env(vec![vec![0.9, 0.1, 0.4]]);
        let target = policy(vec![vec![0.2, 0.0, 0.8]]);
        let b = closed_form_mse(&e, &target, &design_uniform(&e).policy, 10).unwrap();
        assert_eq!(b.bias_sq, 0.0);
    }

    /// Dense scan over `c` for the root of `sum mu/(c+mu^2) = 1`.
    fn grid_root(mu: &[f64]) -> f64 {
        let hi: f64 = mu.iter().sum();
        let steps = 2_000_000;
        (0..=steps)
            .map(|i| hi * i as f64 / steps as f64)
            .min_by(|a, b| {
                (minimax_sum(mu, *a) - 1.0)
                    .abs()
                    .total_cmp(&(minimax_sum(mu, *b) - 1.0).abs())
            })
            .unwrap()
    }

    #[test]
    fn minimax_two_action_example() {
        let e = env(vec![vec![0.9, 0.1]]);
        let r = design_known_mu_minimax(&e);
        let c = r.normalizing_constants.as_ref().unwrap()[0];
        assert!(r.normalization_residuals.as_ref().unwrap()[0] <= 1e-10);
        assert_abs_diff_eq!(c, grid_root(&[0.9, 0.1]), epsilon = 1e-5);
        // closed form: c^2 - 0.18 c - 0.0819 = 0
        assert_abs_diff_eq!(c, 0.39, epsilon = 1e-10);
        assert_abs_diff_eq!(r.policy.prob(0, 0), 0.75, epsilon = 1e-10);
        assert_abs_diff_eq!(r.policy.prob(1, 0), 0.25, epsilon = 1e-10);
    }

    #[test]
    fn minimax_symmetric_and_degenerate_columns() {
        for t in [0.01, 0.3, 1.0] {
            let r = design_known_mu_minimax(&env(vec![vec![t, t]]));
            assert_abs_diff_eq!(r.policy.prob(0, 0), 0.5, epsilon = 1e-12);
        }
        let r = design_known_mu_minimax(&env(vec![vec![0.5, 0.0, 0.2], vec![0.0, 0.0, 0.0]]));
        assert_eq!(r.policy.prob(1, 0), 0.0);
        assert!(r.flags.contains(&DesignFlag::ReducedSupport { context: 0, dropped: 1 }));
        assert!(r.flags.contains(&DesignFlag::AllZeroRewards { context: 1 }));
        assert_eq!(r.policy.column(1), &[1.0 / 3.0; 3]);
        let single = design_known_mu_minimax(&env(vec![vec![1.0, 0.0]]));
        assert_eq!(single.policy.column(0), &[1.0, 0.0]);
    }

    #[test]
    fn neyman_fig2_examples() {
        let e = env(vec![vec![0.9, 0.1]]);
        let aligned = design_neyman(&e, &policy(vec![vec![0.9, 0.1]])).unwrap();
        let exact = 0.9 * 0.9f64.sqrt() / (0.9 * 0.9f64.sqrt() + 0.1 * 0.1f64.sqrt());
        assert_abs_diff_eq!(aligned.policy.prob(0, 0), exact, epsilon = 1e-15);
        assert_abs_diff_eq!(aligned.policy.prob(0, 0), 0.9643, epsilon = 1e-4);
        let misaligned = design_neyman(&e, &policy(vec![vec![0.1, 0.9]])).unwrap();
        assert_abs_diff_eq!(misaligned.policy.prob(0, 0), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn neyman_identity_cases() {
        let target = policy(vec![vec![0.2, 0.5, 0.3]]);
        let flat = design_neyman(&env(vec![vec![0.4; 3]]), &target).unwrap();
        for a in 0..3 {
            assert_abs_diff_eq!(flat.policy.prob(a, 0), target.prob(a, 0), epsilon = 1e-15);
        }
        let det = policy(vec![vec![0.0, 1.0, 0.0]]);
        let r = design_neyman(&env(vec![vec![0.9, 0.3, 0.1]]), &det).unwrap();
        assert_eq!(r.policy.column(0), det.column(0));
    }

    #[test]
    fn neyman_degenerate_falls_back() {
        let e = env(vec![vec![0.0, 0.0, 0.5]]);
        let r = design_neyman(&e, &policy(vec![vec![0.5, 0.5, 0.0]])).unwrap();
        assert_eq!(r.policy.column(0), &[0.5, 0.5, 0.0]);
        assert_eq!(r.flags, vec![DesignFlag::DegenerateDenominator { context: 0 }]);
    }

    #[test]
    fn match_target_is_identity() {
        let t = policy(vec![vec![0.2, 0.0, 0.8]]);
        let r = design_match_target(&t);
        assert_eq!(r.policy, t);
        assert_eq!(r.policy.support(0), t.support(0));
        assert_eq!(r.regime, Regime::MatchTarget);
    }

    #[test]
    fn pseudo_target_reductions() {
        let e = env(vec![vec![0.4, 0.2, 0.1], vec![0.3, 0.3, 0.6]]);
        let t = policy(vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.2, 0.6]]);
        let other = Policy::uniform(3, 2);
        let point = TargetEnsemble::new(vec![t.clone(), other], vec![1.0, 0.0]).unwrap();
        let a = design_pseudo_target(&e, &point).unwrap().policy;
        let b = design_neyman(&e, &t).unwrap().policy;
        assert_eq!(a.probs(), b.probs());

        let e = env(vec![vec![0.3, 0.3]]);
        let ens = TargetEnsemble::uniform(vec![policy(vec![vec![1.0, 0.0]]), policy(vec![vec![0.0, 1.0]])]).unwrap();
        let r = design_pseudo_target(&e, &ens).unwrap();
        assert_abs_diff_eq!(r.policy.prob(0, 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ensemble_validation() {
        let p = Policy::uniform(2, 1);
        assert!(TargetEnsemble::new(vec![p.clone()], vec![0.5]).is_err());
        assert!(TargetEnsemble::new(vec![p.clone(), Policy::uniform(3, 1)], vec![0.5, 0.5]).is_err());
        assert!(TargetEnsemble::new(vec![], vec![]).is_err());
    }

    #[test]
    fn regime_names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.name()));
        }
        assert!("greedy".parse::<Regime>().is_err());
    }

    #[test]
    fn shrinkage_extremes() {
        let e = crate::env::make_linear_env(4, 6, 0.4, 3).unwrap();
        let model = make_noisy_model(&e, 0.3, 1e-6, 1).unwrap();
        let zero = apply_shrinkage(&model, &ShrinkageFit::with_weight(&model, 0.0).unwrap()).unwrap();
        assert_eq!(zero, model);
        let full = apply_shrinkage(&model, &ShrinkageFit::with_weight(&model, 1.0).unwrap()).unwrap();
        for x in 0..4 {
            let col = full.column(x);
            assert!(col.iter().all(|&v| (v - col[0]).abs() < 1e-15));
        }
        // a constant column makes the sqrt(mu) factor cancel
        let target = policy(vec![vec![0.5, 0.2, 0.1, 0.1, 0.1, 0.0]; 4]);
        let plugged = e.plug_in(&full).unwrap();
        let r = design_neyman(&plugged, &target).unwrap();
        for x in 0..4 {
            for a in 0..6 {
                assert_abs_diff_eq!(r.policy.prob(a, x), target.prob(a, x), epsilon = 1e-12);
            }
        }
        assert!(ShrinkageFit::with_weight(&model, 1.5).is_err());
    }

    #[test]
    fn shrinkage_degenerate_variance() {
        let e = env(vec![vec![0.5, 0.5]]);
        let model = RewardModel::exact(&e, 1e-6).unwrap();
        let aux = simulate_dataset(&e, &Policy::uniform(2, 1), 100, 4).unwrap();
        let fit = fit_shrinkage(&model, &aux).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.weight, 1.0);
    }

    #[test]
    fn shrinkage_weight_is_clamped() {
        let m = ActionContextMatrix::from_columns(vec![vec![0.9, 0.1]]).unwrap();
        let model = RewardModel::new(m, 1e-6).unwrap();
        // rewards anti-correlated with the estimates push 1 - cov/var above 1
        let records = vec![
            crate::eval::LogRecord { context: 0, action: 0, reward: 0 },
            crate::eval::LogRecord { context: 0, action: 1, reward: 1 },
        ];
        let aux = LoggedDataset::new(records, Policy::uniform(2, 1)).unwrap();
        assert_eq!(fit_shrinkage(&model, &aux).unwrap().weight, 1.0);
    }

    #[test]
    fn sufficiency_examples() {
        let e = env(vec![vec![1.0, 0.0]]);
        assert_abs_diff_eq!(sufficiency_threshold(&e, 0, 0, 1).unwrap().unwrap(), 0.5);
        assert_eq!(sufficiency_threshold(&e, 0, 1, 1).unwrap(), None);
        let mut cols = vec![vec![0.1, 0.5]; 100];
        cols[0] = vec![0.1, 0.5];
        let e = env(cols);
        let t = sufficiency_threshold(&e, 0, 0, 10_000).unwrap().unwrap();
        assert_abs_diff_eq!(t, 1.0 / (0.1 * 101.0), epsilon = 1e-15);
        assert_abs_diff_eq!(t, 0.0990, epsilon = 1e-4);
        let big = sufficiency_threshold(&e, 0, 0, 1_000_000_000).unwrap().unwrap();
        assert!(big < 1e-5);
    }

    #[test]
    fn sufficiency_example_deltas() {
        // the 0.0990 example: just above the threshold the bias saving wins
        let e = env(vec![vec![0.1, 0.5]; 100]);
        let target = Policy::uniform(2, 100);
        let mut cols = vec![vec![0.5, 0.5]; 100];
        cols[0] = vec![0.0, 1.0];
        let logging = policy(cols);
        let threshold = sufficiency_threshold(&e, 0, 0, 10_000).unwrap().unwrap();
        let d = inclusion_deltas(&e, &target, &logging, 0, 0, threshold * 1.001, 10_000).unwrap();
        assert!(d.delta_bias_sq > d.delta_variance, "{d:?}");
    }

    #[test]
    fn value_of_neyman_design_beats_target_on_example() {
        let e = env(vec![vec![0.9, 0.1]]);
        let t = policy(vec![vec![0.5, 0.5]]);
        let l = design_neyman(&e, &t).unwrap().policy;
        assert!(policy_value(&e, &l).unwrap() >= policy_value(&e, &t).unwrap());
    }
}
