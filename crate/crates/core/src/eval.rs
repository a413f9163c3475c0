//! IPW estimation, the closed-form bias/variance decomposition of its error,
//! logged-data simulation, and Monte Carlo replication.
//!
//! The variance term is the context-averaged conditional variance of the
//! single-draw IPW term `pi_t / pi_l * R`, scaled by `1/n`. Context arrivals
//! are treated as exogenous, so the spread of per-context values across
//! contexts does not enter it.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{rng_from_seed, Environment};
use crate::error::{Error, Result};
use crate::policy::Policy;

/// Logging propensities at or below this are treated as outside the support.
pub const PROPENSITY_EPS: f64 = 1e-15;

/// Largest context count `worst_case_mse` will enumerate exhaustively.
pub const WORST_CASE_MAX_CONTEXTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub context: usize,
    pub action: usize,
    pub reward: u8,
}

/// Logged `(context, action, reward)` triples and the policy that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedDataset {
    records: Vec<LogRecord>,
    logging_policy: Policy,
}

impl LoggedDataset {
    pub fn new(records: Vec<LogRecord>, logging_policy: Policy) -> Result<Self> {
        for (index, r) in records.iter().enumerate() {
            if r.context >= logging_policy.n_contexts() || r.action >= logging_policy.n_actions() {
                return Err(Error::shape(format!(
                    "record {index} references ({}, {}) outside the policy table",
                    r.context, r.action
                )));
            }
            if r.reward > 1 {
                return Err(Error::invalid(format!("record {index} has non-binary reward {}", r.reward)));
            }
            if logging_policy.prob(r.action, r.context) <= 0.0 {
                return Err(Error::OutsideSupport {
                    index,
                    context: r.context,
                    action: r.action,
                });
            }
        }
        Ok(Self {
            records,
            logging_policy,
        })
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn logging_policy(&self) -> &Policy {
        &self.logging_policy
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseBreakdown {
    pub bias_sq: f64,
    pub variance: f64,
    pub mse: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub replications: usize,
    pub estimates: Vec<f64>,
    pub empirical_mse: f64,
    pub empirical_mean: f64,
    pub true_value: f64,
}

impl McSummary {
    /// Standard error of the empirical mean.
    pub fn standard_error(&self) -> f64 {
        let r = self.estimates.len() as f64;
        if r < 2.0 {
            return f64::NAN;
        }
        let var = self
            .estimates
            .iter()
            .map(|e| (e - self.empirical_mean).powi(2))
            .sum::<f64>()
            / (r - 1.0);
        (var / r).sqrt()
    }
}

/// Expected reward `sum_x Pr(x) sum_a pi(a|x) mu(a,x)`.
pub fn policy_value(env: &Environment, policy: &Policy) -> Result<f64> {
    policy.check_shape(env)?;
    Ok((0..env.n_contexts())
        .map(|x| {
            let inner: f64 = policy
                .column(x)
                .iter()
                .zip(env.mu().column(x))
                .map(|(p, m)| p * m)
                .sum();
            env.arrival_probs()[x] * inner
        })
        .sum())
}

/// `(1/N) sum_i pi_t(A_i|X_i) / pi_l(A_i|X_i) * R_i`.
pub fn ipw_estimate(data: &LoggedDataset, target: &Policy) -> Result<f64> {
    let logging = data.logging_policy();
    if target.n_actions() != logging.n_actions() || target.n_contexts() != logging.n_contexts() {
        return Err(Error::shape("target and logging policies differ in shape"));
    }
    if data.is_empty() {
        return Err(Error::invalid("cannot estimate from an empty dataset"));
    }
    let mut total = 0.0;
    for (index, r) in data.records().iter().enumerate() {
        let pl = logging.prob(r.action, r.context);
        if pl <= 0.0 {
            return Err(Error::OutsideSupport {
                index,
                context: r.context,
                action: r.action,
            });
        }
        if r.reward == 1 {
            total += target.prob(r.action, r.context) / pl;
        }
    }
    Ok(total / data.n() as f64)
}

/// Per-context pieces of the decomposition, before weighting by `Pr(x)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ContextTerms {
    /// Target reward mass falling outside the logging support.
    pub missing: f64,
    /// `sum_{a in support} pi_t^2 mu / pi_l`.
    pub second_moment: f64,
    /// `sum_{a in support} pi_t mu`.
    pub covered: f64,
}

pub(crate) fn context_terms(mu: &[f64], target: &[f64], logging: &[f64]) -> ContextTerms {
    let mut t = ContextTerms {
        missing: 0.0,
        second_moment: 0.0,
        covered: 0.0,
    };
    for ((&m, &pt), &pl) in mu.iter().zip(target).zip(logging) {
        if pl > PROPENSITY_EPS {
            t.second_moment += pt * pt * m / pl;
            t.covered += pt * m;
        } else {
            t.missing += pt * m;
        }
    }
    t
}

/// Exact squared bias and variance of the IPW estimate from `n` logged draws.
pub fn closed_form_mse(env: &Environment, target: &Policy, logging: &Policy, n: u64) -> Result<MseBreakdown> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    target.check_shape(env)?;
    logging.check_shape(env)?;
    let mut bias = 0.0;
    let mut var_sum = 0.0;
    for x in 0..env.n_contexts() {
        let px = env.arrival_probs()[x];
        let t = context_terms(env.mu().column(x), target.column(x), logging.column(x));
        bias += px * t.missing;
        var_sum += px * (t.second_moment - t.covered * t.covered);
    }
    let bias_sq = bias * bias;
    // roundoff can leave a tiny negative when the weights are all 1
    let variance = (var_sum / n as f64).max(0.0);
    Ok(MseBreakdown {
        bias_sq,
        variance,
        mse: bias_sq + variance,
        n,
    })
}

/// MSE of the empirical mean reward when the target policy itself is run.
pub fn on_policy_mse(env: &Environment, target: &Policy, n: u64) -> Result<MseBreakdown> {
    closed_form_mse(env, target, target, n)
}

/// Inverse-CDF sampler over a discrete distribution that never returns a
/// zero-probability index.
struct CdfSampler {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl CdfSampler {
    fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
        }
    }

    fn sample(&self, u: f64) -> usize {
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }
}

/// Draws `n` i.i.d. records: context from the arrival distribution, action
/// from the logging policy, Bernoulli reward. Each record consumes three
/// uniforms from the seeded stream.
pub fn simulate_dataset(env: &Environment, logging: &Policy, n: usize, seed: u64) -> Result<LoggedDataset> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    logging.check_shape(env)?;
    let context_sampler = CdfSampler::new(env.arrival_probs());
    let action_samplers: Vec<CdfSampler> = (0..env.n_contexts())
        .map(|x| CdfSampler::new(logging.column(x)))
        .collect();
    let mut rng = rng_from_seed(seed);
    let records = (0..n)
        .map(|_| {
            let context = context_sampler.sample(rng.random::<f64>());
            let action = action_samplers[context].sample(rng.random::<f64>());
            let reward = u8::from(rng.random::<f64>() < env.reward(action, context));
            LogRecord {
                context,
                action,
                reward,
            }
        })
        .collect();
    LoggedDataset::new(records, logging.clone())
}

/// Replicates simulate-then-estimate with seeds `seed + j`; replications run
/// in parallel and are stored by index.
pub fn monte_carlo_mse(
    env: &Environment,
    target: &Policy,
    logging: &Policy,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<McSummary> {
    if replications == 0 {
        return Err(Error::invalid("replications must be at least 1"));
    }
    let true_value = policy_value(env, target)?;
    let estimates = (0..replications)
        .into_par_iter()
        .map(|j| {
            let data = simulate_dataset(env, logging, n, seed.wrapping_add(j as u64))?;
            ipw_estimate(&data, target)
        })
        .collect::<Result<Vec<f64>>>()?;
    let r = replications as f64;
    let empirical_mean = estimates.iter().sum::<f64>() / r;
    let empirical_mse = estimates.iter().map(|e| (e - true_value).powi(2)).sum::<f64>() / r;
    Ok(McSummary {
        replications,
        estimates,
        empirical_mse,
        empirical_mean,
        true_value,
    })
}

/// Reward grid `{0, step, 2 step, ...} ∪ {1}`.
pub fn reward_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::invalid(format!("grid step must lie in (0, 1), got {step}")));
    }
    let count = (1.0 / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| (i as f64 * step).min(1.0)).collect();
    if *grid.last().unwrap() < 1.0 {
        grid.push(1.0);
    }
    Ok(grid)
}

/// Largest closed-form MSE of `logging` over deterministic targets and
/// per-action rewards on a grid of the given step.
///
/// A deterministic target touches one action per context, so each context
/// either contributes bias (target on an unlogged action, reward 1) or
/// variance `m / pi_l - m^2` at the least-logged supported action. The
/// assignment of contexts to the two cases is enumerated exactly.
pub fn worst_case_mse(arrival_probs: &[f64], logging: &Policy, n: u64, mu_grid_step: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    if arrival_probs.len() != logging.n_contexts() {
        return Err(Error::shape("arrival distribution and logging policy differ in context count"));
    }
    crate::env::check_simplex(arrival_probs, "arrival_probs")?;
    if logging.n_contexts() > WORST_CASE_MAX_CONTEXTS {
        return Err(Error::invalid(format!(
            "worst-case enumeration supports at most {WORST_CASE_MAX_CONTEXTS} contexts"
        )));
    }
    let grid = reward_grid(mu_grid_step)?;
    let mut bias_option = Vec::new();
    let mut variance_option = Vec::new();
    for x in 0..logging.n_contexts() {
        let col = logging.column(x);
        let has_gap = col.iter().any(|&p| p <= PROPENSITY_EPS);
        bias_option.push(if has_gap { Some(arrival_probs[x]) } else { None });
        let min_p = col
            .iter()
            .copied()
            .filter(|&p| p > PROPENSITY_EPS)
            .fold(f64::INFINITY, f64::min);
        let best = grid
            .iter()
            .map(|&m| m / min_p - m * m)
            .fold(f64::NEG_INFINITY, f64::max);
        variance_option.push(arrival_probs[x] * best / n as f64);
    }
    let n_ctx = logging.n_contexts();
    let mut worst = f64::NEG_INFINITY;
    for mask in 0u32..(1u32 << n_ctx) {
        let mut bias = 0.0;
        let mut variance = 0.0;
        let mut feasible = true;
        for x in 0..n_ctx {
            if mask & (1 << x) != 0 {
                match bias_option[x] {
                    Some(b) => bias += b,
                    None => {
                        feasible = false;
                        break;
                    }
                }
            } else {
                variance += variance_option[x];
            }
        }
        if feasible {
            worst = worst.max(bias * bias + variance);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GeometricSpec;
    use approx::assert_abs_diff_eq;

    fn env(columns: Vec<Vec<f64>>) -> Environment {
        Environment::from_columns(columns).unwrap()
    }

    fn policy(columns: Vec<Vec<f64>>) -> Policy {
        Policy::from_columns(columns).unwrap()
    }

    #[test]
    fn policy_value_examples() {
        let e = env(vec![vec![0.7, 0.2]]);
        assert_abs_diff_eq!(policy_value(&e, &policy(vec![vec![1.0, 0.0]])).unwrap(), 0.7);
        let e = env(vec![vec![0.9, 0.1]]);
        assert_abs_diff_eq!(policy_value(&e, &Policy::uniform(2, 1)).unwrap(), 0.5, epsilon = 1e-15);
        let e = env(vec![vec![0.4, 0.0], vec![0.8, 0.0]]).with_arrival_probs(vec![0.25, 0.75]).unwrap();
        let p = policy(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_abs_diff_eq!(policy_value(&e, &p).unwrap(), 0.7, epsilon = 1e-15);
    }

    fn dataset(records: &[(usize, usize, u8)], logging: Policy) -> LoggedDataset {
        let records = records
            .iter()
            .map(|&(context, action, reward)| LogRecord { context, action, reward })
            .collect();
        LoggedDataset::new(records, logging).unwrap()
    }

    #[test]
    fn ipw_examples() {
        let logging = policy(vec![vec![0.1, 0.9]]);
        let target = policy(vec![vec![0.3, 0.7]]);
        let d = dataset(&[(0, 0, 1)], logging.clone());
        assert_abs_diff_eq!(ipw_estimate(&d, &target).unwrap(), 3.0, epsilon = 1e-12);
        let d = dataset(&[(0, 0, 0), (0, 1, 0)], logging.clone());
        assert_eq!(ipw_estimate(&d, &target).unwrap(), 0.0);
        let d = dataset(&[(0, 0, 1), (0, 1, 0), (0, 1, 1), (0, 1, 1)], logging.clone());
        assert_abs_diff_eq!(ipw_estimate(&d, &logging).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn record_outside_support_is_rejected() {
        let logging = policy(vec![vec![1.0, 0.0]]);
        let err = LoggedDataset::new(vec![LogRecord { context: 0, action: 1, reward: 1 }], logging).unwrap_err();
        assert!(matches!(err, Error::OutsideSupport { index: 0, context: 0, action: 1 }));
    }

    #[test]
    fn closed_form_examples() {
        let e = env(vec![vec![1.0, 0.3]]);
        let b = closed_form_mse(&e, &policy(vec![vec![1.0, 0.0]]), &Policy::uniform(2, 1), 1).unwrap();
        assert_abs_diff_eq!(b.variance, 1.0, epsilon = 1e-12);
        assert_eq!(b.bias_sq, 0.0);
        assert_eq!(b.mse, b.bias_sq + b.variance);

        // target on a1 while logging only a0: pure bias
        let b = closed_form_mse(&e, &policy(vec![vec![0.0, 1.0]]), &policy(vec![vec![1.0, 0.0]]), 1).unwrap();
        assert_abs_diff_eq!(b.bias_sq, 0.09, epsilon = 1e-15);
        assert_eq!(b.variance, 0.0);
        assert!(closed_form_mse(&e, &Policy::uniform(2, 1), &Policy::uniform(2, 1), 0).is_err());
    }

    #[test]
    fn variance_scales_inversely_with_n() {
        let e = make_env();
        let t = Policy::uniform(e.n_actions(), e.n_contexts());
        let l = policy(vec![vec![0.5, 0.3, 0.2, 0.0]; 3]);
        let b10 = closed_form_mse(&e, &t, &l, 10).unwrap();
        let b40 = closed_form_mse(&e, &t, &l, 40).unwrap();
        assert_abs_diff_eq!(b40.variance, b10.variance * 10.0 / 40.0, epsilon = 1e-15);
        assert_eq!(b40.bias_sq, b10.bias_sq);
        assert!(b10.bias_sq > 0.0);
    }

    fn make_env() -> Environment {
        crate::env::make_geometric_env(3, 4, GeometricSpec { scale: 0.8, decay: 0.7, seed: 3 }).unwrap()
    }

    #[test]
    fn simulated_rewards_follow_extremes() {
        let ones = env(vec![vec![1.0, 1.0]]);
        let d = simulate_dataset(&ones, &Policy::uniform(2, 1), 500, 1).unwrap();
        assert!(d.records().iter().all(|r| r.reward == 1));
        let zeros = env(vec![vec![0.0, 0.0]]);
        let d = simulate_dataset(&zeros, &Policy::uniform(2, 1), 500, 1).unwrap();
        assert!(d.records().iter().all(|r| r.reward == 0));
    }

    #[test]
    fn simulated_action_frequencies() {
        let e = env(vec![vec![0.9, 0.1]]);
        let d = simulate_dataset(&e, &Policy::uniform(2, 1), 100_000, 77).unwrap();
        let freq = d.records().iter().filter(|r| r.action == 0).count() as f64 / 100_000.0;
        assert!((freq - 0.5).abs() < 0.005, "{freq}");
        assert_eq!(d, simulate_dataset(&e, &Policy::uniform(2, 1), 100_000, 77).unwrap());
    }

    #[test]
    fn simulation_never_logs_unsupported_actions() {
        let e = make_env();
        let l = policy(vec![vec![0.0, 0.5, 0.0, 0.5]; 3]);
        let d = simulate_dataset(&e, &l, 20_000, 5).unwrap();
        assert!(d.records().iter().all(|r| r.action == 1 || r.action == 3));
    }

    #[test]
    fn single_replication_mse_is_squared_error() {
        let e = make_env();
        let t = Policy::uniform(4, 3);
        let s = monte_carlo_mse(&e, &t, &t, 50, 1, 9).unwrap();
        assert_abs_diff_eq!(s.empirical_mse, (s.estimates[0] - s.true_value).powi(2), epsilon = 1e-15);
        assert!(monte_carlo_mse(&e, &t, &t, 50, 0, 9).is_err());
    }

    #[test]
    fn monte_carlo_is_unbiased_under_overlap() {
        let e = make_env();
        let t = policy(vec![vec![0.7, 0.3, 0.0, 0.0]; 3]);
        let l = Policy::uniform(4, 3);
        let s = monte_carlo_mse(&e, &t, &l, 20, 10_000, 1000).unwrap();
        assert!((s.empirical_mean - s.true_value).abs() < 3.0 * s.standard_error());
    }

    #[test]
    fn worst_case_examples() {
        let uniform = Policy::uniform(10, 1);
        assert_abs_diff_eq!(worst_case_mse(&[1.0], &uniform, 1, 1e-3).unwrap(), 9.0, epsilon = 1e-9);
        let mut col = vec![0.0; 10];
        col[0] = 1.0;
        let degenerate = policy(vec![col]);
        assert_abs_diff_eq!(worst_case_mse(&[1.0], &degenerate, 1, 1e-3).unwrap(), 1.0, epsilon = 1e-9);
        let single = Policy::uniform(1, 1);
        assert_abs_diff_eq!(worst_case_mse(&[1.0], &single, 1, 1e-3).unwrap(), 0.25, epsilon = 1e-12);
        assert!(worst_case_mse(&[1.0], &single, 1, 1.5).is_err());
    }

    #[test]
    fn reward_grid_has_endpoints() {
        let g = reward_grid(0.3).unwrap();
        assert_eq!(g.first(), Some(&0.0));
        assert_eq!(g.last(), Some(&1.0));
        assert_eq!(reward_grid(1e-3).unwrap().len(), 1001);
    }
}
