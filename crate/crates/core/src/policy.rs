//! Stochastic per-context policies and the soft-greedy families built from a
//! reward model: top-k, softmax, power-normalized, and their top-k truncations.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{check_simplex, default_labels, Environment, RewardModel};
use crate::error::{Error, Result};
use crate::matrix::ActionContextMatrix;

/// Probability table `pi(a | x)`; each context column lies on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct Policy {
    actions: Arc<Vec<String>>,
    contexts: Arc<Vec<String>>,
    probs: ActionContextMatrix,
}

#[derive(Deserialize)]
struct RawPolicy {
    actions: Vec<String>,
    contexts: Vec<String>,
    probs: ActionContextMatrix,
}

impl TryFrom<RawPolicy> for Policy {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        Policy::with_labels(Arc::new(raw.actions), Arc::new(raw.contexts), raw.probs)
    }
}

impl Policy {
    pub fn new(probs: ActionContextMatrix) -> Result<Self> {
        let actions = default_labels("a", probs.n_actions());
        let contexts = default_labels("x", probs.n_contexts());
        Self::with_labels(actions, contexts, probs)
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(ActionContextMatrix::from_columns(columns)?)
    }

    pub fn with_labels(
        actions: Arc<Vec<String>>,
        contexts: Arc<Vec<String>>,
        probs: ActionContextMatrix,
    ) -> Result<Self> {
        if probs.n_actions() == 0 || probs.n_contexts() == 0 {
            return Err(Error::invalid("policy needs at least one context and one action"));
        }
        if actions.len() != probs.n_actions() || contexts.len() != probs.n_contexts() {
            return Err(Error::shape("policy labels do not match the probability table"));
        }
        for (x, col) in probs.columns().enumerate() {
            check_simplex(col, &format!("policy column for context {x}"))?;
        }
        Ok(Self {
            actions,
            contexts,
            probs,
        })
    }

    /// Skips validation; callers guarantee every column is a distribution.
    pub(crate) fn from_valid_columns(n_actions: usize, columns: Vec<Vec<f64>>) -> Self {
        let probs = ActionContextMatrix::from_columns(columns).expect("rectangular columns");
        debug_assert_eq!(probs.n_actions(), n_actions);
        Self {
            actions: default_labels("a", probs.n_actions()),
            contexts: default_labels("x", probs.n_contexts()),
            probs,
        }
    }

    pub fn uniform(n_actions: usize, n_contexts: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self::from_valid_columns(n_actions, vec![vec![p; n_actions]; n_contexts])
    }

    /// Copies the action and context labels of `env`.
    pub fn labeled_like(mut self, env: &Environment) -> Result<Self> {
        self.check_shape(env)?;
        self.actions = Arc::clone(env.actions());
        self.contexts = Arc::clone(env.contexts());
        Ok(self)
    }

    pub fn n_actions(&self) -> usize {
        self.probs.n_actions()
    }

    pub fn n_contexts(&self) -> usize {
        self.probs.n_contexts()
    }

    pub fn probs(&self) -> &ActionContextMatrix {
        &self.probs
    }

    pub fn prob(&self, action: usize, context: usize) -> f64 {
        self.probs.get(action, context)
    }

    pub fn column(&self, context: usize) -> &[f64] {
        self.probs.column(context)
    }

    pub fn actions(&self) -> &Arc<Vec<String>> {
        &self.actions
    }

    pub fn contexts(&self) -> &Arc<Vec<String>> {
        &self.contexts
    }

    /// Actions with strictly positive probability at `context`.
    pub fn support(&self, context: usize) -> Vec<usize> {
        self.column(context)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, _)| a)
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.columns().all(|c| c.iter().filter(|&&p| p > 0.0).count() == 1)
    }

    pub fn check_shape(&self, env: &Environment) -> Result<()> {
        if self.n_actions() != env.n_actions() || self.n_contexts() != env.n_contexts() {
            return Err(Error::shape(format!(
                "policy is {}x{} (actions x contexts) but environment is {}x{}",
                self.n_actions(),
                self.n_contexts(),
                env.n_actions(),
                env.n_contexts()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Descending by value, ties by ascending action index.
fn rank_order(col: &[f64], i: usize, j: usize) -> Ordering {
    col[j].total_cmp(&col[i]).then(i.cmp(&j))
}

/// Indices of the `k` largest entries of `col` (ties to the lower index), in rank order.
pub fn top_k_indices(col: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..col.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, |&i, &j| rank_order(col, i, j));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&i, &j| rank_order(col, i, j));
    idx
}

fn check_k(k: usize, n_actions: usize) -> Result<()> {
    if k == 0 || k > n_actions {
        return Err(Error::invalid(format!("k must lie in 1..={n_actions}, got {k}")));
    }
    Ok(())
}

fn build_columns(model: &RewardModel, f: impl Fn(&[f64]) -> Vec<f64>) -> Policy {
    let columns = (0..model.n_contexts()).map(|x| f(model.column(x))).collect();
    Policy::from_valid_columns(model.n_actions(), columns)
}

/// Equal mass on the `k` actions with the highest estimated reward per context.
pub fn top_k_policy(model: &RewardModel, k: usize) -> Result<Policy> {
    check_k(k, model.n_actions())?;
    let p = 1.0 / k as f64;
    Ok(build_columns(model, |col| {
        let mut out = vec![0.0; col.len()];
        for a in top_k_indices(col, k) {
            out[a] = p;
        }
        out
    }))
}

fn softmax_weights(values: &[f64], alpha: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = values.iter().map(|&v| (alpha * (v - max)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn power_weights(values: &[f64], degree: f64) -> Vec<f64> {
    if degree == 0.0 {
        return vec![1.0 / values.len() as f64; values.len()];
    }
    // scale by the column max so large degrees do not underflow every entry
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = values.iter().map(|&v| (v / max).powf(degree)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// `pi(a|x)` proportional to `exp(alpha * mu_hat(a, x))`.
pub fn softmax_policy(model: &RewardModel, alpha: f64) -> Result<Policy> {
    if !alpha.is_finite() {
        return Err(Error::invalid(format!("softmax alpha must be finite, got {alpha}")));
    }
    Ok(build_columns(model, |col| softmax_weights(col, alpha)))
}

/// `pi(a|x)` proportional to `mu_hat(a, x)^degree`. Degree 0 is uniform.
pub fn power_normalized_policy(model: &RewardModel, degree: f64) -> Result<Policy> {
    if !degree.is_finite() || degree < 0.0 {
        return Err(Error::invalid(format!("degree must be finite and nonnegative, got {degree}")));
    }
    Ok(build_columns(model, |col| power_weights(col, degree)))
}

/// Weighting applied inside the top-k set of a truncated policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerWeighting {
    Softmax(f64),
    Power(f64),
}

/// Restricts each context to its top-k actions and applies the inner
/// weighting renormalized over that set.
pub fn truncated_policy(model: &RewardModel, k: usize, inner: InnerWeighting) -> Result<Policy> {
    check_k(k, model.n_actions())?;
    match inner {
        InnerWeighting::Softmax(alpha) if !alpha.is_finite() => {
            return Err(Error::invalid(format!("softmax alpha must be finite, got {alpha}")))
        }
        InnerWeighting::Power(d) if !d.is_finite() || d < 0.0 => {
            return Err(Error::invalid(format!("degree must be finite and nonnegative, got {d}")))
        }
        _ => {}
    }
    Ok(build_columns(model, |col| {
        let top = top_k_indices(col, k);
        let values: Vec<f64> = top.iter().map(|&a| col[a]).collect();
        let weights = match inner {
            InnerWeighting::Softmax(alpha) => softmax_weights(&values, alpha),
            InnerWeighting::Power(d) => power_weights(&values, d),
        };
        let mut out = vec![0.0; col.len()];
        for (a, w) in top.into_iter().zip(weights) {
            out[a] = w;
        }
        out
    }))
}

/// Convex combination of policies with matching shapes.
pub fn mix_policies(weights: &[f64], policies: &[Policy]) -> Result<Policy> {
    if weights.len() != policies.len() || policies.is_empty() {
        return Err(Error::shape(format!(
            "{} weights for {} policies",
            weights.len(),
            policies.len()
        )));
    }
    check_simplex(weights, "mixture weights")?;
    let first = &policies[0];
    if policies
        .iter()
        .any(|p| p.n_actions() != first.n_actions() || p.n_contexts() != first.n_contexts())
    {
        return Err(Error::shape("mixed policies differ in shape"));
    }
    let mut probs = ActionContextMatrix::filled(first.n_actions(), first.n_contexts(), 0.0);
    for (w, p) in weights.iter().zip(policies) {
        for x in 0..first.n_contexts() {
            for (acc, &v) in probs.column_mut(x).iter_mut().zip(p.column(x)) {
                *acc += w * v;
            }
        }
    }
    Policy::with_labels(Arc::clone(&first.actions), Arc::clone(&first.contexts), probs)
}

/// Which soft-greedy family a [`GreedinessSpec`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    TopK,
    Softmax,
    PowerNormalized,
    TopKPn,
    TopKSm,
}

/// A soft-greedy family plus its greediness parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedinessSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<f64>,
}

impl GreedinessSpec {
    pub fn top_k(k: usize) -> Self {
        Self { family: Family::TopK, k: Some(k), alpha: None, degree: None }
    }

    pub fn softmax(alpha: f64) -> Self {
        Self { family: Family::Softmax, k: None, alpha: Some(alpha), degree: None }
    }

    pub fn power_normalized(degree: f64) -> Self {
        Self { family: Family::PowerNormalized, k: None, alpha: None, degree: Some(degree) }
    }

    pub fn top_k_pn(k: usize, degree: f64) -> Self {
        Self { family: Family::TopKPn, k: Some(k), alpha: None, degree: Some(degree) }
    }

    pub fn top_k_sm(k: usize, alpha: f64) -> Self {
        Self { family: Family::TopKSm, k: Some(k), alpha: Some(alpha), degree: None }
    }

    fn need<T: Copy>(&self, v: Option<T>, name: &str) -> Result<T> {
        v.ok_or_else(|| Error::invalid(format!("{:?} policy needs `{name}`", self.family)))
    }

    pub fn build(&self, model: &RewardModel) -> Result<Policy> {
        match self.family {
            Family::TopK => top_k_policy(model, self.need(self.k, "k")?),
            Family::Softmax => softmax_policy(model, self.need(self.alpha, "alpha")?),
            Family::PowerNormalized => power_normalized_policy(model, self.need(self.degree, "degree")?),
            Family::TopKPn => truncated_policy(
                model,
                self.need(self.k, "k")?,
                InnerWeighting::Power(self.need(self.degree, "degree")?),
            ),
            Family::TopKSm => truncated_policy(
                model,
                self.need(self.k, "k")?,
                InnerWeighting::Softmax(self.need(self.alpha, "alpha")?),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model(columns: Vec<Vec<f64>>) -> RewardModel {
        RewardModel::new(ActionContextMatrix::from_columns(columns).unwrap(), 1e-6).unwrap()
    }

    fn assert_col(p: &Policy, x: usize, want: &[f64]) {
        for (got, w) in p.column(x).iter().zip(want) {
            assert_abs_diff_eq!(*got, *w, epsilon = 1e-12);
        }
    }

    #[test]
    fn top_k_examples() {
        let m = model(vec![vec![0.3, 0.1, 0.2]]);
        assert_col(&top_k_policy(&m, 2).unwrap(), 0, &[0.5, 0.0, 0.5]);
        assert_col(&top_k_policy(&m, 3).unwrap(), 0, &[1.0 / 3.0; 3]);
        assert_col(&top_k_policy(&m, 1).unwrap(), 0, &[1.0, 0.0, 0.0]);
        assert!(top_k_policy(&m, 0).is_err());
        assert!(top_k_policy(&m, 4).is_err());
    }

    #[test]
    fn top_k_ties_go_to_lower_index() {
        let m = model(vec![vec![0.2, 0.5, 0.2, 0.2]]);
        let p = top_k_policy(&m, 2).unwrap();
        assert_col(&p, 0, &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(p, top_k_policy(&m, 2).unwrap());
        assert_eq!(top_k_indices(&[0.2, 0.5, 0.2, 0.2], 3), vec![1, 0, 2]);
    }

    #[test]
    fn softmax_examples() {
        let m = model(vec![vec![1.0, 0.0 + 1e-6]]);
        let p = softmax_policy(&m, 3f64.ln()).unwrap();
        assert_abs_diff_eq!(p.prob(0, 0), 0.75, epsilon = 1e-6);
        let u = softmax_policy(&m, 0.0).unwrap();
        assert_col(&u, 0, &[0.5, 0.5]);
        let m = model(vec![vec![0.9, 0.5, 0.1]]);
        assert!(softmax_policy(&m, 50.0).unwrap().column(0).iter().all(|&p| p > 0.0));
        assert!(softmax_policy(&m, f64::INFINITY).is_err());
    }

    #[test]
    fn power_examples() {
        let m = model(vec![vec![0.2, 0.3, 0.5]]);
        assert_col(&power_normalized_policy(&m, 1.0).unwrap(), 0, &[0.2, 0.3, 0.5]);
        assert_col(&power_normalized_policy(&m, 0.0).unwrap(), 0, &[1.0 / 3.0; 3]);
        let m = model(vec![vec![0.2, 0.4]]);
        assert_col(&power_normalized_policy(&m, 2.0).unwrap(), 0, &[0.2, 0.8]);
        assert!(power_normalized_policy(&m, -1.0).is_err());
    }

    #[test]
    fn truncated_examples() {
        let m = model(vec![vec![0.5, 0.4, 0.1]]);
        let p = truncated_policy(&m, 2, InnerWeighting::Power(1.0)).unwrap();
        assert_col(&p, 0, &[5.0 / 9.0, 4.0 / 9.0, 0.0]);
        let full = truncated_policy(&m, 3, InnerWeighting::Softmax(2.0)).unwrap();
        assert_eq!(full, softmax_policy(&m, 2.0).unwrap());
        let flat = truncated_policy(&m, 2, InnerWeighting::Power(0.0)).unwrap();
        assert_eq!(flat, top_k_policy(&m, 2).unwrap());
        assert!(truncated_policy(&m, 4, InnerWeighting::Power(1.0)).is_err());
    }

    #[test]
    fn mixing() {
        let a = Policy::from_columns(vec![vec![1.0, 0.0]]).unwrap();
        let b = Policy::from_columns(vec![vec![0.0, 1.0]]).unwrap();
        assert_col(&mix_policies(&[0.5, 0.5], &[a.clone(), b.clone()]).unwrap(), 0, &[0.5, 0.5]);
        assert_eq!(mix_policies(&[1.0, 0.0], &[a.clone(), b.clone()]).unwrap(), a);
        let u = Policy::uniform(3, 2);
        assert_eq!(mix_policies(&[0.3, 0.7], &[u.clone(), u.clone()]).unwrap(), u);
        assert!(mix_policies(&[1.0], &[a.clone(), b]).is_err());
        assert!(mix_policies(&[0.5, 0.5], &[a, u]).is_err());
    }

    #[test]
    fn policy_json_round_trip_and_validation() {
        let p = Policy::from_columns(vec![vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        let back = Policy::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"actions":["a0","a1"],"contexts":["x0"],"probs":[[0.5],[0.6]]}"#;
        assert!(Policy::from_json(bad).is_err());
    }

    #[test]
    fn greediness_spec_dispatch() {
        let m = model(vec![vec![0.5, 0.4, 0.1]]);
        assert_eq!(GreedinessSpec::top_k(2).build(&m).unwrap(), top_k_policy(&m, 2).unwrap());
        assert_eq!(
            GreedinessSpec::top_k_pn(2, 1.0).build(&m).unwrap(),
            truncated_policy(&m, 2, InnerWeighting::Power(1.0)).unwrap()
        );
        let missing = GreedinessSpec { family: Family::Softmax, k: None, alpha: None, degree: None };
        assert!(missing.build(&m).is_err());
        let json = serde_json::to_string(&GreedinessSpec::top_k_sm(3, 2.0)).unwrap();
        assert_eq!(json, r#"{"family":"top_k_sm","k":3,"alpha":2.0}"#);
    }

    #[test]
    fn limit_laws_concentrate_on_argmax() {
        let m = model(vec![vec![0.3, 0.9, 0.5, 0.1]]);
        assert!(softmax_policy(&m, 1e4).unwrap().prob(1, 0) >= 1.0 - 1e-6);
        assert!(power_normalized_policy(&m, 1e4).unwrap().prob(1, 0) >= 1.0 - 1e-6);
    }

    fn column_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-3f64..1.0, 1..12)
    }

    proptest! {
        #[test]
        fn constructors_emit_distributions(col in column_strategy(), alpha in 0.0f64..200.0, degree in 0.0f64..20.0, kf in 0.0f64..1.0) {
            let n = col.len();
            let k = 1 + ((n - 1) as f64 * kf) as usize;
            let m = model(vec![col.clone(), col.iter().rev().copied().collect()]);
            let policies = [
                top_k_policy(&m, k).unwrap(),
                softmax_policy(&m, alpha).unwrap(),
                power_normalized_policy(&m, degree).unwrap(),
                truncated_policy(&m, k, InnerWeighting::Power(degree)).unwrap(),
                truncated_policy(&m, k, InnerWeighting::Softmax(alpha)).unwrap(),
            ];
            for p in &policies {
                for x in 0..2 {
                    let s: f64 = p.column(x).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-9);
                    prop_assert!(p.column(x).iter().all(|&v| v >= 0.0));
                }
            }
            prop_assert_eq!(policies[0].support(0).len(), k);
            prop_assert_eq!(policies[0].support(1).len(), k);
        }

        #[test]
        fn soft_families_are_monotone(col in column_strategy(), alpha in 0.0f64..50.0, degree in 0.0f64..5.0) {
            let m = model(vec![col.clone()]);
            let sm = softmax_policy(&m, alpha).unwrap();
            let pn = power_normalized_policy(&m, degree).unwrap();
            for i in 0..col.len() {
                for j in 0..col.len() {
                    if col[i] > col[j] {
                        prop_assert!(sm.prob(i, 0) >= sm.prob(j, 0));
                        prop_assert!(pn.prob(i, 0) >= pn.prob(j, 0));
                        if alpha > 0.0 && alpha * (col[i] - col[j]) > 1e-9 {
                            prop_assert!(sm.prob(i, 0) > sm.prob(j, 0));
                        }
                        if degree > 0.0 && degree * (col[i] / col[j]).ln() > 1e-9 {
                            prop_assert!(pn.prob(i, 0) > pn.prob(j, 0));
                        }
                    }
                }
            }
        }
    }
}
