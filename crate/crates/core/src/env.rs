//! Finite contextual-bandit environments and reward models.
//!
//! An [`Environment`] holds the true Bernoulli reward probabilities
//! `mu(a, x)` and the context arrival distribution. A [`RewardModel`] is an
//! estimate of the same table, clamped to `[floor, 1]`.
//!
//! The synthetic generators draw one fresh permutation of the action set per
//! context and assign a fixed reward profile along that permutation.
//! Multiplicative model noise is parameterized by its standard deviation.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ActionContextMatrix;

/// Tolerance on the arrival distribution summing to one.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Default lower clamp for reward estimates.
pub const DEFAULT_FLOOR: f64 = 1e-6;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn default_labels(prefix: &str, n: usize) -> Arc<Vec<String>> {
    Arc::new((0..n).map(|i| format!("{prefix}{i}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvironment")]
pub struct Environment {
    contexts: Arc<Vec<String>>,
    arrival_probs: Vec<f64>,
    actions: Arc<Vec<String>>,
    mu: ActionContextMatrix,
}

#[derive(Deserialize)]
struct RawEnvironment {
    contexts: Vec<String>,
    arrival_probs: Vec<f64>,
    actions: Vec<String>,
    mu: ActionContextMatrix,
}

impl TryFrom<RawEnvironment> for Environment {
    type Error = Error;

    fn try_from(raw: RawEnvironment) -> Result<Self> {
        Environment::with_labels(
            Arc::new(raw.contexts),
            raw.arrival_probs,
            Arc::new(raw.actions),
            raw.mu,
        )
    }
}

impl Environment {
    /// Builds an environment with generated labels (`x0..`, `a0..`).
    pub fn new(arrival_probs: Vec<f64>, mu: ActionContextMatrix) -> Result<Self> {
        let contexts = default_labels("x", mu.n_contexts());
        let actions = default_labels("a", mu.n_actions());
        Self::with_labels(contexts, arrival_probs, actions, mu)
    }

    /// Builds an environment with uniform arrivals from one reward column per context.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.len();
        let mu = ActionContextMatrix::from_columns(columns)?;
        Self::new(vec![1.0 / n.max(1) as f64; n], mu)
    }

    pub fn with_labels(
        contexts: Arc<Vec<String>>,
        arrival_probs: Vec<f64>,
        actions: Arc<Vec<String>>,
        mu: ActionContextMatrix,
    ) -> Result<Self> {
        if mu.n_contexts() == 0 || mu.n_actions() == 0 {
            return Err(Error::invalid("environment needs at least one context and one action"));
        }
        if contexts.len() != mu.n_contexts() || arrival_probs.len() != mu.n_contexts() {
            return Err(Error::shape(format!(
                "{} contexts, {} arrival probabilities, reward table has {} contexts",
                contexts.len(),
                arrival_probs.len(),
                mu.n_contexts()
            )));
        }
        if actions.len() != mu.n_actions() {
            return Err(Error::shape(format!(
                "{} actions but reward table has {} actions",
                actions.len(),
                mu.n_actions()
            )));
        }
        check_simplex(&arrival_probs, "arrival_probs")?;
        if let Some(v) = mu.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("reward probability {v} outside [0, 1]")));
        }
        Ok(Self {
            contexts,
            arrival_probs,
            actions,
            mu,
        })
    }

    /// Replaces the arrival distribution.
    pub fn with_arrival_probs(self, arrival_probs: Vec<f64>) -> Result<Self> {
        Self::with_labels(self.contexts, arrival_probs, self.actions, self.mu)
    }

    /// The environment a designer sees when plugging a reward model in place of `mu`.
    pub fn plug_in(&self, model: &RewardModel) -> Result<Self> {
        if !model.mu_hat().same_shape(&self.mu) {
            return Err(Error::shape("reward model and environment differ in shape"));
        }
        Ok(Self {
            contexts: Arc::clone(&self.contexts),
            arrival_probs: self.arrival_probs.clone(),
            actions: Arc::clone(&self.actions),
            mu: model.mu_hat().clone(),
        })
    }

    pub fn n_contexts(&self) -> usize {
        self.mu.n_contexts()
    }

    pub fn n_actions(&self) -> usize {
        self.mu.n_actions()
    }

    pub fn contexts(&self) -> &Arc<Vec<String>> {
        &self.contexts
    }

    pub fn actions(&self) -> &Arc<Vec<String>> {
        &self.actions
    }

    pub fn arrival_probs(&self) -> &[f64] {
        &self.arrival_probs
    }

    pub fn mu(&self) -> &ActionContextMatrix {
        &self.mu
    }

    pub fn reward(&self, action: usize, context: usize) -> f64 {
        self.mu.get(action, context)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn check_simplex(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

/// Estimated reward table, every entry in `[floor, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRewardModel")]
pub struct RewardModel {
    mu_hat: ActionContextMatrix,
    floor: f64,
}

#[derive(Deserialize)]
struct RawRewardModel {
    mu_hat: ActionContextMatrix,
    floor: f64,
}

impl TryFrom<RawRewardModel> for RewardModel {
    type Error = Error;

    fn try_from(raw: RawRewardModel) -> Result<Self> {
        RewardModel::new(raw.mu_hat, raw.floor)
    }
}

impl RewardModel {
    /// Clamps every entry of `mu_hat` into `[floor, 1]`.
    pub fn new(mut mu_hat: ActionContextMatrix, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(Error::invalid(format!("floor must lie in (0, 1], got {floor}")));
        }
        if mu_hat.n_actions() == 0 || mu_hat.n_contexts() == 0 {
            return Err(Error::invalid("reward model needs at least one context and one action"));
        }
        for col in mu_hat.columns_mut() {
            for v in col.iter_mut() {
                if v.is_nan() {
                    return Err(Error::invalid("reward estimate is NaN"));
                }
                *v = v.clamp(floor, 1.0);
            }
        }
        Ok(Self { mu_hat, floor })
    }

    /// The true rewards, clamped. Equivalent to a zero-noise model.
    pub fn exact(env: &Environment, floor: f64) -> Result<Self> {
        Self::new(env.mu().clone(), floor)
    }

    pub fn mu_hat(&self) -> &ActionContextMatrix {
        &self.mu_hat
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn n_actions(&self) -> usize {
        self.mu_hat.n_actions()
    }

    pub fn n_contexts(&self) -> usize {
        self.mu_hat.n_contexts()
    }

    pub fn column(&self, context: usize) -> &[f64] {
        self.mu_hat.column(context)
    }

    pub fn get(&self, action: usize, context: usize) -> f64 {
        self.mu_hat.get(action, context)
    }
}

/// Parameters of the scaled geometric reward profile `scale * decay^i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricSpec {
    pub scale: f64,
    pub decay: f64,
    pub seed: u64,
}

impl GeometricSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::invalid(format!("scale must lie in (0, 1], got {}", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(Error::invalid(format!("decay must lie in [0, 1], got {}", self.decay)));
        }
        if self.scale * self.decay > 1.0 {
            return Err(Error::invalid("scale * decay exceeds 1"));
        }
        Ok(())
    }
}

fn permuted_profile_env(n_contexts: usize, n_actions: usize, profile: &[f64], seed: u64) -> Result<Environment> {
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n_actions).collect();
    let mut columns = Vec::with_capacity(n_contexts);
    for _ in 0..n_contexts {
        order.shuffle(&mut rng);
        let mut col = vec![0.0; n_actions];
        // order[i] is the action holding rank i
        for (rank, &action) in order.iter().enumerate() {
            col[action] = profile[rank];
        }
        columns.push(col);
    }
    Environment::from_columns(columns)
}

fn check_counts(n_contexts: usize, n_actions: usize) -> Result<()> {
    if n_contexts == 0 || n_actions == 0 {
        return Err(Error::invalid("environment needs at least one context and one action"));
    }
    Ok(())
}

/// Per context, a random permutation of the actions receives rewards
/// `scale * decay^i` for ranks `i = 1..=n_actions`. Arrivals are uniform.
pub fn make_geometric_env(n_contexts: usize, n_actions: usize, spec: GeometricSpec) -> Result<Environment> {
    check_counts(n_contexts, n_actions)?;
    spec.validate()?;
    let profile: Vec<f64> = (1..=n_actions)
        .map(|i| spec.scale * spec.decay.powi(i as i32))
        .collect();
    permuted_profile_env(n_contexts, n_actions, &profile, spec.seed)
}

/// Per context, a random permutation of the actions receives rewards on the
/// equally spaced lattice from `top_value` down to 0.
pub fn make_linear_env(n_contexts: usize, n_actions: usize, top_value: f64, seed: u64) -> Result<Environment> {
    check_counts(n_contexts, n_actions)?;
    if !(top_value > 0.0 && top_value <= 1.0) {
        return Err(Error::invalid(format!("top value must lie in (0, 1], got {top_value}")));
    }
    let profile: Vec<f64> = if n_actions == 1 {
        vec![top_value]
    } else {
        let last = (n_actions - 1) as f64;
        (0..n_actions)
            .map(|i| top_value * (last - i as f64) / last)
            .collect()
    };
    permuted_profile_env(n_contexts, n_actions, &profile, seed)
}

/// Multiplies every true reward by an independent `N(1, noise_sd^2)` draw and
/// clamps into `[floor, 1]`. Draws are taken context by context, actions in
/// index order.
pub fn make_noisy_model(env: &Environment, noise_sd: f64, floor: f64, seed: u64) -> Result<RewardModel> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::invalid(format!("noise sd must be a nonnegative number, got {noise_sd}")));
    }
    let mut mu_hat = env.mu().clone();
    if noise_sd > 0.0 {
        let normal = Normal::new(1.0, noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = rng_from_seed(seed);
        for col in mu_hat.columns_mut() {
            for v in col.iter_mut() {
                *v *= normal.sample(&mut rng);
            }
        }
    }
    RewardModel::new(mu_hat, floor)
}
