//! Declarative experiment configurations and the trial runner behind the
//! figure reproductions.
//!
//! A config names an environment, a target policy recipe, and a list of
//! logging series. Each series builds a logging policy (a design regime, a
//! soft-greedy family, or a scalar two-action propensity), optionally sweeps
//! one parameter over a grid, and is scored by the closed-form MSE against
//! the target. One [`ResultRow`] is emitted per (series, grid value, sample
//! size, trial).
//!
//! Seeding: trial `t` uses `base_seed + t`. Every random ingredient of a
//! trial draws from its own sub-stream of that seed (see [`substream`]), so
//! changing one series never perturbs another. The environment itself is
//! generated once from `base_seed`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    apply_shrinkage, design_known_mu_minimax, design_match_target, design_neyman, design_pseudo_target,
    design_uniform, fit_shrinkage, Regime, ShrinkageFit, TargetEnsemble,
};
use crate::env::{
    make_geometric_env, make_linear_env, make_noisy_model, Environment, GeometricSpec, RewardModel, DEFAULT_FLOOR,
};
use crate::error::{Error, Result};
use crate::eval::{closed_form_mse, monte_carlo_mse, policy_value, simulate_dataset};
use crate::matrix::ActionContextMatrix;
use crate::policy::{Family, GreedinessSpec, Policy};

pub const CSV_HEADER: &str = "experiment,label,parameter,n,trial,mse,bias_sq,variance,logging_value,target_value";
pub const ESTIMATES_CSV_HEADER: &str = "experiment,label,parameter,n,trial,replication,estimate";

/// Sub-stream offsets within a trial seed.
pub mod stream {
    pub const TARGET_NOISE: u64 = 1;
    pub const LOGGING_NOISE: u64 = 2;
    pub const ENSEMBLE: u64 = 3;
    pub const AUX_DATA: u64 = 4;
    pub const MONTE_CARLO: u64 = 5;
}

/// Derives an independent seed for sub-stream `offset` (plus an index within
/// it) of `trial_seed`, via the splitmix64 finalizer.
pub fn substream(trial_seed: u64, offset: u64, index: u64) -> u64 {
    let mut z = trial_seed
        .wrapping_add(offset.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Geometric {
        n_contexts: usize,
        n_actions: usize,
        scale: f64,
        decay: f64,
    },
    Linear {
        n_contexts: usize,
        n_actions: usize,
        top_value: f64,
    },
    /// Reward table given row-major by action.
    Explicit {
        mu: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arrival_probs: Option<Vec<f64>>,
    },
}

impl EnvironmentSpec {
    pub fn build(&self, seed: u64) -> Result<Environment> {
        match self {
            EnvironmentSpec::Geometric { n_contexts, n_actions, scale, decay } => make_geometric_env(
                *n_contexts,
                *n_actions,
                GeometricSpec { scale: *scale, decay: *decay, seed },
            ),
            EnvironmentSpec::Linear { n_contexts, n_actions, top_value } => {
                make_linear_env(*n_contexts, *n_actions, *top_value, seed)
            }
            EnvironmentSpec::Explicit { mu, arrival_probs } => {
                let mu = ActionContextMatrix::from_action_rows(mu)?;
                let n = mu.n_contexts();
                let probs = arrival_probs.clone().unwrap_or_else(|| vec![1.0 / n.max(1) as f64; n]);
                Environment::new(probs, mu)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// A soft-greedy policy on a reward estimate with the given noise sd.
    Greedy {
        greediness: GreedinessSpec,
        #[serde(default)]
        noise_sd: f64,
    },
    /// Probability table given row-major by action.
    Explicit { probs: Vec<Vec<f64>> },
}

impl TargetSpec {
    fn build(&self, env: &Environment, noise_seed: u64) -> Result<Policy> {
        match self {
            TargetSpec::Greedy { greediness, noise_sd } => {
                let model = make_noisy_model(env, *noise_sd, DEFAULT_FLOOR, noise_seed)?;
                greediness.build(&model)
            }
            TargetSpec::Explicit { probs } => Policy::new(ActionContextMatrix::from_action_rows(probs)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoggingPolicySpec {
    Design { regime: Regime },
    Family { greediness: GreedinessSpec },
    /// Two-action logging with `pi_l(a0 | x) = p` in every context.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShrinkageSpec {
    #[default]
    None,
    Fixed { weight: f64 },
    /// Fit the weight on `aux_n` fresh records logged uniformly.
    Empirical { aux_n: usize },
}

/// The parameter a series varies over its grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    #[default]
    None,
    K,
    Alpha,
    Degree,
    Propensity,
    NoiseSd,
    ShrinkageWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggingSpec {
    pub label: String,
    pub policy: LoggingPolicySpec,
    /// Replaces the experiment-level target for this series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    /// Noise sd of the reward estimate the logging policy is built from.
    #[serde(default)]
    pub model_noise_sd: f64,
    #[serde(default)]
    pub shrinkage: ShrinkageSpec,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<f64>,
    /// Ensemble size for the pseudo-target design; members are independent
    /// noise draws of the target recipe, member 0 being the evaluated target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_size: Option<usize>,
}

impl LoggingSpec {
    pub fn new(label: impl Into<String>, policy: LoggingPolicySpec) -> Self {
        Self {
            label: label.into(),
            policy,
            target: None,
            model_noise_sd: 0.0,
            shrinkage: ShrinkageSpec::None,
            sweep: Sweep::None,
            grid: Vec::new(),
            ensemble_size: None,
        }
    }

    pub fn design(label: impl Into<String>, regime: Regime) -> Self {
        Self::new(label, LoggingPolicySpec::Design { regime })
    }

    pub fn family(label: impl Into<String>, greediness: GreedinessSpec) -> Self {
        Self::new(label, LoggingPolicySpec::Family { greediness })
    }

    pub fn sweeping(mut self, sweep: Sweep, grid: Vec<f64>) -> Self {
        self.sweep = sweep;
        self.grid = grid;
        self
    }

    pub fn with_target(mut self, target: TargetSpec) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_model_noise(mut self, sd: f64) -> Self {
        self.model_noise_sd = sd;
        self
    }

    pub fn with_shrinkage(mut self, shrinkage: ShrinkageSpec) -> Self {
        self.shrinkage = shrinkage;
        self
    }

    fn grid_values(&self) -> Vec<Option<f64>> {
        match self.sweep {
            Sweep::None => vec![None],
            _ => self.grid.iter().map(|&v| Some(v)).collect(),
        }
    }

    fn validate(&self, n_actions: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("series `{}`: {msg}", self.label)));
        if self.sweep != Sweep::None && self.grid.is_empty() {
            return bad("parameter grid is empty".into());
        }
        if !(self.model_noise_sd >= 0.0) {
            return bad("model noise sd must be nonnegative".into());
        }
        let family = match &self.policy {
            LoggingPolicySpec::Family { greediness } => Some(greediness.family),
            _ => None,
        };
        match self.sweep {
            Sweep::K => {
                if !matches!(family, Some(Family::TopK | Family::TopKPn | Family::TopKSm)) {
                    return bad("a k sweep needs a truncated family".into());
                }
                if self.grid.iter().any(|&k| k < 1.0 || k > n_actions as f64 || k.fract() != 0.0) {
                    return bad(format!("k grid values must be integers in 1..={n_actions}"));
                }
            }
            Sweep::Alpha if !matches!(family, Some(Family::Softmax | Family::TopKSm)) => {
                return bad("an alpha sweep needs a softmax family".into())
            }
            Sweep::Degree if !matches!(family, Some(Family::PowerNormalized | Family::TopKPn)) => {
                return bad("a degree sweep needs a power-normalized family".into())
            }
            Sweep::Propensity => {
                if !matches!(self.policy, LoggingPolicySpec::Scalar) {
                    return bad("a propensity sweep needs the scalar policy".into());
                }
                if self.grid.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return bad("propensities must lie in [0, 1]".into());
                }
            }
            Sweep::NoiseSd if self.grid.iter().any(|&s| !(s >= 0.0)) => {
                return bad("noise sd grid values must be nonnegative".into())
            }
            Sweep::ShrinkageWeight => {
                if self.grid.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                    return bad("shrinkage weights must lie in [0, 1]".into());
                }
            }
            _ => {}
        }
        if matches!(self.policy, LoggingPolicySpec::Scalar) {
            if n_actions != 2 {
                return bad("the scalar policy needs exactly two actions".into());
            }
            if self.sweep != Sweep::Propensity {
                return bad("the scalar policy must sweep `propensity`".into());
            }
        }
        if let LoggingPolicySpec::Design { regime: Regime::PseudoTarget } = self.policy {
            if self.ensemble_size.unwrap_or(0) == 0 {
                return bad("the pseudo-target design needs `ensemble_size` >= 1".into());
            }
        }
        if let ShrinkageSpec::Fixed { weight } = self.shrinkage {
            if !(0.0..=1.0).contains(&weight) {
                return bad("shrinkage weight must lie in [0, 1]".into());
            }
        }
        if let ShrinkageSpec::Empirical { aux_n: 0 } = self.shrinkage {
            return bad("empirical shrinkage needs aux_n >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub replications: usize,
    /// Only the first `trials` trials are replicated.
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub environment: EnvironmentSpec,
    pub target: TargetSpec,
    pub logging: Vec<LoggingSpec>,
    pub n_values: Vec<u64>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSpec>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Environment> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::invalid("n_values must be nonempty and positive"));
        }
        if self.logging.is_empty() {
            return Err(Error::invalid("at least one logging series is required"));
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.replications == 0 {
                return Err(Error::invalid("monte carlo replications must be at least 1"));
            }
        }
        let env = self.environment.build(self.base_seed)?;
        for spec in &self.logging {
            spec.validate(env.n_actions())?;
        }
        Ok(env)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub label: String,
    /// Grid value, NaN for unswept series.
    pub parameter: f64,
    pub n: u64,
    pub trial: usize,
    pub mse: f64,
    pub bias_sq: f64,
    pub variance: f64,
    pub logging_value: f64,
    pub target_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub experiment: String,
    pub label: String,
    pub parameter: f64,
    pub n: u64,
    pub trial: usize,
    pub replication: usize,
    pub estimate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub estimates: Vec<EstimateRow>,
}

/// Everything a logging series can depend on within one trial.
struct TrialContext<'a> {
    env: &'a Environment,
    trial: usize,
    trial_seed: u64,
    default_target: Policy,
}

fn logging_model(env: &Environment, spec: &LoggingSpec, noise_sd: f64, ctx: &TrialContext) -> Result<RewardModel> {
    let seed = substream(ctx.trial_seed, stream::LOGGING_NOISE, 0);
    make_noisy_model(env, noise_sd, DEFAULT_FLOOR, seed).and_then(|m| match spec.shrinkage {
        ShrinkageSpec::None => Ok(m),
        ShrinkageSpec::Fixed { weight } => apply_shrinkage(&m, &ShrinkageFit::with_weight(&m, weight)?),
        ShrinkageSpec::Empirical { aux_n } => {
            let uniform = Policy::uniform(env.n_actions(), env.n_contexts());
            let aux = simulate_dataset(env, &uniform, aux_n, substream(ctx.trial_seed, stream::AUX_DATA, 0))?;
            apply_shrinkage(&m, &fit_shrinkage(&m, &aux)?)
        }
    })
}

fn build_logging(
    spec: &LoggingSpec,
    target_spec: &TargetSpec,
    target: &Policy,
    param: Option<f64>,
    ctx: &TrialContext,
) -> Result<Policy> {
    let env = ctx.env;
    let noise_sd = match (spec.sweep, param) {
        (Sweep::NoiseSd, Some(v)) => v,
        _ => spec.model_noise_sd,
    };
    let mut model = logging_model(env, spec, noise_sd, ctx)?;
    if let (Sweep::ShrinkageWeight, Some(w)) = (spec.sweep, param) {
        model = apply_shrinkage(&model, &ShrinkageFit::with_weight(&model, w)?)?;
    }
    match &spec.policy {
        LoggingPolicySpec::Scalar => {
            let p = param.expect("validated: scalar sweeps propensity");
            let columns = vec![vec![p, 1.0 - p]; env.n_contexts()];
            Policy::from_columns(columns)
        }
        LoggingPolicySpec::Family { greediness } => {
            let mut g = *greediness;
            match (spec.sweep, param) {
                (Sweep::K, Some(v)) => g.k = Some(v as usize),
                (Sweep::Alpha, Some(v)) => g.alpha = Some(v),
                (Sweep::Degree, Some(v)) => g.degree = Some(v),
                _ => {}
            }
            g.build(&model)
        }
        LoggingPolicySpec::Design { regime } => {
            let plugged = env.plug_in(&model)?;
            let report = match regime {
                Regime::Uniform => design_uniform(&plugged),
                Regime::KnownMuMinimax => design_known_mu_minimax(&plugged),
                Regime::MatchTarget => design_match_target(target),
                Regime::Neyman => design_neyman(&plugged, target)?,
                Regime::PseudoTarget => {
                    let size = spec.ensemble_size.unwrap_or(1);
                    let mut members = vec![target.clone()];
                    for j in 1..size {
                        let seed = substream(ctx.trial_seed, stream::ENSEMBLE, j as u64);
                        members.push(target_spec.build(env, seed)?);
                    }
                    design_pseudo_target(&plugged, &TargetEnsemble::uniform(members)?)?
                }
            };
            Ok(report.policy)
        }
    }
}

fn run_trial(config: &ExperimentConfig, env: &Environment, trial: usize) -> Result<ExperimentOutput> {
    let trial_seed = config.base_seed.wrapping_add(trial as u64);
    let target_seed = substream(trial_seed, stream::TARGET_NOISE, 0);
    let ctx = TrialContext {
        env,
        trial,
        trial_seed,
        default_target: config.target.build(env, target_seed)?,
    };
    let mc_enabled = config.monte_carlo.filter(|mc| trial < mc.trials);
    let mut out = ExperimentOutput::default();
    for (series, spec) in config.logging.iter().enumerate() {
        let (target_spec, target) = match &spec.target {
            Some(t) => (t, t.build(env, target_seed)?),
            None => (&config.target, ctx.default_target.clone()),
        };
        let target_value = policy_value(env, &target)?;
        for param in spec.grid_values() {
            let logging = build_logging(spec, target_spec, &target, param, &ctx)?;
            let logging_value = policy_value(env, &logging)?;
            let parameter = param.unwrap_or(f64::NAN);
            for &n in &config.n_values {
                let b = closed_form_mse(env, &target, &logging, n)?;
                out.rows.push(ResultRow {
                    experiment: config.name.clone(),
                    label: spec.label.clone(),
                    parameter,
                    n,
                    trial: ctx.trial,
                    mse: b.mse,
                    bias_sq: b.bias_sq,
                    variance: b.variance,
                    logging_value,
                    target_value,
                });
                if let Some(mc) = mc_enabled {
                    let seed = substream(trial_seed, stream::MONTE_CARLO, (series as u64) << 32 ^ n);
                    let summary = monte_carlo_mse(env, &target, &logging, n as usize, mc.replications, seed)?;
                    out.estimates.extend(summary.estimates.iter().enumerate().map(|(replication, &estimate)| {
                        EstimateRow {
                            experiment: config.name.clone(),
                            label: spec.label.clone(),
                            parameter,
                            n,
                            trial,
                            replication,
                            estimate,
                        }
                    }));
                }
            }
        }
    }
    Ok(out)
}

/// Runs every trial (in parallel, results kept in trial order) without
/// touching the filesystem.
pub fn run_experiment_rows(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let env = config.validate()?;
    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, &env, t))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ExperimentOutput::default();
    for t in per_trial {
        out.rows.extend(t.rows);
        out.estimates.extend(t.estimates);
    }
    Ok(out)
}

/// Runs the experiment and, when `output_path` is set, writes the rows as CSV
/// there (and Monte Carlo estimates next to it with an `.estimates.csv`
/// suffix). The output file is created before any work starts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let file = match &config.output_path {
        Some(path) => Some((path, File::create(path).map_err(|e| Error::io(path, e))?)),
        None => None,
    };
    let out = run_experiment_rows(config)?;
    if let Some((path, file)) = file {
        write_rows_csv(BufWriter::new(file), &out.rows).map_err(|e| Error::io(path, e))?;
        if config.monte_carlo.is_some() {
            let est_path = estimates_path(path);
            let f = File::create(&est_path).map_err(|e| Error::io(&est_path, e))?;
            write_estimates_csv(BufWriter::new(f), &out.estimates).map_err(|e| Error::io(&est_path, e))?;
        }
    }
    Ok(out.rows)
}

pub fn estimates_path(rows_path: &Path) -> PathBuf {
    let stem = rows_path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    rows_path.with_file_name(format!("{stem}.estimates.csv"))
}

/// 17 significant digits, so the text round-trips to the same f64.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_rows_csv<W: Write>(mut w: W, rows: &[ResultRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.experiment),
            csv_field(&r.label),
            format_float(r.parameter),
            r.n,
            r.trial,
            format_float(r.mse),
            format_float(r.bias_sq),
            format_float(r.variance),
            format_float(r.logging_value),
            format_float(r.target_value),
        )?;
    }
    w.flush()
}

pub fn write_estimates_csv<W: Write>(mut w: W, rows: &[EstimateRow]) -> std::io::Result<()> {
    writeln!(w, "{ESTIMATES_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            csv_field(&r.experiment),
            csv_field(&r.label),
            format_float(r.parameter),
            r.n,
            r.trial,
            r.replication,
            format_float(r.estimate),
        )?;
    }
    w.flush()
}

/// Trial-averaged minimum of one series at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub label: String,
    pub n: u64,
    /// NaN for unswept series.
    pub argmin_parameter: f64,
    pub min_mean_mse: f64,
    /// Mean logging-policy value at the argmin.
    pub logging_value: f64,
    pub trials: usize,
}

/// Averages MSE over trials per (label, n, parameter) and reports the
/// minimizing parameter of each (label, n). Series keep their first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SeriesSummary> {
    let mut order: Vec<(String, u64)> = Vec::new();
    // (label, n) -> parameter bits -> (parameter, sum mse, sum value, count)
    let mut groups: BTreeMap<(String, u64), Vec<(f64, f64, f64, usize)>> = BTreeMap::new();
    for r in rows {
        let key = (r.label.clone(), r.n);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        let same = |p: f64| p.to_bits() == r.parameter.to_bits();
        match entry.iter_mut().find(|(p, ..)| same(*p)) {
            Some(slot) => {
                slot.1 += r.mse;
                slot.2 += r.logging_value;
                slot.3 += 1;
            }
            None => entry.push((r.parameter, r.mse, r.logging_value, 1)),
        }
    }
    order
        .into_iter()
        .map(|key| {
            let points = &groups[&key];
            let (param, mse_sum, value_sum, count) = points
                .iter()
                .copied()
                .min_by(|a, b| (a.1 / a.3 as f64).total_cmp(&(b.1 / b.3 as f64)))
                .expect("groups are nonempty");
            SeriesSummary {
                label: key.0,
                n: key.1,
                argmin_parameter: param,
                min_mean_mse: mse_sum / count as f64,
                logging_value: value_sum / count as f64,
                trials: count,
            }
        })
        .collect()
}

/// Evenly spaced values `start, start + step, ...` up to `end` inclusive,
/// computed as `start + i * step` to avoid drift.
pub fn linspace_step(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| start + i as f64 * step).collect()
}

fn int_grid(values: impl IntoIterator<Item = usize>) -> Vec<f64> {
    values.into_iter().map(|v| v as f64).collect()
}

/// `1..=dense` then roughly geometric steps up to `max`.
fn k_grid(dense: usize, max: usize, extra_points: usize) -> Vec<f64> {
    let dense = dense.min(max);
    let mut ks: Vec<usize> = (1..=dense).collect();
    if max > dense {
        let ratio = (max as f64 / dense as f64).powf(1.0 / extra_points as f64);
        let mut v = dense as f64;
        for _ in 0..extra_points {
            v *= ratio;
            let k = (v.round() as usize).min(max);
            if k > *ks.last().unwrap() {
                ks.push(k);
            }
        }
        if *ks.last().unwrap() != max {
            ks.push(max);
        }
    }
    int_grid(ks)
}

pub const FIGURE_IDS: [&str; 7] = ["fig1", "fig2", "fig3", "fig5", "fig6_small", "fig6_large", "figD1"];

const GEOMETRIC_SCALE: f64 = 0.1;
const GEOMETRIC_DECAY: f64 = 0.99;

fn geometric(n_actions: usize) -> EnvironmentSpec {
    EnvironmentSpec::Geometric {
        n_contexts: 1,
        n_actions,
        scale: GEOMETRIC_SCALE,
        decay: GEOMETRIC_DECAY,
    }
}

fn top_k_target(k: usize, noise_sd: f64) -> TargetSpec {
    TargetSpec::Greedy {
        greediness: GreedinessSpec::top_k(k),
        noise_sd,
    }
}

fn config(name: &str, environment: EnvironmentSpec, target: TargetSpec, logging: Vec<LoggingSpec>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        environment,
        target,
        logging,
        n_values: vec![1],
        trials: 1,
        base_seed: 0,
        output_path: None,
        monte_carlo: None,
    }
}

fn soft_greedy_series(n_actions: usize, dense_k: usize) -> Vec<LoggingSpec> {
    vec![
        LoggingSpec::family("top_k", GreedinessSpec::top_k(1)).sweeping(Sweep::K, k_grid(dense_k, n_actions, 60)),
        LoggingSpec::family("softmax", GreedinessSpec::softmax(0.0)).sweeping(Sweep::Alpha, linspace_step(0.0, 300.0, 0.5)),
        LoggingSpec::family("power_normalized", GreedinessSpec::power_normalized(0.0))
            .sweeping(Sweep::Degree, linspace_step(0.0, 5.0, 0.01)),
        LoggingSpec::design("neyman", Regime::Neyman),
        LoggingSpec::design("target", Regime::MatchTarget),
    ]
}

/// The figure configurations. `scale` divides the action and context counts
/// of the large configurations (everything except `fig2`).
pub fn builtin_config(name: &str, scale: usize) -> Result<ExperimentConfig> {
    let scale = scale.max(1);
    let dim = |n: usize| (n / scale).max(1);
    let cfg = match name {
        "fig1" => {
            let n_actions = dim(10_000);
            let k = 10.min(n_actions);
            ExperimentConfig {
                n_values: vec![1_000, 100_000],
                trials: 100,
                monte_carlo: Some(MonteCarloSpec { replications: 200, trials: 1 }),
                ..config(
                    "fig1",
                    geometric(n_actions),
                    top_k_target(k, 0.0),
                    vec![
                        LoggingSpec::family("personalized", GreedinessSpec::top_k(k)).with_model_noise(0.25),
                        LoggingSpec::design("uniform", Regime::Uniform),
                    ],
                )
            }
        }
        "fig2" => {
            let grid = int_grid(1..=999).into_iter().map(|v| v / 1000.0).collect::<Vec<_>>();
            let aligned = TargetSpec::Explicit { probs: vec![vec![0.9], vec![0.1]] };
            let misaligned = TargetSpec::Explicit { probs: vec![vec![0.1], vec![0.9]] };
            config(
                "fig2",
                EnvironmentSpec::Explicit { mu: vec![vec![0.9], vec![0.1]], arrival_probs: None },
                aligned.clone(),
                vec![
                    LoggingSpec::new("aligned", LoggingPolicySpec::Scalar)
                        .with_target(aligned.clone())
                        .sweeping(Sweep::Propensity, grid.clone()),
                    LoggingSpec::new("misaligned", LoggingPolicySpec::Scalar)
                        .with_target(misaligned.clone())
                        .sweeping(Sweep::Propensity, grid),
                    LoggingSpec::design("aligned_neyman", Regime::Neyman).with_target(aligned),
                    LoggingSpec::design("misaligned_neyman", Regime::Neyman).with_target(misaligned),
                ],
            )
        }
        "fig3" => {
            let n_actions = dim(1_000);
            ExperimentConfig {
                n_values: vec![100],
                trials: 1_000,
                ..config(
                    "fig3",
                    geometric(n_actions),
                    top_k_target(30.min(n_actions), 0.25),
                    vec![
                        LoggingSpec::design("neyman", Regime::Neyman).sweeping(Sweep::NoiseSd, linspace_step(0.0, 0.25, 0.025)),
                        LoggingSpec::design("target", Regime::MatchTarget),
                    ],
                )
            }
        }
        "fig5" => {
            let n = dim(1_000);
            ExperimentConfig {
                n_values: vec![50_000],
                trials: 30,
                ..config(
                    "fig5",
                    EnvironmentSpec::Linear { n_contexts: n, n_actions: n, top_value: 0.4 },
                    top_k_target(100.min(n), 0.05),
                    vec![
                        LoggingSpec::design("shrinkage_weight", Regime::Neyman)
                            .with_model_noise(0.25)
                            .sweeping(Sweep::ShrinkageWeight, linspace_step(0.0, 1.0, 0.05)),
                        LoggingSpec::design("empirical_shrinkage", Regime::Neyman)
                            .with_shrinkage(ShrinkageSpec::Empirical { aux_n: 50_000 })
                            .sweeping(Sweep::NoiseSd, linspace_step(0.0, 0.25, 0.05)),
                        LoggingSpec::design("no_shrinkage", Regime::Neyman)
                            .sweeping(Sweep::NoiseSd, linspace_step(0.0, 0.25, 0.05)),
                        LoggingSpec::design("target", Regime::MatchTarget),
                    ],
                )
            }
        }
        "fig6_small" => {
            let n_actions = dim(1_000);
            ExperimentConfig {
                n_values: vec![1_000],
                trials: 30,
                ..config(
                    "fig6_small",
                    geometric(n_actions),
                    top_k_target(200.min(n_actions), 0.0),
                    soft_greedy_series(n_actions, 1_000),
                )
            }
        }
        "fig6_large" => {
            let n_actions = dim(100_000);
            ExperimentConfig {
                n_values: vec![100_000],
                trials: 3,
                ..config(
                    "fig6_large",
                    geometric(n_actions),
                    top_k_target(200.min(n_actions), 0.0),
                    soft_greedy_series(n_actions, 1_000),
                )
            }
        }
        "figD1" => {
            let n_actions = dim(1_000);
            let ks = k_grid(n_actions, n_actions, 0);
            let mut logging = vec![LoggingSpec::family("top_k", GreedinessSpec::top_k(1)).sweeping(Sweep::K, ks.clone())];
            for d in [0.5, 1.0, 2.0] {
                logging.push(
                    LoggingSpec::family(format!("top_k_pn(d={d})"), GreedinessSpec::top_k_pn(1, d)).sweeping(Sweep::K, ks.clone()),
                );
            }
            for alpha in [10.0, 50.0, 100.0] {
                logging.push(
                    LoggingSpec::family(format!("top_k_sm(alpha={alpha})"), GreedinessSpec::top_k_sm(1, alpha))
                        .sweeping(Sweep::K, ks.clone()),
                );
            }
            ExperimentConfig {
                n_values: vec![1_000],
                trials: 5,
                ..config("figD1", geometric(n_actions), top_k_target(200.min(n_actions), 0.0), logging)
            }
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown figure `{other}`; valid ids: {}",
                FIGURE_IDS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

pub fn builtin_configs(scale: usize) -> BTreeMap<String, ExperimentConfig> {
    FIGURE_IDS
        .iter()
        .map(|id| (id.to_string(), builtin_config(id, scale).expect("builtin ids are valid")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for (name, cfg) in builtin_configs(1) {
            assert_eq!(cfg.name, name);
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        for (name, cfg) in builtin_configs(50) {
            cfg.validate().unwrap_or_else(|e| panic!("{name} at scale 50: {e}"));
        }
    }

    #[test]
    fn builtin_parameters() {
        let fig1 = builtin_config("fig1", 1).unwrap();
        assert_eq!(
            fig1.environment,
            EnvironmentSpec::Geometric { n_contexts: 1, n_actions: 10_000, scale: 0.1, decay: 0.99 }
        );
        assert_eq!(fig1.target, top_k_target(10, 0.0));
        assert_eq!(fig1.logging[0].model_noise_sd, 0.25);
        let fig5 = builtin_config("fig5", 1).unwrap();
        assert_eq!(
            fig5.environment,
            EnvironmentSpec::Linear { n_contexts: 1000, n_actions: 1000, top_value: 0.4 }
        );
        assert_eq!(fig5.target, top_k_target(100, 0.05));
        assert_eq!(fig5.n_values, vec![50_000]);
        let fig6 = builtin_config("fig6_small", 1).unwrap();
        assert_eq!(fig6.target, top_k_target(200, 0.0));
        assert_eq!(fig6.n_values, vec![1_000]);
        assert!(builtin_config("fig4", 1).is_err());
    }

    #[test]
    fn substreams_differ() {
        let a = substream(10, stream::TARGET_NOISE, 0);
        let b = substream(10, stream::LOGGING_NOISE, 0);
        let c = substream(11, stream::TARGET_NOISE, 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, substream(10, stream::TARGET_NOISE, 0));
    }

    #[test]
    fn grids() {
        assert_eq!(linspace_step(0.0, 0.25, 0.025).len(), 11);
        assert_eq!(*linspace_step(0.0, 0.25, 0.025).last().unwrap(), 0.25);
        let ks = k_grid(10, 1000, 5);
        assert_eq!(ks[..10], int_grid(1..=10)[..]);
        assert_eq!(*ks.last().unwrap(), 1000.0);
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(k_grid(5, 5, 10), int_grid(1..=5));
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [3.93e-5, 0.1, 1.0 / 3.0, 0.0, 123456.789] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = builtin_config("fig2", 1).unwrap();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = builtin_config("fig2", 1).unwrap();
        cfg.logging[0].grid.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = builtin_config("fig6_small", 10).unwrap();
        cfg.logging[0].sweep = Sweep::Alpha;
        assert!(cfg.validate().is_err());
        let mut cfg = builtin_config("fig6_small", 10).unwrap();
        cfg.n_values.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_regime_label_in_json_is_rejected() {
        let json = r#"{"name":"x","environment":{"kind":"explicit","mu":[[0.5],[0.2]]},
            "target":{"kind":"explicit","probs":[[0.5],[0.5]]},
            "logging":[{"label":"l","policy":{"kind":"design","regime":"greedy"}}],
            "n_values":[10],"trials":1,"base_seed":0}"#;
        assert!(ExperimentConfig::from_json(json).is_err());
        let ok = json.replace("greedy", "neyman");
        let cfg = ExperimentConfig::from_json(&ok).unwrap();
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn summary_picks_trial_averaged_minimum() {
        let row = |p: f64, trial, mse| ResultRow {
            experiment: "e".into(),
            label: "l".into(),
            parameter: p,
            n: 1,
            trial,
            mse,
            bias_sq: 0.0,
            variance: mse,
            logging_value: 0.0,
            target_value: 0.0,
        };
        let rows = vec![row(1.0, 0, 1.0), row(2.0, 0, 0.5), row(1.0, 1, 1.0), row(2.0, 1, 2.0)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].argmin_parameter, 1.0);
        assert_eq!(s[0].min_mean_mse, 1.0);
        assert_eq!(s[0].trials, 2);
    }
}
