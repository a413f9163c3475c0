use std::fs;
use std::path::{Path, PathBuf};

use logdesign_core::design::{
    design_known_mu_minimax, design_match_target, design_neyman, design_pseudo_target, design_uniform,
};
use logdesign_core::eval::{closed_form_mse, monte_carlo_mse, policy_value};
use logdesign_core::experiments::{builtin_config, run_experiment, summarize, ExperimentConfig, FIGURE_IDS};
use logdesign_core::{DesignReport, Environment, Policy, Regime, TargetEnsemble};
use thiserror::Error;

use crate::{Command, Overrides, Parallel};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] logdesign_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Core(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load_env(path: &Path) -> Result<Environment> {
    Environment::from_json(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path) -> Result<Policy> {
    Policy::from_json(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Scientific notation with 4 significant digits.
fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn with_jobs<T: Send>(parallel: &Parallel, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match parallel.jobs {
        None => f(),
        Some(0) => Err(CliError::Validation("--jobs must be at least 1".into())),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Validation(format!("cannot start {jobs} workers: {e}")))?
            .install(f),
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Design { env, regime, target, weights, out } => cmd_design(&env, regime, &target, weights, &out),
        Command::Evaluate { env, target, logging, n, replications, seed, out, parallel } => {
            with_jobs(&parallel, || cmd_evaluate(&env, &target, &logging, n, replications, seed, out.as_deref()))
        }
        Command::Sweep { config, out, overrides, parallel } => {
            let mut cfg = ExperimentConfig::from_json(&read(&config)?)
                .map_err(|e| CliError::Validation(format!("{}: {e}", config.display())))?;
            if out.is_some() {
                cfg.output_path = out;
            }
            apply_overrides(&mut cfg, &overrides);
            with_jobs(&parallel, || run_and_summarize(&cfg))
        }
        Command::ReproduceFigure { name, scale, out, overrides, parallel } => {
            if scale == 0 {
                return Err(CliError::Validation("--scale must be at least 1".into()));
            }
            let mut cfg = builtin_config(&name, scale)?;
            fs::create_dir_all(&out).map_err(|source| CliError::Io { path: out.clone(), source })?;
            cfg.output_path = Some(out.join(format!("{name}.csv")));
            apply_overrides(&mut cfg, &overrides);
            with_jobs(&parallel, || run_and_summarize(&cfg))
        }
        Command::ListFigures => {
            for id in FIGURE_IDS {
                println!("{id}");
            }
            Ok(())
        }
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, overrides: &Overrides) {
    if let Some(seed) = overrides.seed {
        cfg.base_seed = seed;
    }
    if let Some(trials) = overrides.trials {
        cfg.trials = trials;
    }
}

fn cmd_design(env_path: &Path, regime: Regime, targets: &[PathBuf], weights: Option<Vec<f64>>, out: &Path) -> Result<()> {
    let env = load_env(env_path)?;
    let targets = targets.iter().map(|p| load_policy(p)).collect::<Result<Vec<_>>>()?;
    if regime.needs_target() && targets.is_empty() {
        return Err(CliError::Validation(format!("regime `{regime}` requires a target policy (--target)")));
    }
    if !regime.needs_ensemble() && targets.len() > 1 {
        return Err(CliError::Validation(format!(
            "regime `{regime}` takes at most one --target; use pseudo-target for ensembles"
        )));
    }
    if weights.is_some() && !regime.needs_ensemble() {
        return Err(CliError::Validation("--weights only applies to pseudo-target".into()));
    }
    for t in &targets {
        t.check_shape(&env)?;
    }
    let report: DesignReport = match regime {
        Regime::Uniform => design_uniform(&env),
        Regime::KnownMuMinimax => design_known_mu_minimax(&env),
        Regime::MatchTarget => design_match_target(&targets[0]),
        Regime::Neyman => design_neyman(&env, &targets[0])?,
        Regime::PseudoTarget => {
            let ensemble = match weights {
                Some(w) => TargetEnsemble::new(targets, w)?,
                None => TargetEnsemble::uniform(targets)?,
            };
            design_pseudo_target(&env, &ensemble)?
        }
    };
    let policy = report.policy.clone().labeled_like(&env)?;
    let report = DesignReport { policy, ..report };
    write(out, &report.to_json()?)?;

    println!("regime {regime}: {}", regime.description());
    if let Some(cs) = &report.normalizing_constants {
        let cs: Vec<String> = cs.iter().map(|&c| sci(c)).collect();
        println!("normalizing constants: {}", cs.join(" "));
    }
    for flag in &report.flags {
        println!("flag: {flag:?}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_evaluate(
    env_path: &Path,
    target_path: &Path,
    logging_path: &Path,
    n: u64,
    replications: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    if n == 0 {
        return Err(CliError::Validation("--n must be at least 1".into()));
    }
    let env = load_env(env_path)?;
    let target = load_policy(target_path)?;
    let logging = load_policy(logging_path)?;
    let b = closed_form_mse(&env, &target, &logging, n)?;
    let target_value = policy_value(&env, &target)?;
    let logging_value = policy_value(&env, &logging)?;
    println!("n={n}");
    println!("target_value={}", sci(target_value));
    println!("logging_value={}", sci(logging_value));
    println!("bias_sq={}", sci(b.bias_sq));
    println!("variance={}", sci(b.variance));
    println!("mse={}", sci(b.mse));
    let mut json = serde_json::json!({
        "closed_form": b,
        "target_value": target_value,
        "logging_value": logging_value,
    });
    if replications > 0 {
        let mc = monte_carlo_mse(&env, &target, &logging, n as usize, replications, seed)?;
        println!("monte_carlo_mse={} (replications={replications})", sci(mc.empirical_mse));
        println!("monte_carlo_mean={}", sci(mc.empirical_mean));
        json["monte_carlo"] = serde_json::json!({
            "replications": replications,
            "seed": seed,
            "empirical_mse": mc.empirical_mse,
            "empirical_mean": mc.empirical_mean,
            "standard_error": mc.standard_error(),
        });
    }
    if let Some(out) = out {
        let text = serde_json::to_string_pretty(&json).map_err(logdesign_core::Error::from)?;
        write(out, &text)?;
    }
    Ok(())
}

fn run_and_summarize(cfg: &ExperimentConfig) -> Result<()> {
    let rows = run_experiment(cfg)?;
    for s in summarize(&rows) {
        let argmin = if s.argmin_parameter.is_nan() { "-".to_string() } else { sci(s.argmin_parameter) };
        println!(
            "{} n={} argmin={argmin} min_mse={} logging_value={} trials={}",
            s.label,
            s.n,
            sci(s.min_mean_mse),
            sci(s.logging_value),
            s.trials
        );
    }
    if let Some(path) = &cfg.output_path {
        println!("wrote {} rows to {}", rows.len(), path.display());
    }
    Ok(())
}
