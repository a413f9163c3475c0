//! Designing logging policies for inverse propensity weighted off-policy
//! evaluation.
//!
//! The crate covers environments with Bernoulli rewards ([`env`]), stochastic
//! policies and soft-greedy families ([`policy`]), logging policy designs
//! ([`design`]), IPW estimation with its exact bias and variance ([`eval`]),
//! and reproducible experiment sweeps ([`experiments`]).

pub mod design;
pub mod env;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod matrix;
pub mod policy;

pub use design::{DesignFlag, DesignReport, Regime, ShrinkageFit, TargetEnsemble};
pub use env::{Environment, GeometricSpec, RewardModel};
pub use error::{Error, Result};
pub use eval::{LogRecord, LoggedDataset, McSummary, MseBreakdown};
pub use experiments::{ExperimentConfig, ResultRow};
pub use matrix::ActionContextMatrix;
pub use policy::{Family, GreedinessSpec, InnerWeighting, Policy};
