//! Synthetic worlds and incentive experiments.

mod experiment;
mod logs;
mod strategy;
mod world;

use thiserror::Error;

use crate::benchmark::BenchmarkError;
use crate::ledger::LedgerError;
use crate::mechanism::MechanismError;
use crate::scoring::ScoringError;

pub use experiment::{
    convergence_curve, rating_quality_correlation, run_experiment, simulate_reports, ConvergenceConfig,
    ConvergencePoint, CorrelationReport, ExperimentConfig, ExperimentResult, Reports, StrategyResult,
};
pub use logs::{random_ledger, world_ledger, FuzzOptions};
pub use strategy::{CompiledStrategy, DescriptorRule, Profile, Strategy, StrategyShare};
pub use world::{
    check_self_predicting, generate_world, generate_world_seeded, CellReport, FeatureSpec, SelfPredictingReport,
    World, WorldConfig, WorldItem,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("invalid experiment: {0}")]
    InvalidConfig(String),
    #[error("world is not self-predicting (margins {0:?})")]
    NotSelfPredicting(Vec<f64>),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}
