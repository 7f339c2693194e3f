//! Monte-Carlo experiments: score strategy profiles under each mechanism.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::strategy::{Profile, Strategy, StrategyShare};
use super::world::{check_self_predicting, generate_world_seeded, SelfPredictingReport, World, WorldConfig};
use super::SimError;
use crate::benchmark::{regularize, train_forest, Epsilon, ForestConfig, Regularized, TrainingRow, TrainingSet};
use crate::ids::{Label, Question, RaterId};
use crate::ledger::{item_rating_total, Weights};
use crate::mechanism::{score_item_ratings, PeerMode, RatingIndex, ScoreParams};
use crate::rng::{derive_seed, rng_for, TAG_EVAL, TAG_REPLICATION, TAG_REPORT, TAG_TRAIN};
use crate::scoring::{
    augmented_score, benchmark_prediction, expected_augmented_score, quadratic_accuracy, BenchmarkInput, Mechanism,
    ProbabilisticRating, CONSTANT_BENCHMARK,
};
use crate::stats::{spearman, Summary};

const Q: Question = Question::CONTRIBUTION;

/// Reports per item, raters ascending.
pub type Reports = Vec<Vec<(RaterId, Label)>>;

/// Applies each rater's strategy to their signal. Every item draws from its
/// own random stream.
pub fn simulate_reports(world: &World, profile: &Profile, seed: u64) -> Reports {
    world
        .items
        .iter()
        .map(|item| {
            let mut rng = rng_for(seed, &[TAG_REPORT, item.id.0]);
            item.signals
                .iter()
                .map(|&(rater, signal)| {
                    let s = &profile.strategies[profile.of(rater)];
                    (rater, s.report(signal, &item.descriptors, &mut rng))
                })
                .collect()
        })
        .collect()
}

fn training_set(world: &World, reports: &Reports) -> TrainingSet {
    let mut set = TrainingSet::new(world.config.descriptor_schema(), world.config.labels.clone());
    for (item, rs) in world.items.iter().zip(reports) {
        for &(_, label) in rs {
            set.push(TrainingRow {
                item: item.id,
                descriptors: item.descriptors.clone(),
                label,
            })
            .expect("generated descriptors match the schema");
        }
    }
    set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub strategies: Vec<StrategyShare>,
    pub mechanism: Mechanism,
    pub replications: usize,
    pub score: ScoreParams,
    pub forest: ForestConfig,
    pub epsilon: f64,
    /// Items in the separate world the augmented benchmark is trained on;
    /// `0` means as many as the scored world.
    pub training_items: usize,
    pub confidence: f64,
    /// Refuse worlds that fail the self-predicting condition.
    pub require_self_predicting: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            strategies: vec![StrategyShare::new(Strategy::Truthful)],
            mechanism: Mechanism::Original,
            replications: 50,
            score: ScoreParams::default(),
            forest: ForestConfig::default(),
            epsilon: Epsilon::DEFAULT,
            training_items: 0,
            confidence: 0.95,
            require_self_predicting: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub name: String,
    /// Over the per-replication mean scores.
    pub summary: Summary,
    /// Largest absolute score of any single rating.
    pub max_abs: f64,
    /// Scored ratings over all replications.
    pub ratings: usize,
    pub replication_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub mechanism: Mechanism,
    pub replications: usize,
    pub strategies: Vec<StrategyResult>,
    pub self_predicting: SelfPredictingReport,
}

impl ExperimentResult {
    pub fn strategy(&self, name: &str) -> Option<&StrategyResult> {
        self.strategies.iter().find(|s| s.name == name)
    }
}

/// Scores of one replication, as `(strategy index, score)`.
fn replication(cfg: &ExperimentConfig, profile: &Profile, r: usize) -> Result<Vec<(usize, f64)>, SimError> {
    let seed = derive_seed(cfg.world.seed, &[TAG_REPLICATION, r as u64]);
    let world = generate_world_seeded(&cfg.world, seed)?;
    let reports = simulate_reports(&world, profile, seed);
    let mut out = Vec::new();
    match cfg.mechanism {
        Mechanism::Original => {
            let mut index = RatingIndex::default();
            for (item, rs) in world.items.iter().zip(&reports) {
                for &(rater, label) in rs {
                    index.insert(rater, item.id, Q, label)?;
                }
            }
            for item in &world.items {
                for (rater, s) in score_item_ratings(&index, Q, item.id, &cfg.score, seed)? {
                    if s.status != crate::mechanism::ScoreStatus::Pending {
                        out.push((profile.of(rater), s.value));
                    }
                }
            }
        }
        Mechanism::Augmented => {
            let train_seed = derive_seed(seed, &[TAG_TRAIN]);
            let train_cfg = WorldConfig {
                items: if cfg.training_items == 0 { cfg.world.items } else { cfg.training_items },
                ..cfg.world.clone()
            };
            let train_world = generate_world_seeded(&train_cfg, train_seed)?;
            let train_reports = simulate_reports(&train_world, profile, train_seed);
            let forest = train_forest(
                &training_set(&train_world, &train_reports),
                &ForestConfig { seed: train_seed, ..cfg.forest.clone() },
            )?;
            let eps = Epsilon::new(cfg.epsilon, cfg.world.labels.len())?;
            for (item, rs) in world.items.iter().zip(&reports) {
                let q = regularize(&forest.predict_proba(&item.descriptors)?, eps);
                augmented_item(&q, rs, &cfg.score, seed, item.id.0, |rater, v| out.push((profile.of(rater), v)));
            }
        }
        Mechanism::Quadratic => {
            for (item, rs) in world.items.iter().zip(&reports) {
                let ratings: Vec<ProbabilisticRating> = rs
                    .iter()
                    .map(|&(rater, label)| ProbabilisticRating {
                        rater,
                        item: item.id,
                        p: cfg.world.success_given_signal(label),
                    })
                    .collect();
                for r in &ratings {
                    let input = BenchmarkInput::Community { ratings: &ratings, exclude: r.rater };
                    let bench = benchmark_prediction(Some(input), Some(CONSTANT_BENCHMARK))?;
                    let v = quadratic_accuracy(r.p, bench.p, Some(item.success), item.id)?;
                    out.push((profile.of(r.rater), v));
                }
            }
        }
    }
    Ok(out)
}

/// Augmented scores of every non-pending rating on one item.
fn augmented_item(
    q: &Regularized,
    reports: &[(RaterId, Label)],
    params: &ScoreParams,
    seed: u64,
    item: u64,
    mut emit: impl FnMut(RaterId, f64),
) {
    for &(rater, own) in reports {
        let peers: Vec<Label> = reports.iter().filter(|(r, _)| *r != rater).map(|&(_, l)| l).collect();
        let s = match params.peer_mode {
            PeerMode::Expectation => expected_augmented_score(own, &peers, q, params.alpha),
            PeerMode::Sampled => {
                let mut rng = rng_for(seed, &[TAG_EVAL, item, rater.0]);
                let peer = (!peers.is_empty()).then(|| peers[rng.random_range(0..peers.len())]);
                augmented_score(own, peer, q, params.alpha)
            }
        };
        if !s.is_pending() {
            emit(rater, s.value);
        }
    }
}

/// Runs `cfg.replications` independent replications and summarizes the
/// per-replication mean score of each strategy.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, SimError> {
    cfg.score.validate()?;
    cfg.forest.validate()?;
    if cfg.replications == 0 {
        return Err(SimError::InvalidConfig("replications must be positive".into()));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(SimError::InvalidConfig("confidence must lie in (0, 1)".into()));
    }
    let self_predicting = check_self_predicting(&cfg.world)?;
    if cfg.require_self_predicting && !self_predicting.holds {
        return Err(SimError::NotSelfPredicting(self_predicting.margins.clone()));
    }
    let profile = Profile::new(&cfg.strategies, cfg.world.raters, &cfg.world.labels, &cfg.world.descriptor_schema())?;
    let per_rep: Vec<Vec<(usize, f64)>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replication(cfg, &profile, r))
        .collect::<Result<_, _>>()?;
    log::debug!("{} replications under the {} mechanism finished", cfg.replications, cfg.mechanism);
    let strategies = profile
        .names
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let mut means = Vec::with_capacity(per_rep.len());
            let mut max_abs = 0.0f64;
            let mut ratings = 0;
            for rep in &per_rep {
                let xs: Vec<f64> = rep.iter().filter(|(i, _)| *i == s).map(|&(_, v)| v).collect();
                max_abs = xs.iter().fold(max_abs, |m, v| m.max(v.abs()));
                ratings += xs.len();
                means.push(if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 });
            }
            StrategyResult {
                name: name.clone(),
                summary: Summary::of(&means, cfg.confidence),
                max_abs,
                ratings,
                replication_means: means,
            }
        })
        .collect();
    Ok(ExperimentResult {
        mechanism: cfg.mechanism,
        replications: cfg.replications,
        strategies,
        self_predicting,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub world: WorldConfig,
    /// Followed by every rater.
    pub strategy: StrategyShare,
    pub mechanism: Mechanism,
    /// Training-corpus sizes, in ratings.
    pub schedule: Vec<usize>,
    /// Items in each evaluation world.
    pub eval_items: usize,
    pub replications: usize,
    pub score: ScoreParams,
    pub forest: ForestConfig,
    pub epsilon: f64,
    pub confidence: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::with_length_feature(),
            strategy: StrategyShare::new(Strategy::DescriptorMap {
                map: super::strategy::DescriptorRule::Threshold {
                    feature: 0,
                    threshold: 20.0,
                    below: "s".into(),
                    above: "e".into(),
                },
            }),
            mechanism: Mechanism::Augmented,
            schedule: vec![1_000, 5_000, 20_000],
            eval_items: 500,
            replications: 3,
            score: ScoreParams::default(),
            forest: ForestConfig::default(),
            epsilon: Epsilon::DEFAULT,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n: usize,
    /// Mean absolute score, summarized over replications.
    pub summary: Summary,
}

/// Mean absolute score of a shared strategy as the benchmark's training
/// corpus grows. Each replication evaluates the same fresh world at every
/// `N`, so points differ only through the training data.
pub fn convergence_curve(cfg: &ConvergenceConfig) -> Result<Vec<ConvergencePoint>, SimError> {
    cfg.score.validate()?;
    cfg.forest.validate()?;
    if cfg.replications == 0 || cfg.eval_items == 0 {
        return Err(SimError::InvalidConfig("replications and eval_items must be positive".into()));
    }
    if cfg.mechanism == Mechanism::Quadratic {
        return Err(SimError::InvalidConfig("convergence curves need a categorical mechanism".into()));
    }
    let schema = cfg.world.descriptor_schema();
    let profile = Profile::new(std::slice::from_ref(&cfg.strategy), cfg.world.raters, &cfg.world.labels, &schema)?;
    let eps = Epsilon::new(cfg.epsilon, cfg.world.labels.len())?;
    let per_ratings = cfg.world.ratings_per_item;
    let jobs: Vec<(usize, usize)> = cfg
        .schedule
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |r| (n, r)))
        .collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(n, r)| -> Result<f64, SimError> {
            let eval_seed = derive_seed(cfg.world.seed, &[TAG_EVAL, r as u64]);
            let eval = generate_world_seeded(&WorldConfig { items: cfg.eval_items, ..cfg.world.clone() }, eval_seed)?;
            let reports = simulate_reports(&eval, &profile, eval_seed);
            let mut total = 0.0;
            let mut count = 0usize;
            match cfg.mechanism {
                Mechanism::Augmented => {
                    let train_seed = derive_seed(cfg.world.seed, &[TAG_TRAIN, n as u64, r as u64]);
                    let items = n.div_ceil(per_ratings).max(1);
                    let train = generate_world_seeded(&WorldConfig { items, ..cfg.world.clone() }, train_seed)?;
                    let train_reports = simulate_reports(&train, &profile, train_seed);
                    let forest = train_forest(
                        &training_set(&train, &train_reports),
                        &ForestConfig { seed: train_seed, ..cfg.forest.clone() },
                    )?;
                    log::debug!("replication {r}: benchmark trained on {} ratings", n);
                    for (item, rs) in eval.items.iter().zip(&reports) {
                        let q = regularize(&forest.predict_proba(&item.descriptors)?, eps);
                        augmented_item(&q, rs, &cfg.score, eval_seed, item.id.0, |_, v| {
                            total += v.abs();
                            count += 1;
                        });
                    }
                }
                _ => {
                    let mut index = RatingIndex::default();
                    for (item, rs) in eval.items.iter().zip(&reports) {
                        for &(rater, label) in rs {
                            index.insert(rater, item.id, Q, label)?;
                        }
                    }
                    for item in &eval.items {
                        for s in score_item_ratings(&index, Q, item.id, &cfg.score, eval_seed)?.values() {
                            if s.status != crate::mechanism::ScoreStatus::Pending {
                                total += s.value.abs();
                                count += 1;
                            }
                        }
                    }
                }
            }
            Ok(if count == 0 { 0.0 } else { total / count as f64 })
        })
        .collect::<Result<_, _>>()?;
    Ok(cfg
        .schedule
        .iter()
        .enumerate()
        .map(|(i, &n)| ConvergencePoint {
            n,
            summary: Summary::of(&values[i * cfg.replications..(i + 1) * cfg.replications], cfg.confidence),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Spearman correlation; 0 when undefined.
    pub rho: f64,
    /// False when either side has zero variance.
    pub defined: bool,
}

/// Rank correlation between each item's weighted rating total and its latent state.
pub fn rating_quality_correlation(world: &World, reports: &Reports, weights: &Weights) -> CorrelationReport {
    let totals: Vec<f64> = reports
        .iter()
        .map(|rs| item_rating_total(&rs.iter().map(|&(_, l)| l).collect::<Vec<_>>(), weights))
        .collect();
    let states: Vec<f64> = world.items.iter().map(|i| i.state as f64).collect();
    match spearman(&totals, &states) {
        Some(rho) => CorrelationReport { rho, defined: true },
        None => CorrelationReport { rho: 0.0, defined: false },
    }
}
