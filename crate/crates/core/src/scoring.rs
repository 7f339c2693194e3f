//! Score variants built on top of the peer mechanism: the forest-benchmarked
//! score and the quadratic proper scoring rule for probabilistic ratings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{BenchmarkError, DescriptorVector, Forest, Regularized};
use crate::ids::{ItemId, Label, RaterId};
use crate::mechanism::ScoreValue;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("success event of item {0} is not resolved yet")]
    UnresolvedEvent(ItemId),
    #[error("success event of item {0} is already resolved")]
    AlreadyResolved(ItemId),
    #[error("no benchmark data: empty community and no model")]
    NoBenchmarkData,
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
}

/// Peer-match score with the forest benchmark in place of the sample
/// frequency: `alpha * (1 / q(own) - 1)` on a match, `-alpha` otherwise.
pub fn augmented_score(own: Label, peer: Option<Label>, q: &Regularized, alpha: f64) -> ScoreValue {
    match peer {
        None => ScoreValue::PENDING,
        Some(p) if p == own => ScoreValue::provisional(alpha * (1.0 / q.get(own) - 1.0)),
        Some(_) => ScoreValue::provisional(-alpha),
    }
}

/// Mean of [`augmented_score`] over every admissible peer.
pub fn expected_augmented_score(own: Label, peers: &[Label], q: &Regularized, alpha: f64) -> ScoreValue {
    if peers.is_empty() {
        return ScoreValue::PENDING;
    }
    let total: f64 = peers
        .iter()
        .map(|&p| augmented_score(own, Some(p), q, alpha).value)
        .sum();
    ScoreValue::provisional(total / peers.len() as f64)
}

/// Scoring mechanism attached to an item or an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Peer match weighted by the sampled label frequency.
    #[default]
    Original,
    /// Peer match weighted by the forest benchmark.
    Augmented,
    /// Quadratic rule on probabilistic ratings of a success event.
    Quadratic,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Original => "original",
            Mechanism::Augmented => "augmented",
            Mechanism::Quadratic => "quadratic",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Mechanism::Original),
            "augmented" => Ok(Mechanism::Augmented),
            "quadratic" => Ok(Mechanism::Quadratic),
            other => Err(format!("unknown mechanism `{other}` (expected original, augmented or quadratic)")),
        }
    }
}

fn check_probability(p: f64) -> Result<f64, ScoringError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ScoringError::InvalidProbability(p))
    }
}

/// A rater's reported probability that an item's success event occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticRating {
    pub rater: RaterId,
    pub item: ItemId,
    pub p: f64,
}

impl ProbabilisticRating {
    pub fn new(rater: RaterId, item: ItemId, p: f64) -> Result<Self, ScoringError> {
        Ok(Self {
            rater,
            item,
            p: check_probability(p)?,
        })
    }
}

/// Publicly verifiable binary measure of a project's success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessEvent {
    pub item: ItemId,
    pub description: String,
    pub outcome: Option<bool>,
    pub resolution_time: Option<u64>,
}

impl SuccessEvent {
    pub fn new(item: ItemId, description: impl Into<String>) -> Self {
        Self {
            item,
            description: description.into(),
            outcome: None,
            resolution_time: None,
        }
    }

    /// Sets the outcome once; a second resolution is an error.
    pub fn resolve(&mut self, outcome: bool, at: u64) -> Result<(), ScoringError> {
        if self.outcome.is_some() {
            return Err(ScoringError::AlreadyResolved(self.item));
        }
        self.outcome = Some(outcome);
        self.resolution_time = Some(at);
        Ok(())
    }
}

/// `S(p, o) = 1 - 2 (o - p)^2`.
pub fn quadratic_score(p: f64, outcome: bool) -> f64 {
    let o = if outcome { 1.0 } else { 0.0 };
    1.0 - 2.0 * (o - p) * (o - p)
}

/// Accuracy of a probabilistic rating relative to the benchmark prediction.
pub fn quadratic_accuracy(p: f64, benchmark: f64, outcome: Option<bool>, item: ItemId) -> Result<f64, ScoringError> {
    check_probability(p)?;
    check_probability(benchmark)?;
    let o = outcome.ok_or(ScoringError::UnresolvedEvent(item))?;
    Ok(quadratic_score(p, o) - quadratic_score(benchmark, o))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkSource {
    CommunityAverage,
    Algorithmic,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPrediction {
    pub p: f64,
    pub source: BenchmarkSource,
}

/// The constant prediction used when nothing better is available.
pub const CONSTANT_BENCHMARK: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub enum BenchmarkInput<'a> {
    /// Mean of the other raters' reports; `exclude`'s own report is skipped.
    Community {
        ratings: &'a [ProbabilisticRating],
        exclude: RaterId,
    },
    /// Success probability from a forest trained on resolved outcomes.
    Algorithmic {
        forest: &'a Forest,
        descriptors: &'a DescriptorVector,
        success: Label,
    },
}

/// Computes `p_B`. Without usable data, `fallback` (normally
/// [`CONSTANT_BENCHMARK`]) is returned as a constant prediction.
pub fn benchmark_prediction(input: Option<BenchmarkInput<'_>>, fallback: Option<f64>) -> Result<BenchmarkPrediction, ScoringError> {
    let computed = match input {
        Some(BenchmarkInput::Community { ratings, exclude }) => {
            let others: Vec<f64> = ratings.iter().filter(|r| r.rater != exclude).map(|r| r.p).collect();
            (!others.is_empty()).then(|| BenchmarkPrediction {
                p: others.iter().sum::<f64>() / others.len() as f64,
                source: BenchmarkSource::CommunityAverage,
            })
        }
        Some(BenchmarkInput::Algorithmic { forest, descriptors, success }) => {
            let proba = forest.predict_proba(descriptors)?;
            Some(BenchmarkPrediction {
                p: proba[success.index()].clamp(0.0, 1.0),
                source: BenchmarkSource::Algorithmic,
            })
        }
        None => None,
    };
    match (computed, fallback) {
        (Some(b), _) => Ok(b),
        (None, Some(p)) => Ok(BenchmarkPrediction {
            p: check_probability(p)?,
            source: BenchmarkSource::Constant,
        }),
        (None, None) => Err(ScoringError::NoBenchmarkData),
    }
}
