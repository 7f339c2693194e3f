//! Full recomputation of accuracy scores and reputation from ledger state.
//!
//! Scores are recomputed from scratch on every replay, so a rating's score
//! keeps moving while new ratings arrive elsewhere in the corpus. Every
//! random draw is keyed by `(seed, item, question, rater)` and every
//! collection is ordered, so equal inputs give bit-identical output.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::{ItemKind, ItemState, LedgerState};
use super::{accuracy_component, Ledger, LedgerError, Weights};
use crate::benchmark::{
    regularize, train_excluding, Epsilon, Forest, ForestConfig, Regularized, TrainingRow,
    TrainingSet,
};
use crate::ids::{ItemId, Question, RaterId, UserId};
use crate::mechanism::{
    rating_rng, score_rating, MechanismError, PeerMode, RatingIndex, ScoreParams, ScoreStatus, ScoreValue,
};
use crate::rng::{derive_seed, TAG_TRAIN};
use crate::scoring::{
    augmented_score, benchmark_prediction, expected_augmented_score, quadratic_accuracy, BenchmarkInput,
    Mechanism, ProbabilisticRating, CONSTANT_BENCHMARK,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub weights: Weights,
    pub score: ScoreParams,
    /// Forest settings for augmented items; the seed is derived per item.
    pub forest: ForestConfig,
    pub epsilon: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            score: ScoreParams::default(),
            forest: ForestConfig::default(),
            epsilon: Epsilon::DEFAULT,
        }
    }
}

/// Knobs for [`score_all`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ScoringOptions<'a> {
    /// Scores categorical items with this mechanism instead of their own tag.
    /// Quadratic items are unaffected, and a quadratic override is ignored.
    pub mechanism: Option<Mechanism>,
    /// Benchmark for augmented scoring; trained per item when absent.
    pub forest: Option<&'a Forest>,
    /// Fail on a missing frequency corpus or benchmark instead of leaving
    /// the score pending.
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub rater: RaterId,
    pub item: ItemId,
    pub kind: ItemKind,
    /// `None` for probabilistic ratings.
    pub question: Option<Question>,
    pub mechanism: Mechanism,
    pub value: f64,
    pub status: ScoreStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UserReputation {
    pub r0: f64,
    pub rp: f64,
    pub rr: f64,
    pub ep: f64,
    pub er: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReputationState {
    pub users: BTreeMap<UserId, UserReputation>,
}

impl ReputationState {
    /// Canonical serialization; equal states give equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("reputation state serializes")
    }
}

fn rating_index(state: &LedgerState, kind: ItemKind) -> RatingIndex {
    let mut index = RatingIndex::default();
    for item in state.items().values().filter(|i| i.kind == kind) {
        for (&q, channel) in &item.channels {
            for (&rater, &label) in &channel.active {
                index
                    .insert(rater, item.id, q, label)
                    .expect("active ratings are unique per rater");
            }
        }
    }
    index
}

/// Rows from the finalized channels of items of `kind` on `question`.
pub fn finalized_corpus(state: &LedgerState, kind: ItemKind, question: Question) -> TrainingSet {
    let header = state.header();
    let mut set = TrainingSet::new(header.descriptor_schema.clone(), header.labels.clone());
    for item in state.items().values().filter(|i| i.kind == kind) {
        let Some(channel) = item.channels.get(&question).filter(|c| c.is_finalized()) else {
            continue;
        };
        for &label in channel.active.values() {
            set.push(TrainingRow {
                item: item.id,
                descriptors: item.descriptors.clone(),
                label,
            })
            .expect("descriptors were validated on append");
        }
    }
    set
}

struct Scorer<'a> {
    state: &'a LedgerState,
    config: &'a ReplayConfig,
    seed: u64,
    options: ScoringOptions<'a>,
    indexes: BTreeMap<ItemKind, RatingIndex>,
    corpora: BTreeMap<(ItemKind, Question), TrainingSet>,
}

impl Scorer<'_> {
    fn mechanism_for(&self, item: &ItemState) -> Mechanism {
        match (item.mechanism, self.options.mechanism) {
            (Mechanism::Quadratic, _) | (_, None) | (_, Some(Mechanism::Quadratic)) => item.mechanism,
            (_, Some(m)) => m,
        }
    }

    fn corpus_missing<T>(&self, item: ItemId, question: Question) -> Result<Option<T>, LedgerError> {
        if self.options.strict {
            Err(MechanismError::InsufficientCorpus { item, question }.into())
        } else {
            Ok(None)
        }
    }

    /// Regularized forest benchmark for `item`, or `None` without training data.
    fn benchmark(&mut self, item: &ItemState, question: Question) -> Result<Option<Regularized>, LedgerError> {
        let labels = &self.state.header().labels;
        let eps = Epsilon::new(self.config.epsilon, labels.len())?;
        let proba = match self.options.forest {
            Some(forest) => forest.predict_proba(&item.descriptors)?,
            None => {
                let corpus = self
                    .corpora
                    .entry((item.kind, question))
                    .or_insert_with(|| finalized_corpus(self.state, item.kind, question));
                if corpus.rows().iter().all(|r| r.item == item.id) {
                    return self.corpus_missing(item.id, question);
                }
                let forest_config = ForestConfig {
                    seed: derive_seed(self.seed, &[TAG_TRAIN, item.id.0, question.0 as u64]),
                    ..self.config.forest.clone()
                };
                let forest = train_excluding(corpus, &forest_config, item.id)?;
                forest.predict_proba(&item.descriptors)?
            }
        };
        Ok(Some(regularize(&proba, eps)))
    }

    fn categorical(&mut self, item: &ItemState, out: &mut Vec<ScoreRecord>) -> Result<(), LedgerError> {
        let mechanism = self.mechanism_for(item);
        let config = self.config;
        let params = &config.score;
        for (&question, channel) in &item.channels {
            let benchmark = if mechanism == Mechanism::Augmented && channel.active.len() >= 2 {
                self.benchmark(item, question)?
            } else {
                None
            };
            for &rater in channel.active.keys() {
                let index = &self.indexes[&item.kind];
                let peers = index.peer_labels(question, item.id, rater);
                let own = channel.active[&rater];
                let mut rng = rating_rng(self.seed, item.id, question, rater);
                let value = if peers.is_empty() {
                    ScoreValue::PENDING
                } else if mechanism == Mechanism::Augmented {
                    match &benchmark {
                        None => ScoreValue::PENDING,
                        Some(q) => match params.peer_mode {
                            PeerMode::Expectation => expected_augmented_score(own, &peers, q, params.alpha),
                            PeerMode::Sampled => {
                                let peer = peers[rng.random_range(0..peers.len())];
                                augmented_score(own, Some(peer), q, params.alpha)
                            }
                        },
                    }
                } else {
                    match score_rating(index, question, item.id, rater, params, &mut rng) {
                        Ok(v) => v,
                        Err(MechanismError::InsufficientCorpus { .. }) if !self.options.strict => ScoreValue::PENDING,
                        Err(e) => return Err(e.into()),
                    }
                };
                let status = if value.is_pending() {
                    ScoreStatus::Pending
                } else if channel.is_finalized() {
                    ScoreStatus::Final
                } else {
                    ScoreStatus::Provisional
                };
                out.push(ScoreRecord {
                    rater,
                    item: item.id,
                    kind: item.kind,
                    question: Some(question),
                    mechanism,
                    value: value.value,
                    status,
                });
            }
        }
        Ok(())
    }

    fn probabilistic(&self, item: &ItemState, out: &mut Vec<ScoreRecord>) -> Result<(), LedgerError> {
        let ratings: Vec<ProbabilisticRating> = item
            .probabilistic
            .iter()
            .map(|(&rater, &p)| ProbabilisticRating { rater, item: item.id, p })
            .collect();
        let outcome = item.success.as_ref().and_then(|s| s.outcome);
        for r in &ratings {
            let (value, status) = match outcome {
                None => (0.0, ScoreStatus::Pending),
                Some(o) => {
                    let input = BenchmarkInput::Community {
                        ratings: &ratings,
                        exclude: r.rater,
                    };
                    let bench = benchmark_prediction(Some(input), Some(CONSTANT_BENCHMARK))?;
                    (quadratic_accuracy(r.p, bench.p, Some(o), item.id)?, ScoreStatus::Final)
                }
            };
            out.push(ScoreRecord {
                rater: r.rater,
                item: item.id,
                kind: item.kind,
                question: None,
                mechanism: Mechanism::Quadratic,
                value,
                status,
            });
        }
        Ok(())
    }
}

/// Current accuracy score of every active rating, ordered by item, question
/// and rater.
pub fn score_all(
    state: &LedgerState,
    config: &ReplayConfig,
    seed: u64,
    options: ScoringOptions<'_>,
) -> Result<Vec<ScoreRecord>, LedgerError> {
    config.score.validate()?;
    config.weights.validate(&state.header().labels)?;
    let indexes = [ItemKind::Project, ItemKind::Report]
        .into_iter()
        .map(|k| (k, rating_index(state, k)))
        .collect();
    let mut scorer = Scorer {
        state,
        config,
        seed,
        options,
        indexes,
        corpora: BTreeMap::new(),
    };
    let mut out = Vec::new();
    for item in state.items().values() {
        if item.mechanism == Mechanism::Quadratic {
            scorer.probabilistic(item, &mut out)?;
        } else {
            scorer.categorical(item, &mut out)?;
        }
    }
    Ok(out)
}

/// Recomputes every user's reputation from the log. Ratings whose corpus is
/// still too small to score count as pending.
pub fn replay(ledger: &Ledger, config: &ReplayConfig, seed: u64) -> Result<ReputationState, LedgerError> {
    let state = ledger.state();
    let scores = score_all(state, config, seed, ScoringOptions::default())?;
    let weights = &config.weights;
    let mut users: BTreeMap<UserId, UserReputation> = state
        .users()
        .iter()
        .map(|(&u, s)| (u, UserReputation { r0: s.r0, ..UserReputation::default() }))
        .collect();
    for item in state.items().values() {
        let total = item.rating_total(weights);
        let rep = users.get_mut(&item.author).expect("authors have joined");
        match item.kind {
            ItemKind::Project => rep.rp += total,
            ItemKind::Report => rep.rr += total,
        }
    }
    let mut by_rater: BTreeMap<(UserId, ItemKind), Vec<(f64, ScoreStatus)>> = BTreeMap::new();
    for s in &scores {
        by_rater.entry((s.rater, s.kind)).or_default().push((s.value, s.status));
    }
    for ((user, kind), list) in by_rater {
        let rep = users.get_mut(&user).expect("raters have joined");
        match kind {
            ItemKind::Project => rep.ep = accuracy_component(list, weights.beta_p),
            ItemKind::Report => rep.er = accuracy_component(list, weights.beta_r),
        }
    }
    for rep in users.values_mut() {
        rep.total = rep.r0 + rep.rp + rep.rr + rep.ep + rep.er;
    }
    Ok(ReputationState { users })
}
