//! Robust peer truth serum scoring for categorical ratings.
//!
//! A rater's report on an item is compared against the report of a random
//! peer on the same item. A match pays `1 / F(label)`, where `F` is the share
//! of that label in a sample of ratings drawn from *other* items; a mismatch
//! pays nothing. The constant `1` is subtracted and the result scaled by
//! `alpha`, so the score of a single rating is `alpha * (tau - 1) >= -alpha`.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ItemId, Label, Question, RaterId, RatingEvent};
use crate::rng::{rng_for, TAG_SCORE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("no other rated item is available to estimate label frequencies for item {item} question {question}")]
    InsufficientCorpus { item: ItemId, question: Question },
    #[error("rater {rater} already has an active rating on item {item} question {question}")]
    DuplicateRating {
        rater: RaterId,
        item: ItemId,
        question: Question,
    },
    #[error("item {item} has no ratings on question {question}")]
    NoRatings { item: ItemId, question: Question },
    #[error("rater {rater} has no rating on item {item} question {question}")]
    UnknownRating {
        rater: RaterId,
        item: ItemId,
        question: Question,
    },
    #[error("invalid score parameters: {0}")]
    InvalidParams(String),
}

/// How the peer of a scored rating is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerMode {
    /// One uniformly drawn peer per scored rating.
    Sampled,
    /// Average over every admissible peer; deterministic given the frequency sample.
    #[default]
    Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreParams {
    pub alpha: f64,
    /// Upper bound on the frequency-sample size. The effective size is
    /// `min(n, other rated items + 1)`.
    pub n: usize,
    /// Add one rating of the scored item itself to the frequency sample.
    pub include_peer_in_frequency: bool,
    pub peer_mode: PeerMode,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            n: 10,
            include_peer_in_frequency: false,
            peer_mode: PeerMode::Expectation,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<(), MechanismError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(MechanismError::InvalidParams(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.n < 2 {
            return Err(MechanismError::InvalidParams(format!(
                "frequency sample size must be at least 2, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Share of `label` in a frequency sample, floored at `1 / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub label: Label,
    pub value: f64,
    /// Number of ratings actually drawn.
    pub sample_size: usize,
    /// Effective frequency-sample size; `value >= 1 / n`.
    pub n: usize,
}

impl FrequencyEstimate {
    pub fn from_counts(label: Label, matches: usize, sample_size: usize, n: usize) -> Self {
        debug_assert!(n >= 1 && sample_size >= 1 && matches <= sample_size);
        let raw = matches as f64 / sample_size as f64;
        Self {
            label,
            value: raw.max(1.0 / n as f64),
            sample_size,
            n,
        }
    }

    /// A frequency fixed by the caller, e.g. in worked examples.
    pub fn fixed(label: Label, value: f64) -> Self {
        assert!(value > 0.0 && value <= 1.0, "frequency must lie in (0, 1]");
        let n = (1.0 / value).ceil().max(1.0) as usize;
        Self {
            label,
            value,
            sample_size: n,
            n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStatus {
    /// No peer rating exists yet; the value is exactly zero.
    Pending,
    /// Scored, but the channel is still open and the value may change.
    Provisional,
    /// Scored on a finalized channel.
    Final,
}

/// A score value together with its status.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub value: f64,
    pub status: ScoreStatus,
}

impl ScoreValue {
    pub const PENDING: ScoreValue = ScoreValue {
        value: 0.0,
        status: ScoreStatus::Pending,
    };

    pub fn provisional(value: f64) -> Self {
        Self {
            value,
            status: ScoreStatus::Provisional,
        }
    }

    pub fn is_pending(&self) -> bool {
        self.status == ScoreStatus::Pending
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyScore {
    pub rater: RaterId,
    pub item: ItemId,
    pub question: Question,
    pub value: f64,
    pub status: ScoreStatus,
}

pub fn tau(own: Label, peer: Label, f: &FrequencyEstimate) -> f64 {
    if own == peer {
        1.0 / f.value
    } else {
        0.0
    }
}

pub fn rptsc_score(own: Label, peer: Option<Label>, f: &FrequencyEstimate, alpha: f64) -> ScoreValue {
    match peer {
        None => ScoreValue::PENDING,
        Some(peer) => ScoreValue::provisional(alpha * (tau(own, peer, f) - 1.0)),
    }
}

/// Mean of [`rptsc_score`] over every peer in `peers`; pending when empty.
pub fn expected_peer_score(own: Label, peers: &[Label], f: &FrequencyEstimate, alpha: f64) -> ScoreValue {
    if peers.is_empty() {
        return ScoreValue::PENDING;
    }
    let total: f64 = peers
        .iter()
        .map(|&p| rptsc_score(own, Some(p), f, alpha).value)
        .sum();
    ScoreValue::provisional(total / peers.len() as f64)
}

/// Active ratings grouped by question channel and item, in a canonical order
/// (items ascending, raters ascending) that does not depend on log order.
#[derive(Debug, Clone, Default)]
pub struct RatingIndex {
    channels: BTreeMap<Question, BTreeMap<ItemId, Vec<(RaterId, Label)>>>,
}

impl RatingIndex {
    pub fn new<I>(events: I) -> Result<Self, MechanismError>
    where
        I: IntoIterator<Item = RatingEvent>,
    {
        let mut index = RatingIndex::default();
        for ev in events {
            index.insert(ev.rater, ev.item, ev.question, ev.label)?;
        }
        Ok(index)
    }

    pub fn insert(
        &mut self,
        rater: RaterId,
        item: ItemId,
        question: Question,
        label: Label,
    ) -> Result<(), MechanismError> {
        let ratings = self
            .channels
            .entry(question)
            .or_default()
            .entry(item)
            .or_default();
        match ratings.binary_search_by_key(&rater, |r| r.0) {
            Ok(_) => Err(MechanismError::DuplicateRating {
                rater,
                item,
                question,
            }),
            Err(pos) => {
                ratings.insert(pos, (rater, label));
                Ok(())
            }
        }
    }

    pub fn ratings(&self, question: Question, item: ItemId) -> &[(RaterId, Label)] {
        self.channels
            .get(&question)
            .and_then(|c| c.get(&item))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn items(&self, question: Question) -> impl Iterator<Item = ItemId> + '_ {
        self.channels
            .get(&question)
            .into_iter()
            .flat_map(|c| c.keys().copied())
    }

    pub fn questions(&self) -> impl Iterator<Item = Question> + '_ {
        self.channels.keys().copied()
    }

    pub fn label_of(&self, question: Question, item: ItemId, rater: RaterId) -> Option<Label> {
        let ratings = self.ratings(question, item);
        ratings
            .binary_search_by_key(&rater, |r| r.0)
            .ok()
            .map(|i| ratings[i].1)
    }

    /// Labels on `item` from raters other than `rater`.
    pub fn peer_labels(&self, question: Question, item: ItemId, rater: RaterId) -> Vec<Label> {
        self.ratings(question, item)
            .iter()
            .filter(|(r, _)| *r != rater)
            .map(|&(_, l)| l)
            .collect()
    }
}

/// Draws a frequency sample for `label` on behalf of `rater` scoring `item`.
///
/// `min(n, eligible + 1) - 1` distinct other items are chosen uniformly, where
/// an item is eligible when it carries at least one rating not authored by
/// `rater`; one such rating is drawn from each. With
/// `include_peer_in_frequency` one rating of `item` itself (again excluding
/// `rater`) joins the sample.
pub fn sample_frequency<R: Rng + ?Sized>(
    index: &RatingIndex,
    question: Question,
    item: ItemId,
    rater: RaterId,
    label: Label,
    params: &ScoreParams,
    rng: &mut R,
) -> Result<FrequencyEstimate, MechanismError> {
    let eligible: Vec<ItemId> = index
        .items(question)
        .filter(|&other| other != item)
        .filter(|&other| index.ratings(question, other).iter().any(|(r, _)| *r != rater))
        .collect();
    if eligible.is_empty() {
        return Err(MechanismError::InsufficientCorpus { item, question });
    }
    let n = params.n.min(eligible.len() + 1);
    let mut drawn = Vec::with_capacity(n);
    for pick in sample_indices(rng, eligible.len(), n - 1).into_vec() {
        drawn.push(draw_rating_excluding(index, question, eligible[pick], rater, rng));
    }
    if params.include_peer_in_frequency {
        let own_item: Vec<Label> = index.peer_labels(question, item, rater);
        if !own_item.is_empty() {
            drawn.push(own_item[rng.random_range(0..own_item.len())]);
        }
    }
    let matches = drawn.iter().filter(|&&l| l == label).count();
    Ok(FrequencyEstimate::from_counts(label, matches, drawn.len(), n))
}

fn draw_rating_excluding<R: Rng + ?Sized>(
    index: &RatingIndex,
    question: Question,
    item: ItemId,
    rater: RaterId,
    rng: &mut R,
) -> Label {
    let candidates: Vec<Label> = index.peer_labels(question, item, rater);
    candidates[rng.random_range(0..candidates.len())]
}

/// Uniform draw among the other raters' labels on `item`.
pub fn select_peer<R: Rng + ?Sized>(
    index: &RatingIndex,
    question: Question,
    item: ItemId,
    rater: RaterId,
    rng: &mut R,
) -> Option<Label> {
    let peers = index.peer_labels(question, item, rater);
    if peers.is_empty() {
        None
    } else {
        Some(peers[rng.random_range(0..peers.len())])
    }
}

/// Scores one existing rating.
pub fn score_rating<R: Rng + ?Sized>(
    index: &RatingIndex,
    question: Question,
    item: ItemId,
    rater: RaterId,
    params: &ScoreParams,
    rng: &mut R,
) -> Result<ScoreValue, MechanismError> {
    let own = index
        .label_of(question, item, rater)
        .ok_or(MechanismError::UnknownRating {
            rater,
            item,
            question,
        })?;
    let peers = index.peer_labels(question, item, rater);
    if peers.is_empty() {
        return Ok(ScoreValue::PENDING);
    }
    let f = sample_frequency(index, question, item, rater, own, params, rng)?;
    Ok(match params.peer_mode {
        PeerMode::Expectation => expected_peer_score(own, &peers, &f, params.alpha),
        PeerMode::Sampled => {
            let peer = peers[rng.random_range(0..peers.len())];
            rptsc_score(own, Some(peer), &f, params.alpha)
        }
    })
}

/// Scores every rating on `item`. Each rating gets its own random stream
/// derived from `(seed, item, question, rater)`, so the result depends only on
/// the set of active ratings, never on the order in which they were logged.
pub fn score_item_ratings(
    index: &RatingIndex,
    question: Question,
    item: ItemId,
    params: &ScoreParams,
    seed: u64,
) -> Result<BTreeMap<RaterId, AccuracyScore>, MechanismError> {
    params.validate()?;
    let ratings = index.ratings(question, item);
    if ratings.is_empty() {
        return Err(MechanismError::NoRatings { item, question });
    }
    let mut out = BTreeMap::new();
    for &(rater, _) in ratings {
        let mut rng = rating_rng(seed, item, question, rater);
        let s = score_rating(index, question, item, rater, params, &mut rng)?;
        out.insert(
            rater,
            AccuracyScore {
                rater,
                item,
                question,
                value: s.value,
                status: s.status,
            },
        );
    }
    Ok(out)
}

pub(crate) fn rating_rng(seed: u64, item: ItemId, question: Question, rater: RaterId) -> crate::rng::DetRng {
    rng_for(seed, &[TAG_SCORE, item.0, question.0 as u64, rater.0])
}
