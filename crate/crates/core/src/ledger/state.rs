//! Validated ledger state, updated one event at a time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::event::{EventBody, LedgerEvent};
use super::io::LogHeader;
use super::{item_rating_total, LedgerError, Weights};
use crate::benchmark::DescriptorVector;
use crate::ids::{ItemId, Label, Question, RaterId, UserId};
use crate::scoring::{Mechanism, SuccessEvent};
use crate::tokens::TokenLedger;

pub const DAY: u64 = 86_400;

/// When a question channel stops accepting ratings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinalizationRule {
    /// Finalize as soon as the channel holds this many active ratings.
    pub min_ratings: usize,
    /// Finalize once this many seconds passed since the channel opened...
    pub window_secs: u64,
    /// ...provided it holds at least this many ratings.
    pub window_min_ratings: usize,
}

impl Default for FinalizationRule {
    fn default() -> Self {
        Self {
            min_ratings: 5,
            window_secs: 30 * DAY,
            window_min_ratings: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Project,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelStatus {
    Pending,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchivedRating {
    pub rater: RaterId,
    pub label: Label,
    /// Seq of the reset that archived it.
    pub reset_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub active: BTreeMap<RaterId, Label>,
    pub archived: Vec<ArchivedRating>,
    pub status: ChannelStatus,
    /// Publication or last reset time.
    pub opened_at: u64,
}

impl Channel {
    fn new(opened_at: u64) -> Self {
        Self {
            active: BTreeMap::new(),
            archived: Vec::new(),
            status: ChannelStatus::Pending,
            opened_at,
        }
    }

    pub fn is_finalized(&self) -> bool {
        self.status == ChannelStatus::Finalized
    }

    fn times_out(&self, rule: &FinalizationRule, now: u64) -> bool {
        self.status == ChannelStatus::Pending
            && self.active.len() >= rule.window_min_ratings
            && now.saturating_sub(self.opened_at) >= rule.window_secs
    }

    pub fn labels(&self) -> Vec<Label> {
        self.active.values().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemState {
    pub id: ItemId,
    pub kind: ItemKind,
    pub author: UserId,
    pub descriptors: DescriptorVector,
    pub mechanism: Mechanism,
    pub published_at: u64,
    /// The reviewed project, for reports.
    pub project: Option<ItemId>,
    /// Categorical channels; empty for quadratic items.
    pub channels: BTreeMap<Question, Channel>,
    pub success: Option<SuccessEvent>,
    pub probabilistic: BTreeMap<RaterId, f64>,
}

impl ItemState {
    /// Every categorical channel is finalized (and there is at least one).
    pub fn is_finalized(&self) -> bool {
        !self.channels.is_empty() && self.channels.values().all(Channel::is_finalized)
    }

    /// Weighted label count summed over the finalized channels.
    pub fn rating_total(&self, weights: &Weights) -> f64 {
        self.channels
            .values()
            .filter(|c| c.is_finalized())
            .fold(0.0, |acc, c| acc + item_rating_total(&c.labels(), weights))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub r0: f64,
    pub joined_at: u64,
}

/// Everything derived from a log prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerState {
    header: LogHeader,
    last_seq: u64,
    last_timestamp: u64,
    users: BTreeMap<UserId, UserState>,
    items: BTreeMap<ItemId, ItemState>,
    tokens: TokenLedger,
}

impl LedgerState {
    pub fn new(header: LogHeader) -> Self {
        let tokens = TokenLedger::new(header.tokens.clone());
        Self {
            header,
            last_seq: 0,
            last_timestamp: 0,
            users: BTreeMap::new(),
            items: BTreeMap::new(),
            tokens,
        }
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn users(&self) -> &BTreeMap<UserId, UserState> {
        &self.users
    }

    pub fn items(&self) -> &BTreeMap<ItemId, ItemState> {
        &self.items
    }

    pub fn item(&self, id: ItemId) -> Option<&ItemState> {
        self.items.get(&id)
    }

    pub fn tokens(&self) -> &TokenLedger {
        &self.tokens
    }

    /// Ratings `viewer` may see: only their own while the channel is open,
    /// all of them once it is finalized.
    pub fn visible_ratings(&self, item: ItemId, question: Question, viewer: UserId) -> Vec<(RaterId, Label)> {
        let Some(channel) = self.items.get(&item).and_then(|i| i.channels.get(&question)) else {
            return Vec::new();
        };
        if channel.is_finalized() {
            channel.active.iter().map(|(&r, &l)| (r, l)).collect()
        } else {
            channel.active.get(&viewer).map(|&l| vec![(viewer, l)]).unwrap_or_default()
        }
    }

    /// Validates `event` against the current state and applies it. On error
    /// the state is unchanged.
    pub fn apply(&mut self, event: &LedgerEvent) -> Result<(), LedgerError> {
        let seq = event.seq;
        if seq != self.last_seq + 1 {
            return Err(LedgerError::SequenceGap {
                expected: self.last_seq + 1,
                found: seq,
            });
        }
        if event.timestamp < self.last_timestamp {
            return Err(LedgerError::invalid(
                seq,
                format!("timestamp {} precedes {}", event.timestamp, self.last_timestamp),
            ));
        }
        let now = event.timestamp;
        self.validate(seq, now, &event.body)?;
        self.apply_token_effects(seq, now, &event.body)?;
        self.expire_channels(now);
        self.apply_body(seq, now, &event.body);
        self.last_seq = seq;
        self.last_timestamp = now;
        Ok(())
    }

    fn user(&self, seq: u64, user: UserId) -> Result<&UserState, LedgerError> {
        self.users
            .get(&user)
            .ok_or_else(|| LedgerError::invalid(seq, format!("user {user} has not joined")))
    }

    fn item_ref(&self, seq: u64, item: ItemId) -> Result<&ItemState, LedgerError> {
        self.items
            .get(&item)
            .ok_or_else(|| LedgerError::invalid(seq, format!("unknown item {item}")))
    }

    fn channel_ref(&self, seq: u64, item: ItemId, question: Question) -> Result<&Channel, LedgerError> {
        self.item_ref(seq, item)?
            .channels
            .get(&question)
            .ok_or(LedgerError::UnknownQuestion { seq, item, question })
    }

    /// Finalization status as of `now`, counting channels whose window has
    /// expired but which have not been swept yet.
    fn finalized_at(&self, channel: &Channel, now: u64) -> bool {
        channel.is_finalized() || channel.times_out(&self.header.finalization, now)
    }

    fn item_finalized_at(&self, item: &ItemState, now: u64) -> bool {
        !item.channels.is_empty() && item.channels.values().all(|c| self.finalized_at(c, now))
    }

    /// Rating total of `item` as it will stand once pending timeouts at `now` are swept.
    fn rating_total_at(&self, item: &ItemState, now: u64) -> f64 {
        item.channels
            .values()
            .filter(|c| self.finalized_at(c, now))
            .fold(0.0, |acc, c| acc + item_rating_total(&c.labels(), &self.header.weights))
    }

    fn new_item_id(&self, seq: u64, item: ItemId) -> Result<(), LedgerError> {
        if self.items.contains_key(&item) {
            return Err(LedgerError::invalid(seq, format!("item {item} already exists")));
        }
        Ok(())
    }

    fn check_descriptors(&self, seq: u64, d: &DescriptorVector) -> Result<(), LedgerError> {
        self.header
            .descriptor_schema
            .check(d)
            .map_err(|e| LedgerError::invalid(seq, e.to_string()))
    }

    fn validate(&self, seq: u64, now: u64, body: &EventBody) -> Result<(), LedgerError> {
        match body {
            EventBody::UserJoined { user, r0 } => {
                if self.users.contains_key(user) {
                    return Err(LedgerError::invalid(seq, format!("user {user} already joined")));
                }
                if !r0.is_finite() {
                    return Err(LedgerError::invalid(seq, "initial reputation must be finite"));
                }
            }
            EventBody::ProjectPublished {
                item,
                author,
                descriptors,
                mechanism,
                success_event,
            } => {
                self.user(seq, *author)?;
                self.new_item_id(seq, *item)?;
                self.check_descriptors(seq, descriptors)?;
                if *mechanism == Mechanism::Quadratic && success_event.is_none() {
                    return Err(LedgerError::invalid(seq, "quadratic items need a success event"));
                }
            }
            EventBody::ReportSubmitted {
                item,
                author,
                project,
                descriptors,
                mechanism,
            } => {
                self.user(seq, *author)?;
                self.new_item_id(seq, *item)?;
                self.check_descriptors(seq, descriptors)?;
                let target = self.item_ref(seq, *project)?;
                if target.kind != ItemKind::Project {
                    return Err(LedgerError::invalid(seq, format!("item {project} is not a project")));
                }
                if target.author == *author {
                    return Err(LedgerError::invalid(seq, "authors cannot review their own project"));
                }
                if *mechanism == Mechanism::Quadratic {
                    return Err(LedgerError::invalid(seq, "reports are rated categorically"));
                }
            }
            EventBody::RatingSubmitted {
                rater,
                item,
                question,
                label,
            } => {
                self.user(seq, *rater)?;
                let target = self.item_ref(seq, *item)?;
                if target.author == *rater {
                    return Err(LedgerError::invalid(seq, "authors cannot rate their own item"));
                }
                if !self.header.labels.contains(*label) {
                    return Err(LedgerError::invalid(seq, format!("label {} is not in the label set", label.0)));
                }
                let channel = self.channel_ref(seq, *item, *question)?;
                if self.finalized_at(channel, now) {
                    return Err(LedgerError::invalid(
                        seq,
                        format!("item {item} question {question} is finalized"),
                    ));
                }
                if channel.active.contains_key(rater) {
                    return Err(LedgerError::invalid(
                        seq,
                        format!("rater {rater} already rated item {item} question {question}"),
                    ));
                }
            }
            EventBody::ProbabilisticRatingSubmitted { rater, item, p } => {
                self.user(seq, *rater)?;
                let target = self.item_ref(seq, *item)?;
                if target.mechanism != Mechanism::Quadratic {
                    return Err(LedgerError::invalid(seq, format!("item {item} takes categorical ratings")));
                }
                if target.author == *rater {
                    return Err(LedgerError::invalid(seq, "authors cannot rate their own item"));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(LedgerError::invalid(seq, format!("probability {p} outside [0, 1]")));
                }
                if target.success.as_ref().is_some_and(|s| s.outcome.is_some()) {
                    return Err(LedgerError::invalid(seq, format!("success event of item {item} is resolved")));
                }
                if target.probabilistic.contains_key(rater) {
                    return Err(LedgerError::invalid(seq, format!("rater {rater} already rated item {item}")));
                }
            }
            EventBody::EventResolved { item, .. } => {
                let target = self.item_ref(seq, *item)?;
                match &target.success {
                    None => return Err(LedgerError::invalid(seq, format!("item {item} has no success event"))),
                    Some(s) if s.outcome.is_some() => {
                        return Err(LedgerError::invalid(seq, format!("success event of item {item} is already resolved")))
                    }
                    Some(_) => {}
                }
            }
            EventBody::QuestionReset {
                item,
                question,
                requester,
            } => {
                let target = self.item_ref(seq, *item)?;
                if target.author != *requester {
                    return Err(LedgerError::UnauthorizedReset {
                        seq,
                        item: *item,
                        requester: *requester,
                    });
                }
                self.channel_ref(seq, *item, *question)?;
            }
            EventBody::ScoringFinalized { item, question } => {
                let channel = self.channel_ref(seq, *item, *question)?;
                if self.finalized_at(channel, now) {
                    return Err(LedgerError::invalid(
                        seq,
                        format!("item {item} question {question} is already finalized"),
                    ));
                }
            }
            EventBody::BidPlaced { buyer, item, .. } => {
                let target = self.item_ref(seq, *item)?;
                if target.kind != ItemKind::Project || target.author != *buyer {
                    return Err(LedgerError::invalid(seq, format!("only the author of project {item} can bid for reviews")));
                }
            }
            EventBody::BidCancelled { .. } | EventBody::BountyPosted { .. } => {}
            EventBody::ReviewFulfilled { bid, reviewer, report } => {
                let target = self.item_ref(seq, *report)?;
                if target.kind != ItemKind::Report || target.author != *reviewer {
                    return Err(LedgerError::invalid(seq, format!("item {report} is not a report by {reviewer}")));
                }
                let bid_item = self.tokens.bid(*bid).map(|b| b.item);
                if bid_item.is_some() && bid_item != target.project {
                    return Err(LedgerError::invalid(seq, format!("report {report} does not review the bid's project")));
                }
                if !self.item_finalized_at(target, now) {
                    return Err(LedgerError::invalid(seq, format!("report {report} is not finalized")));
                }
            }
            EventBody::BountyClaimed { claimant, item, .. } => {
                let target = self.item_ref(seq, *item)?;
                if target.author != *claimant {
                    return Err(LedgerError::invalid(seq, format!("item {item} is not authored by {claimant}")));
                }
                if !self.item_finalized_at(target, now) {
                    return Err(LedgerError::invalid(seq, format!("item {item} is not finalized")));
                }
            }
            EventBody::IdeaAdopted { item, .. } => {
                self.item_ref(seq, *item)?;
            }
        }
        Ok(())
    }

    /// Token-side effects. Token operations validate before they mutate, and
    /// nothing else has been changed when this runs, so a failure leaves the
    /// state untouched.
    fn apply_token_effects(&mut self, seq: u64, now: u64, body: &EventBody) -> Result<(), LedgerError> {
        let wrap = |source| LedgerError::Token { seq, source };
        match body {
            EventBody::UserJoined { user, .. } => self.tokens.mint_on_join(*user).map_err(wrap)?,
            EventBody::BidPlaced {
                bid,
                buyer,
                item,
                amount,
                slots,
            } => {
                self.tokens
                    .place_review_bid(*bid, *buyer, *item, *amount, *slots)
                    .map_err(wrap)?;
            }
            EventBody::BidCancelled { bid, buyer } => {
                self.tokens.cancel_bid(*bid, *buyer).map_err(wrap)?;
            }
            EventBody::ReviewFulfilled { bid, reviewer, report } => {
                let total = self.rating_total_at(&self.items[report], now);
                self.tokens.fulfill_review(*bid, *reviewer, total).map_err(wrap)?;
            }
            EventBody::BountyPosted {
                bounty,
                sponsor,
                amount,
                question,
            } => {
                self.tokens
                    .post_bounty(*bounty, *sponsor, question.clone(), *amount)
                    .map_err(wrap)?;
            }
            EventBody::BountyClaimed { bounty, claimant, item } => {
                let total = self.rating_total_at(&self.items[item], now);
                self.tokens.claim_bounty(*bounty, *claimant, total).map_err(wrap)?;
            }
            EventBody::IdeaAdopted { adopter, item, price } => {
                let author = self.items[item].author;
                self.tokens.adopt_idea(*adopter, author, *item, *price).map_err(wrap)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Finalizes every channel whose window has run out by `now`.
    fn expire_channels(&mut self, now: u64) {
        let rule = self.header.finalization.clone();
        for item in self.items.values_mut() {
            for channel in item.channels.values_mut() {
                if channel.times_out(&rule, now) {
                    channel.status = ChannelStatus::Finalized;
                }
            }
        }
    }

    fn apply_body(&mut self, seq: u64, now: u64, body: &EventBody) {
        match body {
            EventBody::UserJoined { user, r0 } => {
                self.users.insert(*user, UserState { r0: *r0, joined_at: now });
            }
            EventBody::ProjectPublished {
                item,
                author,
                descriptors,
                mechanism,
                success_event,
            } => {
                let channels = if *mechanism == Mechanism::Quadratic {
                    BTreeMap::new()
                } else {
                    [Question::CONTRIBUTION, Question::DESIGN]
                        .into_iter()
                        .map(|q| (q, Channel::new(now)))
                        .collect()
                };
                self.items.insert(
                    *item,
                    ItemState {
                        id: *item,
                        kind: ItemKind::Project,
                        author: *author,
                        descriptors: descriptors.clone(),
                        mechanism: *mechanism,
                        published_at: now,
                        project: None,
                        channels,
                        success: success_event.as_ref().map(|d| SuccessEvent::new(*item, d.clone())),
                        probabilistic: BTreeMap::new(),
                    },
                );
            }
            EventBody::ReportSubmitted {
                item,
                author,
                project,
                descriptors,
                mechanism,
            } => {
                self.items.insert(
                    *item,
                    ItemState {
                        id: *item,
                        kind: ItemKind::Report,
                        author: *author,
                        descriptors: descriptors.clone(),
                        mechanism: *mechanism,
                        published_at: now,
                        project: Some(*project),
                        channels: BTreeMap::from([(Question::CONTRIBUTION, Channel::new(now))]),
                        success: None,
                        probabilistic: BTreeMap::new(),
                    },
                );
            }
            EventBody::RatingSubmitted {
                rater,
                item,
                question,
                label,
            } => {
                let min = self.header.finalization.min_ratings;
                let channel = self.channel_mut(*item, *question);
                channel.active.insert(*rater, *label);
                if channel.active.len() >= min {
                    channel.status = ChannelStatus::Finalized;
                }
            }
            EventBody::ProbabilisticRatingSubmitted { rater, item, p } => {
                self.items.get_mut(item).expect("validated").probabilistic.insert(*rater, *p);
            }
            EventBody::EventResolved { item, outcome } => {
                let success = self.items.get_mut(item).and_then(|i| i.success.as_mut()).expect("validated");
                success.resolve(*outcome, now).expect("validated");
            }
            EventBody::QuestionReset { item, question, .. } => {
                let channel = self.channel_mut(*item, *question);
                let active = std::mem::take(&mut channel.active);
                channel.archived.extend(active.into_iter().map(|(rater, label)| ArchivedRating {
                    rater,
                    label,
                    reset_seq: seq,
                }));
                channel.status = ChannelStatus::Pending;
                channel.opened_at = now;
            }
            EventBody::ScoringFinalized { item, question } => {
                self.channel_mut(*item, *question).status = ChannelStatus::Finalized;
            }
            _ => {}
        }
    }

    fn channel_mut(&mut self, item: ItemId, question: Question) -> &mut Channel {
        self.items
            .get_mut(&item)
            .and_then(|i| i.channels.get_mut(&question))
            .expect("validated")
    }
}
