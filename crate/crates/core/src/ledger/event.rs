//! Ledger event records. Field names and enum spellings are part of the log
//! file format and must stay stable.

use serde::{Deserialize, Serialize};

use crate::benchmark::DescriptorVector;
use crate::ids::{ItemId, Label, Question, RaterId, UserId};
use crate::scoring::Mechanism;
use crate::tokens::Tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub seq: u64,
    /// Seconds on the platform clock; nondecreasing along the log.
    pub timestamp: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl LedgerEvent {
    pub fn new(seq: u64, timestamp: u64, body: EventBody) -> Self {
        Self { seq, timestamp, body }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventBody {
    UserJoined {
        user: UserId,
        /// Initial reputation.
        r0: f64,
    },
    ProjectPublished {
        item: ItemId,
        author: UserId,
        #[serde(default)]
        descriptors: DescriptorVector,
        #[serde(default)]
        mechanism: Mechanism,
        /// Description of the success event; required for quadratic items.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        success_event: Option<String>,
    },
    ReportSubmitted {
        item: ItemId,
        author: UserId,
        project: ItemId,
        #[serde(default)]
        descriptors: DescriptorVector,
        #[serde(default)]
        mechanism: Mechanism,
    },
    RatingSubmitted {
        rater: RaterId,
        item: ItemId,
        question: Question,
        label: Label,
    },
    ProbabilisticRatingSubmitted {
        rater: RaterId,
        item: ItemId,
        p: f64,
    },
    EventResolved {
        item: ItemId,
        outcome: bool,
    },
    QuestionReset {
        item: ItemId,
        question: Question,
        requester: UserId,
    },
    ScoringFinalized {
        item: ItemId,
        question: Question,
    },
    BidPlaced {
        bid: u64,
        buyer: UserId,
        item: ItemId,
        amount: Tokens,
        slots: u32,
    },
    BidCancelled {
        bid: u64,
        buyer: UserId,
    },
    ReviewFulfilled {
        bid: u64,
        reviewer: UserId,
        report: ItemId,
    },
    BountyPosted {
        bounty: u64,
        sponsor: UserId,
        amount: Tokens,
        question: String,
    },
    BountyClaimed {
        bounty: u64,
        claimant: UserId,
        item: ItemId,
    },
    IdeaAdopted {
        adopter: UserId,
        item: ItemId,
        price: Tokens,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::UserJoined { .. } => "UserJoined",
            EventBody::ProjectPublished { .. } => "ProjectPublished",
            EventBody::ReportSubmitted { .. } => "ReportSubmitted",
            EventBody::RatingSubmitted { .. } => "RatingSubmitted",
            EventBody::ProbabilisticRatingSubmitted { .. } => "ProbabilisticRatingSubmitted",
            EventBody::EventResolved { .. } => "EventResolved",
            EventBody::QuestionReset { .. } => "QuestionReset",
            EventBody::ScoringFinalized { .. } => "ScoringFinalized",
            EventBody::BidPlaced { .. } => "BidPlaced",
            EventBody::BidCancelled { .. } => "BidCancelled",
            EventBody::ReviewFulfilled { .. } => "ReviewFulfilled",
            EventBody::BountyPosted { .. } => "BountyPosted",
            EventBody::BountyClaimed { .. } => "BountyClaimed",
            EventBody::IdeaAdopted { .. } => "IdeaAdopted",
        }
    }
}
