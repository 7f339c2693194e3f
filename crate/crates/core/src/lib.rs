//! Incentive-compatible peer-review scoring.
//!
//! * [`mechanism`] scores categorical ratings with the robust peer truth serum.
//! * [`benchmark`] trains probability-machine random forests that estimate the
//!   rating distribution from public item descriptors.
//! * [`scoring`] holds the forest-benchmarked score and the quadratic rule.
//! * [`ledger`] is the append-only event log and reputation replay.
//! * [`tokens`] is the token market with escrow.
//! * [`sim`] generates synthetic worlds and runs incentive experiments.

pub mod benchmark;
pub mod ids;
pub mod ledger;
pub mod mechanism;
pub mod rng;
pub mod scoring;
pub mod sim;
pub mod stats;
pub mod tokens;

pub use ids::{ItemId, Label, LabelSet, Question, RaterId, RatingEvent, UserId};
