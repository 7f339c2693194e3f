//! Synthetic event logs.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::experiment::Reports;
use super::world::World;
use crate::ids::{ItemId, Label, Question, UserId};
use crate::ledger::{EventBody, Ledger, LedgerError, LogHeader, DAY};
use crate::rng::{rng_for, TAG_WORLD};
use crate::scoring::Mechanism;
use crate::benchmark::DescriptorVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzOptions {
    /// Include market events (bids, bounties, adoptions).
    pub tokens: bool,
    /// Share of quadratic projects.
    pub quadratic_share: f64,
    /// Upper bound on proposals, as a multiple of the requested length.
    pub max_attempts_factor: usize,
}

impl Default for FuzzOptions {
    fn default() -> Self {
        Self {
            tokens: true,
            quadratic_share: 0.15,
            max_attempts_factor: 50,
        }
    }
}

/// A valid random log of `events` events. Random proposals are appended
/// when the ledger accepts them, so the log also exercises rejections
/// internally; only accepted events are kept.
pub fn random_ledger(seed: u64, events: usize, opts: FuzzOptions) -> Ledger {
    let mut rng = rng_for(seed, &[TAG_WORLD, events as u64]);
    let mut ledger = Ledger::new(LogHeader::default());
    let mut ts = 0u64;
    let mut next_user = 0u64;
    let mut next_item = 0u64;
    let mut next_id = 0u64;
    let mut users: Vec<UserId> = Vec::new();
    let mut projects: Vec<ItemId> = Vec::new();
    let mut quadratic: Vec<ItemId> = Vec::new();
    let mut reports: Vec<ItemId> = Vec::new();
    let labels = ledger.header().labels.len() as u16;
    let max_attempts = events.saturating_mul(opts.max_attempts_factor).max(100);
    let mut attempts = 0;
    while ledger.len() < events && attempts < max_attempts {
        attempts += 1;
        ts += rng.random_range(0..DAY / 2);
        let pick_user = |rng: &mut crate::rng::DetRng| *users.choose(rng).unwrap_or(&UserId(0));
        let pick = |rng: &mut crate::rng::DetRng, v: &[ItemId]| *v.choose(rng).unwrap_or(&ItemId(u64::MAX));
        let roll = rng.random_range(0..100);
        let body = if users.len() < 3 || roll < 5 {
            next_user += 1;
            EventBody::UserJoined {
                user: UserId(next_user),
                r0: rng.random_range(0..10) as f64,
            }
        } else if roll < 12 {
            next_item += 1;
            let quad = rng.random_bool(opts.quadratic_share);
            EventBody::ProjectPublished {
                item: ItemId(next_item),
                author: pick_user(&mut rng),
                descriptors: DescriptorVector::default(),
                mechanism: if quad { Mechanism::Quadratic } else { Mechanism::Original },
                success_event: quad.then(|| "adopted by another project".to_string()),
            }
        } else if roll < 16 {
            next_item += 1;
            EventBody::ReportSubmitted {
                item: ItemId(next_item),
                author: pick_user(&mut rng),
                project: pick(&mut rng, &projects),
                descriptors: DescriptorVector::default(),
                mechanism: Mechanism::Original,
            }
        } else if roll < 66 {
            let item = if rng.random_bool(0.25) { pick(&mut rng, &reports) } else { pick(&mut rng, &projects) };
            EventBody::RatingSubmitted {
                rater: pick_user(&mut rng),
                item,
                question: Question(rng.random_range(0..2)),
                label: Label(rng.random_range(0..labels)),
            }
        } else if roll < 71 {
            EventBody::ProbabilisticRatingSubmitted {
                rater: pick_user(&mut rng),
                item: pick(&mut rng, &quadratic),
                p: rng.random_range(0..=100) as f64 / 100.0,
            }
        } else if roll < 73 {
            EventBody::EventResolved {
                item: pick(&mut rng, &quadratic),
                outcome: rng.random_bool(0.5),
            }
        } else if roll < 77 {
            let item = if rng.random_bool(0.3) { pick(&mut rng, &reports) } else { pick(&mut rng, &projects) };
            let author = ledger.state().item(item).map(|i| i.author).unwrap_or(UserId(0));
            EventBody::QuestionReset {
                item,
                question: Question(rng.random_range(0..2)),
                requester: if rng.random_bool(0.9) { author } else { pick_user(&mut rng) },
            }
        } else if roll < 82 || !opts.tokens {
            let item = if rng.random_bool(0.3) { pick(&mut rng, &reports) } else { pick(&mut rng, &projects) };
            EventBody::ScoringFinalized {
                item,
                question: Question(rng.random_range(0..2)),
            }
        } else {
            next_id += 1;
            let project = pick(&mut rng, &projects);
            let author = ledger.state().item(project).map(|i| i.author).unwrap_or(UserId(0));
            match rng.random_range(0..6) {
                0 => EventBody::BidPlaced {
                    bid: next_id,
                    buyer: author,
                    item: project,
                    amount: rng.random_range(1..40),
                    slots: rng.random_range(1..4),
                },
                1 => EventBody::BidCancelled {
                    bid: rng.random_range(0..=next_id),
                    buyer: pick_user(&mut rng),
                },
                2 => {
                    let report = pick(&mut rng, &reports);
                    EventBody::ReviewFulfilled {
                        bid: rng.random_range(0..=next_id),
                        reviewer: ledger.state().item(report).map(|i| i.author).unwrap_or(UserId(0)),
                        report,
                    }
                }
                3 => EventBody::BountyPosted {
                    bounty: next_id,
                    sponsor: pick_user(&mut rng),
                    amount: rng.random_range(1..60),
                    question: "open question".into(),
                },
                4 => EventBody::BountyClaimed {
                    bounty: rng.random_range(0..=next_id),
                    claimant: author,
                    item: project,
                },
                _ => EventBody::IdeaAdopted {
                    adopter: pick_user(&mut rng),
                    item: project,
                    price: rng.random_range(0..20),
                },
            }
        };
        let created = match &body {
            EventBody::UserJoined { user, .. } => Some((0, user.0)),
            EventBody::ProjectPublished { item, mechanism, .. } => {
                Some((if *mechanism == Mechanism::Quadratic { 2 } else { 1 }, item.0))
            }
            EventBody::ReportSubmitted { item, .. } => Some((3, item.0)),
            _ => None,
        };
        if ledger.push(ts, body).is_ok() {
            match created {
                Some((0, u)) => users.push(UserId(u)),
                Some((1, i)) => projects.push(ItemId(i)),
                Some((2, i)) => quadratic.push(ItemId(i)),
                Some((3, i)) => reports.push(ItemId(i)),
                _ => {}
            }
        }
    }
    ledger
}

/// A ledger holding a simulated world: one author publishes every item and
/// the reports become contribution ratings. Channels finalize once all
/// ratings of an item are in.
pub fn world_ledger(world: &World, reports: &Reports) -> Result<Ledger, LedgerError> {
    let header = LogHeader {
        labels: world.config.labels.clone(),
        descriptor_schema: world.config.descriptor_schema(),
        weights: crate::ledger::Weights {
            levels: default_levels(world.config.labels.len()),
            ..Default::default()
        },
        ..LogHeader::default()
    };
    let mut ledger = Ledger::new(header);
    let author = UserId(world.config.raters as u64);
    for r in 0..=world.config.raters as u64 {
        ledger.push(0, EventBody::UserJoined { user: UserId(r), r0: 0.0 })?;
    }
    for (item, rs) in world.items.iter().zip(reports) {
        ledger.push(
            0,
            EventBody::ProjectPublished {
                item: item.id,
                author,
                descriptors: item.descriptors.clone(),
                mechanism: Mechanism::Original,
                success_event: None,
            },
        )?;
        for &(rater, label) in rs {
            ledger.push(
                0,
                EventBody::RatingSubmitted {
                    rater,
                    item: item.id,
                    question: Question::CONTRIBUTION,
                    label,
                },
            )?;
        }
        let finalized = ledger
            .state()
            .item(item.id)
            .is_some_and(|i| i.channels[&Question::CONTRIBUTION].is_finalized());
        if !finalized {
            ledger.push(
                0,
                EventBody::ScoringFinalized {
                    item: item.id,
                    question: Question::CONTRIBUTION,
                },
            )?;
        }
    }
    Ok(ledger)
}

/// The referee weights for three labels; evenly spaced from -1 otherwise.
fn default_levels(m: usize) -> Vec<f64> {
    if m == 3 {
        crate::ledger::Weights::default().levels
    } else {
        (0..m).map(|k| k as f64 - 1.0).collect()
    }
}
