use super::*;
use crate::benchmark::{DescriptorSchema, DescriptorVector};
use crate::mechanism::ScoreStatus;
use crate::scoring::Mechanism;

const U: Label = Label(0);
const S: Label = Label(1);
const E: Label = Label(2);
const C: Question = Question::CONTRIBUTION;
const D: Question = Question::DESIGN;

fn join(l: &mut Ledger, user: u64, r0: f64) {
    l.push(0, EventBody::UserJoined { user: UserId(user), r0 }).unwrap();
}

fn publish(l: &mut Ledger, item: u64, author: u64, ts: u64) {
    l.push(
        ts,
        EventBody::ProjectPublished {
            item: ItemId(item),
            author: UserId(author),
            descriptors: DescriptorVector::default(),
            mechanism: Mechanism::Original,
            success_event: None,
        },
    )
    .unwrap();
}

fn rate(l: &mut Ledger, rater: u64, item: u64, q: Question, label: Label, ts: u64) -> Result<(), LedgerError> {
    l.push(
        ts,
        EventBody::RatingSubmitted {
            rater: UserId(rater),
            item: ItemId(item),
            question: q,
            label,
        },
    )
}

fn reset(l: &mut Ledger, item: u64, q: Question, requester: u64, ts: u64) -> Result<(), LedgerError> {
    l.push(
        ts,
        EventBody::QuestionReset {
            item: ItemId(item),
            question: q,
            requester: UserId(requester),
        },
    )
}

/// Users 1..=8, projects 100..103 authored by users 1..=3 and 8.
fn base() -> Ledger {
    let mut l = Ledger::new(LogHeader::default());
    for u in 1..=8 {
        join(&mut l, u, 1.0);
    }
    publish(&mut l, 100, 1, 0);
    publish(&mut l, 101, 2, 0);
    publish(&mut l, 102, 3, 0);
    publish(&mut l, 103, 8, 0);
    l
}

#[test]
fn rating_totals() {
    let w = Weights::default();
    assert_eq!(item_rating_total(&[E, E, S], &w), 5.0);
    assert_eq!(item_rating_total(&[], &w), 0.0);
    assert_eq!(item_rating_total(&[U, U], &w), -2.0);
}

#[test]
fn accuracy_components() {
    let f = ScoreStatus::Final;
    assert_eq!(accuracy_component([(1.0, f), (-1.0, f)], 1.0), 0.0);
    assert_eq!(accuracy_component([(0.0, ScoreStatus::Pending)], 5.0), 0.0);
    // An empty sum prints as "0", not "-0".
    assert!(accuracy_component([], 1.0).is_sign_positive());
    assert!(item_rating_total(&[], &Weights::default()).is_sign_positive());
    assert_eq!(accuracy_component([(2.0, f)], 0.5), 1.0);
    assert_eq!(accuracy_component([(2.0, ScoreStatus::Provisional)], 1.0), 0.0);
}

#[test]
fn append_checks_sequence_and_payload() {
    let mut l = base();
    let before = l.len();
    rate(&mut l, 4, 100, C, E, 10).unwrap();
    assert_eq!(l.len(), before + 1);

    let gap = LedgerEvent::new(l.next_seq() + 1, 10, EventBody::UserJoined { user: UserId(50), r0: 0.0 });
    assert!(matches!(l.append(gap), Err(LedgerError::SequenceGap { .. })));
    assert!(matches!(rate(&mut l, 4, 100, C, S, 11), Err(LedgerError::InvalidPayload { .. })), "duplicate rating");
    assert!(matches!(rate(&mut l, 1, 100, C, S, 11), Err(LedgerError::InvalidPayload { .. })), "self rating");
    assert!(matches!(rate(&mut l, 99, 100, C, S, 11), Err(LedgerError::InvalidPayload { .. })), "unknown rater");
    assert!(matches!(rate(&mut l, 5, 100, C, Label(3), 11), Err(LedgerError::InvalidPayload { .. })), "bad label");
    assert!(matches!(rate(&mut l, 5, 100, Question(7), S, 11), Err(LedgerError::UnknownQuestion { .. })));
    assert!(matches!(rate(&mut l, 5, 100, C, S, 5), Err(LedgerError::InvalidPayload { .. })), "clock went back");
    assert_eq!(l.len(), before + 1, "rejected events leave no trace");
}

#[test]
fn only_authors_reset() {
    let mut l = base();
    assert_eq!(
        reset(&mut l, 100, D, 2, 1),
        Err(LedgerError::UnauthorizedReset {
            seq: l.next_seq(),
            item: ItemId(100),
            requester: UserId(2)
        })
    );
    assert!(matches!(reset(&mut l, 100, Question(9), 1, 1), Err(LedgerError::UnknownQuestion { .. })));
}

#[test]
fn channels_finalize_by_count_and_by_window() {
    let mut l = base();
    for r in 4..=8 {
        rate(&mut l, r, 100, C, S, 10).unwrap();
    }
    assert!(l.state().item(ItemId(100)).unwrap().channels[&C].is_finalized());
    assert!(rate(&mut l, 2, 100, C, S, 10).is_err());

    rate(&mut l, 4, 101, C, S, 10).unwrap();
    rate(&mut l, 5, 101, C, S, 10).unwrap();
    rate(&mut l, 4, 102, C, S, 10).unwrap();
    // The window closes only channels with at least two ratings.
    l.push(10, EventBody::UserJoined { user: UserId(60), r0: 0.0 }).unwrap();
    l.push(30 * DAY, EventBody::UserJoined { user: UserId(61), r0: 0.0 }).unwrap();
    let state = l.state();
    assert!(state.item(ItemId(101)).unwrap().channels[&C].is_finalized());
    assert!(!state.item(ItemId(102)).unwrap().channels[&C].is_finalized());
    assert!(rate(&mut l, 6, 101, C, S, 30 * DAY).is_err());
}

#[test]
fn late_rating_after_window_is_rejected_without_sweep() {
    let mut l = base();
    rate(&mut l, 4, 101, C, S, 0).unwrap();
    rate(&mut l, 5, 101, C, S, 0).unwrap();
    assert!(rate(&mut l, 6, 101, C, S, 31 * DAY).is_err());
}

#[test]
fn explicit_finalization() {
    let mut l = base();
    rate(&mut l, 4, 100, D, E, 1).unwrap();
    l.push(2, EventBody::ScoringFinalized { item: ItemId(100), question: D }).unwrap();
    assert!(l.push(3, EventBody::ScoringFinalized { item: ItemId(100), question: D }).is_err());
    assert!(rate(&mut l, 5, 100, D, E, 3).is_err());
}

#[test]
fn visibility_follows_finalization() {
    let mut l = base();
    rate(&mut l, 4, 100, C, E, 1).unwrap();
    rate(&mut l, 5, 100, C, S, 1).unwrap();
    let st = l.state();
    assert_eq!(st.visible_ratings(ItemId(100), C, UserId(4)), vec![(UserId(4), E)]);
    assert_eq!(st.visible_ratings(ItemId(100), C, UserId(6)), vec![]);
    l.push(2, EventBody::ScoringFinalized { item: ItemId(100), question: C }).unwrap();
    assert_eq!(
        l.state().visible_ratings(ItemId(100), C, UserId(6)),
        vec![(UserId(4), E), (UserId(5), S)]
    );
}

#[test]
fn empty_and_single_join_replays() {
    let cfg = ReplayConfig::default();
    let empty = replay(&Ledger::new(LogHeader::default()), &cfg, 1).unwrap();
    assert!(empty.users.is_empty());
    let mut l = Ledger::new(LogHeader::default());
    join(&mut l, 1, 10.0);
    let rep = replay(&l, &cfg, 1).unwrap();
    assert_eq!(rep.users[&UserId(1)].total, 10.0);
    assert_eq!(rep.users[&UserId(1)], UserReputation { r0: 10.0, total: 10.0, ..Default::default() });
}

/// Contribution ratings on 100..=103; `swap` exchanges two ratings of different items.
fn corpus_log(swap: bool) -> Ledger {
    let mut l = base();
    let mut ratings = vec![
        (4, 100, E),
        (5, 100, E),
        (6, 100, S),
        (4, 101, S),
        (5, 101, S),
        (6, 101, U),
        (7, 102, E),
        (4, 102, E),
        (5, 102, S),
        (6, 103, U),
        (7, 103, U),
    ];
    if swap {
        ratings.swap(2, 5);
    }
    for (r, i, label) in ratings {
        rate(&mut l, r, i, C, label, 1).unwrap();
    }
    l
}

#[test]
fn replay_ignores_order_of_ratings_on_different_items() {
    let cfg = ReplayConfig::default();
    let a = replay(&corpus_log(false), &cfg, 42).unwrap();
    let b = replay(&corpus_log(true), &cfg, 42).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(a.to_bytes(), replay(&corpus_log(false), &cfg, 42).unwrap().to_bytes());
}

#[test]
fn reputation_decomposes() {
    let mut l = corpus_log(false);
    for item in [100, 101, 102, 103] {
        l.push(2, EventBody::ScoringFinalized { item: ItemId(item), question: C }).unwrap();
    }
    let cfg = ReplayConfig::default();
    let rep = replay(&l, &cfg, 7).unwrap();
    for r in rep.users.values() {
        assert_eq!(r.total, r.r0 + r.rp + r.rr + r.ep + r.er);
    }
    // Project 100 got [e, e, s] on its finalized contribution channel.
    assert_eq!(rep.users[&UserId(1)].rp, 5.0);
    assert_eq!(rep.users[&UserId(8)].rp, -2.0);
    // Every finalized score feeds the rater's project accuracy component.
    let scores = score_all(l.state(), &cfg, 7, ScoringOptions::default()).unwrap();
    let rater4: f64 = scores.iter().filter(|s| s.rater == UserId(4)).map(|s| s.value).sum();
    assert!(scores.iter().all(|s| s.status == ScoreStatus::Final));
    assert_eq!(rep.users[&UserId(4)].ep, rater4);
}

#[test]
fn single_item_scores_stay_pending() {
    let mut l = base();
    rate(&mut l, 4, 100, C, E, 1).unwrap();
    rate(&mut l, 5, 100, C, E, 1).unwrap();
    let scores = score_all(l.state(), &ReplayConfig::default(), 0, ScoringOptions::default()).unwrap();
    assert!(scores.iter().all(|s| s.status == ScoreStatus::Pending && s.value == 0.0));
    let strict = ScoringOptions { strict: true, ..Default::default() };
    assert!(matches!(
        score_all(l.state(), &ReplayConfig::default(), 0, strict),
        Err(LedgerError::Mechanism(crate::mechanism::MechanismError::InsufficientCorpus { .. }))
    ));
}

#[test]
fn reset_touches_only_its_channel() {
    let mut l = base();
    for r in [4, 5, 6] {
        rate(&mut l, r, 100, C, E, 1).unwrap();
        rate(&mut l, r, 100, D, S, 1).unwrap();
        rate(&mut l, r, 101, C, S, 1).unwrap();
        rate(&mut l, r, 101, D, E, 1).unwrap();
    }
    let cfg = ReplayConfig::default();
    let before = score_all(l.state(), &cfg, 3, ScoringOptions::default()).unwrap();
    reset(&mut l, 100, D, 1, 2).unwrap();
    let after = score_all(l.state(), &cfg, 3, ScoringOptions::default()).unwrap();
    let on = |v: &[ScoreRecord], item, q| -> Vec<ScoreRecord> {
        v.iter().filter(|s| s.item == ItemId(item) && s.question == Some(q)).copied().collect()
    };
    assert_eq!(on(&before, 100, C), on(&after, 100, C));
    assert!(on(&after, 100, D).is_empty());
    let channel = &l.state().item(ItemId(100)).unwrap().channels[&D];
    assert_eq!(channel.archived.len(), 3);
    assert_eq!(channel.status, ChannelStatus::Pending);
    // Archived raters may rate again.
    rate(&mut l, 4, 100, D, U, 3).unwrap();
}

#[test]
fn reset_of_empty_channel_changes_nothing() {
    let mut l = base();
    let before = l.state().item(ItemId(100)).unwrap().channels[&D].clone();
    reset(&mut l, 100, D, 1, 0).unwrap();
    assert_eq!(l.state().item(ItemId(100)).unwrap().channels[&D], before);
}

#[test]
fn reset_matches_log_without_the_archived_ratings() {
    let mut l = corpus_log(false);
    for r in [4, 5] {
        rate(&mut l, r, 100, D, E, 1).unwrap();
    }
    rate(&mut l, 6, 101, D, E, 1).unwrap();
    rate(&mut l, 7, 101, D, S, 1).unwrap();
    reset(&mut l, 100, C, 1, 2).unwrap();
    let reset_seq = l.next_seq() - 1;
    rate(&mut l, 7, 100, C, S, 3).unwrap();
    rate(&mut l, 8, 100, C, S, 3).unwrap();
    for item in [100, 101, 102] {
        l.push(4, EventBody::ScoringFinalized { item: ItemId(item), question: C }).unwrap();
    }

    let mut counterfactual = Ledger::new(l.header().clone());
    for ev in l.events() {
        let archived = matches!(ev.body, EventBody::RatingSubmitted { item: ItemId(100), question: C, .. } if ev.seq < reset_seq);
        if !archived {
            counterfactual.push(ev.timestamp, ev.body.clone()).unwrap();
        }
    }
    let cfg = ReplayConfig::default();
    assert_eq!(
        replay(&l, &cfg, 11).unwrap().to_bytes(),
        replay(&counterfactual, &cfg, 11).unwrap().to_bytes()
    );
}

#[test]
fn prefixes_replay_to_historical_states() {
    let l = corpus_log(false);
    let cfg = ReplayConfig::default();
    let mut growing = Ledger::new(l.header().clone());
    for (n, ev) in l.events().iter().enumerate() {
        growing.append(ev.clone()).unwrap();
        let prefix = l.prefix(n + 1).unwrap();
        assert_eq!(
            replay(&prefix, &cfg, 5).unwrap().to_bytes(),
            replay(&growing, &cfg, 5).unwrap().to_bytes()
        );
    }
}

#[test]
fn quadratic_items_score_after_resolution() {
    let mut l = base();
    l.push(
        0,
        EventBody::ProjectPublished {
            item: ItemId(200),
            author: UserId(1),
            descriptors: DescriptorVector::default(),
            mechanism: Mechanism::Quadratic,
            success_event: Some("cited 10 times within two years".into()),
        },
    )
    .unwrap();
    assert!(rate(&mut l, 4, 200, C, E, 1).is_err(), "no categorical channels");
    for (r, p) in [(4, 0.8), (5, 0.2)] {
        l.push(1, EventBody::ProbabilisticRatingSubmitted { rater: UserId(r), item: ItemId(200), p }).unwrap();
    }
    let cfg = ReplayConfig::default();
    let pending = score_all(l.state(), &cfg, 0, ScoringOptions::default()).unwrap();
    assert!(pending.iter().all(|s| s.status == ScoreStatus::Pending));
    l.push(2, EventBody::EventResolved { item: ItemId(200), outcome: true }).unwrap();
    assert!(l.push(3, EventBody::EventResolved { item: ItemId(200), outcome: false }).is_err());
    let scores = score_all(l.state(), &cfg, 0, ScoringOptions::default()).unwrap();
    // Each rater is benchmarked against the other: S(0.8) - S(0.2) = 0.92 - (-0.28).
    assert!((scores[0].value - 1.2).abs() < 1e-12);
    assert!((scores[1].value + 1.2).abs() < 1e-12);
    let rep = replay(&l, &cfg, 0).unwrap();
    assert!((rep.users[&UserId(4)].ep - 1.2).abs() < 1e-12);
}

#[test]
fn augmented_items_use_a_forest_from_other_items() {
    let header = LogHeader {
        descriptor_schema: DescriptorSchema { numeric: 0, categorical: vec![2] },
        ..LogHeader::default()
    };
    let mut l = Ledger::new(header);
    for u in 1..=10 {
        join(&mut l, u, 0.0);
    }
    for item in 0..6u64 {
        l.push(
            1,
            EventBody::ProjectPublished {
                item: ItemId(item),
                author: UserId(1),
                descriptors: DescriptorVector::new(vec![], vec![(item % 2) as u32]),
                mechanism: Mechanism::Augmented,
                success_event: None,
            },
        )
        .unwrap();
        let label = if item % 2 == 0 { E } else { U };
        for r in 2..=6 {
            rate(&mut l, r, item, C, label, 1).unwrap();
        }
    }
    let cfg = ReplayConfig {
        forest: crate::benchmark::ForestConfig { tree_count: 10, min_leaf_size: 1, ..Default::default() },
        ..ReplayConfig::default()
    };
    let scores = score_all(l.state(), &cfg, 9, ScoringOptions::default()).unwrap();
    let contribution: Vec<_> = scores.iter().filter(|s| s.question == Some(C)).collect();
    assert_eq!(contribution.len(), 30);
    // Descriptor-keyed labels are fully predicted: q = 1 and the match pays 0.
    assert!(contribution.iter().all(|s| s.value.abs() < 1e-12 && s.status == ScoreStatus::Final));
    let original = ScoringOptions { mechanism: Some(Mechanism::Original), ..Default::default() };
    let scores = score_all(l.state(), &cfg, 9, original).unwrap();
    assert!(scores.iter().filter(|s| s.question == Some(C)).all(|s| s.value > 0.0));
}

#[test]
fn token_events_flow_through_the_ledger() {
    let mut l = base();
    // A report by user 4 on project 100, rated e, e by users 5 and 6.
    l.push(1, EventBody::BidPlaced { bid: 1, buyer: UserId(1), item: ItemId(100), amount: 30, slots: 2 }).unwrap();
    assert!(l
        .push(1, EventBody::BidPlaced { bid: 2, buyer: UserId(2), item: ItemId(100), amount: 30, slots: 1 })
        .is_err());
    l.push(
        1,
        EventBody::ReportSubmitted {
            item: ItemId(500),
            author: UserId(4),
            project: ItemId(100),
            descriptors: DescriptorVector::default(),
            mechanism: Mechanism::Original,
        },
    )
    .unwrap();
    let fulfil = EventBody::ReviewFulfilled { bid: 1, reviewer: UserId(4), report: ItemId(500) };
    assert!(l.push(2, fulfil.clone()).is_err(), "report not finalized yet");
    rate(&mut l, 5, 500, C, E, 2).unwrap();
    rate(&mut l, 6, 500, C, E, 2).unwrap();
    l.push(2, EventBody::ScoringFinalized { item: ItemId(500), question: C }).unwrap();
    l.push(3, fulfil).unwrap();
    let tokens = l.state().tokens();
    assert_eq!(tokens.account(UserId(4)).unwrap().available, 130);
    assert_eq!(tokens.account(UserId(1)).unwrap().escrowed, 30);
    tokens.check_invariants().unwrap();
    let rep = replay(&l, &ReplayConfig::default(), 0).unwrap();
    assert_eq!(rep.users[&UserId(4)].rr, 4.0);
}

#[test]
fn log_files_round_trip() {
    let l = corpus_log(false);
    let mut buf = Vec::new();
    write_log(&l, &mut buf).unwrap();
    let back = read_log(buf.as_slice()).unwrap();
    assert_eq!(back.events(), l.events());
    let mut again = Vec::new();
    write_log(&back, &mut again).unwrap();
    assert_eq!(buf, again);

    assert!(read_log("".as_bytes()).unwrap().is_empty());
    let headerless = r#"{"seq":1,"timestamp":0,"kind":"UserJoined","user":1,"r0":10}"#;
    assert_eq!(read_log(headerless.as_bytes()).unwrap().len(), 1);
}

#[test]
fn corrupted_lines_are_located() {
    let l = corpus_log(false);
    let mut buf = Vec::new();
    write_log(&l, &mut buf).unwrap();
    let mut lines: Vec<String> = String::from_utf8(buf).unwrap().lines().map(String::from).collect();
    lines[6] = lines[6].replace("\"kind\"", "\"kimd\"");
    let err = read_log(lines.join("\n").as_bytes()).unwrap_err();
    assert!(matches!(err, LedgerError::Format { line: 7, .. }), "{err}");
    assert!(err.to_string().contains("seq 6"), "{err}");

    lines[6] = r#"{"seq":9,"timestamp":0,"kind":"UserJoined","user":70,"r0":0}"#.into();
    let err = read_log(lines.join("\n").as_bytes()).unwrap_err();
    assert!(matches!(err, LedgerError::AtLine { line: 7, .. }), "{err}");
    assert_eq!(err.seq(), Some(9));
}
