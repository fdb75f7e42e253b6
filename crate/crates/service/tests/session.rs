use std::sync::Arc;

use redist_core::game::{run_session, BlockLabel, EndowmentProfile, Order, Player, Vote, GROWTH};
use redist_core::mechanism::{Baseline, MechanismSpec};
use redist_core::players::{RationalPlayer, VirtualPlayer, VirtualPlayerModel, VoteModel};
use redist_service::clock::MockClock;
use redist_service::events::{Event, EventEnvelope};
use redist_service::session::{
    check_weights, replay, Action, Fill, ScreenView, SeatKind, SessionConfig, SessionService,
    ACTION_DEADLINE_MS, VOTE_DEADLINE_MS,
};
use redist_service::ServiceError;

fn model() -> Arc<VirtualPlayerModel> {
    Arc::new(VirtualPlayerModel::init(3))
}

fn service() -> (MockClock, SessionService) {
    let clock = MockClock::new();
    let svc = SessionService::new(Arc::new(clock.clone()), Some(model()));
    (clock, svc)
}

fn config(humans: Vec<usize>, seed: u64) -> SessionConfig {
    SessionConfig {
        profile: EndowmentProfile::head_tail(4).unwrap(),
        mech_a: MechanismSpec::manifold(0.5, 1.0),
        mech_b: Baseline::LiberalEgalitarian.into(),
        order: Some(Order::AFirst),
        humans,
        referee: None,
        fill: Fill::Virtual,
        seed,
    }
}

fn names(events: &[EventEnvelope]) -> Vec<&'static str> {
    events.iter().map(|e| e.event.name()).collect()
}

/// Drives a session with humans at `seats`: each contributes `coins` every
/// round and votes A; the referee, if any, splits the pool evenly.
fn play_out(svc: &SessionService, id: &str, seats: &[usize], coins: f64) {
    loop {
        let snap = svc.snapshot(id).unwrap();
        match snap.screen {
            ScreenView::Contribute { .. } => {
                for &seat in seats {
                    svc.submit(id, Action::Contribute { seat, coins }).unwrap();
                }
            }
            ScreenView::Allocate { .. } => {
                svc.submit(id, Action::Allocate { weights: vec![0.25; 4] }).unwrap();
            }
            ScreenView::Vote { .. } => {
                for &seat in seats {
                    svc.submit(id, Action::Vote { seat, choice: Vote::A }).unwrap();
                }
            }
            ScreenView::Done => return,
        }
    }
}

#[test]
fn all_virtual_session_matches_run_session() {
    let (_, svc) = service();
    for seed in [1, 2, 3] {
        let cfg = config(vec![], seed);
        let id = svc.create(cfg.clone()).unwrap();
        let live = redist_core::game::read_jsonl(svc.export(&id).unwrap().as_bytes()).unwrap();
        let mut players: Vec<Box<dyn Player>> =
            (0..4).map(|_| Box::new(VirtualPlayer::new(model())) as Box<dyn Player>).collect();
        let direct = run_session(
            &cfg.profile,
            &mut players,
            &cfg.mech_a,
            &cfg.mech_b,
            Order::AFirst,
            &VoteModel::default(),
            seed,
        )
        .unwrap();
        assert_eq!(live, vec![direct]);
    }
}

#[test]
fn all_rational_session_matches_run_session() {
    let (_, svc) = service();
    let mut cfg = config(vec![], 9);
    cfg.fill = Fill::Rational;
    cfg.order = Some(Order::BFirst);
    let id = svc.create(cfg.clone()).unwrap();
    let record = svc.with_session(&id, |s| s.record()).unwrap().unwrap();
    let mut players: Vec<Box<dyn Player>> =
        (0..4).map(|_| Box::new(RationalPlayer::default()) as Box<dyn Player>).collect();
    let direct = run_session(
        &cfg.profile,
        &mut players,
        &cfg.mech_a,
        &cfg.mech_b,
        Order::BFirst,
        &VoteModel::default(),
        9,
    )
    .unwrap();
    assert_eq!(record, direct);
}

#[test]
fn order_is_drawn_from_the_seed_when_absent() {
    let (_, svc) = service();
    let mut orders = std::collections::HashSet::new();
    for seed in 0..16 {
        let mut cfg = config(vec![], seed);
        cfg.order = None;
        let id = svc.create(cfg).unwrap();
        let first = svc.events(&id, 0).unwrap();
        let Event::SessionStart { order, .. } = first[0].event else {
            panic!("first event is {}", first[0].event.name());
        };
        orders.insert(format!("{order:?}"));
        let again = {
            let mut cfg = config(vec![], seed);
            cfg.order = None;
            svc.create(cfg).unwrap()
        };
        assert_eq!(svc.export(&id).unwrap(), svc.export(&again).unwrap());
    }
    assert_eq!(orders.len(), 2);
}

#[test]
fn action_is_accepted_just_before_the_deadline_and_late_at_it() {
    let (clock, svc) = service();
    let id = svc.create(config(vec![0], 5)).unwrap();
    let ScreenView::Contribute { deadline_ms, .. } = svc.snapshot(&id).unwrap().screen else {
        panic!("expected contribution screen");
    };
    assert_eq!(deadline_ms, ACTION_DEADLINE_MS);
    clock.set(deadline_ms - 1);
    svc.submit(&id, Action::Contribute { seat: 0, coins: 3.0 }).unwrap();

    let ScreenView::Contribute { deadline_ms: next, round, .. } = svc.snapshot(&id).unwrap().screen
    else {
        panic!("expected contribution screen");
    };
    assert_eq!(round, 2);
    assert_eq!(next, deadline_ms - 1 + ACTION_DEADLINE_MS);
    clock.set(next);
    let err = svc.submit(&id, Action::Contribute { seat: 0, coins: 3.0 }).unwrap_err();
    assert!(matches!(err, ServiceError::Late { deadline_ms } if deadline_ms == next));
    let snap = svc.snapshot(&id).unwrap();
    assert_eq!(snap.strikes[0], 1);
    assert_eq!(snap.seats[0], SeatKind::Human);
    let ScreenView::Contribute { round, deadline_ms, .. } = snap.screen else {
        panic!("expected contribution screen");
    };
    assert_eq!(round, 3);
    assert_eq!(deadline_ms, next + ACTION_DEADLINE_MS);
}

#[test]
fn second_timeout_hands_the_seat_to_a_random_bot() {
    let (clock, svc) = service();
    let id = svc.create(config(vec![0], 6)).unwrap();
    clock.advance(ACTION_DEADLINE_MS);
    let snap = svc.snapshot(&id).unwrap();
    assert_eq!((snap.strikes[0], snap.seats[0]), (1, SeatKind::Human));
    clock.advance(ACTION_DEADLINE_MS);
    let snap = svc.snapshot(&id).unwrap();
    assert_eq!((snap.strikes[0], snap.seats[0]), (2, SeatKind::RandomBot));
    // with no humans left the session runs to the end
    assert_eq!(snap.screen, ScreenView::Done);
    let events = svc.events(&id, 0).unwrap();
    let timeouts: Vec<_> = events
        .iter()
        .filter_map(|e| match &e.event {
            Event::Timeout { seat, strikes, replaced, .. } => Some((*seat, *strikes, *replaced)),
            _ => None,
        })
        .collect();
    assert_eq!(timeouts, vec![(Some(0), 1, false), (Some(0), 2, true)]);
    let record = svc.with_session(&id, |s| s.record()).unwrap().unwrap();
    record.validate().unwrap();
    assert_eq!(record.num_rounds(), 34);
}

#[test]
fn missed_vote_is_cast_at_random_with_a_strike() {
    let (clock, svc) = service();
    let id = svc.create(config(vec![1], 8)).unwrap();
    for _ in 0..30 {
        svc.submit(&id, Action::Contribute { seat: 1, coins: 2.0 }).unwrap();
    }
    let ScreenView::Vote { deadline_ms, voted } = svc.snapshot(&id).unwrap().screen else {
        panic!("expected vote screen");
    };
    assert_eq!(voted, [true, false, true, true]);
    assert_eq!(deadline_ms, clock_now(&svc) + VOTE_DEADLINE_MS);
    clock.set(deadline_ms);
    let snap = svc.snapshot(&id).unwrap();
    assert_eq!(snap.strikes[1], 1);
    assert!(matches!(snap.screen, ScreenView::Contribute { block: 3, .. }));
}

fn clock_now(svc: &SessionService) -> u64 {
    svc.now()
}

#[test]
fn human_ballots_are_recorded_as_cast() {
    let (_, svc) = service();
    for seed in 0..4 {
        let mut cfg = config(vec![0, 2], seed);
        cfg.order = None;
        let id = svc.create(cfg).unwrap();
        play_out(&svc, &id, &[0, 2], 4.0);
        let record = svc.with_session(&id, |s| s.record()).unwrap().unwrap();
        assert_eq!((record.votes[0], record.votes[2]), (Vote::A, Vote::A));
        for b in &record.blocks {
            for r in &b.rounds {
                assert_eq!((r.c[0], r.c[2]), (4.0, 4.0));
            }
        }
    }
}

#[test]
fn illegal_contributions_are_rejected_with_a_reason() {
    let (_, svc) = service();
    let id = svc.create(config(vec![0, 1], 2)).unwrap();
    for (seat, coins) in [(0, 11.0), (1, 5.0), (0, 2.5), (0, -1.0), (0, f64::NAN), (2, 1.0), (7, 1.0)] {
        let err = svc.submit(&id, Action::Contribute { seat, coins }).unwrap_err();
        assert!(matches!(err, ServiceError::Rejected(_)), "{seat} {coins}: {err}");
    }
    svc.submit(&id, Action::Contribute { seat: 0, coins: 10.0 }).unwrap();
    let err = svc.submit(&id, Action::Contribute { seat: 0, coins: 1.0 }).unwrap_err();
    assert!(err.to_string().contains("already"));
    let err = svc.submit(&id, Action::Vote { seat: 0, choice: Vote::B }).unwrap_err();
    assert!(matches!(err, ServiceError::Rejected(_)));
    let err = svc.submit(&id, Action::Allocate { weights: vec![0.25; 4] }).unwrap_err();
    assert!(matches!(err, ServiceError::Rejected(_)));
}

#[test]
fn invalid_configs_are_refused() {
    let (_, svc) = service();
    let cases = [
        config(vec![4], 0),
        config(vec![1, 1], 0),
        config(vec![0, 1, 2, 3, 0], 0),
        SessionConfig { referee: Some(BlockLabel::Tutorial), ..config(vec![], 0) },
        SessionConfig { mech_a: MechanismSpec::Referee, ..config(vec![], 0) },
        SessionConfig {
            mech_a: MechanismSpec::Designer { weights_ref: "missing.json".into(), policy: None },
            ..config(vec![], 0)
        },
    ];
    for cfg in cases {
        assert!(matches!(svc.create(cfg), Err(ServiceError::InvalidConfig(_))));
    }
    let bare = SessionService::new(Arc::new(MockClock::new()), None);
    assert!(matches!(bare.create(config(vec![], 0)), Err(ServiceError::InvalidConfig(_))));
    let random = SessionConfig { fill: Fill::Random, ..config(vec![], 0) };
    let id = bare.create(random).unwrap();
    assert_eq!(bare.snapshot(&id).unwrap().seats, [SeatKind::RandomBot; 4]);
    assert!(matches!(svc.snapshot("nope"), Err(ServiceError::UnknownSession(_))));
}

#[test]
fn referee_allocations_conserve_the_pool() {
    let (_, svc) = service();
    let mut cfg = config(vec![], 4);
    cfg.referee = Some(BlockLabel::A);
    let id = svc.create(cfg).unwrap();
    let snap = svc.snapshot(&id).unwrap();
    assert_eq!(snap.referee, Some(BlockLabel::A));
    assert!(matches!(snap.screen, ScreenView::Allocate { block: 1, round: 1, .. }));

    for bad in [vec![0.5, 0.2, 0.2, 0.2], vec![0.25; 3], vec![1.2, -0.2, 0.0, 0.0], vec![f64::NAN; 4]] {
        let err = svc.submit(&id, Action::Allocate { weights: bad }).unwrap_err();
        assert!(matches!(err, ServiceError::Rejected(_)));
    }
    let sliders = [
        vec![0.4, 0.2, 0.2, 0.2],
        vec![0.4009, 0.2, 0.2, 0.2],
        vec![0.0, 0.0, 0.0, 0.9991],
        vec![0.1, 0.3, 0.3, 0.3],
    ];
    for round in 0..10 {
        let w = sliders[round % sliders.len()].clone();
        let before = svc.events(&id, 0).unwrap().len();
        svc.submit(&id, Action::Allocate { weights: w.clone() }).unwrap();
        let events = svc.events(&id, before).unwrap();
        let Event::RoundResult { contributions, earnings, original_earnings, .. } = &events[0].event
        else {
            panic!("expected a round result, got {}", events[0].event.name());
        };
        let pool = GROWTH * contributions.iter().sum::<f64>();
        let total: f64 = w.iter().sum();
        assert!((earnings.iter().sum::<f64>() - pool).abs() < 1e-9);
        for i in 0..4 {
            assert!((earnings[i] - w[i] / total * pool).abs() < 1e-9);
            assert!((original_earnings[i] - pool / 4.0).abs() < 1e-12);
        }
        if round == 0 {
            assert!((earnings[0] - 0.4 * pool).abs() < 1e-9);
        }
    }
    // block B and beyond run without the referee
    let snap = svc.snapshot(&id).unwrap();
    assert_eq!(snap.screen, ScreenView::Done);
    let events = svc.events(&id, 0).unwrap();
    assert_eq!(names(&events).iter().filter(|n| **n == "referee_open").count(), 10);
    let record = svc.with_session(&id, |s| s.record()).unwrap().unwrap();
    assert_eq!(record.mechanisms.a, MechanismSpec::Referee);
}

#[test]
fn referee_timeout_splits_equally() {
    let (clock, svc) = service();
    let mut cfg = config(vec![], 4);
    cfg.referee = Some(BlockLabel::B);
    cfg.order = Some(Order::BFirst);
    let id = svc.create(cfg).unwrap();
    let before = svc.events(&id, 0).unwrap().len();
    clock.advance(ACTION_DEADLINE_MS);
    let events = svc.events(&id, before).unwrap();
    assert_eq!(events[0].event.name(), "timeout");
    let Event::RoundResult { earnings, original_earnings, .. } = &events[1].event else {
        panic!("expected a round result");
    };
    assert_eq!(earnings, original_earnings);
}

#[test]
fn weights_are_normalised_within_tolerance() {
    let w = check_weights(&[0.4005, 0.2, 0.2, 0.2]).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(check_weights(&[0.4011, 0.2, 0.2, 0.2]).is_err());
    assert!(check_weights(&[0.3989, 0.2, 0.2, 0.2]).is_err());
}

#[test]
fn events_follow_the_protocol_order() {
    let (_, svc) = service();
    let mut cfg = config(vec![3], 12);
    cfg.referee = Some(BlockLabel::B);
    let id = svc.create(cfg).unwrap();
    play_out(&svc, &id, &[3], 1.0);
    let events = svc.events(&id, 0).unwrap();
    for (k, e) in events.iter().enumerate() {
        assert_eq!(e.seq, k as u64);
    }
    assert!(events.windows(2).all(|w| w[0].at_ms <= w[1].at_ms));
    let mut expected = vec!["session_start"];
    for block in 0..4 {
        if block == 3 {
            expected.extend(["vote_open", "vote_result"]);
        }
        let rounds = [10, 10, 10, 4][block];
        let refereed = block == 2 || (block == 3 && matches!(events.iter().find_map(|e| match e.event {
            Event::VoteResult { bonus, .. } => Some(bonus),
            _ => None,
        }), Some(BlockLabel::B)));
        for _ in 0..rounds {
            expected.push("round_open");
            if refereed {
                expected.push("referee_open");
            }
            expected.push("round_result");
        }
    }
    expected.push("session_end");
    assert_eq!(names(&events), expected);
}

#[test]
fn pending_contributions_are_never_disclosed() {
    let (_, svc) = service();
    let id = svc.create(config(vec![0, 1], 13)).unwrap();
    let opened = svc.events(&id, 0).unwrap().len();
    svc.submit(&id, Action::Contribute { seat: 0, coins: 7.0 }).unwrap();
    // a submission alone emits nothing; the snapshot shows only who is in
    assert_eq!(svc.events(&id, 0).unwrap().len(), opened);
    let snap = svc.snapshot(&id).unwrap();
    let ScreenView::Contribute { submitted, .. } = snap.screen else {
        panic!("expected contribution screen");
    };
    assert_eq!(submitted, [true, false, true, true]);
    let json = serde_json::to_value(&snap).unwrap();
    let text = json.to_string();
    assert!(!text.contains("contribution") && !text.contains("pending"), "{text}");
    for e in svc.events(&id, 0).unwrap() {
        assert!(!matches!(e.event, Event::RoundResult { .. }));
    }
    svc.submit(&id, Action::Contribute { seat: 1, coins: 0.0 }).unwrap();
    let events = svc.events(&id, opened).unwrap();
    let Event::RoundResult { contributions, .. } = &events[0].event else {
        panic!("expected a round result");
    };
    assert_eq!((contributions[0], contributions[1]), (7.0, 0.0));
}

#[test]
fn results_carry_one_decimal_displays_and_full_precision() {
    let (_, svc) = service();
    let id = svc.create(config(vec![], 21)).unwrap();
    let record = svc.with_session(&id, |s| s.record()).unwrap().unwrap();
    let results: Vec<_> = svc
        .events(&id, 0)
        .unwrap()
        .into_iter()
        .filter(|e| matches!(e.event, Event::RoundResult { .. }))
        .collect();
    assert_eq!(results.len(), 34);
    let rounds: Vec<_> = record.blocks.iter().flat_map(|b| &b.rounds).collect();
    for (e, r) in results.iter().zip(rounds) {
        let Event::RoundResult { earnings, earnings_display, totals, totals_display, mechanism, block, original_earnings, .. } = &e.event else {
            unreachable!()
        };
        assert_eq!(earnings, &r.y);
        assert_eq!(totals, &r.ret);
        for i in 0..4 {
            for (full, shown) in [(earnings[i], &earnings_display[i]), (totals[i], &totals_display[i])] {
                let (_, frac) = shown.split_once('.').expect("one decimal");
                assert_eq!(frac.len(), 1);
                assert!((shown.parse::<f64>().unwrap() - full).abs() <= 0.05 + 1e-12);
            }
        }
        if *mechanism == BlockLabel::Tutorial {
            assert_eq!(*block, 0);
            for i in 0..4 {
                assert!((earnings[i] - original_earnings[i]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn replaying_the_event_log_rebuilds_the_export() {
    let (clock, svc) = service();
    let mut cfg = config(vec![2], 17);
    cfg.referee = Some(BlockLabel::A);
    cfg.order = Some(Order::BFirst);
    let id = svc.create(cfg).unwrap();
    clock.advance(1_000);
    play_out(&svc, &id, &[2], 3.0);
    let export = svc.export(&id).unwrap();
    let exported = redist_core::game::read_jsonl(export.as_bytes()).unwrap();
    // through the wire format and back
    let wire: Vec<String> = svc
        .events(&id, 0)
        .unwrap()
        .iter()
        .map(|e| serde_json::to_string(e).unwrap())
        .collect();
    let parsed: Vec<EventEnvelope> = wire.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(replay(&parsed).unwrap(), exported[0]);
    assert!(replay(&parsed[..5]).is_err());
}

#[test]
fn export_waits_for_the_end() {
    let (_, svc) = service();
    let id = svc.create(config(vec![0], 1)).unwrap();
    assert!(matches!(svc.export(&id), Err(ServiceError::NotFinished)));
}

#[test]
fn sessions_are_independent() {
    let (_, svc) = service();
    let a = svc.create(config(vec![0], 30)).unwrap();
    let b = svc.create(config(vec![0], 30)).unwrap();
    assert_ne!(a, b);
    svc.submit(&a, Action::Contribute { seat: 0, coins: 1.0 }).unwrap();
    let ScreenView::Contribute { round, .. } = svc.snapshot(&b).unwrap().screen else {
        panic!()
    };
    assert_eq!(round, 1);
}
