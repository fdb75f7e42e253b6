//! Live sessions: the 34-round protocol driven by submitted actions and
//! deadlines, with automated players in every seat no human holds.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use redist_core::game::{
    BlockLabel, BlockRecord, Coins, EndowmentProfile, EpisodeRecord, MechanismPair, Order, Player,
    RoundRecord, SessionMachine, SessionPlan, Stage, Vote, GROWTH, PLAYERS,
};
use redist_core::mechanism::MechanismSpec;
use redist_core::players::{RandomBot, RationalPlayer, VirtualPlayer, VirtualPlayerModel, VoteModel};
use redist_core::rng::{stream, SimRng};

use crate::clock::Clock;
use crate::events::{display, Event, EventEnvelope};
use crate::{Result, ServiceError};

pub const ACTION_DEADLINE_MS: u64 = 120_000;
pub const VOTE_DEADLINE_MS: u64 = 240_000;
/// Largest accepted `|sum(weights) - 1|` for a referee allocation.
pub const WEIGHT_TOLERANCE: f64 = 1e-3;
/// Timeouts after which a human seat is handed to a random bot.
pub const MAX_STRIKES: u32 = 2;

const BOT_STREAM: u64 = 3;
const ORDER_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeatKind {
    Human,
    Virtual,
    Rational,
    RandomBot,
}

/// What fills the seats no human takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    #[default]
    Virtual,
    Rational,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub profile: EndowmentProfile,
    pub mech_a: MechanismSpec,
    pub mech_b: MechanismSpec,
    /// Drawn from the seed when absent.
    #[serde(default)]
    pub order: Option<Order>,
    /// Seats held by humans.
    #[serde(default)]
    pub humans: Vec<usize>,
    /// Candidate whose block a human referee allocates live.
    #[serde(default)]
    pub referee: Option<BlockLabel>,
    #[serde(default)]
    pub fill: Fill,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Contribute { seat: usize, coins: f64 },
    Allocate { weights: Vec<f64> },
    Vote { seat: usize, choice: Vote },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "screen", rename_all = "snake_case")]
pub enum ScreenView {
    Contribute {
        block: usize,
        round: usize,
        mechanism: BlockLabel,
        deadline_ms: u64,
        submitted: [bool; PLAYERS],
    },
    Allocate {
        block: usize,
        round: usize,
        deadline_ms: u64,
    },
    Vote {
        deadline_ms: u64,
        voted: [bool; PLAYERS],
    },
    Done,
}

/// Public view of a session. Never carries pending choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub profile: EndowmentProfile,
    pub seats: [SeatKind; PLAYERS],
    pub strikes: [u32; PLAYERS],
    pub referee: Option<BlockLabel>,
    pub screen: ScreenView,
    pub events: usize,
}

enum Screen {
    Contribute {
        block: usize,
        round: usize,
        deadline: u64,
        pending: [Option<f64>; PLAYERS],
    },
    Allocate {
        block: usize,
        round: usize,
        deadline: u64,
        contributions: Coins,
    },
    Vote {
        deadline: u64,
        ballots: [Option<Vote>; PLAYERS],
    },
    Done,
}

impl Screen {
    fn deadline(&self) -> Option<u64> {
        match self {
            Screen::Contribute { deadline, .. }
            | Screen::Allocate { deadline, .. }
            | Screen::Vote { deadline, .. } => Some(*deadline),
            Screen::Done => None,
        }
    }
}

struct Seat {
    kind: SeatKind,
    player: Option<Box<dyn Player>>,
    strikes: u32,
}

pub struct LiveSession {
    id: String,
    machine: SessionMachine,
    seats: [Seat; PLAYERS],
    referee: Option<BlockLabel>,
    screen: Screen,
    events: Vec<EventEnvelope>,
    bot_rng: SimRng,
}

fn validate(config: &SessionConfig) -> Result<()> {
    let bad = |m: String| Err(ServiceError::InvalidConfig(m));
    if config.humans.len() > PLAYERS {
        return bad(format!("{} human seats for {PLAYERS} players", config.humans.len()));
    }
    let mut seen = [false; PLAYERS];
    for &s in &config.humans {
        if s >= PLAYERS {
            return bad(format!("seat {s} does not exist"));
        }
        if std::mem::replace(&mut seen[s], true) {
            return bad(format!("seat {s} listed twice"));
        }
    }
    if config.referee == Some(BlockLabel::Tutorial) {
        return bad("the tutorial block cannot be refereed".into());
    }
    for m in [&config.mech_a, &config.mech_b] {
        if matches!(m, MechanismSpec::Referee) {
            return bad("use `referee` to request a live referee".into());
        }
    }
    Ok(())
}

impl LiveSession {
    pub fn new(
        id: String,
        mut config: SessionConfig,
        players: Option<&Arc<VirtualPlayerModel>>,
        vote: VoteModel,
        now: u64,
    ) -> Result<Self> {
        validate(&config)?;
        match config.referee {
            Some(BlockLabel::A) => config.mech_a = MechanismSpec::Referee,
            Some(BlockLabel::B) => config.mech_b = MechanismSpec::Referee,
            _ => {}
        }
        let order = config.order.unwrap_or_else(|| {
            if stream(config.seed, &[ORDER_STREAM]).random::<bool>() {
                Order::BFirst
            } else {
                Order::AFirst
            }
        });
        let seats: [Seat; PLAYERS] = std::array::from_fn(|s| {
            if config.humans.contains(&s) {
                return Seat {
                    kind: SeatKind::Human,
                    player: None,
                    strikes: 0,
                };
            }
            let (kind, player): (SeatKind, Box<dyn Player>) = match (config.fill, players) {
                (Fill::Virtual, Some(m)) => (SeatKind::Virtual, Box::new(VirtualPlayer::new(m.clone()))),
                (Fill::Rational, _) => (SeatKind::Rational, Box::new(RationalPlayer::default())),
                _ => (SeatKind::RandomBot, Box::new(RandomBot)),
            };
            Seat {
                kind,
                player: Some(player),
                strikes: 0,
            }
        });
        if config.fill == Fill::Virtual && players.is_none() && config.humans.len() < PLAYERS {
            return Err(ServiceError::InvalidConfig(
                "virtual seats requested but no player model is loaded".into(),
            ));
        }
        let plan = SessionPlan {
            profile: config.profile,
            mechanisms: MechanismPair {
                a: config.mech_a,
                b: config.mech_b,
            },
            order,
            seed: config.seed,
        };
        let mut session = Self {
            id,
            machine: SessionMachine::new(plan.clone(), vote),
            seats,
            referee: config.referee,
            screen: Screen::Done,
            events: Vec::new(),
            bot_rng: stream(config.seed, &[BOT_STREAM]),
        };
        session.emit(
            now,
            Event::SessionStart {
                session: session.id.clone(),
                profile: plan.profile,
                mechanisms: plan.mechanisms,
                order,
                seed: plan.seed,
                seats: session.seat_kinds(),
                referee: config.referee,
            },
        );
        session.open_next(now)?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn seat_kinds(&self) -> [SeatKind; PLAYERS] {
        std::array::from_fn(|s| self.seats[s].kind)
    }

    fn emit(&mut self, at_ms: u64, event: Event) {
        let seq = self.events.len() as u64;
        self.events.push(EventEnvelope { seq, at_ms, event });
    }

    pub fn events(&self) -> &[EventEnvelope] {
        &self.events
    }

    pub fn is_done(&self) -> bool {
        matches!(self.screen, Screen::Done)
    }

    pub fn record(&self) -> Result<EpisodeRecord> {
        if !self.is_done() {
            return Err(ServiceError::NotFinished);
        }
        Ok(self.machine.record()?)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let screen = match &self.screen {
            Screen::Contribute {
                block,
                round,
                deadline,
                pending,
            } => ScreenView::Contribute {
                block: *block,
                round: *round,
                mechanism: self.machine.block_label(*block).expect("open block"),
                deadline_ms: *deadline,
                submitted: pending.map(|p| p.is_some()),
            },
            Screen::Allocate {
                block,
                round,
                deadline,
                ..
            } => ScreenView::Allocate {
                block: *block,
                round: *round,
                deadline_ms: *deadline,
            },
            Screen::Vote { deadline, ballots } => ScreenView::Vote {
                deadline_ms: *deadline,
                voted: std::array::from_fn(|s| {
                    self.seats[s].kind != SeatKind::Human || ballots[s].is_some()
                }),
            },
            Screen::Done => ScreenView::Done,
        };
        SessionSnapshot {
            id: self.id.clone(),
            profile: *self.machine.profile(),
            seats: self.seat_kinds(),
            strikes: std::array::from_fn(|s| self.seats[s].strikes),
            referee: self.referee,
            screen,
            events: self.events.len(),
        }
    }

    fn is_human(&self, seat: usize) -> bool {
        self.seats[seat].kind == SeatKind::Human
    }

    fn automated(&mut self, seat: usize) -> Result<f64> {
        let player = self.seats[seat]
            .player
            .as_deref_mut()
            .expect("automated seat has a player");
        Ok(self.machine.automated_contribution(seat, player)?)
    }

    /// Opens whatever the protocol needs next, at time `now`.
    fn open_next(&mut self, now: u64) -> Result<()> {
        match self.machine.stage() {
            Stage::Contribute { block, round } => {
                let mut pending = [None; PLAYERS];
                for (seat, slot) in pending.iter_mut().enumerate() {
                    if !self.is_human(seat) {
                        *slot = Some(self.automated(seat)?);
                    }
                }
                let deadline = now + ACTION_DEADLINE_MS;
                self.emit(
                    now,
                    Event::RoundOpen {
                        block,
                        round,
                        mechanism: self.machine.block_label(block).expect("open block"),
                        endowments: self.machine.profile().endowments(),
                        deadline_ms: deadline,
                        timer_seconds: ACTION_DEADLINE_MS / 1000,
                    },
                );
                self.screen = Screen::Contribute {
                    block,
                    round,
                    deadline,
                    pending,
                };
                if pending.iter().all(Option::is_some) {
                    self.close_contributions(now)?;
                }
            }
            Stage::Vote => {
                let deadline = now + VOTE_DEADLINE_MS;
                self.emit(
                    now,
                    Event::VoteOpen {
                        deadline_ms: deadline,
                        timer_seconds: VOTE_DEADLINE_MS / 1000,
                    },
                );
                self.screen = Screen::Vote {
                    deadline,
                    ballots: [None; PLAYERS],
                };
                if (0..PLAYERS).all(|s| !self.is_human(s)) {
                    self.close_vote(now)?;
                }
            }
            Stage::Done => {
                let blocks = self.machine.blocks();
                let earnings: Coins = std::array::from_fn(|i| {
                    blocks
                        .iter()
                        .flat_map(|b| &b.rounds)
                        .map(|r| r.ret[i])
                        .sum()
                });
                self.emit(
                    now,
                    Event::SessionEnd {
                        earnings,
                        earnings_display: earnings.map(display),
                    },
                );
                self.screen = Screen::Done;
            }
        }
        Ok(())
    }

    fn close_contributions(&mut self, now: u64) -> Result<()> {
        let Screen::Contribute {
            block,
            round,
            pending,
            ..
        } = self.screen
        else {
            unreachable!("contributions closed outside a contribution screen");
        };
        let c: Coins = pending.map(|p| p.expect("all contributions in"));
        if matches!(self.machine.current_mechanism(), Some(MechanismSpec::Referee)) {
            let deadline = now + ACTION_DEADLINE_MS;
            self.emit(
                now,
                Event::RefereeOpen {
                    block,
                    round,
                    contributions: c,
                    pool: GROWTH * c.iter().sum::<f64>(),
                    deadline_ms: deadline,
                    timer_seconds: ACTION_DEADLINE_MS / 1000,
                },
            );
            self.screen = Screen::Allocate {
                block,
                round,
                deadline,
                contributions: c,
            };
            return Ok(());
        }
        self.resolve(now, block, round, c, None)
    }

    fn resolve(
        &mut self,
        now: u64,
        block: usize,
        round: usize,
        c: Coins,
        weights: Option<[f64; PLAYERS]>,
    ) -> Result<()> {
        let mechanism = self.machine.block_label(block).expect("open block");
        let record = {
            let mut players: Vec<Option<&mut dyn Player>> = self
                .seats
                .iter_mut()
                .map(|s| s.player.as_deref_mut().map(|p| p as &mut dyn Player))
                .collect();
            self.machine.resolve_round(c, weights, &mut players)?
        };
        let e = self.machine.profile().coins();
        let equal = GROWTH * c.iter().sum::<f64>() / PLAYERS as f64;
        let original: Coins = std::array::from_fn(|i| equal + e[i] - c[i]);
        self.emit(
            now,
            Event::RoundResult {
                block,
                round,
                t: record.t,
                mechanism,
                contributions: record.c,
                original_earnings: [equal; PLAYERS],
                original_earnings_display: [equal; PLAYERS].map(display),
                earnings: record.y,
                earnings_display: record.y.map(display),
                original_totals: original,
                totals: record.ret,
                totals_display: record.ret.map(display),
            },
        );
        self.open_next(now)
    }

    fn close_vote(&mut self, now: u64) -> Result<()> {
        let Screen::Vote { ballots, .. } = self.screen else {
            unreachable!("vote closed outside the vote screen");
        };
        let outcome = self.machine.cast_votes(ballots)?;
        self.emit(
            now,
            Event::VoteResult {
                votes: outcome.votes,
                fraction_a: outcome.fraction_a,
                bonus: outcome.bonus.label(),
            },
        );
        self.open_next(now)
    }

    fn strike(&mut self, now: u64, seat: usize, screen: &str) {
        let s = &mut self.seats[seat];
        s.strikes += 1;
        let replaced = s.strikes >= MAX_STRIKES;
        if replaced {
            s.kind = SeatKind::RandomBot;
            s.player = Some(Box::new(RandomBot));
        }
        let strikes = s.strikes;
        self.emit(
            now,
            Event::Timeout {
                seat: Some(seat),
                screen: screen.into(),
                strikes,
                replaced,
            },
        );
    }

    /// Handles every deadline that has passed by `now`. Follow-up screens
    /// open at the expired deadline, so results do not depend on when the
    /// clock is polled.
    pub fn tick(&mut self, now: u64) -> Result<()> {
        while let Some(deadline) = self.screen.deadline().filter(|&d| d <= now) {
            match self.screen {
                Screen::Contribute { pending, .. } => {
                    for seat in 0..PLAYERS {
                        if pending[seat].is_some() {
                            continue;
                        }
                        self.strike(deadline, seat, "contribute");
                        let c = match self.seats[seat].player.as_deref_mut() {
                            Some(p) => self.machine.automated_contribution(seat, p)?,
                            None => self.machine.automated_contribution(seat, &mut RandomBot)?,
                        };
                        if let Screen::Contribute { pending, .. } = &mut self.screen {
                            pending[seat] = Some(c);
                        }
                    }
                    self.close_contributions(deadline)?;
                }
                Screen::Allocate {
                    block,
                    round,
                    contributions,
                    ..
                } => {
                    self.emit(
                        deadline,
                        Event::Timeout {
                            seat: None,
                            screen: "allocate".into(),
                            strikes: 0,
                            replaced: false,
                        },
                    );
                    let equal = [1.0 / PLAYERS as f64; PLAYERS];
                    self.resolve(deadline, block, round, contributions, Some(equal))?;
                }
                Screen::Vote { ballots, .. } => {
                    for seat in 0..PLAYERS {
                        if !self.is_human(seat) || ballots[seat].is_some() {
                            continue;
                        }
                        self.strike(deadline, seat, "vote");
                        let choice = if self.bot_rng.random::<bool>() { Vote::A } else { Vote::B };
                        if let Screen::Vote { ballots, .. } = &mut self.screen {
                            ballots[seat] = Some(choice);
                        }
                    }
                    self.close_vote(deadline)?;
                }
                Screen::Done => unreachable!("done has no deadline"),
            }
        }
        Ok(())
    }

    /// Applies one action at time `now`.
    pub fn submit(&mut self, now: u64, action: Action) -> Result<()> {
        if let Some(deadline) = self.screen.deadline().filter(|&d| d <= now) {
            self.tick(now)?;
            return Err(ServiceError::Late {
                deadline_ms: deadline,
            });
        }
        let reject = |m: String| Err(ServiceError::Rejected(m));
        match action {
            Action::Contribute { seat, coins } => {
                let Screen::Contribute { pending, .. } = &self.screen else {
                    return reject("no contribution screen is open".into());
                };
                if seat >= PLAYERS || !self.is_human(seat) {
                    return reject(format!("seat {seat} is not a human seat"));
                }
                if pending[seat].is_some() {
                    return reject(format!("seat {seat} already contributed this round"));
                }
                let e = self.machine.profile().coins()[seat];
                if !coins.is_finite() || coins.fract() != 0.0 || coins < 0.0 || coins > e {
                    return reject(format!(
                        "contribution {coins} is not a whole number of coins between 0 and {e}"
                    ));
                }
                if let Screen::Contribute { pending, .. } = &mut self.screen {
                    pending[seat] = Some(coins);
                    if pending.iter().all(Option::is_some) {
                        self.close_contributions(now)?;
                    }
                }
                Ok(())
            }
            Action::Allocate { weights } => {
                let Screen::Allocate {
                    block,
                    round,
                    contributions,
                    ..
                } = self.screen
                else {
                    return reject("no allocation screen is open".into());
                };
                let w = check_weights(&weights)?;
                self.resolve(now, block, round, contributions, Some(w))
            }
            Action::Vote { seat, choice } => {
                let human: [bool; PLAYERS] = std::array::from_fn(|s| self.is_human(s));
                let Screen::Vote { ballots, .. } = &mut self.screen else {
                    return reject("voting is not open".into());
                };
                if seat >= PLAYERS || !human[seat] {
                    return reject(format!("seat {seat} is not a human seat"));
                }
                if ballots[seat].is_some() {
                    return reject(format!("seat {seat} already voted"));
                }
                ballots[seat] = Some(choice);
                let all_in = (0..PLAYERS).all(|s| !human[s] || ballots[s].is_some());
                if all_in {
                    self.close_vote(now)?;
                }
                Ok(())
            }
        }
    }
}

/// Validates referee slider weights and rescales them to sum to exactly one.
pub fn check_weights(weights: &[f64]) -> Result<[f64; PLAYERS]> {
    let reject = |m: String| Err(ServiceError::Rejected(m));
    if weights.len() != PLAYERS {
        return reject(format!("expected {PLAYERS} weights, got {}", weights.len()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return reject("weights must be finite and non-negative".into());
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return reject(format!("distribution needs to add up to 1 (got {total})"));
    }
    Ok(std::array::from_fn(|i| weights[i] / total))
}

/// Rebuilds the session record from its event log.
pub fn replay(events: &[EventEnvelope]) -> Result<EpisodeRecord> {
    let bad = |m: &str| ServiceError::InvalidConfig(format!("cannot replay: {m}"));
    let mut start = None;
    let mut blocks: Vec<BlockRecord> = Vec::new();
    let mut vote = None;
    for env in events {
        match &env.event {
            Event::SessionStart {
                profile,
                mechanisms,
                seed,
                ..
            } => start = Some((*profile, mechanisms.clone(), *seed)),
            Event::RoundResult {
                block,
                mechanism,
                t,
                contributions,
                earnings,
                totals,
                ..
            } => {
                if *block == blocks.len() {
                    blocks.push(BlockRecord {
                        mech: *mechanism,
                        rounds: Vec::new(),
                    });
                }
                let b = blocks.get_mut(*block).ok_or_else(|| bad("blocks out of order"))?;
                b.rounds.push(RoundRecord {
                    t: *t,
                    c: *contributions,
                    y: *earnings,
                    ret: *totals,
                });
            }
            Event::VoteResult { votes, bonus, .. } => vote = Some((*votes, *bonus)),
            _ => {}
        }
    }
    let (profile, mechanisms, seed) = start.ok_or_else(|| bad("no session_start"))?;
    let (votes, bonus_mech) = vote.ok_or_else(|| bad("no vote_result"))?;
    let record = EpisodeRecord {
        seed,
        profile,
        mechanisms,
        blocks,
        votes,
        bonus_mech,
    };
    record.validate()?;
    Ok(record)
}

/// All live sessions of one server.
pub struct SessionService {
    clock: Arc<dyn Clock>,
    players: Option<Arc<VirtualPlayerModel>>,
    weights_dir: PathBuf,
    vote: VoteModel,
    sessions: Mutex<HashMap<String, Arc<Mutex<LiveSession>>>>,
    next_id: Mutex<u64>,
}

impl SessionService {
    pub fn new(clock: Arc<dyn Clock>, players: Option<Arc<VirtualPlayerModel>>) -> Self {
        Self {
            clock,
            players,
            weights_dir: PathBuf::from("."),
            vote: VoteModel::default(),
            sessions: Mutex::new(HashMap::new()),
            next_id: Mutex::new(1),
        }
    }

    /// Directory designer `weights_ref`s are resolved against.
    pub fn with_weights_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.weights_dir = dir.into();
        self
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn create(&self, mut config: SessionConfig) -> Result<String> {
        for m in [&mut config.mech_a, &mut config.mech_b] {
            m.resolve(&self.weights_dir)
                .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
        }
        let id = {
            let mut next = self.next_id.lock().expect("id lock");
            let id = format!("s{}", *next);
            *next += 1;
            id
        };
        let session = LiveSession::new(
            id.clone(),
            config,
            self.players.as_ref(),
            self.vote,
            self.now(),
        )?;
        self.sessions
            .lock()
            .expect("session table lock")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<LiveSession>>> {
        self.sessions
            .lock()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.into()))
    }

    /// Runs `f` on the session after bringing it up to the current time.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut LiveSession) -> T) -> Result<T> {
        let s = self.get(id)?;
        let mut s = s.lock().expect("session lock");
        s.tick(self.now())?;
        Ok(f(&mut s))
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionSnapshot> {
        self.with_session(id, |s| s.snapshot())
    }

    pub fn submit(&self, id: &str, action: Action) -> Result<SessionSnapshot> {
        let s = self.get(id)?;
        let mut s = s.lock().expect("session lock");
        s.submit(self.now(), action)?;
        Ok(s.snapshot())
    }

    pub fn events(&self, id: &str, from: usize) -> Result<Vec<EventEnvelope>> {
        self.with_session(id, |s| s.events().iter().skip(from).cloned().collect())
    }

    /// The finished session as one JSONL line.
    pub fn export(&self, id: &str) -> Result<String> {
        let record = self.with_session(id, |s| s.record())??;
        let mut out = Vec::new();
        redist_core::game::write_jsonl(&mut out, &[record])?;
        Ok(String::from_utf8(out).expect("json is utf-8"))
    }

    /// Processes expired deadlines in every session.
    pub fn tick_all(&self) -> Result<()> {
        let sessions: Vec<_> = self
            .sessions
            .lock()
            .expect("session table lock")
            .values()
            .cloned()
            .collect();
        let now = self.now();
        for s in sessions {
            s.lock().expect("session lock").tick(now)?;
        }
        Ok(())
    }
}
