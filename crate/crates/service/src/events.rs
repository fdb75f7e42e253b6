//! Session events, in the order a participant's screens see them.

use serde::{Deserialize, Serialize};

use redist_core::game::{BlockLabel, Coins, EndowmentProfile, MechanismPair, Order, Vote, PLAYERS};

use crate::session::SeatKind;

/// Earnings as shown on screen: one decimal place.
pub fn display(x: f64) -> String {
    format!("{x:.1}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub seq: u64,
    pub at_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SessionStart {
        session: String,
        profile: EndowmentProfile,
        mechanisms: MechanismPair,
        order: Order,
        seed: u64,
        seats: [SeatKind; PLAYERS],
        referee: Option<BlockLabel>,
    },
    RoundOpen {
        block: usize,
        round: usize,
        mechanism: BlockLabel,
        endowments: [u32; PLAYERS],
        deadline_ms: u64,
        timer_seconds: u64,
    },
    /// Contribution summary for the human referee.
    RefereeOpen {
        block: usize,
        round: usize,
        contributions: Coins,
        pool: f64,
        deadline_ms: u64,
        timer_seconds: u64,
    },
    RoundResult {
        block: usize,
        round: usize,
        t: u32,
        mechanism: BlockLabel,
        contributions: Coins,
        /// Equal split of the pool, before any redistribution.
        original_earnings: Coins,
        original_earnings_display: [String; PLAYERS],
        earnings: Coins,
        earnings_display: [String; PLAYERS],
        original_totals: Coins,
        totals: Coins,
        totals_display: [String; PLAYERS],
    },
    VoteOpen {
        deadline_ms: u64,
        timer_seconds: u64,
    },
    VoteResult {
        votes: [Vote; PLAYERS],
        fraction_a: f64,
        bonus: BlockLabel,
    },
    /// A deadline passed. `seat` is absent for the referee.
    Timeout {
        seat: Option<usize>,
        screen: String,
        strikes: u32,
        replaced: bool,
    },
    SessionEnd {
        earnings: Coins,
        earnings_display: [String; PLAYERS],
    },
    Error {
        message: String,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::SessionStart { .. } => "session_start",
            Event::RoundOpen { .. } => "round_open",
            Event::RefereeOpen { .. } => "referee_open",
            Event::RoundResult { .. } => "round_result",
            Event::VoteOpen { .. } => "vote_open",
            Event::VoteResult { .. } => "vote_result",
            Event::Timeout { .. } => "timeout",
            Event::SessionEnd { .. } => "session_end",
            Event::Error { .. } => "error",
        }
    }
}
