//! The investment game: endowments, rounds, blocks, votes and sessions.

mod record;
mod session;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::MechanismSpec;
use crate::rng::SimRng;

pub use record::{read_jsonl, write_jsonl, BlockLabel, BlockRecord, EpisodeRecord, MechanismPair, Vote};
pub use session::{bonus_lottery, conduct_vote, run_session, Order, PlayedBlock, SessionMachine, SessionPlan, Stage, VoteOutcome};

pub const PLAYERS: usize = 4;
pub const GROWTH: f64 = 1.6;
pub const MAX_ENDOWMENT: u32 = 10;
/// Rounds in each of the four blocks of a session.
pub const BLOCK_ROUNDS: [usize; 4] = [10, 10, 10, 4];
pub const SESSION_ROUNDS: usize = 34;

pub type Coins = [f64; PLAYERS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; PLAYERS]", into = "[u32; PLAYERS]")]
pub struct EndowmentProfile {
    endowments: [u32; PLAYERS],
}

impl TryFrom<[u32; PLAYERS]> for EndowmentProfile {
    type Error = Error;

    fn try_from(e: [u32; PLAYERS]) -> Result<Self> {
        EndowmentProfile::new(e)
    }
}

impl From<EndowmentProfile> for [u32; PLAYERS] {
    fn from(p: EndowmentProfile) -> Self {
        p.endowments
    }
}

impl EndowmentProfile {
    pub fn new(endowments: [u32; PLAYERS]) -> Result<Self> {
        if let Some(bad) = endowments.iter().find(|&&e| !(1..=MAX_ENDOWMENT).contains(&e)) {
            return Err(Error::Domain(format!("endowment {bad} outside 1..=10")));
        }
        if !endowments.contains(&MAX_ENDOWMENT) {
            return Err(Error::Domain(format!(
                "profile {endowments:?} has no head player with 10 coins"
            )));
        }
        Ok(Self { endowments })
    }

    /// Head in seat 0 with 10 coins, three tails with `tail` coins each.
    pub fn head_tail(tail: u32) -> Result<Self> {
        Self::new([MAX_ENDOWMENT, tail, tail, tail])
    }

    /// The five experimental conditions, tails of 2, 4, 6, 8 and 10 coins.
    pub fn evaluation_set() -> Vec<Self> {
        [2, 4, 6, 8, 10]
            .into_iter()
            .map(|t| Self::head_tail(t).expect("valid"))
            .collect()
    }

    pub fn endowments(&self) -> [u32; PLAYERS] {
        self.endowments
    }

    pub fn coins(&self) -> Coins {
        self.endowments.map(f64::from)
    }

    pub fn head(&self) -> usize {
        self.endowments
            .iter()
            .position(|&e| e == MAX_ENDOWMENT)
            .expect("validated")
    }

    pub fn tails(&self) -> impl Iterator<Item = usize> + '_ {
        let head = self.head();
        (0..PLAYERS).filter(move |&i| i != head)
    }

    pub fn total(&self) -> f64 {
        self.coins().iter().sum()
    }
}

impl std::fmt::Display for EndowmentProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let e = self.endowments;
        write!(f, "[{}, {}, {}, {}]", e[0], e[1], e[2], e[3])
    }
}

impl std::str::FromStr for EndowmentProfile {
    type Err = Error;

    /// Accepts `10,4,4,4`, `[10, 4, 4, 4]`, or a single tail value `4`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .trim()
            .trim_start_matches('[')
            .trim_end_matches(']')
            .split(',')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad profile `{s}`: {e}")))?;
        match parts.as_slice() {
            [t] => Self::head_tail(*t),
            [a, b, c, d] => Self::new([*a, *b, *c, *d]),
            _ => Err(Error::Config(format!("bad profile `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based within its block.
    pub t: u32,
    pub c: Coins,
    pub y: Coins,
    pub ret: Coins,
}

impl RoundRecord {
    pub fn pool(&self) -> f64 {
        GROWTH * self.c.iter().sum::<f64>()
    }
}

fn build_record(t: u32, e: &Coins, c: Coins, y: Coins) -> RoundRecord {
    let ret = std::array::from_fn(|i| y[i] + e[i] - c[i]);
    RoundRecord { t, c, y, ret }
}

/// Resolves one round under `mechanism`.
pub fn play_round(
    profile: &EndowmentProfile,
    t: u32,
    contributions: Coins,
    mechanism: &MechanismSpec,
) -> Result<RoundRecord> {
    let e = profile.coins();
    let y = mechanism.payout(&e, &contributions)?;
    Ok(build_record(t, &e, contributions, y))
}

/// Resolves one round from explicit redistribution weights (a live referee).
pub fn play_round_with_weights(
    profile: &EndowmentProfile,
    t: u32,
    contributions: Coins,
    weights: &[f64; PLAYERS],
) -> Result<RoundRecord> {
    let e = profile.coins();
    crate::mechanism::check_round(&e, &contributions)?;
    let y = crate::mechanism::weights_to_payout(weights, &contributions);
    Ok(build_record(t, &e, contributions, y))
}

/// What a player sees when choosing a contribution.
#[derive(Debug, Clone, Copy)]
pub struct RoundView<'a> {
    pub seat: usize,
    pub profile: &'a EndowmentProfile,
    /// Earlier rounds of the current block.
    pub history: &'a [RoundRecord],
    pub mechanism: &'a MechanismSpec,
}

impl RoundView<'_> {
    pub fn endowment(&self) -> f64 {
        self.profile.coins()[self.seat]
    }

    pub fn previous(&self) -> Option<&RoundRecord> {
        self.history.last()
    }
}

/// A simulated participant.
pub trait Player: Send {
    /// Called at the start of every block with the seat's own stream.
    fn begin_block(&mut self, seat: usize, profile: &EndowmentProfile, rng: &mut SimRng);

    fn contribute(&mut self, view: &RoundView<'_>, rng: &mut SimRng) -> Result<f64>;

    /// Called once the round has resolved.
    fn observe(&mut self, _view: &RoundView<'_>, _record: &RoundRecord) -> Result<()> {
        Ok(())
    }

    /// Discrete players must contribute whole coins.
    fn is_discrete(&self) -> bool {
        true
    }
}

pub(crate) fn check_contribution(seat: usize, c: f64, e: f64, discrete: bool) -> Result<()> {
    let reason = if !c.is_finite() {
        Some(format!("non-finite contribution {c}"))
    } else if c < 0.0 {
        Some(format!("negative contribution {c}"))
    } else if c > e {
        Some(format!("contribution {c} exceeds endowment {e}"))
    } else if discrete && c.fract() != 0.0 {
        Some(format!("contribution {c} is not a whole number of coins"))
    } else {
        None
    };
    match reason {
        Some(reason) => Err(Error::Protocol { seat, reason }),
        None => Ok(()),
    }
}

/// Plays `rounds` rounds with every seat driven by a [`Player`].
///
/// `rngs[i]` is seat `i`'s stream; players must already have had
/// [`Player::begin_block`] called.
pub fn run_block(
    profile: &EndowmentProfile,
    players: &mut [Box<dyn Player>],
    mechanism: &MechanismSpec,
    rounds: usize,
    rngs: &mut [SimRng],
) -> Result<Vec<RoundRecord>> {
    if players.len() != PLAYERS || rngs.len() != PLAYERS {
        return Err(Error::Config(format!(
            "need {PLAYERS} players and streams, got {} and {}",
            players.len(),
            rngs.len()
        )));
    }
    let e = profile.coins();
    let mut history: Vec<RoundRecord> = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let mut c = [0.0; PLAYERS];
        for seat in 0..PLAYERS {
            let view = RoundView {
                seat,
                profile,
                history: &history,
                mechanism,
            };
            let choice = players[seat].contribute(&view, &mut rngs[seat])?;
            check_contribution(seat, choice, e[seat], players[seat].is_discrete())?;
            c[seat] = choice;
        }
        let record = play_round(profile, t as u32, c, mechanism)?;
        for (seat, player) in players.iter_mut().enumerate() {
            let view = RoundView {
                seat,
                profile,
                history: &history,
                mechanism,
            };
            player.observe(&view, &record)?;
        }
        history.push(record);
    }
    Ok(history)
}

/// Starts a block for every seat and plays it.
pub fn play_block(
    profile: &EndowmentProfile,
    players: &mut [Box<dyn Player>],
    mechanism: &MechanismSpec,
    rounds: usize,
    rngs: &mut [SimRng],
) -> Result<Vec<RoundRecord>> {
    for (seat, (p, rng)) in players.iter_mut().zip(rngs.iter_mut()).enumerate() {
        p.begin_block(seat, profile, rng);
    }
    run_block(profile, players, mechanism, rounds, rngs)
}
