use rand::Rng;
use serde::{Deserialize, Serialize};

use super::record::{BlockLabel, BlockRecord, EpisodeRecord, MechanismPair, Vote};
use super::{
    check_contribution, play_round, play_round_with_weights, Coins, EndowmentProfile, Player,
    RoundRecord, RoundView, BLOCK_ROUNDS, PLAYERS,
};
use crate::error::{Error, Result};
use crate::mechanism::MechanismSpec;
use crate::players::VoteModel;
use crate::rng::{stream, SimRng};

const SEAT_STREAM: u64 = 1;
const VOTE_STREAM: u64 = 2;

/// Which of the two candidate mechanisms is experienced first (block 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    #[default]
    AFirst,
    BFirst,
}

impl Order {
    pub fn flipped(self) -> Self {
        match self {
            Order::AFirst => Order::BFirst,
            Order::BFirst => Order::AFirst,
        }
    }

    /// Labels of blocks 2 and 3.
    pub fn labels(self) -> [BlockLabel; 2] {
        match self {
            Order::AFirst => [BlockLabel::A, BlockLabel::B],
            Order::BFirst => [BlockLabel::B, BlockLabel::A],
        }
    }
}

/// A completed block handed to the vote.
#[derive(Debug, Clone, Copy)]
pub struct PlayedBlock<'a> {
    pub profile: &'a EndowmentProfile,
    pub rounds: &'a [RoundRecord],
}

impl PlayedBlock<'_> {
    /// Per-seat sum of payout/endowment over the block.
    pub fn relative_payouts(&self) -> Coins {
        let e = self.profile.coins();
        let mut out = [0.0; PLAYERS];
        for r in self.rounds {
            for i in 0..PLAYERS {
                out[i] += r.y[i] / e[i];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub votes: [Vote; PLAYERS],
    /// Model probability that each seat votes `A`.
    pub prob_a: [f64; PLAYERS],
    pub fraction_a: f64,
    pub bonus: Vote,
}

impl VoteOutcome {
    fn swapped(self) -> Self {
        Self {
            votes: self.votes.map(Vote::swapped),
            prob_a: self.prob_a.map(|p| 1.0 - p),
            fraction_a: 1.0 - self.fraction_a,
            bonus: self.bonus.swapped(),
        }
    }
}

fn tally(votes: &[Vote; PLAYERS]) -> f64 {
    votes.iter().filter(|&&v| v == Vote::A).count() as f64 / PLAYERS as f64
}

/// Draws the bonus mechanism: `A` with probability equal to the share of `A` votes.
pub fn bonus_lottery(votes: &[Vote; PLAYERS], rng: &mut SimRng) -> Vote {
    let u: f64 = rng.random();
    if u < tally(votes) {
        Vote::A
    } else {
        Vote::B
    }
}

fn sample_votes(
    prob_a: &[f64; PLAYERS],
    fixed: &[Option<Vote>; PLAYERS],
    rng: &mut SimRng,
) -> [Vote; PLAYERS] {
    std::array::from_fn(|i| {
        // always consume one draw per seat so streams stay aligned
        let u: f64 = rng.random();
        fixed[i].unwrap_or(if u < prob_a[i] { Vote::A } else { Vote::B })
    })
}

/// Every seat votes independently from the vote model, then the bonus lottery runs.
pub fn conduct_vote(
    a: PlayedBlock<'_>,
    b: PlayedBlock<'_>,
    model: &VoteModel,
    rng: &mut SimRng,
) -> Result<VoteOutcome> {
    conduct_vote_with(a, b, model, &[None; PLAYERS], rng)
}

fn conduct_vote_with(
    a: PlayedBlock<'_>,
    b: PlayedBlock<'_>,
    model: &VoteModel,
    fixed: &[Option<Vote>; PLAYERS],
    rng: &mut SimRng,
) -> Result<VoteOutcome> {
    if a.profile != b.profile {
        return Err(Error::Domain(format!(
            "blocks played under different profiles {} and {}",
            a.profile, b.profile
        )));
    }
    let ra = a.relative_payouts();
    let rb = b.relative_payouts();
    let prob_a: [f64; PLAYERS] = std::array::from_fn(|i| model.vote_probability(ra[i], rb[i]));
    let votes = sample_votes(&prob_a, fixed, rng);
    let bonus = bonus_lottery(&votes, rng);
    Ok(VoteOutcome {
        votes,
        prob_a,
        fraction_a: tally(&votes),
        bonus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub profile: EndowmentProfile,
    pub mechanisms: MechanismPair,
    pub order: Order,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    /// `block` is 0-based over the four blocks; `round` is 1-based.
    Contribute { block: usize, round: usize },
    Vote,
    Done,
}

/// The 34-round session protocol, advanced one action at a time.
///
/// Block 1 is the equal-split tutorial, blocks 2 and 3 the two candidates in
/// plan order, then a vote and a 4-round bonus block. Each seat draws from its
/// own stream and the vote from a third, so automated seats behave identically
/// whether driven by [`run_session`] or by a live service.
pub struct SessionMachine {
    plan: SessionPlan,
    vote_model: VoteModel,
    seat_rngs: Vec<SimRng>,
    vote_rng: SimRng,
    blocks: Vec<BlockRecord>,
    current: Vec<RoundRecord>,
    started: [bool; PLAYERS],
    vote: Option<VoteOutcome>,
}

impl SessionMachine {
    pub fn new(plan: SessionPlan, vote_model: VoteModel) -> Self {
        let seat_rngs = (0..PLAYERS)
            .map(|s| stream(plan.seed, &[SEAT_STREAM, s as u64]))
            .collect();
        let vote_rng = stream(plan.seed, &[VOTE_STREAM]);
        Self {
            plan,
            vote_model,
            seat_rngs,
            vote_rng,
            blocks: Vec::with_capacity(BLOCK_ROUNDS.len()),
            current: Vec::new(),
            started: [false; PLAYERS],
            vote: None,
        }
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn profile(&self) -> &EndowmentProfile {
        &self.plan.profile
    }

    pub fn stage(&self) -> Stage {
        let block = self.blocks.len();
        if block == 3 && self.vote.is_none() {
            Stage::Vote
        } else if block == BLOCK_ROUNDS.len() {
            Stage::Done
        } else {
            Stage::Contribute {
                block,
                round: self.current.len() + 1,
            }
        }
    }

    pub fn block_label(&self, block: usize) -> Option<BlockLabel> {
        match block {
            0 => Some(BlockLabel::Tutorial),
            1 | 2 => Some(self.plan.order.labels()[block - 1]),
            3 => self.vote.as_ref().map(|v| v.bonus.label()),
            _ => None,
        }
    }

    /// Mechanism governing the block being played, if any.
    pub fn current_mechanism(&self) -> Option<MechanismSpec> {
        match self.stage() {
            Stage::Contribute { block, .. } => {
                self.block_label(block).map(|l| self.plan.mechanisms.get(l))
            }
            _ => None,
        }
    }

    /// Rounds already played in the current block.
    pub fn history(&self) -> &[RoundRecord] {
        &self.current
    }

    pub fn blocks(&self) -> &[BlockRecord] {
        &self.blocks
    }

    pub fn vote_outcome(&self) -> Option<&VoteOutcome> {
        self.vote.as_ref()
    }

    fn contribute_stage(&self) -> Result<()> {
        match self.stage() {
            Stage::Contribute { .. } => Ok(()),
            other => Err(Error::Config(format!("no round is open (stage {other:?})"))),
        }
    }

    /// Asks an automated seat for its contribution this round.
    pub fn automated_contribution(&mut self, seat: usize, player: &mut dyn Player) -> Result<f64> {
        self.contribute_stage()?;
        let mechanism = self.current_mechanism().expect("open round");
        let rng = &mut self.seat_rngs[seat];
        if !self.started[seat] {
            player.begin_block(seat, &self.plan.profile, rng);
            self.started[seat] = true;
        }
        let view = RoundView {
            seat,
            profile: &self.plan.profile,
            history: &self.current,
            mechanism: &mechanism,
        };
        let c = player.contribute(&view, rng)?;
        check_contribution(seat, c, self.plan.profile.coins()[seat], player.is_discrete())?;
        Ok(c)
    }

    /// Resolves the open round. `weights` is required when the block is
    /// refereed live and ignored otherwise. Automated seats observe the result.
    pub fn resolve_round(
        &mut self,
        contributions: Coins,
        weights: Option<[f64; PLAYERS]>,
        players: &mut [Option<&mut dyn Player>],
    ) -> Result<RoundRecord> {
        self.contribute_stage()?;
        let mechanism = self.current_mechanism().expect("open round");
        let t = self.current.len() as u32 + 1;
        let record = match (&mechanism, weights) {
            (MechanismSpec::Referee, Some(w)) => {
                play_round_with_weights(&self.plan.profile, t, contributions, &w)?
            }
            (MechanismSpec::Referee, None) => {
                return Err(Error::Config("refereed round needs allocation weights".into()))
            }
            (m, _) => play_round(&self.plan.profile, t, contributions, m)?,
        };
        for (seat, player) in players.iter_mut().enumerate() {
            if let Some(p) = player {
                let view = RoundView {
                    seat,
                    profile: &self.plan.profile,
                    history: &self.current,
                    mechanism: &mechanism,
                };
                p.observe(&view, &record)?;
            }
        }
        self.current.push(record.clone());
        let block = self.blocks.len();
        if self.current.len() == BLOCK_ROUNDS[block] {
            let label = self.block_label(block).expect("block is open");
            self.blocks.push(BlockRecord {
                mech: label,
                rounds: std::mem::take(&mut self.current),
            });
            self.started = [false; PLAYERS];
        }
        Ok(record)
    }

    /// Plays one round with every seat automated.
    pub fn auto_round(&mut self, players: &mut [Option<&mut dyn Player>]) -> Result<RoundRecord> {
        let mut c = [0.0; PLAYERS];
        for (seat, p) in players.iter_mut().enumerate() {
            let p = p
                .as_deref_mut()
                .ok_or_else(|| Error::Config(format!("seat {seat} is not automated")))?;
            c[seat] = self.automated_contribution(seat, p)?;
        }
        self.resolve_round(c, None, players)
    }

    /// Model probability of each seat voting `A`.
    pub fn vote_probabilities(&self) -> Result<[f64; PLAYERS]> {
        let [first, second] = self.experienced_blocks()?;
        let ra = first.relative_payouts();
        let rb = second.relative_payouts();
        let p_first: [f64; PLAYERS] =
            std::array::from_fn(|i| self.vote_model.vote_probability(ra[i], rb[i]));
        Ok(match self.plan.order {
            Order::AFirst => p_first,
            Order::BFirst => p_first.map(|p| 1.0 - p),
        })
    }

    fn experienced_blocks(&self) -> Result<[PlayedBlock<'_>; 2]> {
        if self.blocks.len() < 3 {
            return Err(Error::Config("vote requested before block 3 finished".into()));
        }
        Ok([1, 2].map(|b| PlayedBlock {
            profile: &self.plan.profile,
            rounds: &self.blocks[b].rounds,
        }))
    }

    /// Runs the vote. Seats with a fixed ballot (humans) keep it; the rest vote
    /// from the model. Draws are made in experienced order, so swapping the
    /// candidates together with the order reproduces the same session.
    pub fn cast_votes(&mut self, fixed: [Option<Vote>; PLAYERS]) -> Result<VoteOutcome> {
        if self.stage() != Stage::Vote {
            return Err(Error::Config(format!("vote not open (stage {:?})", self.stage())));
        }
        let flip = self.plan.order == Order::BFirst;
        let fixed_first = if flip {
            fixed.map(|v| v.map(Vote::swapped))
        } else {
            fixed
        };
        if self.blocks.len() < 3 {
            return Err(Error::Config("vote requested before block 3 finished".into()));
        }
        let [first, second] = [1, 2].map(|b| PlayedBlock {
            profile: &self.plan.profile,
            rounds: &self.blocks[b].rounds,
        });
        let mut outcome =
            conduct_vote_with(first, second, &self.vote_model, &fixed_first, &mut self.vote_rng)?;
        if flip {
            outcome = outcome.swapped();
        }
        self.vote = Some(outcome.clone());
        Ok(outcome)
    }

    /// The finished session's record.
    pub fn record(&self) -> Result<EpisodeRecord> {
        if self.stage() != Stage::Done {
            return Err(Error::Config(format!("session unfinished (stage {:?})", self.stage())));
        }
        let vote = self.vote.as_ref().expect("done implies voted");
        Ok(EpisodeRecord {
            seed: self.plan.seed,
            profile: self.plan.profile,
            mechanisms: self.plan.mechanisms.clone(),
            blocks: self.blocks.clone(),
            votes: vote.votes,
            bonus_mech: vote.bonus.label(),
        })
    }

    pub fn into_record(self) -> Result<EpisodeRecord> {
        self.record()
    }
}

/// Plays a complete session with every seat automated.
pub fn run_session(
    profile: &EndowmentProfile,
    players: &mut [Box<dyn Player>],
    mech_a: &MechanismSpec,
    mech_b: &MechanismSpec,
    order: Order,
    vote_model: &VoteModel,
    seed: u64,
) -> Result<EpisodeRecord> {
    if players.len() != PLAYERS {
        return Err(Error::Config(format!("need {PLAYERS} players, got {}", players.len())));
    }
    let plan = SessionPlan {
        profile: *profile,
        mechanisms: MechanismPair {
            a: mech_a.clone(),
            b: mech_b.clone(),
        },
        order,
        seed,
    };
    let mut machine = SessionMachine::new(plan, *vote_model);
    let mut seats: Vec<Option<&mut dyn Player>> =
        players.iter_mut().map(|p| Some(p.as_mut() as &mut dyn Player)).collect();
    loop {
        match machine.stage() {
            Stage::Contribute { .. } => {
                machine.auto_round(&mut seats)?;
            }
            Stage::Vote => {
                machine.cast_votes([None; PLAYERS])?;
            }
            Stage::Done => break,
        }
    }
    machine.into_record()
}
