//! Scripted behaviour archetypes and the synthetic episode corpus.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use super::VoteModel;
use crate::error::{Error, Result};
use crate::game::{
    run_session, EndowmentProfile, EpisodeRecord, Order, Player, RoundView, PLAYERS,
};
use crate::mechanism::{Baseline, MechanismSpec};
use crate::rng::{stream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    FreeRider,
    UnconditionalCooperator,
    /// Matches the others' mean relative contribution from the previous round.
    ConditionalCooperator,
    /// Uniform over legal contributions.
    NoisyRandom,
    /// Moves its relative contribution up after rounds where the payout
    /// exceeded its contribution, down otherwise.
    PayoffLearner,
}

impl Archetype {
    pub const ALL: [Archetype; 5] = [
        Archetype::FreeRider,
        Archetype::UnconditionalCooperator,
        Archetype::ConditionalCooperator,
        Archetype::NoisyRandom,
        Archetype::PayoffLearner,
    ];
}

/// Rounds `x` up with probability equal to its fractional part.
fn stochastic_round(x: f64, rng: &mut SimRng) -> f64 {
    let floor = x.floor();
    if rng.random::<f64>() < x - floor {
        floor + 1.0
    } else {
        floor
    }
}

const LEARNER_STEP: f64 = 0.15;

#[derive(Debug, Clone)]
pub struct ArchetypePlayer {
    kind: Archetype,
    /// Current target relative contribution.
    rho: f64,
}

impl ArchetypePlayer {
    pub fn new(kind: Archetype) -> Self {
        Self { kind, rho: 0.0 }
    }

    pub fn kind(&self) -> Archetype {
        self.kind
    }
}

impl Player for ArchetypePlayer {
    fn begin_block(&mut self, _seat: usize, _profile: &EndowmentProfile, rng: &mut SimRng) {
        self.rho = rng.random_range(0.3..0.9);
    }

    fn contribute(&mut self, view: &RoundView<'_>, rng: &mut SimRng) -> Result<f64> {
        let e = view.endowment();
        let seat = view.seat;
        let c = match self.kind {
            Archetype::FreeRider => 0.0,
            Archetype::UnconditionalCooperator => e,
            Archetype::NoisyRandom => rng.random_range(0..=e as u32) as f64,
            Archetype::ConditionalCooperator => {
                if let Some(prev) = view.previous() {
                    let coins = view.profile.coins();
                    let others: f64 = (0..PLAYERS)
                        .filter(|&j| j != seat)
                        .map(|j| prev.c[j] / coins[j])
                        .sum();
                    self.rho = others / (PLAYERS - 1) as f64;
                }
                stochastic_round(self.rho * e, rng)
            }
            Archetype::PayoffLearner => {
                if let Some(prev) = view.previous() {
                    let delta = if prev.y[seat] > prev.c[seat] {
                        LEARNER_STEP
                    } else {
                        -LEARNER_STEP
                    };
                    self.rho = (self.rho + delta).clamp(0.0, 1.0);
                }
                stochastic_round(self.rho * e, rng)
            }
        };
        Ok(c.clamp(0.0, e))
    }
}

/// Relative frequencies of the archetypes in the synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleMix {
    pub weights: Vec<(Archetype, f64)>,
}

impl Default for StyleMix {
    fn default() -> Self {
        Self {
            weights: vec![
                (Archetype::ConditionalCooperator, 0.35),
                (Archetype::PayoffLearner, 0.30),
                (Archetype::NoisyRandom, 0.15),
                (Archetype::FreeRider, 0.10),
                (Archetype::UnconditionalCooperator, 0.10),
            ],
        }
    }
}

impl StyleMix {
    pub fn only(kind: Archetype) -> Self {
        Self {
            weights: vec![(kind, 1.0)],
        }
    }

    fn sampler(&self) -> Result<WeightedIndex<f64>> {
        if self.weights.is_empty() {
            return Err(Error::Config("empty archetype mix".into()));
        }
        WeightedIndex::new(self.weights.iter().map(|(_, w)| *w))
            .map_err(|e| Error::Config(format!("archetype mix: {e}")))
    }

    pub fn sample(&self, rng: &mut SimRng) -> Result<Archetype> {
        Ok(self.weights[self.sampler()?.sample(rng)].0)
    }
}

const CORPUS_STREAM: u64 = 10;

/// Tail endowments of the head/tail profiles the default corpus covers.
pub const CORPUS_TAILS: [u32; 8] = [2, 3, 4, 5, 6, 7, 8, 10];

/// Mechanisms of the default corpus: the three baselines and a 3x3 manifold grid.
pub fn corpus_mechanisms() -> Vec<MechanismSpec> {
    let mut mechs: Vec<MechanismSpec> = Baseline::ALL.map(MechanismSpec::from).to_vec();
    for v in [0.0, 0.5, 1.0] {
        for w in [0.0, 0.5, 1.0] {
            mechs.push(MechanismSpec::manifold(v, w));
        }
    }
    mechs
}

pub fn corpus_profiles() -> Vec<EndowmentProfile> {
    CORPUS_TAILS
        .iter()
        .map(|&t| EndowmentProfile::head_tail(t).expect("valid tail"))
        .collect()
}

/// Simulates `n_episodes` full sessions of archetype players.
///
/// Each episode draws a profile, an ordered pair of distinct mechanisms
/// (the same one twice when only one is given), a block order and one
/// archetype per seat, all from the episode's own stream.
pub fn generate_corpus(
    mix: &StyleMix,
    profiles: &[EndowmentProfile],
    mechanisms: &[MechanismSpec],
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    let sampler = mix.sampler()?;
    if profiles.is_empty() || mechanisms.is_empty() {
        return Err(Error::Config("corpus needs at least one profile and mechanism".into()));
    }
    if n_episodes == 0 {
        return Err(Error::Config("corpus needs at least one episode".into()));
    }
    let vote = VoteModel::default();
    (0..n_episodes as u64)
        .map(|ep| {
            let mut rng = stream(seed, &[CORPUS_STREAM, ep]);
            let profile = *profiles.choose(&mut rng).expect("non-empty");
            let (a, b) = if mechanisms.len() == 1 {
                (mechanisms[0].clone(), mechanisms[0].clone())
            } else {
                let pair: Vec<_> = mechanisms.choose_multiple(&mut rng, 2).cloned().collect();
                (pair[0].clone(), pair[1].clone())
            };
            let order = if rng.random() { Order::AFirst } else { Order::BFirst };
            let mut players: Vec<Box<dyn Player>> = (0..PLAYERS)
                .map(|_| {
                    let kind = mix.weights[sampler.sample(&mut rng)].0;
                    Box::new(ArchetypePlayer::new(kind)) as Box<dyn Player>
                })
                .collect();
            let session_seed = rng.random();
            run_session(&profile, &mut players, &a, &b, order, &vote, session_seed)
        })
        .collect()
}
