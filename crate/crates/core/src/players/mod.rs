//! Simulated participants: scripted archetypes, the imitation-learned
//! virtual players, gradient-ascent rational players, and the vote model.

mod archetype;
mod rational;
mod virtual_player;
mod vote;

use rand::Rng;

use crate::error::Result;
use crate::game::{EndowmentProfile, Player, RoundView};
use crate::rng::SimRng;

pub use archetype::{
    corpus_mechanisms, corpus_profiles, generate_corpus, Archetype, ArchetypePlayer, StyleMix,
    CORPUS_TAILS,
};
pub use rational::{
    rational_player_step, RationalConfig, RationalPlayer, RationalPlayerState,
};
pub use virtual_player::{
    action_mask, corpus_sequences, evaluate_cross_entropy, focal_order, sample_categorical,
    train_virtual_players, uniform_cross_entropy, virtual_player_act, PlayerNodes,
    PlayerObservation, PlayerTrainingConfig, PlayerTrainingReport, RecurrentState, Sequence,
    VirtualPlayer, VirtualPlayerModel, ACTIONS, HIDDEN_SIZE, MODEL_TYPE, OBS_SIZE,
    SEQUENCE_ROUNDS,
};
pub use vote::{vote_probability, VoteModel};

/// Uniform over legal whole-coin contributions each round.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomBot;

impl Player for RandomBot {
    fn begin_block(&mut self, _seat: usize, _profile: &EndowmentProfile, _rng: &mut SimRng) {}

    fn contribute(&mut self, view: &RoundView<'_>, rng: &mut SimRng) -> Result<f64> {
        Ok(f64::from(rng.random_range(0..=view.endowment() as u32)))
    }
}
