use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Coins, EndowmentProfile, Player, RoundRecord, RoundView};
use crate::mechanism::MechanismSpec;
use crate::nn::sigmoid;
use crate::rng::SimRng;

/// Priors for the per-player learning rate and initial generosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RationalConfig {
    pub alpha_shape: f64,
    pub alpha_scale: f64,
    pub generosity_mean: f64,
    pub generosity_std: f64,
}

impl RationalConfig {
    /// Draws a learning rate and initial generosity from the priors.
    pub fn sample(&self, rng: &mut SimRng) -> RationalPlayerState {
        let alpha = Gamma::new(self.alpha_shape, self.alpha_scale)
            .expect("positive gamma parameters")
            .sample(rng);
        let generosity = Normal::new(self.generosity_mean, self.generosity_std)
            .expect("finite normal parameters")
            .sample(rng);
        RationalPlayerState { alpha, generosity }
    }
}

impl Default for RationalConfig {
    fn default() -> Self {
        Self {
            alpha_shape: 3.0,
            alpha_scale: 1.0,
            generosity_mean: 0.0,
            generosity_std: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalPlayerState {
    pub alpha: f64,
    pub generosity: f64,
}

impl RationalPlayerState {
    pub fn contribution(&self, endowment: f64) -> f64 {
        endowment * sigmoid(self.generosity)
    }
}

/// One step of independent gradient ascent on the immediate return.
///
/// `g += alpha * (dy_i/dc_i - 1) * e_i * sigma(g) * (1 - sigma(g))`, with the
/// other players' contributions held fixed.
pub fn rational_player_step(
    state: RationalPlayerState,
    seat: usize,
    e: &Coins,
    c_all: &Coins,
    mech: &MechanismSpec,
) -> Result<RationalPlayerState> {
    let jac = mech.jacobian(e, c_all)?;
    let s = sigmoid(state.generosity);
    let grad = (jac[seat][seat] - 1.0) * e[seat] * s * (1.0 - s);
    let generosity = state.generosity + state.alpha * grad;
    if !generosity.is_finite() {
        return Err(Error::NonFinite(format!("rational player {seat} generosity update")));
    }
    Ok(RationalPlayerState {
        alpha: state.alpha,
        generosity,
    })
}

/// A gradient-ascent player with real-valued contributions.
///
/// Learning rate and initial generosity are drawn on the first block of a
/// session; every later block restarts from the same initial generosity.
#[derive(Debug, Clone)]
pub struct RationalPlayer {
    config: RationalConfig,
    initial: Option<RationalPlayerState>,
    state: Option<RationalPlayerState>,
}

impl RationalPlayer {
    pub fn new(config: RationalConfig) -> Self {
        Self {
            config,
            initial: None,
            state: None,
        }
    }

    pub fn with_state(state: RationalPlayerState) -> Self {
        Self {
            config: RationalConfig::default(),
            initial: Some(state),
            state: Some(state),
        }
    }

    pub fn state(&self) -> Option<RationalPlayerState> {
        self.state
    }

    fn draw(&self, rng: &mut SimRng) -> RationalPlayerState {
        self.config.sample(rng)
    }
}

impl Default for RationalPlayer {
    fn default() -> Self {
        Self::new(RationalConfig::default())
    }
}

impl Player for RationalPlayer {
    fn begin_block(&mut self, _seat: usize, _profile: &EndowmentProfile, rng: &mut SimRng) {
        let initial = match self.initial {
            Some(s) => s,
            None => *self.initial.insert(self.draw(rng)),
        };
        self.state = Some(initial);
    }

    fn contribute(&mut self, view: &RoundView<'_>, _rng: &mut SimRng) -> Result<f64> {
        let state = self
            .state
            .ok_or_else(|| Error::Config("rational player used before begin_block".into()))?;
        Ok(state.contribution(view.endowment()))
    }

    fn observe(&mut self, view: &RoundView<'_>, record: &RoundRecord) -> Result<()> {
        let state = self
            .state
            .ok_or_else(|| Error::Config("rational player used before begin_block".into()))?;
        let e = view.profile.coins();
        self.state = Some(rational_player_step(state, view.seat, &e, &record.c, view.mechanism)?);
        Ok(())
    }

    fn is_discrete(&self) -> bool {
        false
    }
}
