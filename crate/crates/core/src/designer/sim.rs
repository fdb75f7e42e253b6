//! Batched rollouts of virtual players, many episodes in lockstep.

use crate::error::{Error, Result};
use crate::game::{Coins, EndowmentProfile, PLAYERS};
use crate::mechanism::MechanismSpec;
use crate::nn::Matrix;
use crate::players::{sample_categorical, PlayerObservation, RecurrentState, VirtualPlayerModel, OBS_SIZE};
use crate::rng::SimRng;

/// Endowments for a batch of episodes, one profile per episode.
#[derive(Debug, Clone)]
pub struct BatchSpec {
    pub profiles: Vec<EndowmentProfile>,
    pub rounds: usize,
}

impl BatchSpec {
    /// `per_profile` consecutive episodes for each profile.
    pub fn grouped(profiles: &[EndowmentProfile], per_profile: usize, rounds: usize) -> Self {
        Self {
            profiles: profiles
                .iter()
                .flat_map(|p| std::iter::repeat_n(*p, per_profile))
                .collect(),
            rounds,
        }
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn endowments(&self) -> Matrix {
        Matrix::from_shape_fn((self.len(), PLAYERS), |(b, i)| self.profiles[b].coins()[i])
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Per round, `B x 4`.
    pub contributions: Vec<Matrix>,
    pub payouts: Vec<Matrix>,
    /// Summed payout/endowment per seat, `B x 4`.
    pub rpay: Matrix,
}

fn row(m: &Matrix, b: usize) -> Coins {
    std::array::from_fn(|i| m[[b, i]])
}

/// Player inputs for every (episode, seat), rows ordered `b * 4 + seat`.
pub(crate) fn observation_matrix(e: &Matrix, prev: Option<(&Matrix, &Matrix)>) -> Matrix {
    let batch = e.nrows();
    let mut x = Matrix::zeros((batch * PLAYERS, OBS_SIZE));
    for b in 0..batch {
        let eb = row(e, b);
        let pb = prev.map(|(c, y)| (row(c, b), row(y, b)));
        for i in 0..PLAYERS {
            let obs = PlayerObservation::new(i, &eb, pb.as_ref().map(|(c, y)| (c, y)));
            x.row_mut(b * PLAYERS + i)
                .assign(&ndarray::ArrayView1::from(&obs.0));
        }
    }
    x
}

/// Payouts for a batch of rounds under one mechanism.
pub fn batch_payouts(mech: &MechanismSpec, e: &Matrix, c: &Matrix) -> Result<Matrix> {
    let batch = e.nrows();
    if let MechanismSpec::Designer { policy: Some(policy), .. } = mech {
        let w = policy.weights_batch(e, c)?;
        let mut y = w;
        for b in 0..batch {
            let pool = crate::game::GROWTH * c.row(b).sum();
            y.row_mut(b).mapv_inplace(|v| v * pool);
        }
        return Ok(y);
    }
    let mut y = Matrix::zeros((batch, PLAYERS));
    for b in 0..batch {
        let yb = mech.payout(&row(e, b), &row(c, b))?;
        for i in 0..PLAYERS {
            y[[b, i]] = yb[i];
        }
    }
    Ok(y)
}

/// Plays `spec.rounds` rounds of every episode with virtual players in all seats.
pub fn simulate_virtual_batch(
    model: &VirtualPlayerModel,
    spec: &BatchSpec,
    mech: &MechanismSpec,
    rng: &mut SimRng,
) -> Result<BatchOutcome> {
    if spec.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let e = spec.endowments();
    let flat_e: Vec<f64> = e.iter().copied().collect();
    let batch = spec.len();
    let mut state = RecurrentState::zeros(batch * PLAYERS);
    let mut out = BatchOutcome {
        contributions: Vec::with_capacity(spec.rounds),
        payouts: Vec::with_capacity(spec.rounds),
        rpay: Matrix::zeros((batch, PLAYERS)),
    };
    for t in 0..spec.rounds {
        let prev = (t > 0).then(|| (&out.contributions[t - 1], &out.payouts[t - 1]));
        let x = observation_matrix(&e, prev);
        let probs = model.probabilities(&x, &flat_e, &mut state)?;
        let mut c = Matrix::zeros((batch, PLAYERS));
        for r in 0..batch * PLAYERS {
            c[[r / PLAYERS, r % PLAYERS]] = sample_categorical(probs.row(r), rng) as f64;
        }
        let y = batch_payouts(mech, &e, &c)?;
        out.rpay = &out.rpay + &(&y / &e);
        out.contributions.push(c);
        out.payouts.push(y);
    }
    Ok(out)
}
