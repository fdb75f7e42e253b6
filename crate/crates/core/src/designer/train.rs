//! Vote-maximising training of the designer.
//!
//! Each update rolls out a batch under the policy (inside the graph, so
//! payouts stay differentiable through the players' later inputs) and a
//! paired batch under the fixed alternative. The surrogate
//!
//! ```text
//! S = mean_b [ J_b + stop(J_b - baseline_b) * sum_{i, t >= 2} log p(c_i^t) ]
//! J_b = sum_i sigmoid(s (rpayA_bi - rpayB_bi))
//! ```
//!
//! is maximised; `baseline_b` is the mean of `J` over the other episodes.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sim::{observation_matrix, simulate_virtual_batch, BatchSpec};
use super::{node_features, GraphNetPolicy};
use crate::error::{shape_err, Error, Result};
use crate::game::{EndowmentProfile, GROWTH, PLAYERS};
use crate::mechanism::{Baseline, MechanismSpec};
use crate::nn::{sigmoid, Graph, Matrix, NodeId, OptimizerConfig, OptimizerState};
use crate::players::{
    action_mask, focal_order, sample_categorical, VirtualPlayerModel, VoteModel, HIDDEN_SIZE,
};
use crate::rng::{stream, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub updates: usize,
    /// Tail endowments of the head/tail profiles in each batch.
    pub tails: Vec<u32>,
    pub episodes_per_profile: usize,
    pub rounds: usize,
    pub optimizer: OptimizerConfig,
    pub alternative: MechanismSpec,
    pub vote: VoteModel,
    /// Reuse batch A's stream for batch B instead of an independent one.
    pub paired_seeds: bool,
    pub log_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            updates: 10_000,
            tails: vec![2, 3, 4, 5, 6, 7, 8, 10],
            episodes_per_profile: 64,
            rounds: 10,
            optimizer: OptimizerConfig::RmsProp {
                lr: 4e-4,
                decay: 0.99,
                eps: 1e-5,
            },
            alternative: Baseline::LiberalEgalitarian.into(),
            vote: VoteModel::default(),
            paired_seeds: false,
            log_every: 100,
        }
    }
}

impl TrainingConfig {
    pub fn batch_spec(&self) -> Result<BatchSpec> {
        let profiles = self
            .tails
            .iter()
            .map(|&t| EndowmentProfile::head_tail(t))
            .collect::<Result<Vec<_>>>()?;
        if profiles.is_empty() || self.episodes_per_profile == 0 || self.rounds == 0 {
            return Err(Error::Config("empty designer training batch".into()));
        }
        Ok(BatchSpec::grouped(&profiles, self.episodes_per_profile, self.rounds))
    }

    pub fn batch_size(&self) -> usize {
        self.tails.len() * self.episodes_per_profile
    }
}

/// Policy-gradient surrogate from per-episode expected votes and summed
/// log-probabilities, both `B x 1` and paired by row. With `demean` the score
/// term is weighted by `J_b` minus the mean of the other episodes' `J`.
pub fn scg_surrogate(g: &mut Graph, votes: NodeId, logp: NodeId, demean: bool) -> Result<NodeId> {
    let jv = g.value(votes).clone();
    let (b, lp_shape) = (jv.nrows(), g.value(logp).shape().to_vec());
    if jv.ncols() != 1 || lp_shape != [b, 1] || b == 0 {
        return shape_err(
            "scg_surrogate",
            format!("unpaired batches: votes {:?}, logp {:?}", jv.shape(), lp_shape),
        );
    }
    let total = jv.sum();
    let adv = jv.mapv(|j| {
        if demean && b > 1 {
            j - (total - j) / (b - 1) as f64
        } else {
            j
        }
    });
    let adv = g.constant(adv);
    let score = g.mul(adv, logp)?;
    let s = g.add(votes, score)?;
    Ok(g.mean(s))
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub policy: GraphNetPolicy,
    /// `(update, mean expected vote share of the policy)` at each log point.
    pub curve: Vec<(usize, f64)>,
}

/// Rolls out batch A under the policy with the graph kept; returns the
/// relative-payout node (`B x 4`) and summed log-probabilities (`B x 1`).
fn rollout_in_graph(
    g: &mut Graph,
    policy: super::GnNodes,
    players: &VirtualPlayerModel,
    spec: &BatchSpec,
    rng: &mut SimRng,
) -> Result<(NodeId, NodeId)> {
    let batch = spec.len();
    let rows = batch * PLAYERS;
    let e = spec.endowments();
    let flat_e: Vec<f64> = e.iter().copied().collect();
    let mask = action_mask(&flat_e);
    let inv_e = g.constant(e.mapv(|v| 1.0 / v));
    let pn = players.attach_frozen(g);

    let gather: Vec<Vec<usize>> = (0..PLAYERS)
        .map(|k| {
            (0..rows)
                .map(|r| (r / PLAYERS) * PLAYERS + focal_order(r % PLAYERS)[k])
                .collect()
        })
        .collect();
    let group: Vec<usize> = (0..rows).map(|r| r / PLAYERS).collect();

    let mut h = g.constant(Matrix::zeros((rows, HIDDEN_SIZE)));
    let mut cell = g.constant(Matrix::zeros((rows, HIDDEN_SIZE)));
    let mut prev: Option<(Matrix, NodeId)> = None;
    let mut rpay: Option<NodeId> = None;
    let mut logp: Option<NodeId> = None;
    for t in 0..spec.rounds {
        let x = match &prev {
            None => g.constant(observation_matrix(&e, None)),
            Some((c_prev, y_prev)) => {
                let y_vals = g.value(*y_prev).clone();
                let full = observation_matrix(&e, Some((c_prev, &y_vals)));
                let fixed = g.constant(full.slice(ndarray::s![.., 0..12]).to_owned());
                let flat = g.reshape(*y_prev, rows, 1)?;
                let mut cols = vec![fixed];
                for idx in &gather {
                    let col = g.gather_rows(flat, idx)?;
                    cols.push(g.scale(col, 0.1));
                }
                g.concat_cols(&cols)?
            }
        };
        let (logits, h2, c2) = VirtualPlayerModel::step_graph(g, pn, x, h, cell)?;
        (h, cell) = (h2, c2);
        let lp = g.masked_log_softmax(logits, Some(&mask))?;
        let probs = g.value(lp).mapv(f64::exp);
        let actions: Vec<usize> = (0..rows)
            .map(|r| sample_categorical(probs.row(r), rng))
            .collect();
        let c = Matrix::from_shape_fn((batch, PLAYERS), |(b, i)| actions[b * PLAYERS + i] as f64);
        if t > 0 {
            let picked = g.pick(lp, &actions)?;
            let per_episode = g.scatter_add_rows(picked, &group, batch)?;
            logp = Some(match logp {
                Some(acc) => g.add(acc, per_episode)?,
                None => per_episode,
            });
        }

        let x_d = g.constant(node_features(&e, &c));
        let w = GraphNetPolicy::forward_graph(g, policy, x_d)?;
        let pool = g.constant(Array2::from_shape_fn((batch, 1), |(b, _)| {
            GROWTH * c.row(b).sum()
        }));
        let y = g.mul_col(w, pool)?;
        let rel = g.mul(y, inv_e)?;
        rpay = Some(match rpay {
            Some(acc) => g.add(acc, rel)?,
            None => rel,
        });
        prev = Some((c, y));
    }
    let logp = match logp {
        Some(l) => l,
        None => g.constant(Matrix::zeros((batch, 1))),
    };
    Ok((rpay.expect("at least one round"), logp))
}

const TRAIN_STREAM: u64 = 30;

/// The policy [`train_designer`] starts from for `seed`.
pub fn initial_policy(seed: u64) -> GraphNetPolicy {
    GraphNetPolicy::init(stream(seed, &[TRAIN_STREAM]).random())
}

/// Trains the policy by stochastic gradient ascent on [`scg_surrogate`].
pub fn train_designer(
    players: &VirtualPlayerModel,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<TrainingOutcome> {
    let spec = cfg.batch_spec()?;
    let mut policy = initial_policy(seed);
    let mut opt = OptimizerState::new(cfg.optimizer, policy.params());
    let mut curve = Vec::new();
    let s = cfg.vote.slope;
    let batch = spec.len();
    for update in 1..=cfg.updates {
        let mut rng_a = stream(seed, &[TRAIN_STREAM, update as u64, 0]);
        let mut rng_b = if cfg.paired_seeds {
            rng_a.clone()
        } else {
            stream(seed, &[TRAIN_STREAM, update as u64, 1])
        };
        let alt = simulate_virtual_batch(players, &spec, &cfg.alternative, &mut rng_b)?;

        let mut g = Graph::new();
        let (nodes, ids) = policy.attach(&mut g);
        let (rpay_a, logp) = rollout_in_graph(&mut g, nodes, players, &spec, &mut rng_a)?;
        let rpay_b = g.constant(alt.rpay);
        let diff = g.sub(rpay_a, rpay_b)?;
        let diff = g.scale(diff, s);
        let p = g.sigmoid(diff);
        let votes = g.row_sum(p);
        let surrogate = scg_surrogate(&mut g, votes, logp, true)?;
        let loss = g.scale(surrogate, -1.0);
        let value = g.scalar(surrogate);
        if !value.is_finite() {
            return Err(Error::Diverged(format!(
                "surrogate is {value} at update {update}"
            )));
        }
        let grads = g.backward(loss)?;
        let grads = grads.collect(&ids, policy.params().values());
        opt.update(policy.params_mut(), &grads)?;

        if cfg.log_every > 0 && (update % cfg.log_every == 0 || update == cfg.updates) {
            let share = g.value(votes).sum() / (batch * PLAYERS) as f64;
            curve.push((update, share));
        }
    }
    Ok(TrainingOutcome { policy, curve })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteShare {
    pub mean: f64,
    pub std_error: f64,
    pub pairs: usize,
}

/// Expected vote share of `mech_a` against `mech_b`: mean over paired
/// episodes of the per-seat probability of voting `A`.
pub fn evaluate_vote_share(
    players: &VirtualPlayerModel,
    mech_a: &MechanismSpec,
    mech_b: &MechanismSpec,
    profile: &EndowmentProfile,
    pairs: usize,
    vote: &VoteModel,
    seed: u64,
) -> Result<VoteShare> {
    let spec = BatchSpec::grouped(&[*profile], pairs, 10);
    let mut rng_a = stream(seed, &[0]);
    let mut rng_b = stream(seed, &[1]);
    let a = simulate_virtual_batch(players, &spec, mech_a, &mut rng_a)?;
    let b = simulate_virtual_batch(players, &spec, mech_b, &mut rng_b)?;
    let shares: Vec<f64> = (0..pairs)
        .map(|p| {
            (0..PLAYERS)
                .map(|i| sigmoid(vote.slope * (a.rpay[[p, i]] - b.rpay[[p, i]])))
                .sum::<f64>()
                / PLAYERS as f64
        })
        .collect();
    Ok(summarize_shares(&shares))
}

/// Mean and standard error of per-episode vote shares.
pub fn summarize_shares(xs: &[f64]) -> VoteShare {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    VoteShare {
        mean,
        std_error: (var / n).sqrt(),
        pairs: xs.len(),
    }
}
