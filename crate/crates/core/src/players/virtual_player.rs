//! Recurrent imitation-learned players.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::game::{Coins, EndowmentProfile, EpisodeRecord, Player, RoundView, MAX_ENDOWMENT, PLAYERS};
use crate::nn::{
    init_linear, lstm_step, row_softmax, Graph, LstmNodes, LstmParams, Matrix, NodeId,
    OptimizerConfig, OptimizerState, ParamSet, WeightFile,
};
use crate::rng::{stream, SimRng};

pub const OBS_SIZE: usize = 16;
pub const EMBED_SIZE: usize = 64;
pub const HIDDEN_SIZE: usize = 16;
pub const ACTIONS: usize = MAX_ENDOWMENT as usize + 1;
pub const SEQUENCE_ROUNDS: usize = 10;
pub const MODEL_TYPE: &str = "player_model";

/// Seat order as seen by `focal`: itself first, then the others by seat.
pub fn focal_order(focal: usize) -> [usize; PLAYERS] {
    let mut out = [focal; PLAYERS];
    let mut k = 1;
    for j in 0..PLAYERS {
        if j != focal {
            out[k] = j;
            k += 1;
        }
    }
    out
}

/// The 16 network inputs for one player and round.
///
/// Four groups of four, each ordered focal-first: endowment/10, previous
/// contribution/10, previous contribution/endowment, previous payout/10.
/// The "previous" groups are zero in round 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerObservation(pub [f64; OBS_SIZE]);

impl PlayerObservation {
    pub fn new(focal: usize, e: &Coins, previous: Option<(&Coins, &Coins)>) -> Self {
        let order = focal_order(focal);
        let mut x = [0.0; OBS_SIZE];
        for (k, &j) in order.iter().enumerate() {
            x[k] = e[j] / 10.0;
            if let Some((c, y)) = previous {
                x[4 + k] = c[j] / 10.0;
                x[8 + k] = c[j] / e[j];
                x[12 + k] = y[j] / 10.0;
            }
        }
        Self(x)
    }
}

/// Legal-action mask for a batch of endowments.
pub fn action_mask(endowments: &[f64]) -> Array2<bool> {
    Array2::from_shape_fn((endowments.len(), ACTIONS), |(r, a)| a as f64 <= endowments[r])
}

#[derive(Debug, Clone, Copy)]
pub struct PlayerNodes {
    embed_w: NodeId,
    embed_b: NodeId,
    lstm: LstmNodes,
    out_w: NodeId,
    out_b: NodeId,
}

/// Linear(16, 64) + tanh, LSTM(64, 16), Linear(16, 11).
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPlayerModel {
    params: ParamSet,
}

/// Recurrent state for a batch of players.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Matrix,
    pub c: Matrix,
}

impl RecurrentState {
    pub fn zeros(batch: usize) -> Self {
        Self {
            h: Matrix::zeros((batch, HIDDEN_SIZE)),
            c: Matrix::zeros((batch, HIDDEN_SIZE)),
        }
    }
}

impl VirtualPlayerModel {
    pub fn init(seed: u64) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        init_linear(&mut params, "embed", OBS_SIZE, EMBED_SIZE, &mut rng);
        LstmParams::init(EMBED_SIZE, HIDDEN_SIZE, &mut rng).push_into(&mut params, "lstm");
        init_linear(&mut params, "out", HIDDEN_SIZE, ACTIONS, &mut rng);
        Self { params }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        Self::init(0).params.check_compatible(&params)?;
        Ok(Self { params })
    }

    /// Node handles from ids returned by attaching `params()` in order.
    pub fn nodes(ids: &[NodeId]) -> PlayerNodes {
        PlayerNodes {
            embed_w: ids[0],
            embed_b: ids[1],
            lstm: LstmNodes {
                w_ih: ids[2],
                w_hh: ids[3],
                bias: ids[4],
            },
            out_w: ids[5],
            out_b: ids[6],
        }
    }

    /// Attaches the weights as trainable leaves.
    pub fn attach(&self, g: &mut Graph) -> PlayerNodes {
        Self::nodes(&self.params.attach(g))
    }

    /// Attaches the weights as constants, for use inside another model's graph.
    pub fn attach_frozen(&self, g: &mut Graph) -> PlayerNodes {
        Self::nodes(&self.params.attach_frozen(g))
    }

    /// One recurrent step on a batch of observations; returns `(logits, h, c)`.
    pub fn step_graph(
        g: &mut Graph,
        nodes: PlayerNodes,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let z = g.linear(x, nodes.embed_w, nodes.embed_b)?;
        let z = g.tanh(z);
        let (h, c) = lstm_step(g, z, h, c, nodes.lstm)?;
        let logits = g.linear(h, nodes.out_w, nodes.out_b)?;
        Ok((logits, h, c))
    }

    /// Masked action probabilities for a batch, advancing `state`.
    pub fn probabilities(
        &self,
        obs: &Matrix,
        endowments: &[f64],
        state: &mut RecurrentState,
    ) -> Result<Matrix> {
        let mut g = Graph::new();
        let nodes = self.attach_frozen(&mut g);
        let x = g.constant(obs.clone());
        let h = g.constant(state.h.clone());
        let c = g.constant(state.c.clone());
        let (logits, h, c) = Self::step_graph(&mut g, nodes, x, h, c)?;
        let probs = row_softmax(g.value(logits), Some(&action_mask(endowments)))?;
        state.h = g.value(h).clone();
        state.c = g.value(c).clone();
        Ok(probs)
    }

    pub fn to_weight_file(&self) -> Result<WeightFile> {
        WeightFile::from_params(
            MODEL_TYPE,
            json!({
                "inputs": OBS_SIZE,
                "embed": EMBED_SIZE,
                "hidden": HIDDEN_SIZE,
                "actions": ACTIONS,
            }),
            &self.params,
        )
    }

    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        Self::from_params(file.to_params(MODEL_TYPE)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_weight_file()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

/// Draws an index from a probability row by inversion.
pub fn sample_categorical(probs: ndarray::ArrayView1<f64>, rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

/// Samples one contribution; returns it with the new state and its log-probability.
pub fn virtual_player_act(
    model: &VirtualPlayerModel,
    obs: &PlayerObservation,
    endowment: f64,
    state: &RecurrentState,
    rng: &mut SimRng,
) -> Result<(u32, RecurrentState, f64)> {
    let mut next = state.clone();
    let x = Matrix::from_shape_vec((1, OBS_SIZE), obs.0.to_vec()).expect("fixed size");
    let probs = model.probabilities(&x, &[endowment], &mut next)?;
    let a = sample_categorical(probs.row(0), rng);
    Ok((a as u32, next, probs[[0, a]].ln()))
}

/// A seat driven by a shared [`VirtualPlayerModel`].
#[derive(Debug, Clone)]
pub struct VirtualPlayer {
    model: Arc<VirtualPlayerModel>,
    state: RecurrentState,
}

impl VirtualPlayer {
    pub fn new(model: Arc<VirtualPlayerModel>) -> Self {
        Self {
            model,
            state: RecurrentState::zeros(1),
        }
    }
}

impl Player for VirtualPlayer {
    fn begin_block(&mut self, _seat: usize, _profile: &EndowmentProfile, _rng: &mut SimRng) {
        self.state = RecurrentState::zeros(1);
    }

    fn contribute(&mut self, view: &RoundView<'_>, rng: &mut SimRng) -> Result<f64> {
        let e = view.profile.coins();
        let prev = view.previous().map(|r| (&r.c, &r.y));
        let obs = PlayerObservation::new(view.seat, &e, prev);
        let (c, state, _) = virtual_player_act(&self.model, &obs, e[view.seat], &self.state, rng)?;
        self.state = state;
        Ok(f64::from(c))
    }
}

/// One seat's 10-round trajectory within a block.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub obs: Vec<PlayerObservation>,
    pub actions: Vec<usize>,
    pub endowment: f64,
}

/// Extracts one sequence per seat from every 10-round block.
pub fn corpus_sequences(corpus: &[EpisodeRecord]) -> Result<Vec<Sequence>> {
    let mut out = Vec::new();
    for (n, ep) in corpus.iter().enumerate() {
        let e = ep.profile.coins();
        for block in ep.blocks.iter().filter(|b| b.rounds.len() == SEQUENCE_ROUNDS) {
            for seat in 0..PLAYERS {
                let mut obs = Vec::with_capacity(SEQUENCE_ROUNDS);
                let mut actions = Vec::with_capacity(SEQUENCE_ROUNDS);
                for (t, r) in block.rounds.iter().enumerate() {
                    let prev = (t > 0).then(|| {
                        let p = &block.rounds[t - 1];
                        (&p.c, &p.y)
                    });
                    obs.push(PlayerObservation::new(seat, &e, prev));
                    let c = r.c[seat];
                    if c.fract() != 0.0 || c < 0.0 || c > e[seat] {
                        return Err(Error::Corpus {
                            line: n + 1,
                            reason: format!("seat {seat} contribution {c} is not a legal whole coin count"),
                        });
                    }
                    actions.push(c as usize);
                }
                out.push(Sequence {
                    obs,
                    actions,
                    endowment: e[seat],
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlayerTrainingConfig {
    pub updates: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub entropy_weight: f64,
    pub l2_weight: f64,
    pub validation_fraction: f64,
    pub eval_every: usize,
}

impl Default for PlayerTrainingConfig {
    fn default() -> Self {
        Self {
            updates: 30_000,
            batch_size: 512,
            optimizer: OptimizerConfig::adam(4e-4),
            entropy_weight: 0.1,
            l2_weight: 1e-5,
            validation_fraction: 0.1,
            eval_every: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerTrainingReport {
    pub updates: usize,
    pub train_sequences: usize,
    pub validation_sequences: usize,
    /// Per-step cross-entropy of the selected model on held-out sequences.
    pub validation_ce: f64,
    /// Per-step cross-entropy of a uniform distribution over legal actions.
    pub uniform_ce: f64,
    pub initial_validation_ce: f64,
    /// `(update, validation_ce)` at each evaluation.
    pub curve: Vec<(usize, f64)>,
}

fn batch_inputs(seqs: &[&Sequence], t: usize) -> (Matrix, Vec<usize>, Vec<f64>) {
    let mut x = Matrix::zeros((seqs.len(), OBS_SIZE));
    for (r, s) in seqs.iter().enumerate() {
        x.row_mut(r).assign(&ndarray::ArrayView1::from(&s.obs[t].0));
    }
    let actions = seqs.iter().map(|s| s.actions[t]).collect();
    let endow = seqs.iter().map(|s| s.endowment).collect();
    (x, actions, endow)
}

/// Builds the unrolled loss; returns `(loss, mean cross-entropy)` nodes.
fn sequence_loss(
    g: &mut Graph,
    nodes: PlayerNodes,
    seqs: &[&Sequence],
    entropy_weight: f64,
) -> Result<(NodeId, NodeId)> {
    let n = seqs.len();
    let mut h = g.constant(Matrix::zeros((n, HIDDEN_SIZE)));
    let mut c = g.constant(Matrix::zeros((n, HIDDEN_SIZE)));
    let mut ce_terms = Vec::with_capacity(SEQUENCE_ROUNDS);
    let mut ent_terms = Vec::with_capacity(SEQUENCE_ROUNDS);
    for t in 0..SEQUENCE_ROUNDS {
        let (x, actions, endow) = batch_inputs(seqs, t);
        let x = g.constant(x);
        let (logits, h2, c2) = VirtualPlayerModel::step_graph(g, nodes, x, h, c)?;
        (h, c) = (h2, c2);
        let mask = action_mask(&endow);
        let lp = g.masked_log_softmax(logits, Some(&mask))?;
        let picked = g.pick(lp, &actions)?;
        ce_terms.push(g.sum(picked));
        let p = g.exp(lp);
        let plp = g.mul(p, lp)?;
        ent_terms.push(g.sum(plp));
    }
    let steps = (n * SEQUENCE_ROUNDS) as f64;
    let ll = sum_nodes(g, &ce_terms)?;
    let ce = g.scale(ll, -1.0 / steps);
    // sum p log p = -entropy
    let neg_ent = sum_nodes(g, &ent_terms)?;
    let neg_ent = g.scale(neg_ent, entropy_weight / steps);
    let loss = g.add(ce, neg_ent)?;
    Ok((loss, ce))
}

fn sum_nodes(g: &mut Graph, nodes: &[NodeId]) -> Result<NodeId> {
    let mut acc = nodes[0];
    for &n in &nodes[1..] {
        acc = g.add(acc, n)?;
    }
    Ok(acc)
}

/// Mean per-step cross-entropy of `model` on `seqs`.
pub fn evaluate_cross_entropy(model: &VirtualPlayerModel, seqs: &[Sequence]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in seqs.chunks(1024) {
        let refs: Vec<&Sequence> = chunk.iter().collect();
        let mut g = Graph::new();
        let nodes = model.attach_frozen(&mut g);
        let (_, ce) = sequence_loss(&mut g, nodes, &refs, 0.0)?;
        total += g.scalar(ce) * (chunk.len() * SEQUENCE_ROUNDS) as f64;
        count += chunk.len() * SEQUENCE_ROUNDS;
    }
    Ok(total / count as f64)
}

/// Cross-entropy of the uniform distribution over each step's legal actions.
pub fn uniform_cross_entropy(seqs: &[Sequence]) -> f64 {
    let total: f64 = seqs.iter().map(|s| (s.endowment + 1.0).ln()).sum();
    total / seqs.len() as f64
}

const TRAIN_STREAM: u64 = 20;

/// Behaviour cloning with backpropagation through the 10-round unroll.
///
/// Minimises cross-entropy minus `entropy_weight` times the policy entropy
/// plus `l2_weight` times the squared parameter norm. The returned model is
/// the evaluated snapshot with the lowest validation cross-entropy.
pub fn train_virtual_players(
    corpus: &[EpisodeRecord],
    cfg: &PlayerTrainingConfig,
    seed: u64,
) -> Result<(VirtualPlayerModel, PlayerTrainingReport)> {
    let mut seqs = corpus_sequences(corpus)?;
    if seqs.len() < 2 {
        return Err(Error::Config("corpus has fewer than two player sequences".into()));
    }
    if cfg.batch_size == 0 || cfg.eval_every == 0 {
        return Err(Error::Config("batch size and evaluation interval must be positive".into()));
    }
    let mut rng = stream(seed, &[TRAIN_STREAM]);
    seqs.shuffle(&mut rng);
    let n_val = ((seqs.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, seqs.len() - 1);
    let train = seqs.split_off(n_val);
    let val = seqs;

    let mut model = VirtualPlayerModel::init(rng.random());
    let mut opt = OptimizerState::new(cfg.optimizer, &model.params);
    let initial_ce = evaluate_cross_entropy(&model, &val)?;
    let mut best = (initial_ce, model.clone());
    let mut curve = vec![(0, initial_ce)];

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    for update in 1..=cfg.updates {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&train[order[cursor]]);
            cursor += 1;
        }
        let mut g = Graph::new();
        let ids = model.params.attach(&mut g);
        let nodes = VirtualPlayerModel::nodes(&ids);
        let (mut loss, _) = sequence_loss(&mut g, nodes, &batch, cfg.entropy_weight)?;
        if cfg.l2_weight > 0.0 {
            let mut sq = Vec::with_capacity(ids.len());
            for &p in &ids {
                let pp = g.mul(p, p)?;
                sq.push(g.sum(pp));
            }
            let l2 = sum_nodes(&mut g, &sq)?;
            let l2 = g.scale(l2, cfg.l2_weight);
            loss = g.add(loss, l2)?;
        }
        if !g.scalar(loss).is_finite() {
            return Err(Error::Diverged(format!("player loss at update {update}")));
        }
        let grads = g.backward(loss)?;
        let grads = grads.collect(&ids, model.params.values());
        opt.update(&mut model.params, &grads)?;

        if update % cfg.eval_every == 0 || update == cfg.updates {
            let ce = evaluate_cross_entropy(&model, &val)?;
            curve.push((update, ce));
            if ce < best.0 {
                best = (ce, model.clone());
            }
        }
    }
    let report = PlayerTrainingReport {
        updates: cfg.updates,
        train_sequences: train.len(),
        validation_sequences: val.len(),
        validation_ce: best.0,
        uniform_ce: uniform_cross_entropy(&val),
        initial_validation_ce: initial_ce,
        curve,
    };
    Ok((best.1, report))
}
