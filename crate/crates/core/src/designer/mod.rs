//! Graph-network mechanism designer.
//!
//! Two graph networks run in sequence over the fully connected 4-node graph
//! of one round. Nodes carry `[e/10, c/10, c/e]`; edge and global inputs are
//! empty.
//!
//! ```text
//! GN1  e' = tanh(We1 [v_s, v_r])          v' = tanh(Wv1 [sum_in e', v])
//!      u' = tanh(Wu1 [sum e', sum v'])
//! GN2  e" = tanh(We2 [e', v'_s, v'_r, u'])  s = Wv2 [sum_in e", v', u']
//! weights = softmax(s) over the four nodes
//! ```

mod sim;
mod train;

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use serde_json::json;

use crate::error::{shape_err, Error, Result};
use crate::game::{Coins, PLAYERS};
use crate::mechanism::Jacobian;
use crate::nn::{init_linear, Graph, Matrix, NodeId, ParamSet, WeightFile};
use crate::rng::SimRng;

pub use sim::{batch_payouts, simulate_virtual_batch, BatchOutcome, BatchSpec};
pub use train::{
    evaluate_vote_share, initial_policy, scg_surrogate, summarize_shares, train_designer, TrainingConfig, TrainingOutcome,
    VoteShare,
};

pub const NODE_FEATURES: usize = 3;
pub const LATENT: usize = 32;
pub const EDGES: usize = PLAYERS * (PLAYERS - 1);
pub const MODEL_TYPE: &str = "designer_policy";

/// Directed `(sender, receiver)` pairs of the complete graph without self-loops.
pub fn edges() -> [(usize, usize); EDGES] {
    let mut out = [(0, 0); EDGES];
    let mut k = 0;
    for s in 0..PLAYERS {
        for r in 0..PLAYERS {
            if s != r {
                out[k] = (s, r);
                k += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignerObservation {
    pub nodes: [[f64; NODE_FEATURES]; PLAYERS],
    pub edges: [(usize, usize); EDGES],
}

pub fn build_observation(e: &Coins, c: &Coins) -> Result<DesignerObservation> {
    if let Some(i) = (0..PLAYERS).find(|&i| !(e[i] > 0.0)) {
        return Err(Error::Domain(format!("endowment of seat {i} is {}", e[i])));
    }
    Ok(DesignerObservation {
        nodes: std::array::from_fn(|i| [e[i] / 10.0, c[i] / 10.0, c[i] / e[i]]),
        edges: edges(),
    })
}

/// Node-feature rows for a batch of rounds, `4B x 3`.
pub fn node_features(e: &Matrix, c: &Matrix) -> Matrix {
    Matrix::from_shape_fn((e.nrows() * PLAYERS, NODE_FEATURES), |(row, f)| {
        let (b, i) = (row / PLAYERS, row % PLAYERS);
        match f {
            0 => e[[b, i]] / 10.0,
            1 => c[[b, i]] / 10.0,
            _ => c[[b, i]] / e[[b, i]],
        }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GnNodes {
    e1: (NodeId, NodeId),
    v1: (NodeId, NodeId),
    u1: (NodeId, NodeId),
    e2: (NodeId, NodeId),
    v2: (NodeId, NodeId),
}

/// Index lists for a batch of `B` graphs.
struct Topology {
    send: Vec<usize>,
    recv: Vec<usize>,
    edge_graph: Vec<usize>,
    node_graph: Vec<usize>,
}

impl Topology {
    fn new(batch: usize) -> Self {
        let mut t = Topology {
            send: Vec::with_capacity(batch * EDGES),
            recv: Vec::with_capacity(batch * EDGES),
            edge_graph: Vec::with_capacity(batch * EDGES),
            node_graph: Vec::with_capacity(batch * PLAYERS),
        };
        for b in 0..batch {
            for (s, r) in edges() {
                t.send.push(b * PLAYERS + s);
                t.recv.push(b * PLAYERS + r);
                t.edge_graph.push(b);
            }
            t.node_graph.extend(std::iter::repeat_n(b, PLAYERS));
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNetPolicy {
    params: ParamSet,
}

impl GraphNetPolicy {
    const LAYERS: [(&'static str, usize, usize); 5] = [
        ("gn1.edge", 2 * NODE_FEATURES, LATENT),
        ("gn1.node", LATENT + NODE_FEATURES, LATENT),
        ("gn1.global", 2 * LATENT, LATENT),
        ("gn2.edge", 4 * LATENT, LATENT),
        ("gn2.node", 3 * LATENT, 1),
    ];

    pub fn init(seed: u64) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, i, o) in Self::LAYERS {
            init_linear(&mut params, name, i, o, &mut rng);
        }
        Self { params }
    }

    /// All-zero weights: the uniform policy.
    pub fn zeros() -> Self {
        let mut p = Self::init(0);
        for v in p.params.values_mut() {
            v.fill(0.0);
        }
        p
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        Self::init(0).params.check_compatible(&params)?;
        Ok(Self { params })
    }

    fn nodes(ids: &[NodeId]) -> GnNodes {
        GnNodes {
            e1: (ids[0], ids[1]),
            v1: (ids[2], ids[3]),
            u1: (ids[4], ids[5]),
            e2: (ids[6], ids[7]),
            v2: (ids[8], ids[9]),
        }
    }

    pub fn attach(&self, g: &mut Graph) -> (GnNodes, Vec<NodeId>) {
        let ids = self.params.attach(g);
        (Self::nodes(&ids), ids)
    }

    pub fn attach_frozen(&self, g: &mut Graph) -> GnNodes {
        Self::nodes(&self.params.attach_frozen(g))
    }

    /// Redistribution weights (`B x 4`) for node features `x` (`4B x 3`).
    pub fn forward_graph(g: &mut Graph, p: GnNodes, x: NodeId) -> Result<NodeId> {
        let rows = g.value(x).nrows();
        if !rows.is_multiple_of(PLAYERS) || g.value(x).ncols() != NODE_FEATURES {
            return shape_err("gn_forward", format!("node features {:?}", g.value(x).shape()));
        }
        let batch = rows / PLAYERS;
        let t = Topology::new(batch);

        let xs = g.gather_rows(x, &t.send)?;
        let xr = g.gather_rows(x, &t.recv)?;
        let ein = g.concat_cols(&[xs, xr])?;
        let e1 = g.linear(ein, p.e1.0, p.e1.1)?;
        let e1 = g.tanh(e1);
        let agg = g.scatter_add_rows(e1, &t.recv, rows)?;
        let vin = g.concat_cols(&[agg, x])?;
        let v1 = g.linear(vin, p.v1.0, p.v1.1)?;
        let v1 = g.tanh(v1);
        let esum = g.scatter_add_rows(e1, &t.edge_graph, batch)?;
        let vsum = g.scatter_add_rows(v1, &t.node_graph, batch)?;
        let uin = g.concat_cols(&[esum, vsum])?;
        let u1 = g.linear(uin, p.u1.0, p.u1.1)?;
        let u1 = g.tanh(u1);

        let vs = g.gather_rows(v1, &t.send)?;
        let vr = g.gather_rows(v1, &t.recv)?;
        let ue = g.gather_rows(u1, &t.edge_graph)?;
        let ein2 = g.concat_cols(&[e1, vs, vr, ue])?;
        let e2 = g.linear(ein2, p.e2.0, p.e2.1)?;
        let e2 = g.tanh(e2);
        let agg2 = g.scatter_add_rows(e2, &t.recv, rows)?;
        let un = g.gather_rows(u1, &t.node_graph)?;
        let vin2 = g.concat_cols(&[agg2, v1, un])?;
        let score = g.linear(vin2, p.v2.0, p.v2.1)?;
        let score = g.reshape(score, batch, PLAYERS)?;
        g.masked_softmax(score, None)
    }

    /// Weights for a batch of rounds given as `B x 4` endowments and contributions.
    pub fn weights_batch(&self, e: &Matrix, c: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let p = self.attach_frozen(&mut g);
        let x = g.constant(node_features(e, c));
        let w = Self::forward_graph(&mut g, p, x)?;
        Ok(g.value(w).clone())
    }

    pub fn forward(&self, obs: &DesignerObservation) -> Result<[f64; PLAYERS]> {
        let x = Array2::from_shape_fn((PLAYERS, NODE_FEATURES), |(i, f)| obs.nodes[i][f]);
        let mut g = Graph::new();
        let p = self.attach_frozen(&mut g);
        let x = g.constant(x);
        let w = Self::forward_graph(&mut g, p, x)?;
        let w = g.value(w);
        Ok(std::array::from_fn(|i| w[[0, i]]))
    }

    pub fn weights(&self, e: &Coins, c: &Coins) -> Result<[f64; PLAYERS]> {
        self.forward(&build_observation(e, c)?)
    }

    /// `d y_i / d c_j` with `y = weights(e, c) * 1.6 * sum(c)`, by reverse mode.
    pub fn payout_jacobian(&self, e: &Coins, c: &Coins) -> Result<Jacobian> {
        build_observation(e, c)?;
        let mut g = Graph::new();
        let p = self.attach_frozen(&mut g);
        let cv = g.param(Array2::from_shape_fn((PLAYERS, 1), |(i, _)| c[i]));
        let ef = g.constant(Array2::from_shape_fn((PLAYERS, 1), |(i, _)| e[i] / 10.0));
        let inv_e = g.constant(Array2::from_shape_fn((PLAYERS, 1), |(i, _)| 1.0 / e[i]));
        let c10 = g.scale(cv, 0.1);
        let rho = g.mul(cv, inv_e)?;
        let x = g.concat_cols(&[ef, c10, rho])?;
        let w = Self::forward_graph(&mut g, p, x)?;
        let total = g.sum(cv);
        let pool = g.scale(total, crate::game::GROWTH);
        let y = g.mul_col(w, pool)?;
        let mut jac = [[0.0; PLAYERS]; PLAYERS];
        for (i, row) in jac.iter_mut().enumerate() {
            let yi = g.slice_cols(y, i, 1)?;
            let grads = g.backward(yi)?;
            let d = grads.get_or_zeros(cv, g.value(cv));
            for (j, v) in row.iter_mut().enumerate() {
                *v = d[[j, 0]];
            }
        }
        Ok(jac)
    }

    pub fn to_weight_file(&self) -> Result<WeightFile> {
        WeightFile::from_params(
            MODEL_TYPE,
            json!({"node_features": NODE_FEATURES, "latent": LATENT}),
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

#[cfg(test)]
mod tests;
