//! Parameter containers and the few layers the models are built from.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::graph::{Graph, Matrix, NodeId};
use crate::error::{shape_err, Error, Result};

/// An ordered, named collection of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.values[i])
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Adds every tensor to `g` as a differentiable leaf.
    pub fn attach(&self, g: &mut Graph) -> Vec<NodeId> {
        self.values.iter().map(|v| g.param(v.clone())).collect()
    }

    /// Adds every tensor to `g` as a constant.
    pub fn attach_frozen(&self, g: &mut Graph) -> Vec<NodeId> {
        self.values.iter().map(|v| g.constant(v.clone())).collect()
    }

    /// Checks that another set has identical names and shapes.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return shape_err("param_set", "parameter names differ");
        }
        for ((n, a), b) in self.names.iter().zip(&self.values).zip(&other.values) {
            if a.shape() != b.shape() {
                return shape_err(
                    "param_set",
                    format!("`{}`: {:?} vs {:?}", n, a.shape(), b.shape()),
                );
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    Matrix::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Pushes `{prefix}.w` (`out x in`) and `{prefix}.b` (`1 x out`).
pub fn init_linear<R: Rng + ?Sized>(
    params: &mut ParamSet,
    prefix: &str,
    inputs: usize,
    outputs: usize,
    rng: &mut R,
) {
    params.push(format!("{prefix}.w"), glorot_uniform(outputs, inputs, rng));
    params.push(format!("{prefix}.b"), Matrix::zeros((1, outputs)));
}

/// Graph handles for a linear layer.
#[derive(Debug, Clone, Copy)]
pub struct LinearNodes {
    pub w: NodeId,
    pub b: NodeId,
}

/// `y = x W^T + b` for a batch of row vectors.
pub fn linear_forward(g: &mut Graph, x: NodeId, layer: LinearNodes) -> Result<NodeId> {
    g.linear(x, layer.w, layer.b)
}

/// Gate blocks are stacked in the order input, forget, candidate, output.
pub const LSTM_GATES: usize = 4;

/// Weights of one LSTM cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H x input`
    pub w_ih: Matrix,
    /// `4H x H`
    pub w_hh: Matrix,
    /// `1 x 4H`
    pub bias: Matrix,
}

impl LstmParams {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w_ih: Matrix::zeros((LSTM_GATES * hidden, inputs)),
            w_hh: Matrix::zeros((LSTM_GATES * hidden, hidden)),
            bias: Matrix::zeros((1, LSTM_GATES * hidden)),
        }
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_ih: glorot_uniform(LSTM_GATES * hidden, inputs, rng),
            w_hh: glorot_uniform(LSTM_GATES * hidden, hidden, rng),
            bias: Matrix::zeros((1, LSTM_GATES * hidden)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.w_hh.nrows() != LSTM_GATES * h
            || self.w_ih.nrows() != LSTM_GATES * h
            || self.bias.shape() != [1, LSTM_GATES * h]
        {
            return shape_err(
                "lstm",
                format!(
                    "w_ih {:?}, w_hh {:?}, bias {:?}",
                    self.w_ih.shape(),
                    self.w_hh.shape(),
                    self.bias.shape()
                ),
            );
        }
        Ok(())
    }

    pub fn push_into(&self, params: &mut ParamSet, prefix: &str) {
        params.push(format!("{prefix}.w_ih"), self.w_ih.clone());
        params.push(format!("{prefix}.w_hh"), self.w_hh.clone());
        params.push(format!("{prefix}.b"), self.bias.clone());
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmNodes {
    pub w_ih: NodeId,
    pub w_hh: NodeId,
    pub bias: NodeId,
}

/// One LSTM cell update for a batch: returns `(h', c')`.
pub fn lstm_step(
    g: &mut Graph,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    p: LstmNodes,
) -> Result<(NodeId, NodeId)> {
    let hidden = g.value(p.w_hh).ncols();
    if g.value(h).ncols() != hidden || g.value(c).ncols() != hidden {
        return shape_err(
            "lstm_step",
            format!(
                "state {:?}/{:?} for hidden size {}",
                g.value(h).shape(),
                g.value(c).shape(),
                hidden
            ),
        );
    }
    if g.value(h).shape() != g.value(c).shape() || g.value(h).nrows() != g.value(x).nrows() {
        return shape_err("lstm_step", "batch sizes of x, h and c differ");
    }
    let xi = g.matmul_t(x, p.w_ih)?;
    let hh = g.matmul_t(h, p.w_hh)?;
    let pre = g.add(xi, hh)?;
    let gates = g.add_bias(pre, p.bias)?;

    let i = g.slice_cols(gates, 0, hidden)?;
    let f = g.slice_cols(gates, hidden, hidden)?;
    let cand = g.slice_cols(gates, 2 * hidden, hidden)?;
    let o = g.slice_cols(gates, 3 * hidden, hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);

    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn lstm_nodes(g: &mut Graph, p: &LstmParams) -> LstmNodes {
        LstmNodes {
            w_ih: g.constant(p.w_ih.clone()),
            w_hh: g.constant(p.w_hh.clone()),
            bias: g.constant(p.bias.clone()),
        }
    }

    #[test]
    fn linear_examples() {
        let mut g = Graph::new();
        let w = g.constant(array![[3.0, -1.0], [7.0, 2.0]]);
        let b = g.row(&[1.0, 2.0]);
        let x = g.row(&[0.0, 0.0]);
        let y = linear_forward(&mut g, x, LinearNodes { w, b }).unwrap();
        assert_eq!(g.value(y), &array![[1.0, 2.0]]);

        let w = g.constant(Matrix::eye(2));
        let b = g.row(&[0.0, 0.0]);
        let x = g.row(&[1.0, 0.0]);
        let y = linear_forward(&mut g, x, LinearNodes { w, b }).unwrap();
        assert_eq!(g.value(y), &array![[1.0, 0.0]]);

        let w = g.constant(array![[1.0, 1.0], [0.0, 1.0]]);
        let x = g.row(&[1.0, 2.0]);
        let y = linear_forward(&mut g, x, LinearNodes { w, b }).unwrap();
        assert_eq!(g.value(y), &array![[3.0, 2.0]]);
    }

    #[test]
    fn linear_rejects_mismatched_input() {
        let mut g = Graph::new();
        let w = g.constant(Matrix::eye(2));
        let b = g.row(&[0.0, 0.0]);
        let x = g.row(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            linear_forward(&mut g, x, LinearNodes { w, b }),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn lstm_all_zero_is_fixed_point() {
        let p = LstmParams::zeros(3, 16);
        let mut g = Graph::new();
        let nodes = lstm_nodes(&mut g, &p);
        let x = g.constant(Matrix::zeros((1, 3)));
        let h = g.constant(Matrix::zeros((1, 16)));
        let c = g.constant(Matrix::zeros((1, 16)));
        let (h2, c2) = lstm_step(&mut g, x, h, c, nodes).unwrap();
        assert!(g.value(h2).iter().all(|&v| v == 0.0));
        assert!(g.value(c2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_scalar_cell_by_hand() {
        let p = LstmParams::zeros(1, 1);
        let mut g = Graph::new();
        let nodes = lstm_nodes(&mut g, &p);
        let x = g.row(&[0.0]);
        let h = g.row(&[0.0]);
        let c = g.row(&[1.0]);
        let (h2, c2) = lstm_step(&mut g, x, h, c, nodes).unwrap();
        assert!((g.scalar(c2) - 0.5).abs() < 1e-15);
        let expected = 0.5 * 0.5f64.tanh();
        assert!((g.scalar(h2) - expected).abs() < 1e-15);
        assert!((g.scalar(h2) - 0.2311).abs() < 1e-4);
    }

    #[test]
    fn lstm_saturated_forget_gate_keeps_cell() {
        let mut p = LstmParams::zeros(2, 3);
        for j in 3..6 {
            p.bias[[0, j]] = 60.0;
        }
        let mut g = Graph::new();
        let nodes = lstm_nodes(&mut g, &p);
        let x = g.row(&[0.7, -0.3]);
        let h = g.row(&[0.1, 0.2, 0.3]);
        let c = g.row(&[0.5, -1.5, 2.0]);
        let (_, c2) = lstm_step(&mut g, x, h, c, nodes).unwrap();
        for (a, b) in g.value(c2).iter().zip([0.5, -1.5, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_rejects_wrong_state_size() {
        let p = LstmParams::zeros(2, 4);
        let mut g = Graph::new();
        let nodes = lstm_nodes(&mut g, &p);
        let x = g.row(&[0.0, 0.0]);
        let h = g.row(&[0.0; 3]);
        let c = g.row(&[0.0; 3]);
        assert!(lstm_step(&mut g, x, h, c, nodes).is_err());
    }
}
