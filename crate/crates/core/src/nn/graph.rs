//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! A [`Graph`] records every operation eagerly: the value of a node is
//! computed as soon as the node is created, so callers can sample from
//! intermediate results (e.g. a policy distribution) and keep building.
//! [`Graph::backward`] walks the recorded nodes once, in reverse creation
//! order, which is a valid reverse topological order because a node can
//! only reference nodes created before it.
//!
//! Everything is row-major `f64`. Vectors are `1 x n` matrices, batches of
//! vectors are `rows x n`. There is no general broadcasting; the few
//! broadcast patterns the models need (row bias, per-row scaling) are
//! explicit operations.

use ndarray::{Array2, Axis, Zip};

use crate::error::{shape_err, Error, Result};

pub type Matrix = Array2<f64>;

/// Additive penalty applied to masked logits before normalisation.
pub const MASK_PENALTY: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMulT(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
    ScatterAddRows(NodeId, Vec<usize>),
    Reshape(NodeId),
    SumAll(NodeId),
    RowSum(NodeId),
    MulCol(NodeId, NodeId),
    Pick(NodeId, Vec<usize>),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A single forward pass worth of recorded computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar root with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `id`, or zeros shaped like `like` when nothing flowed into it.
    pub fn get_or_zeros(&self, id: NodeId, like: &Matrix) -> Matrix {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.raw_dim()))
    }

    pub fn collect(&self, ids: &[NodeId], like: &[Matrix]) -> Vec<Matrix> {
        ids.iter()
            .zip(like)
            .map(|(&id, m)| self.get_or_zeros(id, m))
            .collect()
    }
}

fn dims(m: &Matrix) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// A leaf that gradients flow into.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that gradients never flow into.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn row(&mut self, values: &[f64]) -> NodeId {
        self.constant(Matrix::from_shape_vec((1, values.len()), values.to_vec()).unwrap())
    }

    /// Stop-gradient: a constant copy of `a`.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.constant(v)
    }

    /// `x * w^T`, with `x: n x k` and `w: m x k`.
    pub fn matmul_t(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ncols() != wv.ncols() {
            return shape_err(
                "matmul_t",
                format!("input {:?} against weights {:?}", xv.shape(), wv.shape()),
            );
        }
        let out = xv.dot(&wv.t());
        let rg = self.rg(&[x, w]);
        Ok(self.push(out, Op::MatMulT(x, w), rg))
    }

    /// Adds a `1 x m` bias to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.nrows() != 1 || bv.ncols() != xv.ncols() {
            return shape_err(
                "add_bias",
                format!("bias {:?} for input {:?}", bv.shape(), xv.shape()),
            );
        }
        let out = xv + &bv.row(0);
        let rg = self.rg(&[x, b]);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a) + self.value(b);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a) - self.value(b);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a) * self.value(b);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let out = self.value(a) * k;
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> NodeId {
        let out = self.value(a) + k;
        let rg = self.rg(&[a]);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).mapv(f64::tanh);
        let rg = self.rg(&[a]);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).mapv(sigmoid);
        let rg = self.rg(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).mapv(f64::exp);
        let rg = self.rg(&[a]);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).mapv(f64::ln);
        let rg = self.rg(&[a]);
        self.push(out, Op::Ln(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(first) = parts.first() else {
            return shape_err("concat_cols", "no inputs");
        };
        let rows = self.value(*first).nrows();
        if let Some(bad) = parts.iter().find(|p| self.value(**p).nrows() != rows) {
            return shape_err(
                "concat_cols",
                format!("{} rows vs {}", self.value(*bad).nrows(), rows),
            );
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let av = self.value(a);
        if start + len > av.ncols() {
            return shape_err(
                "slice_cols",
                format!("{}..{} of {} columns", start, start + len, av.ncols()),
            );
        }
        let out = av.slice(ndarray::s![.., start..start + len]).to_owned();
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    /// Output row `i` is input row `idx[i]`.
    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let av = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.nrows()) {
            return shape_err("gather_rows", format!("row {} of {}", bad, av.nrows()));
        }
        let out = av.select(Axis(0), idx);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), rg))
    }

    /// Output row `r` is the sum of input rows `i` with `idx[i] == r`.
    pub fn scatter_add_rows(&mut self, a: NodeId, idx: &[usize], rows: usize) -> Result<NodeId> {
        let av = self.value(a);
        if idx.len() != av.nrows() {
            return shape_err(
                "scatter_add_rows",
                format!("{} targets for {} rows", idx.len(), av.nrows()),
            );
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return shape_err("scatter_add_rows", format!("target {} of {}", bad, rows));
        }
        let mut out = Matrix::zeros((rows, av.ncols()));
        for (src, &dst) in idx.iter().enumerate() {
            let mut o = out.row_mut(dst);
            o += &av.row(src);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::ScatterAddRows(a, idx.to_vec()), rg))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let av = self.value(a);
        if av.len() != rows * cols {
            return shape_err(
                "reshape",
                format!("{:?} into ({}, {})", av.shape(), rows, cols),
            );
        }
        let flat: Vec<f64> = av.iter().copied().collect();
        let out = Matrix::from_shape_vec((rows, cols), flat).unwrap();
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Matrix::from_elem((1, 1), s), Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `n x m -> n x 1`.
    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(&[a]);
        self.push(out, Op::RowSum(a), rg)
    }

    /// Scales row `i` of `a` by `col[i, 0]`.
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let (av, cv) = (self.value(a), self.value(col));
        if cv.ncols() != 1 || cv.nrows() != av.nrows() {
            return shape_err(
                "mul_col",
                format!("column {:?} for {:?}", cv.shape(), av.shape()),
            );
        }
        let out = av * cv;
        let rg = self.rg(&[a, col]);
        Ok(self.push(out, Op::MulCol(a, col), rg))
    }

    /// Selects column `idx[i]` of row `i`, giving an `n x 1` node.
    pub fn pick(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let av = self.value(a);
        if idx.len() != av.nrows() {
            return shape_err("pick", format!("{} indices for {} rows", idx.len(), av.nrows()));
        }
        let mut out = Matrix::zeros((av.nrows(), 1));
        for (r, &c) in idx.iter().enumerate() {
            if c >= av.ncols() {
                return shape_err("pick", format!("column {} of {}", c, av.ncols()));
            }
            out[[r, 0]] = av[[r, c]];
        }
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Pick(a, idx.to_vec()), rg))
    }

    /// Row-wise softmax; masked entries (false) get probability exactly zero.
    pub fn masked_softmax(&mut self, logits: NodeId, mask: Option<&Array2<bool>>) -> Result<NodeId> {
        let out = row_softmax(self.value(logits), mask)?;
        let rg = self.rg(&[logits]);
        Ok(self.push(out, Op::SoftmaxRows(logits), rg))
    }

    /// Row-wise log-softmax with the same masking convention. Masked entries
    /// hold a large finite negative number so that `exp` yields exactly zero.
    pub fn masked_log_softmax(
        &mut self,
        logits: NodeId,
        mask: Option<&Array2<bool>>,
    ) -> Result<NodeId> {
        let lv = self.value(logits);
        check_mask("masked_log_softmax", lv, mask)?;
        let mut out = Matrix::zeros(lv.raw_dim());
        for (r, row) in lv.outer_iter().enumerate() {
            let allowed = |c: usize| mask.is_none_or(|m| m[[r, c]]);
            let max = (0..row.len())
                .filter(|&c| allowed(c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = max
                + (0..row.len())
                    .filter(|&c| allowed(c))
                    .map(|c| (row[c] - max).exp())
                    .sum::<f64>()
                    .ln();
            for c in 0..row.len() {
                out[[r, c]] = if allowed(c) {
                    row[c] - lse
                } else {
                    row[c] - MASK_PENALTY - lse
                };
            }
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(out, Op::LogSoftmaxRows(logits), rg))
    }

    /// `x * w^T + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.matmul_t(x, w)?;
        self.add_bias(y, b)
    }

    /// Reverse pass from a `1 x 1` root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let rv = self.value(root);
        if dims(rv) != (1, 1) {
            return shape_err("backward", format!("root must be 1x1, got {:?}", rv.shape()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::ones((1, 1)));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        if let Some(bad) = grads
            .iter()
            .enumerate()
            .find(|(_, g)| g.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())))
        {
            return Err(Error::NonFinite(format!("gradient of node {}", bad.0)));
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMulT(x, w) => {
                if self.requires_grad(*x) {
                    let d = g.dot(self.value(*w));
                    self.acc(grads, *x, d);
                }
                if self.requires_grad(*w) {
                    let d = g.t().dot(self.value(*x));
                    self.acc(grads, *w, d);
                }
            }
            Op::AddBias(x, b) => {
                self.acc_ref(grads, *x, g);
                if self.requires_grad(*b) {
                    let d = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.acc(grads, *b, d);
                }
            }
            Op::Add(a, b) => {
                self.acc_ref(grads, *a, g);
                self.acc_ref(grads, *b, g);
            }
            Op::Sub(a, b) => {
                self.acc_ref(grads, *a, g);
                if self.requires_grad(*b) {
                    self.acc(grads, *b, -g);
                }
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    self.acc(grads, *a, g * self.value(*b));
                }
                if self.requires_grad(*b) {
                    self.acc(grads, *b, g * self.value(*a));
                }
            }
            Op::Scale(a, k) => {
                if self.requires_grad(*a) {
                    self.acc(grads, *a, g * *k);
                }
            }
            Op::AddScalar(a) => self.acc_ref(grads, *a, g),
            Op::Tanh(a) => {
                if self.requires_grad(*a) {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(y).for_each(|d, &y| *d *= 1.0 - y * y);
                    self.acc(grads, *a, d);
                }
            }
            Op::Sigmoid(a) => {
                if self.requires_grad(*a) {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(y).for_each(|d, &y| *d *= y * (1.0 - y));
                    self.acc(grads, *a, d);
                }
            }
            Op::Exp(a) => {
                if self.requires_grad(*a) {
                    self.acc(grads, *a, g * y);
                }
            }
            Op::Ln(a) => {
                if self.requires_grad(*a) {
                    self.acc(grads, *a, g / self.value(*a));
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).ncols();
                    if self.requires_grad(*p) {
                        let d = g.slice(ndarray::s![.., start..start + w]).to_owned();
                        self.acc(grads, *p, d);
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                if self.requires_grad(*a) {
                    let mut d = Matrix::zeros(self.value(*a).raw_dim());
                    d.slice_mut(ndarray::s![.., *start..*start + g.ncols()])
                        .assign(g);
                    self.acc(grads, *a, d);
                }
            }
            Op::GatherRows(a, idx) => {
                if self.requires_grad(*a) {
                    let mut d = Matrix::zeros(self.value(*a).raw_dim());
                    for (r, &src) in idx.iter().enumerate() {
                        let mut row = d.row_mut(src);
                        row += &g.row(r);
                    }
                    self.acc(grads, *a, d);
                }
            }
            Op::ScatterAddRows(a, idx) => {
                if self.requires_grad(*a) {
                    self.acc(grads, *a, g.select(Axis(0), idx));
                }
            }
            Op::Reshape(a) => {
                if self.requires_grad(*a) {
                    let shape = self.value(*a).raw_dim();
                    let flat: Vec<f64> = g.iter().copied().collect();
                    self.acc(grads, *a, Matrix::from_shape_vec(shape, flat).unwrap());
                }
            }
            Op::SumAll(a) => {
                if self.requires_grad(*a) {
                    let d = Matrix::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    self.acc(grads, *a, d);
                }
            }
            Op::RowSum(a) => {
                if self.requires_grad(*a) {
                    let av = self.value(*a);
                    let mut d = Matrix::zeros(av.raw_dim());
                    for (r, mut row) in d.outer_iter_mut().enumerate() {
                        row.fill(g[[r, 0]]);
                    }
                    self.acc(grads, *a, d);
                }
            }
            Op::MulCol(a, col) => {
                if self.requires_grad(*a) {
                    self.acc(grads, *a, g * self.value(*col));
                }
                if self.requires_grad(*col) {
                    let d = (g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    self.acc(grads, *col, d);
                }
            }
            Op::Pick(a, idx) => {
                if self.requires_grad(*a) {
                    let mut d = Matrix::zeros(self.value(*a).raw_dim());
                    for (r, &c) in idx.iter().enumerate() {
                        d[[r, c]] = g[[r, 0]];
                    }
                    self.acc(grads, *a, d);
                }
            }
            Op::SoftmaxRows(a) => {
                if self.requires_grad(*a) {
                    let gy = g * y;
                    let s = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let d = &gy - &(y * &s);
                    self.acc(grads, *a, d);
                }
            }
            Op::LogSoftmaxRows(a) => {
                if self.requires_grad(*a) {
                    let p = y.mapv(f64::exp);
                    let s = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let d = g - &(&p * &s);
                    self.acc(grads, *a, d);
                }
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Matrix>], id: NodeId, d: Matrix) {
        if !self.requires_grad(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => *existing += &d,
            slot @ None => *slot = Some(d),
        }
    }

    fn acc_ref(&self, grads: &mut [Option<Matrix>], id: NodeId, d: &Matrix) {
        if !self.requires_grad(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => *existing += d,
            slot @ None => *slot = Some(d.clone()),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_mask(op: &'static str, logits: &Matrix, mask: Option<&Array2<bool>>) -> Result<()> {
    if let Some(m) = mask {
        if m.shape() != logits.shape() {
            return shape_err(op, format!("mask {:?} for logits {:?}", m.shape(), logits.shape()));
        }
        if let Some((row, _)) = m.outer_iter().enumerate().find(|(_, r)| !r.iter().any(|&b| b)) {
            return Err(Error::InvalidMask { row });
        }
    }
    Ok(())
}

/// Row-wise masked softmax on plain values.
pub fn row_softmax(logits: &Matrix, mask: Option<&Array2<bool>>) -> Result<Matrix> {
    check_mask("masked_softmax", logits, mask)?;
    let mut out = logits.clone();
    if let Some(m) = mask {
        Zip::from(&mut out).and(m).for_each(|x, &keep| {
            if !keep {
                *x -= MASK_PENALTY;
            }
        });
    }
    for mut row in out.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let total = row.sum();
        row.mapv_inplace(|x| x / total);
    }
    if let Some(m) = mask {
        Zip::from(&mut out).and(m).for_each(|x, &keep| {
            if !keep {
                *x = 0.0;
            }
        });
    }
    Ok(out)
}
