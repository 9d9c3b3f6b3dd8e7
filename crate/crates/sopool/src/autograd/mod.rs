//! Minimal reverse-mode automatic differentiation on dense matrices.
//!
//! A [`Tape`] records every forward operation as an append-only list of
//! nodes; inputs always reference earlier nodes, so the tape is already in
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! The op set is exactly what the models here need: matrix products,
//! elementwise arithmetic, column softmax, batch normalization, dropout,
//! cross-entropy, neighbor aggregation over graphs, row reductions, and the
//! slice/concat plumbing for block-diagonal minibatches.

mod adam;
pub mod gradcheck;

pub use adam::{
    adam_step, adam_step_with, glorot_uniform, AdamHyper, ParamId, ParamSet, Parameter,
};

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Undirected neighbor lists for one (possibly batched) graph.
/// Self entries are never stored; aggregation rules add them explicitly.
#[derive(Debug, Clone, Default)]
pub struct NeighborLists {
    lists: Vec<Vec<usize>>,
}

impl NeighborLists {
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut lists = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            debug_assert!(a < node_count && b < node_count && a != b);
            lists[a].push(b);
            lists[b].push(a);
        }
        NeighborLists { lists }
    }

    pub fn node_count(&self) -> usize {
        self.lists.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.lists[v].len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.lists[v]
    }
}

/// Per-column running statistics for batch normalization.
#[derive(Debug, Clone)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        RunningStats {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// x (n×f) + row (1×f), broadcast over rows.
    AddRowBroadcast(NodeId, NodeId),
    /// x (n×f) − row (1×f), broadcast over rows.
    SubRowBroadcast(NodeId, NodeId),
    Relu(NodeId),
    Scale(NodeId, f64),
    /// x scaled by a 1×1 node.
    ScaleByScalar(NodeId, NodeId),
    SoftmaxCols(NodeId),
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        normalized: DenseMatrix,
        inv_std: Vec<f64>,
        train: bool,
    },
    Dropout {
        x: NodeId,
        mask: DenseMatrix,
    },
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        softmax: DenseMatrix,
    },
    /// Row v = sum of x over the neighbors of v (self excluded).
    NeighborSum {
        x: NodeId,
        graph: Rc<NeighborLists>,
    },
    /// Row v = elementwise max of x over {v} ∪ neighbors(v); backward routes
    /// entirely through the cached winners.
    NeighborMax {
        x: NodeId,
        winners: Vec<usize>,
    },
    /// Row v scaled by a fixed per-row weight.
    RowScale {
        x: NodeId,
        weights: Rc<Vec<f64>>,
    },
    RowsSum(NodeId),
    RowsMean(NodeId),
    RowsMax {
        x: NodeId,
        winners: Vec<usize>,
    },
    SliceRows {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    BlockDiag(Vec<NodeId>),
    Reshape(NodeId),
    SumAll(NodeId),
}

struct Node {
    value: DenseMatrix,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<DenseMatrix>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target with respect to this node;
    /// `None` if the node did not participate.
    pub fn grad(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.grads[id.0].as_ref()
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Registers a trainable parameter's current value as a leaf. After
    /// `backward`, [`Tape::collect_param_grads`] accumulates the leaf
    /// gradient back into the parameter.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        self.push(params.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn add_row_broadcast(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        self.check_row_broadcast("add_row_broadcast", x, row)?;
        let (xm, rm) = (self.value(x), self.value(row));
        let mut value = xm.clone();
        for i in 0..value.rows() {
            for j in 0..value.cols() {
                value.set(i, j, value.get(i, j) + rm.get(0, j));
            }
        }
        Ok(self.push(value, Op::AddRowBroadcast(x, row)))
    }

    pub fn sub_row_broadcast(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        self.check_row_broadcast("sub_row_broadcast", x, row)?;
        let (xm, rm) = (self.value(x), self.value(row));
        let mut value = xm.clone();
        for i in 0..value.rows() {
            for j in 0..value.cols() {
                value.set(i, j, value.get(i, j) - rm.get(0, j));
            }
        }
        Ok(self.push(value, Op::SubRowBroadcast(x, row)))
    }

    fn check_row_broadcast(&self, op: &'static str, x: NodeId, row: NodeId) -> Result<()> {
        let (xm, rm) = (self.value(x), self.value(row));
        if rm.rows() != 1 || rm.cols() != xm.cols() {
            return Err(Error::shape(op, xm.shape_string(), rm.shape_string()));
        }
        Ok(())
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).scale(c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn scale_by_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if !self.value(s).is_scalar() {
            return Err(Error::shape(
                "scale_by_scalar",
                "1x1",
                self.value(s).shape_string(),
            ));
        }
        let c = self.value(s).get(0, 0);
        let value = self.value(x).scale(c);
        Ok(self.push(value, Op::ScaleByScalar(x, s)))
    }

    /// Numerically stabilized softmax over a single column vector.
    pub fn softmax_columns(&mut self, v: NodeId) -> Result<NodeId> {
        let vm = self.value(v);
        if vm.rows() == 0 {
            return Err(Error::EmptyInput("softmax_columns"));
        }
        if vm.cols() != 1 {
            return Err(Error::shape("softmax_columns", "nx1", vm.shape_string()));
        }
        let max = vm.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = vm.data().iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let value = DenseMatrix::from_vec(vm.rows(), 1, exps.iter().map(|&e| e / total).collect())?;
        Ok(self.push(value, Op::SoftmaxCols(v)))
    }

    /// Per-column batch normalization. Train mode normalizes with batch
    /// statistics and folds them into `stats` with momentum
    /// [`BATCH_NORM_MOMENTUM`]; eval mode normalizes with `stats` as-is.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        stats: &mut RunningStats,
        mode: Mode,
    ) -> Result<NodeId> {
        let xm = self.value(x).clone();
        let (n, f) = xm.shape();
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let m = self.value(id);
            if m.rows() != 1 || m.cols() != f {
                let _ = name;
                return Err(Error::shape(
                    "batch_norm",
                    format!("1x{f}"),
                    m.shape_string(),
                ));
            }
        }
        if stats.mean.len() != f {
            return Err(Error::shape(
                "batch_norm",
                format!("1x{f}"),
                format!("running stats dim {}", stats.mean.len()),
            ));
        }
        let train = mode == Mode::Train;
        if train && n < 2 {
            return Err(Error::DegenerateBatch(n));
        }

        let (mean, var): (Vec<f64>, Vec<f64>) = if train {
            let mut mean = vec![0.0; f];
            let mut var = vec![0.0; f];
            for i in 0..n {
                for j in 0..f {
                    mean[j] += xm.get(i, j);
                }
            }
            for m in &mut mean {
                *m /= n as f64;
            }
            for i in 0..n {
                for j in 0..f {
                    let d = xm.get(i, j) - mean[j];
                    var[j] += d * d;
                }
            }
            for v in &mut var {
                *v /= n as f64;
            }
            for j in 0..f {
                stats.mean[j] =
                    (1.0 - BATCH_NORM_MOMENTUM) * stats.mean[j] + BATCH_NORM_MOMENTUM * mean[j];
                stats.var[j] =
                    (1.0 - BATCH_NORM_MOMENTUM) * stats.var[j] + BATCH_NORM_MOMENTUM * var[j];
            }
            (mean, var)
        } else {
            (stats.mean.clone(), stats.var.clone())
        };

        let inv_std: Vec<f64> = var
            .iter()
            .map(|&v| 1.0 / (v + BATCH_NORM_EPS).sqrt())
            .collect();
        let mut normalized = DenseMatrix::zeros(n, f);
        for i in 0..n {
            for j in 0..f {
                normalized.set(i, j, (xm.get(i, j) - mean[j]) * inv_std[j]);
            }
        }
        let (gm, bm) = (self.value(gamma).clone(), self.value(beta).clone());
        let mut value = DenseMatrix::zeros(n, f);
        for i in 0..n {
            for j in 0..f {
                value.set(i, j, gm.get(0, j) * normalized.get(i, j) + bm.get(0, j));
            }
        }
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
                train,
            },
        ))
    }

    /// Inverted dropout: train mode zeroes entries with probability `rate`
    /// and scales survivors by 1/(1−rate); eval mode (or rate 0) is the
    /// identity and returns `x` unchanged.
    pub fn dropout(&mut self, x: NodeId, rate: f64, mode: Mode, rng: &mut Rng) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let xm = self.value(x);
        let keep_scale = 1.0 / (1.0 - rate);
        let mask = DenseMatrix::from_vec(
            xm.rows(),
            xm.cols(),
            (0..xm.rows() * xm.cols())
                .map(|_| {
                    if rng.uniform() < rate {
                        0.0
                    } else {
                        keep_scale
                    }
                })
                .collect(),
        )?;
        let value = xm.hadamard(&mask)?;
        Ok(self.push(value, Op::Dropout { x, mask }))
    }

    /// Mean negative log-softmax of the true class over the batch.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lm = self.value(logits);
        let (b, c) = lm.shape();
        if b == 0 {
            return Err(Error::EmptyInput("cross_entropy"));
        }
        if labels.len() != b {
            return Err(Error::shape("cross_entropy", b, labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Label {
                label: bad,
                classes: c,
            });
        }
        let mut softmax = DenseMatrix::zeros(b, c);
        let mut loss = 0.0;
        for i in 0..b {
            let row = lm.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for j in 0..c {
                softmax.set(i, j, exps[j] / total);
            }
            // log-space form stays finite even when the true-class
            // probability underflows
            loss += max + total.ln() - row[labels[i]];
        }
        loss /= b as f64;
        Ok(self.push(
            DenseMatrix::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                softmax,
            },
        ))
    }

    pub fn neighbor_sum(&mut self, x: NodeId, graph: &Rc<NeighborLists>) -> Result<NodeId> {
        let xm = self.value(x);
        if xm.rows() != graph.node_count() {
            return Err(Error::shape(
                "neighbor_sum",
                format!("{} nodes", graph.node_count()),
                xm.shape_string(),
            ));
        }
        let f = xm.cols();
        let mut value = DenseMatrix::zeros(xm.rows(), f);
        for v in 0..xm.rows() {
            for &u in graph.neighbors(v) {
                for j in 0..f {
                    value.set(v, j, value.get(v, j) + xm.get(u, j));
                }
            }
        }
        Ok(self.push(
            value,
            Op::NeighborSum {
                x,
                graph: Rc::clone(graph),
            },
        ))
    }

    /// Elementwise max over the node itself and its neighbors.
    pub fn neighbor_max(&mut self, x: NodeId, graph: &Rc<NeighborLists>) -> Result<NodeId> {
        let xm = self.value(x);
        if xm.rows() != graph.node_count() {
            return Err(Error::shape(
                "neighbor_max",
                format!("{} nodes", graph.node_count()),
                xm.shape_string(),
            ));
        }
        let (n, f) = xm.shape();
        let mut value = DenseMatrix::zeros(n, f);
        let mut winners = vec![0usize; n * f];
        for v in 0..n {
            for j in 0..f {
                let mut best = xm.get(v, j);
                let mut who = v;
                for &u in graph.neighbors(v) {
                    let cand = xm.get(u, j);
                    if cand > best {
                        best = cand;
                        who = u;
                    }
                }
                value.set(v, j, best);
                winners[v * f + j] = who;
            }
        }
        Ok(self.push(value, Op::NeighborMax { x, winners }))
    }

    /// Scales each row by a fixed (non-differentiable) weight.
    pub fn row_scale(&mut self, x: NodeId, weights: Rc<Vec<f64>>) -> Result<NodeId> {
        let xm = self.value(x);
        if xm.rows() != weights.len() {
            return Err(Error::shape("row_scale", xm.rows(), weights.len()));
        }
        let mut value = xm.clone();
        for i in 0..value.rows() {
            for j in 0..value.cols() {
                value.set(i, j, value.get(i, j) * weights[i]);
            }
        }
        Ok(self.push(value, Op::RowScale { x, weights }))
    }

    pub fn rows_sum(&mut self, x: NodeId) -> NodeId {
        let xm = self.value(x);
        let mut value = DenseMatrix::zeros(1, xm.cols());
        for i in 0..xm.rows() {
            for j in 0..xm.cols() {
                value.set(0, j, value.get(0, j) + xm.get(i, j));
            }
        }
        self.push(value, Op::RowsSum(x))
    }

    pub fn rows_mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).rows();
        let sum = {
            let xm = self.value(x);
            let mut value = DenseMatrix::zeros(1, xm.cols());
            for i in 0..xm.rows() {
                for j in 0..xm.cols() {
                    value.set(0, j, value.get(0, j) + xm.get(i, j));
                }
            }
            value
        };
        self.push(sum.scale(1.0 / n as f64), Op::RowsMean(x))
    }

    pub fn rows_max(&mut self, x: NodeId) -> NodeId {
        let xm = self.value(x);
        let (n, f) = xm.shape();
        let mut value = DenseMatrix::zeros(1, f);
        let mut winners = vec![0usize; f];
        for j in 0..f {
            let mut best = xm.get(0, j);
            let mut who = 0;
            for i in 1..n {
                if xm.get(i, j) > best {
                    best = xm.get(i, j);
                    who = i;
                }
            }
            value.set(0, j, best);
            winners[j] = who;
        }
        self.push(value, Op::RowsMax { x, winners })
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xm = self.value(x);
        if start + len > xm.rows() {
            return Err(Error::shape(
                "slice_rows",
                xm.shape_string(),
                format!("rows {start}..{}", start + len),
            ));
        }
        let mut value = DenseMatrix::zeros(len, xm.cols());
        for i in 0..len {
            for j in 0..xm.cols() {
                value.set(i, j, xm.get(start + i, j));
            }
        }
        Ok(self.push(value, Op::SliceRows { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_cols"));
        }
        let n = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = DenseMatrix::zeros(n, total);
        let mut offset = 0;
        for &p in parts {
            let pm = self.value(p);
            if pm.rows() != n {
                return Err(Error::shape("concat_cols", n, pm.rows()));
            }
            for i in 0..n {
                for j in 0..pm.cols() {
                    value.set(i, offset + j, pm.get(i, j));
                }
            }
            offset += pm.cols();
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_rows"));
        }
        let f = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut value = DenseMatrix::zeros(total, f);
        let mut offset = 0;
        for &p in parts {
            let pm = self.value(p);
            if pm.cols() != f {
                return Err(Error::shape("concat_rows", f, pm.cols()));
            }
            for i in 0..pm.rows() {
                for j in 0..f {
                    value.set(offset + i, j, pm.get(i, j));
                }
            }
            offset += pm.rows();
        }
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Stacks matrices along the diagonal; off-diagonal blocks are zero.
    pub fn block_diag(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("block_diag"));
        }
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = DenseMatrix::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for &p in parts {
            let pm = self.value(p);
            for i in 0..pm.rows() {
                for j in 0..pm.cols() {
                    value.set(r0 + i, c0 + j, pm.get(i, j));
                }
            }
            r0 += pm.rows();
            c0 += pm.cols();
        }
        Ok(self.push(value, Op::BlockDiag(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let value = self.value(x).reshaped(rows, cols)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let value = DenseMatrix::scalar(self.value(x).sum());
        self.push(value, Op::SumAll(x))
    }

    fn accumulate(
        grads: &mut [Option<DenseMatrix>],
        id: NodeId,
        shape: (usize, usize),
        add: impl FnOnce(&mut DenseMatrix),
    ) {
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(DenseMatrix::zeros(shape.0, shape.1));
        }
        add(slot.as_mut().unwrap());
    }

    /// Reverse sweep from a scalar loss node. Gradients of leaves (constants
    /// and parameters) are available via [`Tape::grad`] afterwards.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}",
                self.value(loss).shape_string()
            )));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        let Tape { nodes, grads } = self;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let shape_of = |id: NodeId| nodes[id.0].value.shape();
            match &nodes[i].op {
                Op::Leaf | Op::Param(_) => {}
                Op::Matmul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let da = g.matmul(&bv.transpose()).expect("matmul backward shape");
                    let db = av.transpose().matmul(&g).expect("matmul backward shape");
                    Self::accumulate(grads, *a, shape_of(*a), |m| m.add_assign_scaled(&da, 1.0));
                    Self::accumulate(grads, *b, shape_of(*b), |m| m.add_assign_scaled(&db, 1.0));
                }
                Op::Transpose(a) => {
                    let da = g.transpose();
                    Self::accumulate(grads, *a, shape_of(*a), |m| m.add_assign_scaled(&da, 1.0));
                }
                Op::Add(a, b) => {
                    Self::accumulate(grads, *a, shape_of(*a), |m| m.add_assign_scaled(&g, 1.0));
                    Self::accumulate(grads, *b, shape_of(*b), |m| m.add_assign_scaled(&g, 1.0));
                }
                Op::Sub(a, b) => {
                    Self::accumulate(grads, *a, shape_of(*a), |m| m.add_assign_scaled(&g, 1.0));
                    Self::accumulate(grads, *b, shape_of(*b), |m| m.add_assign_scaled(&g, -1.0));
                }
                Op::Mul(a, b) => {
                    let da = g.hadamard(&nodes[b.0].value).expect("mul backward shape");
                    let db = g.hadamard(&nodes[a.0].value).expect("mul backward shape");
                    Self::accumulate(grads, *a, shape_of(*a), |m| m.add_assign_scaled(&da, 1.0));
                    Self::accumulate(grads, *b, shape_of(*b), |m| m.add_assign_scaled(&db, 1.0));
                }
                Op::AddRowBroadcast(x, row) | Op::SubRowBroadcast(x, row) => {
                    let sign = if matches!(nodes[i].op, Op::AddRowBroadcast(..)) {
                        1.0
                    } else {
                        -1.0
                    };
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&g, 1.0));
                    let cols = g.cols();
                    let mut drow = DenseMatrix::zeros(1, cols);
                    for r in 0..g.rows() {
                        for j in 0..cols {
                            drow.set(0, j, drow.get(0, j) + g.get(r, j));
                        }
                    }
                    Self::accumulate(grads, *row, shape_of(*row), |m| {
                        m.add_assign_scaled(&drow, sign)
                    });
                }
                Op::Relu(x) => {
                    // Subgradient 0 at 0.
                    let xv = &nodes[x.0].value;
                    let dx = DenseMatrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(xv.data())
                            .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                            .collect(),
                    )
                    .expect("relu backward shape");
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&g, c));
                }
                Op::ScaleByScalar(x, s) => {
                    let c = nodes[s.0].value.get(0, 0);
                    let ds = g
                        .data()
                        .iter()
                        .zip(nodes[x.0].value.data())
                        .map(|(&gi, &xi)| gi * xi)
                        .sum::<f64>();
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&g, c));
                    Self::accumulate(grads, *s, (1, 1), |m| {
                        m.add_assign_scaled(&DenseMatrix::scalar(ds), 1.0)
                    });
                }
                Op::SoftmaxCols(x) => {
                    let s = &nodes[i].value;
                    let dot: f64 = g
                        .data()
                        .iter()
                        .zip(s.data())
                        .map(|(&gi, &si)| gi * si)
                        .sum();
                    let dx = DenseMatrix::from_vec(
                        s.rows(),
                        1,
                        s.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&si, &gi)| si * (gi - dot))
                            .collect(),
                    )
                    .expect("softmax backward shape");
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                    train,
                } => {
                    let (n, f) = normalized.shape();
                    let gv = &nodes[gamma.0].value;
                    let mut dgamma = DenseMatrix::zeros(1, f);
                    let mut dbeta = DenseMatrix::zeros(1, f);
                    for r in 0..n {
                        for j in 0..f {
                            dgamma.set(0, j, dgamma.get(0, j) + g.get(r, j) * normalized.get(r, j));
                            dbeta.set(0, j, dbeta.get(0, j) + g.get(r, j));
                        }
                    }
                    let mut dx = DenseMatrix::zeros(n, f);
                    if *train {
                        // d_norm = g·γ; dx couples through batch mean/var.
                        for j in 0..f {
                            let gamma_j = gv.get(0, j);
                            let mut sum_dn = 0.0;
                            let mut sum_dn_xhat = 0.0;
                            for r in 0..n {
                                let dn = g.get(r, j) * gamma_j;
                                sum_dn += dn;
                                sum_dn_xhat += dn * normalized.get(r, j);
                            }
                            for r in 0..n {
                                let dn = g.get(r, j) * gamma_j;
                                let v = inv_std[j]
                                    * (dn
                                        - sum_dn / n as f64
                                        - normalized.get(r, j) * sum_dn_xhat / n as f64);
                                dx.set(r, j, v);
                            }
                        }
                    } else {
                        for j in 0..f {
                            let k = gv.get(0, j) * inv_std[j];
                            for r in 0..n {
                                dx.set(r, j, g.get(r, j) * k);
                            }
                        }
                    }
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&dx, 1.0));
                    Self::accumulate(grads, *gamma, shape_of(*gamma), |m| {
                        m.add_assign_scaled(&dgamma, 1.0)
                    });
                    Self::accumulate(grads, *beta, shape_of(*beta), |m| {
                        m.add_assign_scaled(&dbeta, 1.0)
                    });
                }
                Op::Dropout { x, mask } => {
                    let dx = g.hadamard(mask).expect("dropout backward shape");
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    softmax,
                } => {
                    let s = g.get(0, 0);
                    let (b, c) = softmax.shape();
                    let mut dl = softmax.clone();
                    for (r, &y) in labels.iter().enumerate() {
                        dl.set(r, y, dl.get(r, y) - 1.0);
                    }
                    let scale = s / b as f64;
                    let _ = c;
                    Self::accumulate(grads, *logits, shape_of(*logits), |m| {
                        m.add_assign_scaled(&dl, scale)
                    });
                }
                Op::NeighborSum { x, graph } => {
                    let (n, f) = g.shape();
                    let mut dx = DenseMatrix::zeros(n, f);
                    for v in 0..n {
                        for &u in graph.neighbors(v) {
                            for j in 0..f {
                                dx.set(u, j, dx.get(u, j) + g.get(v, j));
                            }
                        }
                    }
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::NeighborMax { x, winners } => {
                    let (n, f) = g.shape();
                    let mut dx = DenseMatrix::zeros(n, f);
                    for v in 0..n {
                        for j in 0..f {
                            let w = winners[v * f + j];
                            dx.set(w, j, dx.get(w, j) + g.get(v, j));
                        }
                    }
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::RowScale { x, weights } => {
                    let mut dx = g.clone();
                    for r in 0..dx.rows() {
                        for j in 0..dx.cols() {
                            dx.set(r, j, dx.get(r, j) * weights[r]);
                        }
                    }
                    Self::accumulate(grads, *x, shape_of(*x), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::RowsSum(x) => {
                    let (n, f) = shape_of(*x);
                    let mut dx = DenseMatrix::zeros(n, f);
                    for r in 0..n {
                        for j in 0..f {
                            dx.set(r, j, g.get(0, j));
                        }
                    }
                    Self::accumulate(grads, *x, (n, f), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::RowsMean(x) => {
                    let (n, f) = shape_of(*x);
                    let mut dx = DenseMatrix::zeros(n, f);
                    for r in 0..n {
                        for j in 0..f {
                            dx.set(r, j, g.get(0, j) / n as f64);
                        }
                    }
                    Self::accumulate(grads, *x, (n, f), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::RowsMax { x, winners } => {
                    let (n, f) = shape_of(*x);
                    let mut dx = DenseMatrix::zeros(n, f);
                    for j in 0..f {
                        dx.set(winners[j], j, g.get(0, j));
                    }
                    Self::accumulate(grads, *x, (n, f), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::SliceRows { x, start } => {
                    let (n, f) = shape_of(*x);
                    let start = *start;
                    let mut dx = DenseMatrix::zeros(n, f);
                    for r in 0..g.rows() {
                        for j in 0..f {
                            dx.set(start + r, j, g.get(r, j));
                        }
                    }
                    Self::accumulate(grads, *x, (n, f), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let (n, f) = shape_of(p);
                        let mut dp = DenseMatrix::zeros(n, f);
                        for r in 0..n {
                            for j in 0..f {
                                dp.set(r, j, g.get(r, offset + j));
                            }
                        }
                        Self::accumulate(grads, p, (n, f), |m| m.add_assign_scaled(&dp, 1.0));
                        offset += f;
                    }
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let (n, f) = shape_of(p);
                        let mut dp = DenseMatrix::zeros(n, f);
                        for r in 0..n {
                            for j in 0..f {
                                dp.set(r, j, g.get(offset + r, j));
                            }
                        }
                        Self::accumulate(grads, p, (n, f), |m| m.add_assign_scaled(&dp, 1.0));
                        offset += n;
                    }
                }
                Op::BlockDiag(parts) => {
                    let parts = parts.clone();
                    let (mut r0, mut c0) = (0, 0);
                    for p in parts {
                        let (n, f) = shape_of(p);
                        let mut dp = DenseMatrix::zeros(n, f);
                        for r in 0..n {
                            for j in 0..f {
                                dp.set(r, j, g.get(r0 + r, c0 + j));
                            }
                        }
                        Self::accumulate(grads, p, (n, f), |m| m.add_assign_scaled(&dp, 1.0));
                        r0 += n;
                        c0 += f;
                    }
                }
                Op::Reshape(x) => {
                    let (n, f) = shape_of(*x);
                    let dx = g.reshaped(n, f).expect("reshape backward shape");
                    Self::accumulate(grads, *x, (n, f), |m| m.add_assign_scaled(&dx, 1.0));
                }
                Op::SumAll(x) => {
                    let (n, f) = shape_of(*x);
                    let s = g.get(0, 0);
                    let dx = DenseMatrix::filled(n, f, s);
                    Self::accumulate(grads, *x, (n, f), |m| m.add_assign_scaled(&dx, 1.0));
                }
            }
            grads[i] = Some(g);
        }
        Ok(())
    }

    /// Adds leaf gradients into `Parameter::grad` for every parameter used
    /// on this tape. Parameters never touched by the loss keep their current
    /// (zero after `adam_step`) gradient.
    pub fn collect_param_grads(&self, params: &mut ParamSet) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pid) = node.op {
                if let Some(g) = &self.grads[i] {
                    params.get_mut(pid).grad.add_assign_scaled(g, 1.0);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_and_subgradient() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::from_rows(&[&[-1.0, 2.0]]).unwrap());
        let y = tape.relu(x);
        assert_eq!(
            tape.value(y),
            &DenseMatrix::from_rows(&[&[0.0, 2.0]]).unwrap()
        );
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        assert_eq!(
            tape.grad(x).unwrap(),
            &DenseMatrix::from_rows(&[&[0.0, 1.0]]).unwrap()
        );
    }

    #[test]
    fn add_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::from_rows(&[&[1.5, -2.0], &[0.25, 4.0]]).unwrap());
        let zero = tape.constant(DenseMatrix::zeros(2, 2));
        let y = tape.add(x, zero).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        let mut tape = Tape::new();
        let a = tape.constant(DenseMatrix::from_rows(&[&[0.0], &[0.0]]).unwrap());
        let sa = tape.softmax_columns(a).unwrap();
        assert_eq!(tape.value(sa).data(), &[0.5, 0.5]);

        let b = tape.constant(DenseMatrix::from_rows(&[&[1000.0], &[1000.0]]).unwrap());
        let sb = tape.softmax_columns(b).unwrap();
        assert!(tape.value(sb).all_finite());
        assert_eq!(tape.value(sb).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let mut tape = Tape::new();
            let n = 1 + rng.below(8);
            let v = DenseMatrix::from_vec(n, 1, (0..n).map(|_| rng.range(-5.0, 5.0)).collect())
                .unwrap();
            let s = tape.constant(v);
            let out = tape.softmax_columns(s).unwrap();
            assert!((tape.value(out).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        let mut tape = Tape::new();
        let v = tape.constant(DenseMatrix::zeros(0, 1));
        assert!(matches!(
            tape.softmax_columns(v),
            Err(Error::EmptyInput("softmax_columns"))
        ));
    }

    #[test]
    fn cross_entropy_uniform_two_classes() {
        let mut tape = Tape::new();
        let logits = tape.constant(DenseMatrix::zeros(3, 2));
        let loss = tape.cross_entropy(logits, &[0, 1, 0]).unwrap();
        assert!((tape.value(loss).get(0, 0) - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_confident_logits_vanish() {
        let mut tape = Tape::new();
        let mut m = DenseMatrix::zeros(1, 3);
        m.set(0, 2, 100.0);
        let logits = tape.constant(m);
        let loss = tape.cross_entropy(logits, &[2]).unwrap();
        assert!(tape.value(loss).get(0, 0) < 1e-10);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut tape = Tape::new();
        let logits = tape.constant(DenseMatrix::zeros(1, 2));
        assert!(matches!(
            tape.cross_entropy(logits, &[2]),
            Err(Error::Label {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let w = tape.constant(DenseMatrix::from_rows(&[&[1.0, -2.0], &[3.0, 0.5]]).unwrap());
        let loss = tape.sum_all(w);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &DenseMatrix::filled(2, 2, 1.0));
    }

    #[test]
    fn backward_of_square_is_two_w() {
        let mut tape = Tape::new();
        let w = tape.constant(DenseMatrix::scalar(3.5));
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &DenseMatrix::scalar(7.0));
    }

    #[test]
    fn backward_rejects_matrix_loss() {
        let mut tape = Tape::new();
        let w = tape.constant(DenseMatrix::zeros(2, 2));
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn dropout_eval_and_zero_rate_are_identity() {
        let mut rng = Rng::new(3);
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::filled(4, 4, 2.0));
        let eval = tape.dropout(x, 0.7, Mode::Eval, &mut rng).unwrap();
        assert_eq!(eval, x);
        let zero = tape.dropout(x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(zero, x);
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = Rng::new(3);
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::zeros(2, 2));
        assert!(matches!(
            tape.dropout(x, 1.0, Mode::Train, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dropout_survivor_fraction_near_half() {
        let mut rng = Rng::new(12345);
        let mut tape = Tape::new();
        let n = 100_000;
        let x = tape.constant(DenseMatrix::filled(n, 1, 1.0));
        let y = tape.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
        let survivors = tape.value(y).data().iter().filter(|&&v| v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((0.49..=0.51).contains(&frac), "survivor fraction {frac}");
    }

    #[test]
    fn batch_norm_two_point_column() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::from_rows(&[&[1.0], &[3.0]]).unwrap());
        let gamma = tape.constant(DenseMatrix::filled(1, 1, 1.0));
        let beta = tape.constant(DenseMatrix::zeros(1, 1));
        let mut stats = RunningStats::new(1);
        let y = tape
            .batch_norm(x, gamma, beta, &mut stats, Mode::Train)
            .unwrap();
        // mean 2, std 1, up to the epsilon correction
        assert!((tape.value(y).get(0, 0) + 1.0).abs() < 1e-4);
        assert!((tape.value(y).get(1, 0) - 1.0).abs() < 1e-4);
        // running stats moved toward the batch
        assert!((stats.mean[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_eval_identity_under_unit_stats() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::from_rows(&[&[0.5, -1.0]]).unwrap());
        let gamma = tape.constant(DenseMatrix::filled(1, 2, 1.0));
        let beta = tape.constant(DenseMatrix::zeros(1, 2));
        let mut stats = RunningStats::new(2);
        let y = tape
            .batch_norm(x, gamma, beta, &mut stats, Mode::Eval)
            .unwrap();
        assert!(tape.value(y).max_abs_diff(tape.value(x)) < 1e-5);
    }

    #[test]
    fn batch_norm_rejects_single_row_train() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::zeros(1, 2));
        let gamma = tape.constant(DenseMatrix::filled(1, 2, 1.0));
        let beta = tape.constant(DenseMatrix::zeros(1, 2));
        let mut stats = RunningStats::new(2);
        assert!(matches!(
            tape.batch_norm(x, gamma, beta, &mut stats, Mode::Train),
            Err(Error::DegenerateBatch(1))
        ));
    }

    #[test]
    fn neighbor_sum_matches_dense_adjacency_product() {
        // star graph K_{1,3}: center 0
        let edges = [(0, 1), (0, 2), (0, 3)];
        let graph = Rc::new(NeighborLists::from_edges(4, &edges));
        let mut rng = Rng::new(8);
        let h =
            DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.range(-2.0, 2.0)).collect()).unwrap();

        let mut adj = DenseMatrix::zeros(4, 4);
        for &(a, b) in &edges {
            adj.set(a, b, 1.0);
            adj.set(b, a, 1.0);
        }
        let want = adj.matmul(&h).unwrap().add(&h).unwrap();

        let mut tape = Tape::new();
        let hx = tape.constant(h);
        let ns = tape.neighbor_sum(hx, &graph).unwrap();
        let got = tape.add(ns, hx).unwrap();
        assert!(tape.value(got).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn unreachable_parameters_keep_zero_grads() {
        let mut params = ParamSet::new();
        let used = params.add(DenseMatrix::scalar(2.0));
        let unused = params.add(DenseMatrix::scalar(5.0));
        let mut tape = Tape::new();
        let w = tape.param(&params, used);
        let loss = tape.sum_all(w);
        tape.backward(loss).unwrap();
        tape.collect_param_grads(&mut params);
        assert_eq!(params.get(used).grad, DenseMatrix::scalar(1.0));
        assert_eq!(params.get(unused).grad, DenseMatrix::scalar(0.0));
    }

    #[test]
    fn tape_replay_is_bit_identical() {
        let run = || {
            let mut rng = Rng::new(99);
            let mut tape = Tape::new();
            let x = tape.constant(
                DenseMatrix::from_vec(4, 4, (0..16).map(|_| rng.range(-1.0, 1.0)).collect())
                    .unwrap(),
            );
            let y = tape.relu(x);
            let d = tape.dropout(y, 0.3, Mode::Train, &mut rng).unwrap();
            let loss = tape.sum_all(d);
            tape.value(loss).get(0, 0)
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
