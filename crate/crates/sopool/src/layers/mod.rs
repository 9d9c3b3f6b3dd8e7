//! Message-passing layers: the seven GIN-style variants and the stack whose
//! per-layer outputs are concatenated into the node representation matrix.

use std::rc::Rc;

use crate::autograd::{Mode, NeighborLists, NodeId, ParamId, ParamSet, RunningStats, Tape};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

/// The GIN layer variants: aggregation (sum / mean / max) crossed with a
/// 2-layer MLP or a single ReLU(W·agg) transform. Mean-1-layer and
/// max-1-layer correspond to GCN- and GraphSAGE-style layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GnnVariant {
    SumMlpGin0,
    SumMlpGinEps,
    SumOneLayer,
    MeanMlp,
    MeanOneLayer,
    MaxMlp,
    MaxOneLayer,
}

impl GnnVariant {
    pub const ALL: [GnnVariant; 7] = [
        GnnVariant::SumMlpGin0,
        GnnVariant::SumMlpGinEps,
        GnnVariant::SumOneLayer,
        GnnVariant::MeanMlp,
        GnnVariant::MeanOneLayer,
        GnnVariant::MaxMlp,
        GnnVariant::MaxOneLayer,
    ];

    pub fn uses_mlp(self) -> bool {
        matches!(
            self,
            GnnVariant::SumMlpGin0
                | GnnVariant::SumMlpGinEps
                | GnnVariant::MeanMlp
                | GnnVariant::MaxMlp
        )
    }

    pub fn is_sum_family(self) -> bool {
        matches!(
            self,
            GnnVariant::SumMlpGin0 | GnnVariant::SumMlpGinEps | GnnVariant::SumOneLayer
        )
    }

    pub fn has_trainable_eps(self) -> bool {
        self == GnnVariant::SumMlpGinEps
    }
}

impl std::fmt::Display for GnnVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GnnVariant::SumMlpGin0 => "gin0",
            GnnVariant::SumMlpGinEps => "gin-eps",
            GnnVariant::SumOneLayer => "sum-1-layer",
            GnnVariant::MeanMlp => "mean-mlp",
            GnnVariant::MeanOneLayer => "gcn",
            GnnVariant::MaxMlp => "max-mlp",
            GnnVariant::MaxOneLayer => "sage",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for GnnVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum-mlp-gin0" | "gin0" | "gin-0" => Ok(GnnVariant::SumMlpGin0),
            "sum-mlp-gin-eps" | "gin-eps" | "gineps" => Ok(GnnVariant::SumMlpGinEps),
            "sum-1-layer" | "sum-1layer" => Ok(GnnVariant::SumOneLayer),
            "mean-mlp" => Ok(GnnVariant::MeanMlp),
            "mean-1-layer-gcn" | "mean-1-layer" | "gcn" => Ok(GnnVariant::MeanOneLayer),
            "max-mlp" => Ok(GnnVariant::MaxMlp),
            "max-1-layer-sage" | "max-1-layer" | "sage" => Ok(GnnVariant::MaxOneLayer),
            other => Err(Error::Config(format!("unknown gnn variant '{other}'"))),
        }
    }
}

/// Pure-matrix neighbor aggregation, the reference the tape ops are checked
/// against. Sum adds the node's own representation (scaled by 1+ε for the
/// ε rule); mean and max run over the node and its neighbors.
#[derive(Debug, Clone, Copy)]
pub enum Aggregation {
    Sum,
    SumEps(f64),
    Mean,
    Max,
}

pub fn aggregate_neighbors(
    graph: &NeighborLists,
    h: &DenseMatrix,
    agg: Aggregation,
) -> Result<DenseMatrix> {
    let n = graph.node_count();
    if h.rows() != n {
        return Err(Error::shape(
            "aggregate_neighbors",
            format!("{n} nodes"),
            h.shape_string(),
        ));
    }
    let f = h.cols();
    let mut out = DenseMatrix::zeros(n, f);
    for v in 0..n {
        match agg {
            Aggregation::Sum | Aggregation::SumEps(_) => {
                let self_scale = match agg {
                    Aggregation::SumEps(eps) => 1.0 + eps,
                    _ => 1.0,
                };
                for j in 0..f {
                    let mut acc = self_scale * h.get(v, j);
                    for &u in graph.neighbors(v) {
                        acc += h.get(u, j);
                    }
                    out.set(v, j, acc);
                }
            }
            Aggregation::Mean => {
                let count = (graph.degree(v) + 1) as f64;
                for j in 0..f {
                    let mut acc = h.get(v, j);
                    for &u in graph.neighbors(v) {
                        acc += h.get(u, j);
                    }
                    out.set(v, j, acc / count);
                }
            }
            Aggregation::Max => {
                for j in 0..f {
                    let mut best = h.get(v, j);
                    for &u in graph.neighbors(v) {
                        best = best.max(h.get(u, j));
                    }
                    out.set(v, j, best);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LinearLayer {
    pub fn new(in_dim: usize, out_dim: usize, params: &mut ParamSet, rng: &mut Rng) -> Self {
        LinearLayer {
            weight: params.add_glorot(in_dim, out_dim, rng),
            bias: params.add_zeros(1, out_dim),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w = tape.param(params, self.weight);
        let b = tape.param(params, self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_row_broadcast(xw, b)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: RunningStats,
}

impl BatchNormLayer {
    pub fn new(dim: usize, params: &mut ParamSet) -> Self {
        BatchNormLayer {
            gamma: params.add(DenseMatrix::filled(1, dim, 1.0)),
            beta: params.add_zeros(1, dim),
            stats: RunningStats::new(dim),
        }
    }

    pub fn forward(
        &mut self,
        tape: &mut Tape,
        params: &ParamSet,
        x: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let gamma = tape.param(params, self.gamma);
        let beta = tape.param(params, self.beta);
        tape.batch_norm(x, gamma, beta, &mut self.stats, mode)
    }
}

/// 2-layer perceptron: linear → batch norm → ReLU, twice.
#[derive(Debug, Clone)]
pub struct Mlp {
    lin1: LinearLayer,
    bn1: BatchNormLayer,
    lin2: LinearLayer,
    bn2: BatchNormLayer,
}

impl Mlp {
    pub fn new(in_dim: usize, hidden: usize, params: &mut ParamSet, rng: &mut Rng) -> Self {
        Mlp {
            lin1: LinearLayer::new(in_dim, hidden, params, rng),
            bn1: BatchNormLayer::new(hidden, params),
            lin2: LinearLayer::new(hidden, hidden, params, rng),
            bn2: BatchNormLayer::new(hidden, params),
        }
    }

    pub fn forward(
        &mut self,
        tape: &mut Tape,
        params: &ParamSet,
        x: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let a = self.lin1.forward(tape, params, x)?;
        let a = self.bn1.forward(tape, params, a, mode)?;
        let a = tape.relu(a);
        let b = self.lin2.forward(tape, params, a)?;
        let b = self.bn2.forward(tape, params, b, mode)?;
        Ok(tape.relu(b))
    }
}

enum Transform {
    Mlp(Mlp),
    OneLayer(LinearLayer),
}

/// One message-passing layer: neighbor aggregation followed by the variant's
/// transform. The ε of GIN-ε is a trainable scalar initialized to 0.
pub struct GnnLayer {
    pub variant: GnnVariant,
    transform: Transform,
    eps: Option<ParamId>,
}

impl GnnLayer {
    pub fn new(
        variant: GnnVariant,
        in_dim: usize,
        hidden: usize,
        params: &mut ParamSet,
        rng: &mut Rng,
    ) -> Self {
        let transform = if variant.uses_mlp() {
            Transform::Mlp(Mlp::new(in_dim, hidden, params, rng))
        } else {
            Transform::OneLayer(LinearLayer::new(in_dim, hidden, params, rng))
        };
        let eps = variant.has_trainable_eps().then(|| params.add_scalar(0.0));
        GnnLayer {
            variant,
            transform,
            eps,
        }
    }

    fn aggregate_sparse(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        graph: &Rc<NeighborLists>,
        h: NodeId,
    ) -> Result<NodeId> {
        match self.variant {
            GnnVariant::SumMlpGin0 | GnnVariant::SumOneLayer => {
                let ns = tape.neighbor_sum(h, graph)?;
                tape.add(h, ns)
            }
            GnnVariant::SumMlpGinEps => {
                let eps = tape.param(params, self.eps.expect("gin-eps has eps"));
                let one = tape.constant(DenseMatrix::scalar(1.0));
                let one_plus_eps = tape.add(one, eps)?;
                let scaled_self = tape.scale_by_scalar(h, one_plus_eps)?;
                let ns = tape.neighbor_sum(h, graph)?;
                tape.add(scaled_self, ns)
            }
            GnnVariant::MeanMlp | GnnVariant::MeanOneLayer => {
                let ns = tape.neighbor_sum(h, graph)?;
                let total = tape.add(h, ns)?;
                let weights: Vec<f64> = (0..graph.node_count())
                    .map(|v| 1.0 / (graph.degree(v) + 1) as f64)
                    .collect();
                tape.row_scale(total, Rc::new(weights))
            }
            GnnVariant::MaxMlp | GnnVariant::MaxOneLayer => tape.neighbor_max(h, graph),
        }
    }

    /// Aggregation over a dense (possibly weighted) adjacency node: the sum
    /// rule becomes H + A·H. Mean/max have no weighted-adjacency reading, so
    /// only the sum-family variants are accepted here.
    fn aggregate_dense(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        adjacency: NodeId,
        h: NodeId,
    ) -> Result<NodeId> {
        if !self.variant.is_sum_family() {
            return Err(Error::Config(format!(
                "variant '{}' cannot run on a weighted dense adjacency; use a sum-family variant",
                self.variant
            )));
        }
        let ah = tape.matmul(adjacency, h)?;
        match self.variant {
            GnnVariant::SumMlpGinEps => {
                let eps = tape.param(params, self.eps.expect("gin-eps has eps"));
                let one = tape.constant(DenseMatrix::scalar(1.0));
                let one_plus_eps = tape.add(one, eps)?;
                let scaled_self = tape.scale_by_scalar(h, one_plus_eps)?;
                tape.add(scaled_self, ah)
            }
            _ => tape.add(h, ah),
        }
    }

    fn transform(
        &mut self,
        tape: &mut Tape,
        params: &ParamSet,
        agg: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        match &mut self.transform {
            Transform::Mlp(mlp) => mlp.forward(tape, params, agg, mode),
            Transform::OneLayer(lin) => {
                let z = lin.forward(tape, params, agg)?;
                Ok(tape.relu(z))
            }
        }
    }

    pub fn forward_sparse(
        &mut self,
        tape: &mut Tape,
        params: &ParamSet,
        graph: &Rc<NeighborLists>,
        h: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let agg = self.aggregate_sparse(tape, params, graph, h)?;
        self.transform(tape, params, agg, mode)
    }

    pub fn forward_dense(
        &mut self,
        tape: &mut Tape,
        params: &ParamSet,
        adjacency: NodeId,
        h: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let agg = self.aggregate_dense(tape, params, adjacency, h)?;
        self.transform(tape, params, agg, mode)
    }
}

/// Fixed-depth stack whose output is the column-concatenation of every
/// layer's representations (the raw input is excluded), so the output width
/// is `depth × hidden` regardless of the graph size.
pub struct GnnStack {
    pub layers: Vec<GnnLayer>,
    pub hidden: usize,
}

pub const STACK_DEPTH: usize = 5;

impl GnnStack {
    pub fn new(
        variant: GnnVariant,
        in_dim: usize,
        hidden: usize,
        depth: usize,
        params: &mut ParamSet,
        rng: &mut Rng,
    ) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let d_in = if i == 0 { in_dim } else { hidden };
                GnnLayer::new(variant, d_in, hidden, params, rng)
            })
            .collect();
        GnnStack { layers, hidden }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.len() * self.hidden
    }

    pub fn forward(
        &mut self,
        tape: &mut Tape,
        params: &ParamSet,
        graph: &Rc<NeighborLists>,
        features: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let mut h = features;
        let mut outputs = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            h = layer.forward_sparse(tape, params, graph, h, mode)?;
            outputs.push(h);
        }
        tape.concat_cols(&outputs)
    }
}
