//! Pooling as differentiable tape operations, for use inside models.
//!
//! `graph_rep` turns the node representations of one graph into a single
//! 1×D row so per-graph rows can be stacked into a classifier batch. The
//! training-time comparator `covpool` uses the same bilinear-mapping
//! dimension reduction as `sopool_bimap` so its classifier stays small.

use super::PoolKind;
use crate::autograd::{NodeId, ParamId, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct PoolLayer {
    pub kind: PoolKind,
    pub feature_dim: usize,
    attention: Option<ParamId>,
    mapping: Option<ParamId>,
    heads: Option<ParamId>,
    reduced_dim: Option<usize>,
    head_count: Option<usize>,
}

impl PoolLayer {
    pub fn new(
        kind: PoolKind,
        feature_dim: usize,
        reduced_dim: Option<usize>,
        head_count: Option<usize>,
        params: &mut ParamSet,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut layer = PoolLayer {
            kind,
            feature_dim,
            attention: None,
            mapping: None,
            heads: None,
            reduced_dim: None,
            head_count: None,
        };
        match kind {
            PoolKind::Sum | PoolKind::Avg | PoolKind::Max | PoolKind::Sopool => {}
            PoolKind::SopoolBimap | PoolKind::CovPool => {
                let fp = reduced_dim.ok_or_else(|| {
                    Error::Config(format!("{kind} needs a reduced dimension f' (--fprime)"))
                })?;
                if fp == 0 {
                    return Err(Error::Config("f' must be positive".into()));
                }
                layer.mapping = Some(params.add_glorot(feature_dim, fp, rng));
                layer.reduced_dim = Some(fp);
            }
            PoolKind::SopoolAttn | PoolKind::AttnPool => {
                layer.attention = Some(params.add_glorot_fan(feature_dim, 1, feature_dim, 1, rng));
            }
            PoolKind::SopoolMattn => {
                let k = head_count
                    .ok_or_else(|| Error::Config(format!("{kind} needs a head count k (--k)")))?;
                if k == 0 {
                    return Err(Error::Config("k must be positive".into()));
                }
                layer.heads = Some(params.add_glorot_fan(k, feature_dim, feature_dim, 1, rng));
                layer.head_count = Some(k);
            }
        }
        Ok(layer)
    }

    /// Length of the graph representation row this pooling produces.
    pub fn output_dim(&self) -> usize {
        let f = self.feature_dim;
        match self.kind {
            PoolKind::Sum | PoolKind::Avg | PoolKind::Max => f,
            PoolKind::Sopool => f * f,
            PoolKind::SopoolBimap | PoolKind::CovPool => {
                let fp = self.reduced_dim.expect("checked at construction");
                fp * fp
            }
            PoolKind::SopoolAttn | PoolKind::AttnPool => f,
            PoolKind::SopoolMattn => self.head_count.expect("checked at construction") * f,
        }
    }

    /// Pools one graph's node representations (n×f) into a 1×D row.
    pub fn graph_rep(&self, tape: &mut Tape, params: &ParamSet, h: NodeId) -> Result<NodeId> {
        let out = self.output_dim();
        match self.kind {
            PoolKind::Sum => Ok(tape.rows_sum(h)),
            PoolKind::Avg => Ok(tape.rows_mean(h)),
            PoolKind::Max => Ok(tape.rows_max(h)),
            PoolKind::Sopool => {
                let ht = tape.transpose(h);
                let gram = tape.matmul(ht, h)?;
                tape.reshape(gram, 1, out)
            }
            PoolKind::SopoolBimap => {
                let w = tape.param(params, self.mapping.expect("bimap has mapping"));
                let hw = tape.matmul(h, w)?;
                let hwt = tape.transpose(hw);
                let gram = tape.matmul(hwt, hw)?;
                tape.reshape(gram, 1, out)
            }
            PoolKind::SopoolAttn => {
                let mu = tape.param(params, self.attention.expect("attn has mu"));
                let scores = tape.matmul(h, mu)?;
                let ht = tape.transpose(h);
                let pooled = tape.matmul(ht, scores)?;
                tape.reshape(pooled, 1, out)
            }
            PoolKind::SopoolMattn => {
                let u = tape.param(params, self.heads.expect("mattn has heads"));
                let ht = tape.transpose(h);
                let contribution = tape.matmul(u, ht)?;
                let pooled = tape.matmul(contribution, h)?;
                tape.reshape(pooled, 1, out)
            }
            PoolKind::CovPool => {
                let mean = tape.rows_mean(h);
                let centered = tape.sub_row_broadcast(h, mean)?;
                let w = tape.param(params, self.mapping.expect("covpool has mapping"));
                let cw = tape.matmul(centered, w)?;
                let cwt = tape.transpose(cw);
                let gram = tape.matmul(cwt, cw)?;
                tape.reshape(gram, 1, out)
            }
            PoolKind::AttnPool => {
                let mu = tape.param(params, self.attention.expect("attnpool has mu"));
                let scores = tape.matmul(h, mu)?;
                let weights = tape.softmax_columns(scores)?;
                let ht = tape.transpose(h);
                let pooled = tape.matmul(ht, weights)?;
                tape.reshape(pooled, 1, out)
            }
        }
    }

    /// Hierarchical step for the multi-head pooling: returns the pooled node
    /// representations H′ = CH, the pooled adjacency A′ = CACᵀ, and C = UHᵀ.
    pub fn pool_hierarchical(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        h: NodeId,
        adjacency: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        if self.kind != PoolKind::SopoolMattn {
            return Err(Error::Config(format!(
                "hierarchical pooling requires sopool_mattn, got {}",
                self.kind
            )));
        }
        let u = tape.param(params, self.heads.expect("mattn has heads"));
        let ht = tape.transpose(h);
        let contribution = tape.matmul(u, ht)?;
        let pooled_reps = tape.matmul(contribution, h)?;
        let ca = tape.matmul(contribution, adjacency)?;
        let ct = tape.transpose(contribution);
        let pooled_adj = tape.matmul(ca, ct)?;
        Ok((pooled_reps, pooled_adj, contribution))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use crate::pooling::{self, FirstOrder};

    fn random_h(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = Rng::new(seed);
        DenseMatrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.range(-2.0, 2.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tape_pooling_matches_pure_functions() {
        let h_mat = random_h(6, 4, 21);
        let mut rng = Rng::new(22);
        for kind in PoolKind::ALL {
            let mut params = ParamSet::new();
            let layer = PoolLayer::new(kind, 4, Some(2), Some(3), &mut params, &mut rng).unwrap();
            let mut tape = Tape::new();
            let h = tape.constant(h_mat.clone());
            let rep = layer.graph_rep(&mut tape, &params, h).unwrap();
            let got = tape.value(rep);
            assert_eq!(got.rows(), 1);
            assert_eq!(got.cols(), layer.output_dim());

            let want: DenseMatrix = match kind {
                PoolKind::Sum => pooling::pool_first_order(&h_mat, FirstOrder::Sum).transpose(),
                PoolKind::Avg => pooling::pool_first_order(&h_mat, FirstOrder::Avg).transpose(),
                PoolKind::Max => pooling::pool_first_order(&h_mat, FirstOrder::Max).transpose(),
                PoolKind::Sopool => pooling::sopool(&h_mat).reshaped(1, 16).unwrap(),
                PoolKind::SopoolBimap => {
                    let w = params.value(layer.mapping.unwrap());
                    pooling::sopool_bimap(&h_mat, w).unwrap().transpose()
                }
                PoolKind::SopoolAttn => {
                    let mu = params.value(layer.attention.unwrap());
                    pooling::sopool_attn(&h_mat, mu).unwrap().transpose()
                }
                PoolKind::SopoolMattn => {
                    let u = params.value(layer.heads.unwrap());
                    pooling::sopool_mattn(&h_mat, u)
                        .unwrap()
                        .reshaped(1, 12)
                        .unwrap()
                }
                PoolKind::CovPool => {
                    let w = params.value(layer.mapping.unwrap());
                    let centered = {
                        let mean = pooling::pool_first_order(&h_mat, FirstOrder::Avg);
                        let mut c = h_mat.clone();
                        for i in 0..c.rows() {
                            for j in 0..c.cols() {
                                c.set(i, j, c.get(i, j) - mean.get(j, 0));
                            }
                        }
                        c
                    };
                    pooling::sopool_bimap(&centered, w).unwrap().transpose()
                }
                PoolKind::AttnPool => {
                    let mu = params.value(layer.attention.unwrap());
                    pooling::attnpool(&h_mat, mu).unwrap().transpose()
                }
            };
            assert!(
                got.max_abs_diff(&want) < 1e-12,
                "{kind}: tape and pure paths disagree"
            );
        }
    }

    #[test]
    fn bimap_without_reduced_dim_is_a_config_error() {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(1);
        let err = PoolLayer::new(PoolKind::SopoolBimap, 4, None, None, &mut params, &mut rng)
            .unwrap_err();
        assert!(err.to_string().contains("fprime"), "{err}");
    }

    #[test]
    fn mattn_hierarchical_step_matches_pure_update() {
        let h_mat = random_h(5, 3, 23);
        let mut adj = DenseMatrix::zeros(5, 5);
        adj.set(0, 1, 1.0);
        adj.set(1, 0, 1.0);
        adj.set(2, 3, 1.0);
        adj.set(3, 2, 1.0);
        let mut params = ParamSet::new();
        let mut rng = Rng::new(24);
        let layer = PoolLayer::new(
            PoolKind::SopoolMattn,
            3,
            None,
            Some(2),
            &mut params,
            &mut rng,
        )
        .unwrap();
        let mut tape = Tape::new();
        let h = tape.constant(h_mat.clone());
        let a = tape.constant(adj.clone());
        let (hp, ap, c) = layer.pool_hierarchical(&mut tape, &params, h, a).unwrap();

        let pure =
            pooling::update_adjacency(&adj, &h_mat, params.value(layer.heads.unwrap())).unwrap();
        assert!(tape.value(hp).max_abs_diff(&pure.node_reps) < 1e-12);
        assert!(tape.value(ap).max_abs_diff(&pure.adjacency) < 1e-12);
        assert!(tape.value(c).max_abs_diff(&pure.contribution) < 1e-12);
    }
}
