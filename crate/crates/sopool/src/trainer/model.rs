//! Flat and hierarchical model assembly.
//!
//! Flat: 5-layer GNN stack → pooling per graph segment → dropout → 1-layer
//! classifier. Hierarchical: blocks of (GNN layer → multi-head pooling →
//! adjacency update), each block feeding a global-sum readout into its own
//! classifier; the final logits are the mean over block classifiers.

use super::{ExperimentConfig, GraphBatch};
use crate::autograd::{Mode, NodeId, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::layers::{GnnLayer, GnnStack, LinearLayer, STACK_DEPTH};
use crate::pooling::tape::PoolLayer;
use crate::pooling::PoolKind;
use crate::rng::Rng;

pub enum Model {
    Flat(FlatModel),
    Hierarchical(HierarchicalModel),
}

impl Model {
    /// Builds the model the config asks for. `avg_nodes` feeds the default
    /// hierarchical head-count rule (half the average size, halving again
    /// each block).
    pub fn build(
        config: &ExperimentConfig,
        feature_dim: usize,
        num_classes: usize,
        avg_nodes: f64,
        rng: &mut Rng,
    ) -> Result<Model> {
        if config.is_hierarchical() {
            Ok(Model::Hierarchical(HierarchicalModel::build(
                config,
                feature_dim,
                num_classes,
                avg_nodes,
                rng,
            )?))
        } else {
            Ok(Model::Flat(FlatModel::build(
                config,
                feature_dim,
                num_classes,
                rng,
            )?))
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Flat(m) => &m.params,
            Model::Hierarchical(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Model::Flat(m) => &mut m.params,
            Model::Hierarchical(m) => &mut m.params,
        }
    }

    pub fn logits(
        &mut self,
        tape: &mut Tape,
        batch: &GraphBatch,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        match self {
            Model::Flat(m) => m.logits(tape, batch, mode, rng),
            Model::Hierarchical(m) => m.logits(tape, batch, mode, rng),
        }
    }
}

pub struct FlatModel {
    pub params: ParamSet,
    stack: GnnStack,
    pool: PoolLayer,
    classifier: LinearLayer,
    dropout: f64,
    pub num_classes: usize,
}

impl FlatModel {
    pub fn build(
        config: &ExperimentConfig,
        feature_dim: usize,
        num_classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut params = ParamSet::new();
        let stack = GnnStack::new(
            config.gnn,
            feature_dim,
            config.hidden,
            STACK_DEPTH,
            &mut params,
            rng,
        );
        // flat multi-head pooling defaults to a single head
        let head_count = config.head_count.or(Some(1));
        let pool = PoolLayer::new(
            config.pool,
            stack.output_dim(),
            config.reduced_dim,
            head_count,
            &mut params,
            rng,
        )?;
        let classifier = LinearLayer::new(pool.output_dim(), num_classes, &mut params, rng);
        Ok(FlatModel {
            params,
            stack,
            pool,
            classifier,
            dropout: config.dropout,
            num_classes,
        })
    }

    pub fn classifier_input_dim(&self) -> usize {
        self.pool.output_dim()
    }

    pub fn logits(
        &mut self,
        tape: &mut Tape,
        batch: &GraphBatch,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        let x = tape.constant(batch.features.clone());
        let h = self
            .stack
            .forward(tape, &self.params, &batch.neighbors, x, mode)?;
        let mut reps = Vec::with_capacity(batch.graph_count());
        for seg in &batch.segments {
            let hg = tape.slice_rows(h, seg.start, seg.len)?;
            reps.push(self.pool.graph_rep(tape, &self.params, hg)?);
        }
        let stacked = tape.concat_rows(&reps)?;
        let dropped = tape.dropout(stacked, self.dropout, mode, rng)?;
        self.classifier.forward(tape, &self.params, dropped)
    }
}

struct HierBlock {
    layer: GnnLayer,
    pool: PoolLayer,
    classifier: LinearLayer,
}

pub struct HierarchicalModel {
    pub params: ParamSet,
    blocks: Vec<HierBlock>,
    dropout: f64,
    pub num_classes: usize,
}

impl HierarchicalModel {
    pub fn build(
        config: &ExperimentConfig,
        feature_dim: usize,
        num_classes: usize,
        avg_nodes: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let block_count = config.blocks.unwrap_or(1);
        if config.pool != PoolKind::SopoolMattn {
            return Err(Error::Config(format!(
                "hierarchical models require sopool_mattn pooling, got {}",
                config.pool
            )));
        }
        let mut params = ParamSet::new();
        let mut blocks = Vec::with_capacity(block_count);
        for b in 0..block_count {
            let in_dim = if b == 0 { feature_dim } else { config.hidden };
            let layer = GnnLayer::new(config.gnn, in_dim, config.hidden, &mut params, rng);
            let k = match config.head_count {
                Some(k) => k,
                // halve the average graph size per block, never below 1
                None => ((avg_nodes / 2f64.powi(b as i32 + 1)).ceil() as usize).max(1),
            };
            let pool = PoolLayer::new(
                PoolKind::SopoolMattn,
                config.hidden,
                None,
                Some(k),
                &mut params,
                rng,
            )?;
            let classifier = LinearLayer::new(config.hidden, num_classes, &mut params, rng);
            blocks.push(HierBlock {
                layer,
                pool,
                classifier,
            });
        }
        Ok(HierarchicalModel {
            params,
            blocks,
            dropout: config.dropout,
            num_classes,
        })
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn logits(
        &mut self,
        tape: &mut Tape,
        batch: &GraphBatch,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        let x = tape.constant(batch.features.clone());
        let mut h = x;
        let mut seg_starts: Vec<(usize, usize)> =
            batch.segments.iter().map(|s| (s.start, s.len)).collect();
        let mut adjacencies: Vec<NodeId> = batch
            .adjacencies
            .iter()
            .map(|a| tape.constant(a.clone()))
            .collect();

        let mut block_logits = Vec::with_capacity(self.blocks.len());
        for (b, block) in self.blocks.iter_mut().enumerate() {
            h = if b == 0 {
                block
                    .layer
                    .forward_sparse(tape, &self.params, &batch.neighbors, h, mode)?
            } else {
                let a_big = tape.block_diag(&adjacencies)?;
                block
                    .layer
                    .forward_dense(tape, &self.params, a_big, h, mode)?
            };

            let mut readouts = Vec::with_capacity(seg_starts.len());
            let mut pooled_reps = Vec::with_capacity(seg_starts.len());
            let mut pooled_adjs = Vec::with_capacity(seg_starts.len());
            for (g, &(start, len)) in seg_starts.iter().enumerate() {
                let hg = tape.slice_rows(h, start, len)?;
                let (hp, ap, _c) =
                    block
                        .pool
                        .pool_hierarchical(tape, &self.params, hg, adjacencies[g])?;
                readouts.push(tape.rows_sum(hp));
                pooled_reps.push(hp);
                pooled_adjs.push(ap);
            }
            let reps = tape.concat_rows(&readouts)?;
            let dropped = tape.dropout(reps, self.dropout, mode, rng)?;
            block_logits.push(block.classifier.forward(tape, &self.params, dropped)?);

            h = tape.concat_rows(&pooled_reps)?;
            adjacencies = pooled_adjs;
            let mut offset = 0;
            seg_starts = (0..batch.graph_count())
                .map(|g| {
                    let len = tape.value(adjacencies[g]).rows();
                    let s = (offset, len);
                    offset += len;
                    s
                })
                .collect();
        }

        let mut combined = block_logits[0];
        for &l in &block_logits[1..] {
            combined = tape.add(combined, l)?;
        }
        Ok(tape.scale(combined, 1.0 / self.blocks.len() as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Graph;
    use crate::layers::GnnVariant;
    use crate::matrix::DenseMatrix;
    use crate::trainer::batch_graphs;

    fn toy_batch() -> GraphBatch {
        let a = Graph {
            node_count: 3,
            edges: vec![(0, 1), (0, 2), (1, 2)],
            features: DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]).unwrap(),
            label: 0,
        };
        let b = Graph {
            node_count: 2,
            edges: vec![(0, 1)],
            features: DenseMatrix::from_rows(&[&[0.5, 0.5], &[1.0, 0.0]]).unwrap(),
            label: 1,
        };
        batch_graphs(&[&a, &b]).unwrap()
    }

    #[test]
    fn flat_classifier_input_dims_match_the_arithmetic() {
        let mut rng = Rng::new(1);
        let mut cfg = ExperimentConfig::new("T", GnnVariant::SumMlpGin0, PoolKind::SopoolBimap);
        cfg.hidden = 32;
        cfg.reduced_dim = Some(32);
        let m = FlatModel::build(&cfg, 2, 2, &mut rng).unwrap();
        assert_eq!(m.classifier_input_dim(), 1024);

        cfg.pool = PoolKind::SopoolAttn;
        cfg.reduced_dim = None;
        let m = FlatModel::build(&cfg, 2, 2, &mut rng).unwrap();
        assert_eq!(m.classifier_input_dim(), 160);

        cfg.pool = PoolKind::Sum;
        let m = FlatModel::build(&cfg, 2, 2, &mut rng).unwrap();
        assert_eq!(m.classifier_input_dim(), 160);
    }

    #[test]
    fn flat_forward_produces_finite_logits() {
        let mut rng = Rng::new(2);
        let mut cfg = ExperimentConfig::new("T", GnnVariant::SumMlpGin0, PoolKind::SopoolAttn);
        cfg.hidden = 4;
        let mut model = FlatModel::build(&cfg, 2, 2, &mut rng).unwrap();
        let batch = toy_batch();
        let mut tape = Tape::new();
        let logits = model
            .logits(&mut tape, &batch, Mode::Train, &mut rng)
            .unwrap();
        assert_eq!(tape.value(logits).shape(), (2, 2));
        assert!(tape.value(logits).all_finite());
    }

    #[test]
    fn hierarchical_single_block_matches_flat_shape() {
        let mut rng = Rng::new(3);
        let mut cfg = ExperimentConfig::new("T", GnnVariant::SumMlpGin0, PoolKind::SopoolMattn);
        cfg.hidden = 4;
        cfg.blocks = Some(1);
        cfg.head_count = Some(2);
        let mut model = HierarchicalModel::build(&cfg, 2, 2, 2.5, &mut rng).unwrap();
        assert_eq!(model.block_count(), 1);
        let batch = toy_batch();
        let mut tape = Tape::new();
        let logits = model
            .logits(&mut tape, &batch, Mode::Train, &mut rng)
            .unwrap();
        assert_eq!(tape.value(logits).shape(), (2, 2));
        assert!(tape.value(logits).all_finite());
    }

    #[test]
    fn hierarchical_three_blocks_produce_class_logits() {
        let mut rng = Rng::new(4);
        let mut cfg = ExperimentConfig::new("T", GnnVariant::SumMlpGin0, PoolKind::SopoolMattn);
        cfg.hidden = 4;
        cfg.blocks = Some(3);
        cfg.head_count = Some(2);
        let mut model = HierarchicalModel::build(&cfg, 2, 3, 2.5, &mut rng).unwrap();
        assert_eq!(model.block_count(), 3);
        let batch = toy_batch();
        let mut tape = Tape::new();
        let logits = model
            .logits(&mut tape, &batch, Mode::Train, &mut rng)
            .unwrap();
        assert_eq!(tape.value(logits).shape(), (2, 3));
        assert!(tape.value(logits).all_finite());
    }

    #[test]
    fn default_head_count_halves_average_size() {
        let mut rng = Rng::new(5);
        let mut cfg = ExperimentConfig::new("T", GnnVariant::SumMlpGin0, PoolKind::SopoolMattn);
        cfg.hidden = 4;
        cfg.blocks = Some(3);
        let model = HierarchicalModel::build(&cfg, 2, 2, 10.0, &mut rng).unwrap();
        let ks: Vec<usize> = model
            .blocks
            .iter()
            .map(|b| b.pool.output_dim() / 4)
            .collect();
        assert_eq!(ks, vec![5, 3, 2]);
    }
}
