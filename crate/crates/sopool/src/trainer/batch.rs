//! Block-diagonal minibatching: a batch of graphs becomes one disjoint-union
//! graph with per-graph row segments, so message passing and batch norm run
//! jointly while pooling never mixes nodes across graphs.

use std::rc::Rc;

use crate::autograd::NeighborLists;
use crate::data::Graph;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct GraphBatch {
    /// Neighbor lists of the disjoint union.
    pub neighbors: Rc<NeighborLists>,
    /// Stacked node features, N×d.
    pub features: DenseMatrix,
    /// Row range of each member graph.
    pub segments: Vec<Segment>,
    pub labels: Vec<usize>,
    /// Dense binary adjacency per member graph (hierarchical models).
    pub adjacencies: Vec<DenseMatrix>,
}

impl GraphBatch {
    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn graph_count(&self) -> usize {
        self.segments.len()
    }
}

pub fn batch_graphs(graphs: &[&Graph]) -> Result<GraphBatch> {
    if graphs.is_empty() {
        return Err(Error::EmptyInput("batch_graphs"));
    }
    let dim = graphs[0].features.cols();
    let total: usize = graphs.iter().map(|g| g.node_count).sum();

    let mut features = DenseMatrix::zeros(total, dim);
    let mut edges = Vec::new();
    let mut segments = Vec::with_capacity(graphs.len());
    let mut labels = Vec::with_capacity(graphs.len());
    let mut adjacencies = Vec::with_capacity(graphs.len());

    let mut offset = 0;
    for g in graphs {
        if g.features.cols() != dim {
            return Err(Error::shape(
                "batch_graphs",
                format!("feature dim {dim}"),
                g.features.shape_string(),
            ));
        }
        for i in 0..g.node_count {
            for j in 0..dim {
                features.set(offset + i, j, g.features.get(i, j));
            }
        }
        for &(a, b) in &g.edges {
            edges.push((offset + a, offset + b));
        }
        segments.push(Segment {
            start: offset,
            len: g.node_count,
        });
        labels.push(g.label);
        adjacencies.push(g.dense_adjacency());
        offset += g.node_count;
    }

    Ok(GraphBatch {
        neighbors: Rc::new(NeighborLists::from_edges(total, &edges)),
        features,
        segments,
        labels,
        adjacencies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(label: usize) -> Graph {
        Graph {
            node_count: 3,
            edges: vec![(0, 1), (0, 2), (1, 2)],
            features: DenseMatrix::filled(3, 2, 1.0),
            label,
        }
    }

    #[test]
    fn two_triangles_make_six_nodes_two_segments() {
        let (a, b) = (triangle(0), triangle(1));
        let batch = batch_graphs(&[&a, &b]).unwrap();
        assert_eq!(batch.node_count(), 6);
        assert_eq!(batch.graph_count(), 2);
        assert_eq!(batch.segments[0].start, 0);
        assert_eq!(batch.segments[1].start, 3);
        assert_eq!(batch.segments[1].len, 3);
        assert_eq!(batch.labels, vec![0, 1]);
        // no cross-graph edges
        for v in 0..3 {
            assert!(batch.neighbors.neighbors(v).iter().all(|&u| u < 3));
        }
        for v in 3..6 {
            assert!(batch.neighbors.neighbors(v).iter().all(|&u| u >= 3));
        }
    }

    #[test]
    fn feature_dim_mismatch_is_a_shape_error() {
        let a = triangle(0);
        let mut b = triangle(1);
        b.features = DenseMatrix::filled(3, 5, 1.0);
        assert!(matches!(batch_graphs(&[&a, &b]), Err(Error::Shape { .. })));
    }
}
