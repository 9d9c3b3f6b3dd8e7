//! Benchmark graph data: TUDataset parsing, node feature construction, and
//! stratified cross-validation splits.

mod folds;
mod tudataset;

pub use folds::{stratified_kfold, FoldSplit};
pub use tudataset::{parse_tu_dataset, write_tu_dataset, RawDataset, RawGraph};

use crate::autograd::NeighborLists;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use serde::{Deserialize, Serialize};
use std::rc::Rc;

/// One graph instance: undirected edges over 0-indexed nodes, a node feature
/// matrix, and a class label.
#[derive(Debug, Clone)]
pub struct Graph {
    pub node_count: usize,
    /// Deduplicated undirected pairs with `a < b`.
    pub edges: Vec<(usize, usize)>,
    pub features: DenseMatrix,
    pub label: usize,
}

impl Graph {
    pub fn neighbor_lists(&self) -> NeighborLists {
        NeighborLists::from_edges(self.node_count, &self.edges)
    }

    pub fn shared_neighbor_lists(&self) -> Rc<NeighborLists> {
        Rc::new(self.neighbor_lists())
    }

    pub fn dense_adjacency(&self) -> DenseMatrix {
        let mut adj = DenseMatrix::zeros(self.node_count, self.node_count);
        for &(a, b) in &self.edges {
            adj.set(a, b, 1.0);
            adj.set(b, a, 1.0);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.node_count];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMode {
    /// One-hot over the dataset's distinct node labels.
    NodeLabelOneHot,
    /// One-hot over node degree, sized by the dataset-wide max degree.
    DegreeOneHot,
    /// Single constant feature (all ones).
    Constant,
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeatureMode::NodeLabelOneHot => "node-label-onehot",
            FeatureMode::DegreeOneHot => "degree-onehot",
            FeatureMode::Constant => "constant",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node-label-onehot" | "node-labels" => Ok(FeatureMode::NodeLabelOneHot),
            "degree-onehot" | "degrees" => Ok(FeatureMode::DegreeOneHot),
            "constant" => Ok(FeatureMode::Constant),
            other => Err(Error::Config(format!("unknown feature mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub feature_mode: FeatureMode,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn average_node_count(&self) -> f64 {
        let total: usize = self.graphs.iter().map(|g| g.node_count).sum();
        total as f64 / self.graphs.len() as f64
    }
}

/// Turns parsed raw graphs into a [`Dataset`] with concrete node features.
pub fn build_features(raw: &RawDataset, mode: FeatureMode) -> Result<Dataset> {
    let feature_dim = match mode {
        FeatureMode::NodeLabelOneHot => {
            if !raw.has_node_labels {
                return Err(Error::Config(
                    "node-label-onehot features requested but the dataset has no node labels file"
                        .into(),
                ));
            }
            raw.node_label_count
        }
        FeatureMode::DegreeOneHot => {
            let max_degree = raw
                .graphs
                .iter()
                .flat_map(|g| g.degrees())
                .max()
                .unwrap_or(0);
            max_degree + 1
        }
        FeatureMode::Constant => 1,
    };

    let graphs = raw
        .graphs
        .iter()
        .map(|g| {
            let mut features = DenseMatrix::zeros(g.node_count, feature_dim);
            match mode {
                FeatureMode::NodeLabelOneHot => {
                    let labels = g
                        .node_labels
                        .as_ref()
                        .expect("checked: node labels present");
                    for (i, &l) in labels.iter().enumerate() {
                        features.set(i, l, 1.0);
                    }
                }
                FeatureMode::DegreeOneHot => {
                    for (i, d) in g.degrees().into_iter().enumerate() {
                        features.set(i, d, 1.0);
                    }
                }
                FeatureMode::Constant => {
                    for i in 0..g.node_count {
                        features.set(i, 0, 1.0);
                    }
                }
            }
            Graph {
                node_count: g.node_count,
                edges: g.edges.clone(),
                features,
                label: g.label,
            }
        })
        .collect();

    Ok(Dataset {
        name: raw.name.clone(),
        graphs,
        num_classes: raw.num_classes,
        feature_dim,
        feature_mode: mode,
    })
}

/// Feature mode the training protocol uses when none is forced: node labels
/// when the dataset ships them, constant features for the REDDIT datasets,
/// degree one-hot otherwise.
pub fn default_feature_mode(raw: &RawDataset) -> FeatureMode {
    if raw.has_node_labels {
        FeatureMode::NodeLabelOneHot
    } else if raw.name.to_ascii_uppercase().starts_with("REDDIT") {
        FeatureMode::Constant
    } else {
        FeatureMode::DegreeOneHot
    }
}

/// Parses a TUDataset directory and builds features in one step.
pub fn load_dataset(
    dir: &std::path::Path,
    name: &str,
    mode: Option<FeatureMode>,
) -> Result<Dataset> {
    let raw = parse_tu_dataset(dir, name)?;
    let mode = mode.unwrap_or_else(|| default_feature_mode(&raw));
    build_features(&raw, mode)
}
