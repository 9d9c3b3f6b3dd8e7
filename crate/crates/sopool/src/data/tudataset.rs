//! TUDataset text format.
//!
//! A dataset `DS` in directory `dir` consists of:
//!   - `DS_A.txt`                — one edge per line, "i, j", 1-indexed node ids;
//!     undirected edges appear in both directions
//!   - `DS_graph_indicator.txt`  — line per node: 1-indexed id of its graph
//!   - `DS_graph_labels.txt`     — line per graph: integer class label
//!   - `DS_node_labels.txt`      — optional, line per node: integer node label
//!
//! Other files (edge labels, attributes) are ignored. Parsing symmetrizes and
//! deduplicates edges, drops self-loops, 0-indexes nodes per graph, and remaps
//! graph and node labels onto contiguous ranges.

use super::Dataset;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct RawGraph {
    pub node_count: usize,
    /// Deduplicated undirected pairs with `a < b`, 0-indexed.
    pub edges: Vec<(usize, usize)>,
    pub node_labels: Option<Vec<usize>>,
    pub label: usize,
}

impl RawGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.node_count];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub name: String,
    pub graphs: Vec<RawGraph>,
    pub num_classes: usize,
    pub has_node_labels: bool,
    /// Number of distinct node labels across the dataset (0 when absent).
    pub node_label_count: usize,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Parse {
                file: path.display().to_string(),
                reason: "mandatory file is missing".into(),
            }
        } else {
            Error::io(path.display().to_string(), e)
        }
    })?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn parse_int(line: &str, file: &Path, what: &str) -> Result<i64> {
    line.parse::<i64>().map_err(|_| Error::Parse {
        file: file.display().to_string(),
        reason: format!("expected {what}, got '{line}'"),
    })
}

pub fn parse_tu_dataset(dir: &Path, name: &str) -> Result<RawDataset> {
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let indicator_path = file("graph_indicator");
    let indicator: Vec<usize> = read_lines(&indicator_path)?
        .iter()
        .map(|l| parse_int(l, &indicator_path, "a graph id").map(|v| v as usize))
        .collect::<Result<_>>()?;
    let node_total = indicator.len();

    let labels_path = file("graph_labels");
    let raw_labels: Vec<i64> = read_lines(&labels_path)?
        .iter()
        .map(|l| parse_int(l, &labels_path, "a graph label"))
        .collect::<Result<_>>()?;
    let graph_count = raw_labels.len();

    // nodes reference graphs 1..=graph_count
    for (node, &gid) in indicator.iter().enumerate() {
        if gid == 0 || gid > graph_count {
            return Err(Error::Integrity(format!(
                "node {} references nonexistent graph id {gid} (dataset has {graph_count} graphs)",
                node + 1
            )));
        }
    }

    // remap graph labels onto [0, c)
    let mut label_map = BTreeMap::new();
    for &l in &raw_labels {
        let next = label_map.len();
        label_map.entry(l).or_insert(next);
    }
    let num_classes = label_map.len();

    // global 1-indexed node id → (graph index, local 0-indexed node)
    let mut local_index = vec![(0usize, 0usize); node_total];
    let mut node_counts = vec![0usize; graph_count];
    for (node, &gid) in indicator.iter().enumerate() {
        let g = gid - 1;
        local_index[node] = (g, node_counts[g]);
        node_counts[g] += 1;
    }

    let edges_path = file("A");
    let mut per_graph_edges: Vec<std::collections::BTreeSet<(usize, usize)>> =
        vec![Default::default(); graph_count];
    for line in read_lines(&edges_path)? {
        let mut parts = line.split(',');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::Parse {
                    file: edges_path.display().to_string(),
                    reason: format!("expected 'i, j', got '{line}'"),
                })
            }
        };
        let a = parse_int(a, &edges_path, "a node id")? as usize;
        let b = parse_int(b, &edges_path, "a node id")?;
        let b = b as usize;
        if a == 0 || a > node_total || b == 0 || b > node_total {
            return Err(Error::Integrity(format!(
                "edge ({a}, {b}) references a nonexistent node (dataset has {node_total} nodes)"
            )));
        }
        let (ga, la) = local_index[a - 1];
        let (gb, lb) = local_index[b - 1];
        if ga != gb {
            return Err(Error::Integrity(format!(
                "edge ({a}, {b}) crosses graphs {} and {}",
                ga + 1,
                gb + 1
            )));
        }
        if la == lb {
            continue; // self-loop; aggregation adds the self term explicitly
        }
        per_graph_edges[ga].insert((la.min(lb), la.max(lb)));
    }

    let node_labels_path = file("node_labels");
    let node_labels_raw: Option<Vec<i64>> = if node_labels_path.exists() {
        let lines = read_lines(&node_labels_path)?;
        if lines.len() != node_total {
            return Err(Error::Integrity(format!(
                "node labels file has {} entries for {} nodes",
                lines.len(),
                node_total
            )));
        }
        Some(
            lines
                .iter()
                .map(|l| parse_int(l, &node_labels_path, "a node label"))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let (node_label_count, node_label_map) = match &node_labels_raw {
        Some(raw) => {
            let mut map = BTreeMap::new();
            for &l in raw {
                let next = map.len();
                map.entry(l).or_insert(next);
            }
            (map.len(), Some(map))
        }
        None => (0, None),
    };

    let mut graphs: Vec<RawGraph> = (0..graph_count)
        .map(|g| RawGraph {
            node_count: node_counts[g],
            edges: per_graph_edges[g].iter().cloned().collect(),
            node_labels: node_label_map
                .as_ref()
                .map(|_| Vec::with_capacity(node_counts[g])),
            label: label_map[&raw_labels[g]],
        })
        .collect();

    if let (Some(raw), Some(map)) = (&node_labels_raw, &node_label_map) {
        for (node, &l) in raw.iter().enumerate() {
            let (g, _) = local_index[node];
            graphs[g]
                .node_labels
                .as_mut()
                .expect("allocated above")
                .push(map[&l]);
        }
    }

    Ok(RawDataset {
        name: name.to_string(),
        graphs,
        num_classes,
        has_node_labels: node_labels_raw.is_some(),
        node_label_count,
    })
}

/// Writes a dataset back out in TUDataset format (each undirected edge in
/// both directions). Node labels are emitted only for node-label features.
pub fn write_tu_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let name = &dataset.name;
    let write = |suffix: &str, contents: String| -> Result<()> {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))
    };

    let mut a = String::new();
    let mut indicator = String::new();
    let mut labels = String::new();
    let mut node_labels = String::new();
    let mut offset = 0usize;
    for (gi, g) in dataset.graphs.iter().enumerate() {
        for &(u, v) in &g.edges {
            a.push_str(&format!("{}, {}\n", offset + u + 1, offset + v + 1));
            a.push_str(&format!("{}, {}\n", offset + v + 1, offset + u + 1));
        }
        for i in 0..g.node_count {
            indicator.push_str(&format!("{}\n", gi + 1));
            if dataset.feature_mode == super::FeatureMode::NodeLabelOneHot {
                let row = g.features.row(i);
                let label = row
                    .iter()
                    .position(|&x| x == 1.0)
                    .expect("one-hot row has a 1");
                node_labels.push_str(&format!("{label}\n"));
            }
        }
        labels.push_str(&format!("{}\n", g.label));
        offset += g.node_count;
    }

    write("A", a)?;
    write("graph_indicator", indicator)?;
    write("graph_labels", labels)?;
    if dataset.feature_mode == super::FeatureMode::NodeLabelOneHot {
        write("node_labels", node_labels)?;
    }
    Ok(())
}
