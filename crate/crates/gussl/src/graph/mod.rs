//! Canonical in-memory graph representation shared by the whole pipeline.

mod io;
mod synthetic;

pub use io::{load_dataset, save_dataset, write_features_binary};
pub use synthetic::{generate_family, SyntheticFamilySpec};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train/val/test node index sets. Pairwise disjoint; may cover only a
/// subset of the nodes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    fn check(&self, num_nodes: usize) -> std::result::Result<(), String> {
        let mut seen = vec![false; num_nodes];
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in ids.iter() {
                if i >= num_nodes {
                    return Err(format!("{name} split index {i} out of range"));
                }
                if seen[i] {
                    return Err(format!("node {i} appears in more than one split"));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

/// One graph: undirected edges, dense node features, labels, and splits.
///
/// Edges are stored canonically as (min, max) pairs, deduplicated, with no
/// self-loops; normalization re-adds the self-loop exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub graph_id: String,
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub features: Array2<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub splits: Splits,
}

impl GraphDataset {
    /// Construct and validate. Edges are symmetrized, deduplicated, and
    /// stripped of self-loops here so every consumer sees the canonical form.
    pub fn new(
        graph_id: impl Into<String>,
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Array2<f32>,
        labels: Vec<usize>,
        num_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        let graph_id = graph_id.into();
        let invalid = |reason: String| Error::InvalidGraph {
            graph_id: graph_id.clone(),
            reason,
        };

        if graph_id.is_empty()
            || !graph_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(invalid(
                "graph_id must be nonempty and use only [A-Za-z0-9_-]".into(),
            ));
        }
        if num_nodes == 0 {
            return Err(invalid("graph has zero nodes".into()));
        }
        if num_classes == 0 {
            return Err(invalid("graph has zero classes".into()));
        }
        for &(u, v) in &edges {
            if u >= num_nodes || v >= num_nodes {
                let bad = if u >= num_nodes { u } else { v };
                return Err(invalid(format!("node index {bad} out of range")));
            }
        }
        let edges = canonical_edges(&edges);
        if features.nrows() != num_nodes {
            return Err(invalid(format!(
                "feature matrix has {} rows, expected {num_nodes}",
                features.nrows()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(invalid("feature matrix contains NaN or Inf".into()));
        }
        if labels.len() != num_nodes {
            return Err(invalid(format!(
                "label vector has length {}, expected {num_nodes}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= num_classes) {
            return Err(invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        splits.check(num_nodes).map_err(invalid)?;

        Ok(GraphDataset {
            graph_id,
            num_nodes,
            edges,
            features,
            labels,
            num_classes,
            splits,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Node degrees under the symmetric edge relation, without self-loops.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Sorted neighbor lists (symmetric, no self-loops).
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Number of connected components (isolated nodes count as components).
    pub fn num_components(&self) -> usize {
        let adj = self.adjacency_lists();
        let mut seen = vec![false; self.num_nodes];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..self.num_nodes {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        components
    }

    /// Content hash covering structure, features, labels, and splits. Used
    /// to key preprocessing caches.
    pub fn content_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.graph_id.as_bytes());
        h.update((self.num_nodes as u64).to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        for &(u, v) in &self.edges {
            h.update((u as u64).to_le_bytes());
            h.update((v as u64).to_le_bytes());
        }
        for x in self.features.iter() {
            h.update(x.to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        for ids in [&self.splits.train, &self.splits.val, &self.splits.test] {
            h.update((ids.len() as u64).to_le_bytes());
            for &i in ids.iter() {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Symmetrize, deduplicate, drop self-loops, and sort.
fn canonical_edges(edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = edges
        .iter()
        .filter(|&&(u, v)| u != v)
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// How a family came to be; recorded alongside run artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Loaded { manifests: Vec<String> },
    Synthetic { spec: SyntheticFamilySpec },
}

/// An ordered family of graphs. The position of a graph in `graphs` is the
/// index used by training and reporting.
#[derive(Debug, Clone)]
pub struct GraphFamily {
    pub graphs: Vec<GraphDataset>,
    pub seed: u64,
    pub provenance: Provenance,
}

impl GraphFamily {
    pub fn new(graphs: Vec<GraphDataset>, seed: u64, provenance: Provenance) -> Result<Self> {
        let mut ids: Vec<&str> = graphs.iter().map(|g| g.graph_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec(
                "family contains duplicate graph_ids".into(),
            ));
        }
        Ok(GraphFamily {
            graphs,
            seed,
            provenance,
        })
    }

    pub fn graph_ids(&self) -> Vec<String> {
        self.graphs.iter().map(|g| g.graph_id.clone()).collect()
    }

    pub fn get(&self, graph_id: &str) -> Option<&GraphDataset> {
        self.graphs.iter().find(|g| g.graph_id == graph_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(edges: Vec<(usize, usize)>) -> Result<GraphDataset> {
        GraphDataset::new(
            "toy",
            3,
            edges,
            array![[1.0f32, 0.0], [0.0, 1.0], [1.0, 1.0]],
            vec![0, 1, 0],
            2,
            Splits::default(),
        )
    }

    #[test]
    fn symmetrizes_and_dedupes() {
        let g = toy(vec![(0, 1), (1, 0), (2, 1)]).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn strips_self_loops() {
        let g = toy(vec![(0, 0), (0, 1)]).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn rejects_out_of_range_edge() {
        let err = toy(vec![(5, 0)]).unwrap_err();
        assert!(err.to_string().contains("node index 5 out of range"));
    }

    #[test]
    fn rejects_nan_features() {
        let err = GraphDataset::new(
            "bad",
            1,
            vec![],
            array![[f32::NAN]],
            vec![0],
            1,
            Splits::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("NaN"));
    }

    #[test]
    fn rejects_overlapping_splits() {
        let splits = Splits {
            train: vec![0],
            val: vec![0],
            test: vec![],
        };
        let err = GraphDataset::new(
            "bad",
            2,
            vec![(0, 1)],
            array![[1.0f32], [2.0]],
            vec![0, 0],
            1,
            splits,
        )
        .unwrap_err();
        assert!(err.to_string().contains("more than one split"));
    }

    #[test]
    fn component_count_includes_isolated_nodes() {
        let g = toy(vec![(0, 1)]).unwrap();
        assert_eq!(g.num_components(), 2);
    }

    #[test]
    fn family_rejects_duplicate_ids() {
        let a = toy(vec![(0, 1)]).unwrap();
        let b = toy(vec![(1, 2)]).unwrap();
        let err = GraphFamily::new(
            vec![a, b],
            0,
            Provenance::Loaded { manifests: vec![] },
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }
}
