//! Per-graph preprocessing: adjacency normalization, positional-embedding
//! augmentation, hop tokenization, and PairSim pair sampling. Everything
//! here is a pure function of its inputs and runs before training.

mod lappe;
mod pairs;

pub use lappe::{laplacian_pe, LaplacianPe};
pub use pairs::{sample_pairsim, PairExample, PairLabelSet};

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphDataset, GraphFamily};
use crate::sparse::CsrMatrix;

/// Symmetrically normalized adjacency with self-loops:
/// entries are `1 / sqrt(d̃_u · d̃_v)` for each edge of A+I, where `d̃` is
/// the self-loop-augmented degree.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }
}

/// Â = D̃^{-1/2} (A + I) D̃^{-1/2}. Isolated nodes get degree 1 from the
/// self-loop, so the normalization is always well defined.
pub fn normalize_adjacency(g: &GraphDataset) -> NormalizedAdjacency {
    let n = g.num_nodes;
    let mut degrees = vec![1.0f64; n]; // self-loop
    for &(u, v) in &g.edges {
        degrees[u] += 1.0;
        degrees[v] += 1.0;
    }

    let mut triplets = Vec::with_capacity(2 * g.edges.len() + n);
    for u in 0..n {
        triplets.push((u, u, 1.0 / degrees[u]));
    }
    for &(u, v) in &g.edges {
        let w = 1.0 / (degrees[u] * degrees[v]).sqrt();
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    NormalizedAdjacency {
        matrix: CsrMatrix::from_triplets(n, triplets),
    }
}

/// Row-normalized adjacency without self-loops: `M = D^{-1} A`, with zero
/// rows for isolated nodes. This is the neighbor-mean operator GraphSAGE
/// uses.
pub fn mean_adjacency(g: &GraphDataset) -> CsrMatrix {
    let n = g.num_nodes;
    let degrees = g.degrees();
    let mut triplets = Vec::with_capacity(2 * g.edges.len());
    for &(u, v) in &g.edges {
        triplets.push((u, v, 1.0 / degrees[u] as f64));
        triplets.push((v, u, 1.0 / degrees[v] as f64));
    }
    CsrMatrix::from_triplets(n, triplets)
}

/// X̃ = [X ‖ PE]: column-wise concatenation of raw features and positional
/// embeddings (computed in f64, cast to f32 here).
pub fn augment_features(g: &GraphDataset, pe: &Array2<f64>) -> Result<Array2<f32>> {
    if pe.nrows() != g.num_nodes {
        return Err(Error::DimensionMismatch(format!(
            "positional embedding has {} rows, graph `{}` has {} nodes",
            pe.nrows(),
            g.graph_id,
            g.num_nodes
        )));
    }
    let (n, d) = (g.num_nodes, g.feature_dim());
    let pe_dim = pe.ncols();
    let mut out = Array2::<f32>::zeros((n, d + pe_dim));
    out.slice_mut(s![.., ..d]).assign(&g.features);
    for i in 0..n {
        for j in 0..pe_dim {
            out[[i, d + j]] = pe[[i, j]] as f32;
        }
    }
    Ok(out)
}

/// Hop-token sequences: `tokens[v][k] = (Â^k X̃)[v]`, built by repeated
/// sparse multiplication (Â^k is never materialized). Hop 0 is the
/// augmented feature row itself, bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedGraph {
    pub graph_id: String,
    pub hop_k: usize,
    pub pe_dim: usize,
    /// Shape: (num_nodes, hop_k + 1, aug_dim).
    pub tokens: Array3<f32>,
}

impl TokenizedGraph {
    pub fn num_nodes(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn seq_len(&self) -> usize {
        self.hop_k + 1
    }

    pub fn dim(&self) -> usize {
        self.tokens.shape()[2]
    }

    /// Stack the token sequences of the given nodes into a 2-D batch with
    /// `seq_len` consecutive rows per node.
    pub fn gather(&self, nodes: &[usize]) -> Array2<f32> {
        let t = self.seq_len();
        let d = self.dim();
        let mut out = Array2::<f32>::zeros((nodes.len() * t, d));
        for (i, &v) in nodes.iter().enumerate() {
            out.slice_mut(s![i * t..(i + 1) * t, ..])
                .assign(&self.tokens.slice(s![v, .., ..]));
        }
        out
    }
}

pub fn hop2token(
    graph_id: &str,
    x_aug: &Array2<f32>,
    adj: &NormalizedAdjacency,
    hop_k: usize,
    pe_dim: usize,
) -> Result<TokenizedGraph> {
    let (n, d) = x_aug.dim();
    if adj.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "adjacency is {}x{} but features have {n} rows",
            adj.n(),
            adj.n()
        )));
    }
    let mut tokens = Array3::<f32>::zeros((n, hop_k + 1, d));
    let mut current = x_aug.clone();
    for k in 0..=hop_k {
        if k > 0 {
            current = adj.matrix().matmul(&current.view());
        }
        for v in 0..n {
            tokens.slice_mut(s![v, k, ..]).assign(&current.row(v));
        }
    }
    if tokens.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite token for graph `{graph_id}`"
        )));
    }
    Ok(TokenizedGraph {
        graph_id: graph_id.to_string(),
        hop_k,
        pe_dim,
        tokens,
    })
}

/// A graph plus everything training needs, computed once.
#[derive(Debug, Clone)]
pub struct PreprocessedGraph {
    pub dataset: GraphDataset,
    pub adjacency: NormalizedAdjacency,
    pub mean_adjacency: CsrMatrix,
    pub x_aug: Array2<f32>,
    pub tokens: TokenizedGraph,
}

impl PreprocessedGraph {
    pub fn graph_id(&self) -> &str {
        &self.dataset.graph_id
    }

    pub fn aug_dim(&self) -> usize {
        self.x_aug.ncols()
    }
}

pub fn preprocess_graph(g: &GraphDataset, pe_dim: usize, hop_k: usize) -> Result<PreprocessedGraph> {
    let adjacency = normalize_adjacency(g);
    let pe = if pe_dim == 0 {
        Array2::<f64>::zeros((g.num_nodes, 0))
    } else {
        laplacian_pe(g, pe_dim)?.vectors
    };
    let x_aug = augment_features(g, &pe)?;
    let tokens = hop2token(&g.graph_id, &x_aug, &adjacency, hop_k, pe_dim)?;
    Ok(PreprocessedGraph {
        dataset: g.clone(),
        adjacency,
        mean_adjacency: mean_adjacency(g),
        x_aug,
        tokens,
    })
}

/// Preprocess every family member; graphs run in parallel.
pub fn preprocess_family(
    family: &GraphFamily,
    pe_dim: usize,
    hop_k: usize,
) -> Result<Vec<PreprocessedGraph>> {
    family
        .graphs
        .par_iter()
        .map(|g| preprocess_graph(g, pe_dim, hop_k))
        .collect()
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct TokenCacheHeader {
    graph_id: String,
    num_nodes: usize,
    hop_k: usize,
    dim: usize,
}

/// Cache file name for a dataset/preprocessing combination.
pub fn token_cache_name(g: &GraphDataset, pe_dim: usize, hop_k: usize) -> String {
    format!("{}-pe{pe_dim}-k{hop_k}.tokens", g.content_digest())
}

/// Binary token container: u32 little-endian JSON header length, the JSON
/// header, then row-major little-endian f32 values.
pub fn write_token_cache(tok: &TokenizedGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = TokenCacheHeader {
        graph_id: tok.graph_id.clone(),
        num_nodes: tok.num_nodes(),
        hop_k: tok.hop_k,
        dim: tok.dim(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(4 + header_json.len() + tok.tokens.len() * 4);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for x in tok.tokens.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_token_cache(path: impl AsRef<Path>, pe_dim: usize) -> Result<TokenizedGraph> {
    let path: &Path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        path: PathBuf::from(path),
        reason,
    };
    if bytes.len() < 4 {
        return Err(bad("missing header length".into()));
    }
    let header_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + header_len {
        return Err(bad("truncated header".into()));
    }
    let header: TokenCacheHeader = serde_json::from_slice(&bytes[4..4 + header_len])
        .map_err(|e| bad(format!("bad header: {e}")))?;
    let expected = 4 + header_len + header.num_nodes * (header.hop_k + 1) * header.dim * 4;
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes[4 + header_len..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let tokens =
        Array3::from_shape_vec((header.num_nodes, header.hop_k + 1, header.dim), values)
            .map_err(|e| bad(e.to_string()))?;
    Ok(TokenizedGraph {
        graph_id: header.graph_id,
        hop_k: header.hop_k,
        pe_dim,
        tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Splits;
    use ndarray::array;

    fn graph(n: usize, edges: Vec<(usize, usize)>) -> GraphDataset {
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f32 * 0.5 + 1.0);
        GraphDataset::new(
            "t",
            n,
            edges,
            features,
            vec![0; n],
            1,
            Splits::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_node_normalizes_to_identity() {
        let adj = normalize_adjacency(&graph(1, vec![]));
        assert_eq!(adj.matrix().to_dense(), array![[1.0]]);
    }

    #[test]
    fn two_node_edge_gives_uniform_half() {
        let adj = normalize_adjacency(&graph(2, vec![(0, 1)]));
        assert_eq!(adj.matrix().to_dense(), array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn normalized_rows_sum_to_at_most_one() {
        let g = graph(6, vec![(0, 1), (0, 2), (1, 2), (3, 4)]);
        let adj = normalize_adjacency(&g);
        for r in 0..6 {
            assert!(adj.matrix().row_sum(r) <= 1.0 + 1e-9);
        }
        assert!(adj.matrix().is_symmetric(0.0));
        assert!(adj.matrix().iter().all(|(_, _, v)| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn augment_concatenates_columns() {
        let g = graph(2, vec![(0, 1)]);
        let pe = array![[10.0f64, 20.0], [30.0, 40.0]];
        let x = augment_features(&g, &pe).unwrap();
        assert_eq!(x.ncols(), 4);
        assert_eq!(x[[0, 0]], g.features[[0, 0]]);
        assert_eq!(x[[1, 1]], g.features[[1, 1]]);
        assert_eq!(x[[0, 2]], 10.0);
        assert_eq!(x[[1, 3]], 40.0);
    }

    #[test]
    fn augment_with_no_pe_is_identity() {
        let g = graph(3, vec![]);
        let pe = Array2::<f64>::zeros((3, 0));
        let x = augment_features(&g, &pe).unwrap();
        assert_eq!(x, g.features);
    }

    #[test]
    fn augment_rejects_row_mismatch() {
        let g = graph(3, vec![]);
        let pe = Array2::<f64>::zeros((2, 1));
        assert!(augment_features(&g, &pe).is_err());
    }

    #[test]
    fn hop_zero_is_the_augmented_features() {
        let g = graph(4, vec![(0, 1), (2, 3)]);
        let adj = normalize_adjacency(&g);
        let x = augment_features(&g, &Array2::zeros((4, 0))).unwrap();
        let tok = hop2token("t", &x, &adj, 0, 0).unwrap();
        assert_eq!(tok.seq_len(), 1);
        for v in 0..4 {
            assert_eq!(tok.tokens.slice(s![v, 0, ..]).to_vec(), x.row(v).to_vec());
        }
    }

    #[test]
    fn two_node_identity_features_propagate_by_hand() {
        // X̃ = I₂ on the single-edge graph: hop1 rows are both [0.5, 0.5]
        let g = GraphDataset::new(
            "t",
            2,
            vec![(0, 1)],
            array![[1.0f32, 0.0], [0.0, 1.0]],
            vec![0, 0],
            1,
            Splits::default(),
        )
        .unwrap();
        let adj = normalize_adjacency(&g);
        let tok = hop2token("t", &g.features.clone(), &adj, 1, 0).unwrap();
        assert_eq!(tok.tokens.slice(s![0, 0, ..]).to_vec(), vec![1.0, 0.0]);
        assert_eq!(tok.tokens.slice(s![0, 1, ..]).to_vec(), vec![0.5, 0.5]);
        assert_eq!(tok.tokens.slice(s![1, 1, ..]).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn hop_prefix_property() {
        let g = graph(5, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        let adj = normalize_adjacency(&g);
        let x = augment_features(&g, &Array2::zeros((5, 0))).unwrap();
        let k3 = hop2token("t", &x, &adj, 3, 0).unwrap();
        let k2 = hop2token("t", &x, &adj, 2, 0).unwrap();
        assert_eq!(k3.tokens.slice(s![.., ..3, ..]), k2.tokens.view());
    }

    #[test]
    fn gather_stacks_sequences() {
        let g = graph(4, vec![(0, 1)]);
        let adj = normalize_adjacency(&g);
        let x = augment_features(&g, &Array2::zeros((4, 0))).unwrap();
        let tok = hop2token("t", &x, &adj, 1, 0).unwrap();
        let batch = tok.gather(&[2, 0]);
        assert_eq!(batch.nrows(), 4);
        assert_eq!(batch.row(0).to_vec(), x.row(2).to_vec());
        assert_eq!(batch.row(2).to_vec(), x.row(0).to_vec());
    }

    #[test]
    fn token_cache_round_trip() {
        let g = graph(4, vec![(0, 1), (1, 2)]);
        let prep = preprocess_graph(&g, 2, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(token_cache_name(&g, 2, 2));
        write_token_cache(&prep.tokens, &path).unwrap();
        let loaded = read_token_cache(&path, 2).unwrap();
        assert_eq!(loaded, prep.tokens);
    }
}
