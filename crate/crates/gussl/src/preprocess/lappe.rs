//! Laplacian positional embeddings.
//!
//! Eigenvectors of the normalized Laplacian L = I − Â for the smallest
//! nontrivial eigenvalues. The entire kernel of L (one zero eigenvalue per
//! connected component) is skipped structurally — the component count comes
//! from a graph traversal, not from thresholding eigenvalues. Eigenvector
//! signs are fixed so the entry of largest magnitude is positive, ties
//! broken by lowest node index; this makes the embedding deterministic
//! across eigensolver implementations.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use super::normalize_adjacency;
use crate::error::{Error, Result};
use crate::graph::GraphDataset;

const MAX_EIGEN_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct LaplacianPe {
    /// (num_nodes, pe_dim) eigenvector columns, unit-norm, sign-fixed.
    pub vectors: Array2<f64>,
    /// The selected eigenvalues, ascending.
    pub values: Vec<f64>,
}

/// Computed once per graph in 64-bit arithmetic; cast to 32-bit only when
/// features are augmented.
pub fn laplacian_pe(g: &GraphDataset, pe_dim: usize) -> Result<LaplacianPe> {
    let n = g.num_nodes;
    if pe_dim >= n {
        return Err(Error::InvalidSpec(format!(
            "pe_dim {pe_dim} must be smaller than num_nodes {n} (graph `{}`)",
            g.graph_id
        )));
    }
    let components = g.num_components();
    if pe_dim + components > n {
        return Err(Error::InvalidSpec(format!(
            "graph `{}` has {components} components; only {} nontrivial eigenvectors exist, {pe_dim} requested",
            g.graph_id,
            n - components
        )));
    }

    // L = I - Â, dense; desk-scale graphs keep this affordable.
    let adj = normalize_adjacency(g);
    let mut lap = DMatrix::<f64>::identity(n, n);
    for (r, c, v) in adj.matrix().iter() {
        lap[(r, c)] -= v;
    }

    let eigen = SymmetricEigen::try_new(lap, f64::EPSILON, MAX_EIGEN_ITERATIONS).ok_or_else(
        || {
            Error::Numerical(format!(
                "eigensolver did not converge for graph `{}`",
                g.graph_id
            ))
        },
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));

    let selected = &order[components..components + pe_dim];
    let mut vectors = Array2::<f64>::zeros((n, pe_dim));
    let mut values = Vec::with_capacity(pe_dim);
    for (col, &idx) in selected.iter().enumerate() {
        values.push(eigen.eigenvalues[idx]);
        let v = eigen.eigenvectors.column(idx);
        let norm = v.norm();
        // largest-magnitude entry decides the sign; ties -> lowest index
        let mut ref_idx = 0;
        for i in 1..n {
            if v[i].abs() > v[ref_idx].abs() {
                ref_idx = i;
            }
        }
        let flip = if v[ref_idx] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, col]] = flip * v[i] / norm;
        }
    }
    Ok(LaplacianPe { vectors, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Splits;
    use ndarray::array;

    fn path2() -> GraphDataset {
        GraphDataset::new(
            "p2",
            2,
            vec![(0, 1)],
            array![[1.0f32], [2.0]],
            vec![0, 0],
            1,
            Splits::default(),
        )
        .unwrap()
    }

    #[test]
    fn two_node_path_by_hand() {
        // L = [[0.5, -0.5], [-0.5, 0.5]], eigenvalues {0, 1}; the nontrivial
        // eigenvector is [1, -1]/sqrt(2) with the tie-broken sign on node 0.
        let pe = laplacian_pe(&path2(), 1).unwrap();
        assert!((pe.values[0] - 1.0).abs() < 1e-12);
        assert!((pe.vectors[[0, 0]] - 0.70710678).abs() < 1e-8);
        assert!((pe.vectors[[1, 0]] + 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn rejects_pe_dim_not_below_n() {
        assert!(laplacian_pe(&path2(), 2).is_err());
    }

    #[test]
    fn skips_one_zero_eigenvalue_per_component() {
        // two disjoint edges: 2 components, kernel dimension 2
        let g = GraphDataset::new(
            "two",
            4,
            vec![(0, 1), (2, 3)],
            Array2::zeros((4, 1)),
            vec![0; 4],
            1,
            Splits::default(),
        )
        .unwrap();
        let pe = laplacian_pe(&g, 2).unwrap();
        // both selected eigenvalues are nontrivial
        assert!(pe.values.iter().all(|&l| l > 1e-9));
        // asking for more than n - components must fail
        assert!(laplacian_pe(&g, 3).is_err());
    }

    #[test]
    fn columns_are_orthonormal() {
        let g = GraphDataset::new(
            "ring",
            6,
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
            Array2::zeros((6, 1)),
            vec![0; 6],
            1,
            Splits::default(),
        )
        .unwrap();
        let pe = laplacian_pe(&g, 3).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..6).map(|i| pe.vectors[[i, a]] * pe.vectors[[i, b]]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (dot - expected).abs() < 1e-6,
                    "columns {a},{b} dot = {dot}"
                );
            }
        }
    }

    #[test]
    fn invariant_to_edge_list_permutation() {
        let edges = vec![(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)];
        let mut permuted = edges.clone();
        permuted.reverse();
        let make = |e: Vec<(usize, usize)>| {
            GraphDataset::new("g", 4, e, Array2::zeros((4, 1)), vec![0; 4], 1, Splits::default())
                .unwrap()
        };
        let a = laplacian_pe(&make(edges), 2).unwrap();
        let b = laplacian_pe(&make(permuted), 2).unwrap();
        assert_eq!(a.vectors, b.vectors);
    }
}
