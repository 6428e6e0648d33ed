//! PairSim supervision: balanced sets of attribute-similar and
//! attribute-dissimilar node pairs.
//!
//! Selection rule: rank a candidate pool of unordered pairs by cosine
//! similarity of raw features (a zero feature row has cosine 0 with
//! everything). The positives are the `ceil(budget/2)` highest-similarity
//! pairs, the negatives the `floor(budget/2)` lowest-similarity pairs from
//! the remaining pool; ties break by lexicographic pair order. The pool is
//! exhaustive for graphs up to 1024 nodes, and a seeded uniform sample of
//! `64 · budget` distinct pairs beyond that.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::GraphDataset;

const EXHAUSTIVE_NODE_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairExample {
    pub u: usize,
    pub v: usize,
    /// 1 = similar, 0 = dissimilar.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairLabelSet {
    /// Positives first (highest similarity first), then negatives (lowest
    /// similarity first).
    pub pairs: Vec<PairExample>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub seed: u64,
}

/// Cosine similarity of two feature rows, accumulated in f64 and in index
/// order so the value is reproducible. Zero rows yield 0.
fn cosine(features: &ndarray::Array2<f32>, u: usize, v: usize) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..features.ncols() {
        let a = features[[u, j]] as f64;
        let b = features[[v, j]] as f64;
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

pub fn sample_pairsim(g: &GraphDataset, budget: usize, seed: u64) -> Result<PairLabelSet> {
    if budget < 2 {
        return Err(Error::InvalidSpec(format!(
            "pair budget {budget} must be at least 2"
        )));
    }
    let n = g.num_nodes;
    if n < 4 {
        return Err(Error::InvalidSpec(format!(
            "PairSim needs at least 4 nodes, graph `{}` has {n}",
            g.graph_id
        )));
    }
    let total_pairs = n * (n - 1) / 2;
    if budget > total_pairs {
        return Err(Error::InvalidSpec(format!(
            "pair budget {budget} exceeds the {total_pairs} distinct pairs of graph `{}`",
            g.graph_id
        )));
    }

    let pool: Vec<(usize, usize)> = if n <= EXHAUSTIVE_NODE_LIMIT {
        let mut all = Vec::with_capacity(total_pairs);
        for u in 0..n {
            for v in (u + 1)..n {
                all.push((u, v));
            }
        }
        all
    } else {
        let target = (64 * budget).min(total_pairs);
        if target * 2 >= total_pairs {
            // rejection sampling would stall near full coverage
            let mut all = Vec::with_capacity(total_pairs);
            for u in 0..n {
                for v in (u + 1)..n {
                    all.push((u, v));
                }
            }
            all
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = HashSet::with_capacity(target);
            let mut sampled = Vec::with_capacity(target);
            while sampled.len() < target {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a == b {
                    continue;
                }
                let pair = (a.min(b), a.max(b));
                if seen.insert(pair) {
                    sampled.push(pair);
                }
            }
            sampled
        }
    };
    if budget > pool.len() {
        return Err(Error::InvalidSpec(format!(
            "pair budget {budget} exceeds the candidate pool of {} pairs",
            pool.len()
        )));
    }

    let mut scored: Vec<(usize, usize, f64)> = pool
        .iter()
        .map(|&(u, v)| (u, v, cosine(&g.features, u, v)))
        .collect();

    let n_pos = budget.div_ceil(2);
    let n_neg = budget / 2;

    // positives: similarity descending, then lexicographic pair order
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| (a.0, a.1).cmp(&(b.0, b.1))));
    let positives: Vec<(usize, usize)> = scored[..n_pos].iter().map(|&(u, v, _)| (u, v)).collect();

    // negatives: similarity ascending over the remaining pool
    let mut rest: Vec<&(usize, usize, f64)> = scored[n_pos..].iter().collect();
    rest.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| (a.0, a.1).cmp(&(b.0, b.1))));
    let negatives: Vec<(usize, usize)> = rest[..n_neg].iter().map(|&&(u, v, _)| (u, v)).collect();

    let mut pairs = Vec::with_capacity(budget);
    pairs.extend(positives.iter().map(|&(u, v)| PairExample { u, v, label: 1 }));
    pairs.extend(negatives.iter().map(|&(u, v)| PairExample { u, v, label: 0 }));

    Ok(PairLabelSet {
        pairs,
        n_pos,
        n_neg,
        seed,
    })
}

impl PairLabelSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Splits;
    use ndarray::array;

    fn graph_with_features(features: ndarray::Array2<f32>) -> GraphDataset {
        let n = features.nrows();
        GraphDataset::new("t", n, vec![], features, vec![0; n], 1, Splits::default()).unwrap()
    }

    #[test]
    fn worked_four_node_example() {
        // rows: [1,0], [2,0], [0,1], [0,3]
        // cos=1 for (0,1) and (2,3); all cross pairs have cos=0
        let g = graph_with_features(array![
            [1.0f32, 0.0],
            [2.0, 0.0],
            [0.0, 1.0],
            [0.0, 3.0]
        ]);
        let set = sample_pairsim(&g, 4, 0).unwrap();
        let pos: Vec<(usize, usize)> = set.pairs[..2].iter().map(|p| (p.u, p.v)).collect();
        let neg: Vec<(usize, usize)> = set.pairs[2..].iter().map(|p| (p.u, p.v)).collect();
        assert_eq!(pos, vec![(0, 1), (2, 3)]);
        assert_eq!(neg, vec![(0, 2), (0, 3)]);
    }

    #[test]
    fn zero_feature_rows_land_in_the_negative_pool() {
        let g = graph_with_features(array![
            [0.0f32, 0.0],
            [1.0, 0.0],
            [1.0, 0.1],
            [1.0, 0.2]
        ]);
        let set = sample_pairsim(&g, 4, 0).unwrap();
        let negatives: Vec<(usize, usize)> =
            set.pairs.iter().filter(|p| p.label == 0).map(|p| (p.u, p.v)).collect();
        // pairs with node 0 all have cosine 0, the smallest similarity here
        assert!(negatives.iter().all(|&(u, _)| u == 0));
    }

    #[test]
    fn deterministic_under_seed() {
        let feats = ndarray::Array2::from_shape_fn((40, 5), |(i, j)| {
            ((i * 31 + j * 17) % 23) as f32 * 0.1 - 1.0
        });
        let g = graph_with_features(feats);
        let a = sample_pairsim(&g, 20, 9).unwrap();
        let b = sample_pairsim(&g, 20, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balanced_within_one() {
        let feats = ndarray::Array2::from_shape_fn((10, 3), |(i, j)| (i + j) as f32);
        let g = graph_with_features(feats);
        let set = sample_pairsim(&g, 7, 0).unwrap();
        assert_eq!(set.n_pos, 4);
        assert_eq!(set.n_neg, 3);
        assert_eq!(set.len(), 7);
    }

    #[test]
    fn budget_larger_than_pool_is_an_error() {
        let g = graph_with_features(ndarray::Array2::zeros((4, 2)));
        assert!(sample_pairsim(&g, 7, 0).is_err()); // C(4,2) = 6
    }

    #[test]
    fn no_duplicate_unordered_pairs() {
        let feats = ndarray::Array2::from_shape_fn((12, 2), |(i, _)| (i % 3) as f32);
        let g = graph_with_features(feats);
        let set = sample_pairsim(&g, 12, 1).unwrap();
        let mut seen = std::collections::HashSet::new();
        for p in &set.pairs {
            assert!(p.u < p.v);
            assert!(seen.insert((p.u, p.v)), "duplicate pair ({}, {})", p.u, p.v);
        }
    }

    #[test]
    fn positive_mean_cosine_dominates_negative() {
        let feats = ndarray::Array2::from_shape_fn((30, 4), |(i, j)| {
            ((i * 7 + j * 13) % 11) as f32 * 0.3 - 1.5
        });
        let g = graph_with_features(feats.clone());
        let set = sample_pairsim(&g, 16, 2).unwrap();
        let mean = |label: usize| {
            let sel: Vec<f64> = set
                .pairs
                .iter()
                .filter(|p| p.label == label)
                .map(|p| cosine(&feats, p.u, p.v))
                .collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        assert!(mean(1) > mean(0));
    }
}
