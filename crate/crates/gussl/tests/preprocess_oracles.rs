//! Preprocessing against independent dense oracles.

mod common;

use common::{
    brute_force_pairsim, dense_hop_tokens, dense_laplacian_spectrum, dense_normalized_adjacency,
    random_graph,
};
use gussl::graph::{generate_family, load_dataset, save_dataset, SyntheticFamilySpec};
use gussl::preprocess::{
    augment_features, hop2token, laplacian_pe, normalize_adjacency, sample_pairsim,
};
use ndarray::Array2;
use proptest::prelude::*;

#[test]
fn normalization_matches_dense_oracle() {
    for seed in 0..8 {
        let g = random_graph(seed, 32, 0.15, 4);
        let ours = normalize_adjacency(&g).matrix().to_dense();
        let oracle = dense_normalized_adjacency(&g);
        let worst = ours
            .iter()
            .zip(oracle.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-12, "seed {seed}: worst entry error {worst}");
    }
}

#[test]
fn hop_tokens_match_dense_power_oracle() {
    let g = random_graph(42, 48, 0.12, 6);
    let adj = normalize_adjacency(&g);
    let pe = laplacian_pe(&g, 3).unwrap();
    let x_aug = augment_features(&g, &pe.vectors).unwrap();
    let tok = hop2token(&g.graph_id, &x_aug, &adj, 4, 3).unwrap();
    let oracle = dense_hop_tokens(&g, &x_aug, 4);
    let worst = tok
        .tokens
        .iter()
        .zip(oracle.iter())
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst < 1e-5, "worst token error {worst}");
}

#[test]
fn laplacian_pe_matches_jacobi_spectrum() {
    let g = random_graph(7, 24, 0.2, 3);
    let components = g.num_components();
    let pe = laplacian_pe(&g, 4).unwrap();
    let oracle = dense_laplacian_spectrum(&g);
    for (i, &lambda) in pe.values.iter().enumerate() {
        let expected = oracle[components + i];
        assert!(
            (lambda - expected).abs() < 1e-8,
            "eigenvalue {i}: {lambda} vs oracle {expected}"
        );
    }
    // orthonormal columns
    for a in 0..4 {
        for b in 0..4 {
            let dot: f64 = (0..g.num_nodes)
                .map(|i| pe.vectors[[i, a]] * pe.vectors[[i, b]])
                .sum();
            let expected = if a == b { 1.0 } else { 0.0 };
            assert!((dot - expected).abs() < 1e-6);
        }
    }
}

#[test]
fn pairsim_equals_exhaustive_selection_exactly() {
    for (seed, n, budget) in [(1u64, 16usize, 10usize), (2, 60, 40), (3, 128, 64)] {
        let g = random_graph(seed, n, 0.1, 5);
        let set = sample_pairsim(&g, budget, seed).unwrap();
        let (pos, neg) = brute_force_pairsim(&g.features, budget);
        let got_pos: Vec<(usize, usize)> = set.pairs[..set.n_pos].iter().map(|p| (p.u, p.v)).collect();
        let got_neg: Vec<(usize, usize)> = set.pairs[set.n_pos..].iter().map(|p| (p.u, p.v)).collect();
        assert_eq!(got_pos, pos, "positives differ for seed {seed}");
        assert_eq!(got_neg, neg, "negatives differ for seed {seed}");
        assert!(set.pairs[..set.n_pos].iter().all(|p| p.label == 1));
        assert!(set.pairs[set.n_pos..].iter().all(|p| p.label == 0));
    }
}

#[test]
fn pairsim_ties_break_lexicographically() {
    // identical feature rows: every pair has cosine 1, selection is purely
    // lexicographic, and positives/negatives must stay disjoint
    let features = Array2::<f32>::ones((6, 3));
    let g = gussl::graph::GraphDataset::new(
        "ties",
        6,
        vec![],
        features.clone(),
        vec![0; 6],
        1,
        Default::default(),
    )
    .unwrap();
    let set = sample_pairsim(&g, 6, 0).unwrap();
    let (pos, neg) = brute_force_pairsim(&features, 6);
    let got_pos: Vec<(usize, usize)> = set.pairs[..3].iter().map(|p| (p.u, p.v)).collect();
    let got_neg: Vec<(usize, usize)> = set.pairs[3..].iter().map(|p| (p.u, p.v)).collect();
    assert_eq!(got_pos, pos);
    assert_eq!(got_neg, neg);
    assert_eq!(got_pos, vec![(0, 1), (0, 2), (0, 3)]);
    assert_eq!(got_neg, vec![(0, 4), (0, 5), (1, 2)]);
}

#[test]
fn dataset_round_trip_through_disk() {
    let fam = generate_family(
        &SyntheticFamilySpec {
            graph_sizes: vec![40],
            feature_dims: vec![6],
            num_classes: 3,
            intra_p: 0.2,
            inter_p: 0.05,
            latent_dim: 4,
            noise_std: 0.4,
            ..Default::default()
        },
        11,
    )
    .unwrap();
    let g = &fam.graphs[0];
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(g, dir.path()).unwrap();
    let reloaded = load_dataset(&manifest).unwrap();
    assert_eq!(g, &reloaded);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prop_round_trip_random_graphs(seed in 0u64..500, n in 4usize..24, p in 0.0f64..0.5) {
        let g = random_graph(seed, n, p, 3);
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(&g, dir.path()).unwrap();
        let reloaded = load_dataset(&manifest).unwrap();
        prop_assert_eq!(&g, &reloaded);
    }

    #[test]
    fn prop_pairsim_is_reproducible_and_balanced(seed in 0u64..200, n in 6usize..40) {
        let g = random_graph(seed, n, 0.1, 4);
        let budget = (n / 2) * 2;
        let a = sample_pairsim(&g, budget, seed).unwrap();
        let b = sample_pairsim(&g, budget, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.n_pos, a.n_neg);
    }

    #[test]
    fn prop_generation_is_deterministic(seed in 0u64..100) {
        let spec = SyntheticFamilySpec {
            graph_sizes: vec![20, 30],
            feature_dims: vec![4, 5],
            num_classes: 2,
            intra_p: 0.3,
            inter_p: 0.05,
            latent_dim: 3,
            noise_std: 0.5,
            ..Default::default()
        };
        let a = generate_family(&spec, seed).unwrap();
        let b = generate_family(&spec, seed).unwrap();
        prop_assert_eq!(&a.graphs, &b.graphs);
    }
}
