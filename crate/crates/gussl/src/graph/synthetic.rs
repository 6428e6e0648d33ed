//! Synthetic graph families: stochastic block models whose node features are
//! noisy, graph-specific linear views of shared class prototypes.
//!
//! Every graph in a family draws its block structure and labels from the
//! same class set, and its features from the same latent prototypes — but
//! through its own random projection into its own feature dimension. The
//! family therefore shares latent structure while presenting disparate
//! observed feature spaces, which is exactly the setting universal
//! pre-training targets.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GraphDataset, GraphFamily, Provenance, Splits};
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFamilySpec {
    /// Node count of each graph; one entry per graph.
    pub graph_sizes: Vec<usize>,
    /// Observed feature dimension of each graph; length must match
    /// `graph_sizes`.
    pub feature_dims: Vec<usize>,
    /// Number of downstream classes, shared by the whole family.
    pub num_classes: usize,
    /// Edge probability within a class block.
    pub intra_p: f64,
    /// Edge probability across class blocks.
    pub inter_p: f64,
    /// Dimension of the shared latent prototype space.
    pub latent_dim: usize,
    /// Standard deviation of per-node feature noise (in observed space).
    pub noise_std: f64,
    /// Split fractions; test gets the remainder.
    pub train_frac: f64,
    pub val_frac: f64,
    /// Prefix for generated graph ids (`<prefix>0`, `<prefix>1`, ...).
    pub id_prefix: String,
}

impl Default for SyntheticFamilySpec {
    fn default() -> Self {
        SyntheticFamilySpec {
            graph_sizes: vec![500, 500, 500],
            feature_dims: vec![32, 48, 64],
            num_classes: 5,
            intra_p: 0.05,
            inter_p: 0.005,
            latent_dim: 16,
            noise_std: 1.0,
            train_frac: 0.6,
            val_frac: 0.2,
            id_prefix: "synth".into(),
        }
    }
}

impl SyntheticFamilySpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.graph_sizes.is_empty() {
            return bad("family must contain at least one graph".into());
        }
        if self.graph_sizes.len() != self.feature_dims.len() {
            return bad(format!(
                "graph_sizes ({}) and feature_dims ({}) must have equal length",
                self.graph_sizes.len(),
                self.feature_dims.len()
            ));
        }
        if self.graph_sizes.iter().any(|&n| n == 0) {
            return bad("graph size must be positive".into());
        }
        if self.feature_dims.iter().any(|&d| d == 0) {
            return bad("feature dimension must be positive".into());
        }
        if self.num_classes == 0 {
            return bad("num_classes must be positive".into());
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        for (name, p) in [("intra_p", self.intra_p), ("inter_p", self.inter_p)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.train_frac < 0.0
            || self.val_frac < 0.0
            || self.train_frac + self.val_frac > 1.0
        {
            return bad("split fractions must be nonnegative and sum to at most 1".into());
        }
        Ok(())
    }
}

/// Generate a family deterministically from `(spec, seed)`.
pub fn generate_family(spec: &SyntheticFamilySpec, seed: u64) -> Result<GraphFamily> {
    spec.validate()?;

    // Shared prototypes: one latent vector per class.
    let mut proto_rng = seeds::rng(seed, "family.prototypes", &[]);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let prototypes = Array2::from_shape_fn((spec.num_classes, spec.latent_dim), |_| {
        std_normal.sample(&mut proto_rng)
    });

    let graphs: Vec<GraphDataset> = spec
        .graph_sizes
        .iter()
        .zip(&spec.feature_dims)
        .enumerate()
        .map(|(i, (&n, &dim))| generate_graph(spec, seed, i, n, dim, &prototypes))
        .collect::<Result<_>>()?;

    GraphFamily::new(
        graphs,
        seed,
        Provenance::Synthetic { spec: spec.clone() },
    )
}

fn generate_graph(
    spec: &SyntheticFamilySpec,
    seed: u64,
    index: usize,
    num_nodes: usize,
    feature_dim: usize,
    prototypes: &Array2<f64>,
) -> Result<GraphDataset> {
    let gi = index as u64;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    let mut label_rng = seeds::rng(seed, "graph.labels", &[gi]);
    let labels: Vec<usize> = (0..num_nodes)
        .map(|_| label_rng.random_range(0..spec.num_classes))
        .collect();

    let mut edge_rng = seeds::rng(seed, "graph.edges", &[gi]);
    let mut edges = Vec::new();
    for u in 0..num_nodes {
        for v in (u + 1)..num_nodes {
            let p = if labels[u] == labels[v] {
                spec.intra_p
            } else {
                spec.inter_p
            };
            if edge_rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    if edges.is_empty() {
        log::warn!(
            "synthetic graph {}{index} has zero edges (intra_p={}, inter_p={})",
            spec.id_prefix,
            spec.intra_p,
            spec.inter_p
        );
    }

    // Graph-specific observation map: latent prototypes -> observed space,
    // scaled so observed feature magnitudes stay O(1) regardless of latent_dim.
    let mut map_rng = seeds::rng(seed, "graph.feature_map", &[gi]);
    let scale = 1.0 / (spec.latent_dim as f64).sqrt();
    let feature_map = Array2::from_shape_fn((spec.latent_dim, feature_dim), |_| {
        std_normal.sample(&mut map_rng) * scale
    });
    let class_means = prototypes.dot(&feature_map);

    let mut noise_rng = seeds::rng(seed, "graph.feature_noise", &[gi]);
    let mut features = Array2::<f32>::zeros((num_nodes, feature_dim));
    for v in 0..num_nodes {
        let mean = class_means.row(labels[v]);
        for j in 0..feature_dim {
            let x = mean[j] + spec.noise_std * std_normal.sample(&mut noise_rng);
            features[[v, j]] = x as f32;
        }
    }

    let splits = stratified_splits(
        &labels,
        spec.num_classes,
        spec.train_frac,
        spec.val_frac,
        &mut seeds::rng(seed, "graph.splits", &[gi]),
    );

    GraphDataset::new(
        format!("{}{index}", spec.id_prefix),
        num_nodes,
        edges,
        features,
        labels,
        spec.num_classes,
        splits,
    )
}

/// Per class: shuffle its nodes, then cut train/val/test by the given
/// fractions (test takes the remainder).
fn stratified_splits(
    labels: &[usize],
    num_classes: usize,
    train_frac: f64,
    val_frac: f64,
    rng: &mut impl Rng,
) -> Splits {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (node, &c) in labels.iter().enumerate() {
        by_class[c].push(node);
    }
    let mut splits = Splits::default();
    for members in &mut by_class {
        members.shuffle(rng);
        let n = members.len();
        let n_train = ((n as f64) * train_frac).floor() as usize;
        let n_val = ((n as f64) * val_frac).floor() as usize;
        splits.train.extend(&members[..n_train]);
        splits.val.extend(&members[n_train..n_train + n_val]);
        splits.test.extend(&members[n_train + n_val..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    splits
}
