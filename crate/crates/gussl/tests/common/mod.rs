//! Shared oracles for the integration and acceptance suites. Everything in
//! here recomputes expected values through an independent route: dense
//! matrix arithmetic, a hand-rolled Jacobi eigensolver, exhaustive pair
//! enumeration, and central finite differences.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gussl::graph::{GraphDataset, Splits};
use gussl::model::params::{ParamRef, ParamRefMut, ParamSet};
use gussl::model::UniversalModel;

/// Seeded Erdős–Rényi-style test graph with uniform random features.
pub fn random_graph(seed: u64, num_nodes: usize, edge_p: f64, feature_dim: usize) -> GraphDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..num_nodes {
        for v in (u + 1)..num_nodes {
            if rng.random::<f64>() < edge_p {
                edges.push((u, v));
            }
        }
    }
    let features =
        Array2::from_shape_fn((num_nodes, feature_dim), |_| rng.random_range(-1.0f32..1.0));
    let num_classes = 3.min(num_nodes);
    let labels: Vec<usize> = (0..num_nodes).map(|v| v % num_classes).collect();
    let nodes: Vec<usize> = (0..num_nodes).collect();
    let splits = Splits {
        train: nodes.iter().copied().filter(|v| v % 3 != 2).collect(),
        val: vec![],
        test: nodes.iter().copied().filter(|v| v % 3 == 2).collect(),
    };
    GraphDataset::new(
        format!("rg{seed}"),
        num_nodes,
        edges,
        features,
        labels,
        num_classes,
        splits,
    )
    .unwrap()
}

/// Dense oracle for the symmetric normalization: D̃^{-1/2} (A+I) D̃^{-1/2}.
pub fn dense_normalized_adjacency(g: &GraphDataset) -> Array2<f64> {
    let n = g.num_nodes;
    let mut a = Array2::<f64>::eye(n);
    for &(u, v) in &g.edges {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    let mut d_inv_sqrt = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let deg: f64 = a.row(i).sum();
        d_inv_sqrt[[i, i]] = 1.0 / deg.sqrt();
    }
    d_inv_sqrt.dot(&a).dot(&d_inv_sqrt)
}

/// Dense oracle for hop tokens: tokens[v][k] = (Â^k X̃)[v], computed with
/// f64 dense matrix powers.
pub fn dense_hop_tokens(g: &GraphDataset, x_aug: &Array2<f32>, hop_k: usize) -> Array3<f64> {
    let adj = dense_normalized_adjacency(g);
    let (n, d) = x_aug.dim();
    let mut current = x_aug.mapv(|x| x as f64);
    let mut out = Array3::<f64>::zeros((n, hop_k + 1, d));
    for k in 0..=hop_k {
        if k > 0 {
            current = adj.dot(&current);
        }
        for v in 0..n {
            for j in 0..d {
                out[[v, k, j]] = current[[v, j]];
            }
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues ascending, eigenvectors as columns in matching order).
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut vecs = Array2::<f64>::eye(n);
    for _sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = vecs[[k, p]];
                    let vkq = vecs[[k, q]];
                    vecs[[k, p]] = c * vkp - s * vkq;
                    vecs[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]));
    let values: Vec<f64> = order.iter().map(|&i| m[[i, i]]).collect();
    let mut sorted_vecs = Array2::<f64>::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            sorted_vecs[[r, col]] = vecs[[r, i]];
        }
    }
    (values, sorted_vecs)
}

/// Laplacian spectrum oracle: eigenvalues of I − Â via Jacobi, ascending.
pub fn dense_laplacian_spectrum(g: &GraphDataset) -> Vec<f64> {
    let adj = dense_normalized_adjacency(g);
    let n = g.num_nodes;
    let mut lap = Array2::<f64>::eye(n);
    lap -= &adj;
    jacobi_eigen(&lap).0
}

/// Exhaustive PairSim oracle: enumerate every unordered pair, score by
/// cosine over raw features (zero rows score 0), pick `ceil(budget/2)`
/// positives by (similarity desc, pair asc) and `floor(budget/2)` negatives
/// from the rest by (similarity asc, pair asc).
pub fn brute_force_pairsim(
    features: &Array2<f32>,
    budget: usize,
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let n = features.nrows();
    let cos = |u: usize, v: usize| -> f64 {
        let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..features.ncols() {
            let a = features[[u, j]] as f64;
            let b = features[[v, j]] as f64;
            dot += a * b;
            nu += a * a;
            nv += b * b;
        }
        if nu == 0.0 || nv == 0.0 {
            0.0
        } else {
            dot / (nu.sqrt() * nv.sqrt())
        }
    };
    let mut scored = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            scored.push((u, v, cos(u, v)));
        }
    }
    let n_pos = budget.div_ceil(2);
    let n_neg = budget / 2;
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| (a.0, a.1).cmp(&(b.0, b.1))));
    let positives: Vec<(usize, usize)> = scored[..n_pos].iter().map(|&(u, v, _)| (u, v)).collect();
    let mut rest: Vec<(usize, usize, f64)> = scored[n_pos..].to_vec();
    rest.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| (a.0, a.1).cmp(&(b.0, b.1))));
    let negatives: Vec<(usize, usize)> = rest[..n_neg].iter().map(|&(u, v, _)| (u, v)).collect();
    (positives, negatives)
}

/// Snapshot of every parameter gradient, flattened, keyed by name.
pub fn grad_snapshot(model: &UniversalModel<f64>) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    model.visit("", &mut |name, p| {
        let g: Vec<f64> = match p {
            ParamRef::Mat(m) => m.g.iter().copied().collect(),
            ParamRef::Vec(v) => v.g.iter().copied().collect(),
        };
        out.insert(name, g);
    });
    out
}

pub fn param_element_count(model: &UniversalModel<f64>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    model.visit("", &mut |name, p| {
        out.insert(name, p.numel());
    });
    out
}

/// Add `delta` to one flat element of one named parameter.
pub fn nudge_param(model: &mut UniversalModel<f64>, target: &str, index: usize, delta: f64) {
    let mut found = false;
    model.visit_mut("", &mut |name, p| {
        if name != target {
            return;
        }
        found = true;
        match p {
            ParamRefMut::Mat(m) => m.v.as_slice_mut().unwrap()[index] += delta,
            ParamRefMut::Vec(v) => v.v.as_slice_mut().unwrap()[index] += delta,
        }
    });
    assert!(found, "parameter `{target}` not found");
}

pub struct GradCheckOutcome {
    pub worst_rel_error: f64,
    pub worst_location: String,
    pub failures: Vec<String>,
    pub tensors_checked: usize,
}

/// Central finite differences (64-bit) against the analytic gradients for
/// every element of every parameter tensor.
///
/// `loss_fn(model, with_backward)` must be a pure function of the model
/// parameters; when `with_backward` it also accumulates gradients.
pub fn check_gradients(
    model: &mut UniversalModel<f64>,
    loss_fn: &mut dyn FnMut(&mut UniversalModel<f64>, bool) -> f64,
    eps: f64,
    tol: f64,
) -> GradCheckOutcome {
    model.zero_grads();
    let _ = loss_fn(model, true);
    let analytic = grad_snapshot(model);
    let counts = param_element_count(model);

    let mut worst = 0.0f64;
    let mut worst_location = String::new();
    let mut failures = Vec::new();
    for (name, &len) in &counts {
        for i in 0..len {
            nudge_param(model, name, i, eps);
            let plus = loss_fn(model, false);
            nudge_param(model, name, i, -2.0 * eps);
            let minus = loss_fn(model, false);
            nudge_param(model, name, i, eps);
            let numeric = (plus - minus) / (2.0 * eps);
            let anl = analytic[name][i];
            let rel = (anl - numeric).abs() / anl.abs().max(numeric.abs()).max(1e-6);
            if rel > worst {
                worst = rel;
                worst_location = format!("{name}[{i}]");
            }
            if rel > tol {
                failures.push(format!(
                    "{name}[{i}]: analytic={anl:.3e} numeric={numeric:.3e} rel={rel:.3e}"
                ));
            }
        }
    }
    GradCheckOutcome {
        worst_rel_error: worst,
        worst_location,
        failures,
        tensors_checked: counts.len(),
    }
}

// ---------------------------------------------------------------------------
// Gradient-check fixtures
// ---------------------------------------------------------------------------

use gussl::model::loss::cross_entropy;
use gussl::model::{ModelConfig, UrlVariant};
use gussl::preprocess::{preprocess_graph, PreprocessedGraph};
use ndarray::Axis;

pub fn tiny_model_config(variant: UrlVariant) -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        num_layers: 1,
        num_heads: 2,
        hop_k: 2,
        pe_dim: 2,
        url_variant: variant,
        ffn_multiplier: 2,
        dropout: 0.0,
    }
}

/// A deterministic scalar objective that exercises the encoder, the
/// backbone, and both heads: PairSim cross-entropy on three fixed pairs
/// plus classification cross-entropy on every node.
pub struct GradFixture {
    pub graph: PreprocessedGraph,
    pub rows: Array2<f64>,
    pairs: [(usize, usize); 3],
    pair_labels: [usize; 3],
    node_labels: Vec<usize>,
}

impl GradFixture {
    pub fn new(seed: u64) -> Self {
        let dataset = random_graph(seed, 6, 0.5, 4);
        let graph = preprocess_graph(&dataset, 2, 2).unwrap();
        let rows = graph
            .tokens
            .gather(&[0, 1, 2, 3, 4, 5])
            .mapv(|x| x as f64);
        let node_labels = dataset.labels.clone();
        GradFixture {
            graph,
            rows,
            pairs: [(0, 1), (2, 3), (1, 4)],
            pair_labels: [1, 0, 1],
            node_labels,
        }
    }

    pub fn build_model(&self, variant: UrlVariant, seed: u64) -> UniversalModel<f64> {
        let mut model = UniversalModel::<f64>::new(tiny_model_config(variant), seed).unwrap();
        model
            .register_graph(
                self.graph.graph_id(),
                self.graph.aug_dim(),
                self.graph.dataset.num_classes,
            )
            .unwrap();
        model
    }

    pub fn loss(&self, model: &mut UniversalModel<f64>, with_backward: bool) -> f64 {
        let gid = self.graph.graph_id().to_string();
        let seq = self.graph.tokens.seq_len();
        let n = self.graph.dataset.num_nodes;

        let (reps, cache) = match model.config.url_variant {
            UrlVariant::Transformer => model
                .represent_tokens(&gid, &self.rows.view(), n, seq, None)
                .unwrap(),
            UrlVariant::Gcn | UrlVariant::Sage => {
                let x = self.graph.x_aug.mapv(|v| v as f64);
                model
                    .represent_graph(
                        &gid,
                        &x.view(),
                        self.graph.adjacency.matrix(),
                        &self.graph.mean_adjacency,
                    )
                    .unwrap()
            }
        };

        let us: Vec<usize> = self.pairs.iter().map(|p| p.0).collect();
        let vs: Vec<usize> = self.pairs.iter().map(|p| p.1).collect();
        let h_u = reps.select(Axis(0), &us);
        let h_v = reps.select(Axis(0), &vs);
        let (pair_logits, pair_cache) = model.pair_logits(&gid, &h_u.view(), &h_v.view()).unwrap();
        let (pair_loss, d_pair_logits) = cross_entropy(&pair_logits.view(), &self.pair_labels);

        let class_logits = model.class_logits(&gid, &reps.view()).unwrap();
        let (class_loss, d_class_logits) = cross_entropy(&class_logits.view(), &self.node_labels);

        if with_backward {
            let mut d_reps = model
                .class_logits_backward(&gid, &reps.view(), &d_class_logits.view())
                .unwrap();
            let (d_u, d_v) = model
                .pair_logits_backward(&gid, &pair_cache, &d_pair_logits.view())
                .unwrap();
            for (row, &node) in us.iter().enumerate() {
                for j in 0..d_u.ncols() {
                    d_reps[[node, j]] += d_u[[row, j]];
                }
            }
            for (row, &node) in vs.iter().enumerate() {
                for j in 0..d_v.ncols() {
                    d_reps[[node, j]] += d_v[[row, j]];
                }
            }
            let adjacency = match model.config.url_variant {
                UrlVariant::Transformer => None,
                _ => Some((self.graph.adjacency.matrix(), &self.graph.mean_adjacency)),
            };
            model
                .backward_represent(&cache, &d_reps.view(), adjacency)
                .unwrap();
        }
        pair_loss + class_loss
    }
}
