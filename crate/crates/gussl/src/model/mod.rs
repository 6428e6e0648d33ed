//! The universal model: one private encoder, pair head, and classifier head
//! per graph, plus a single shared backbone whose parameter count does not
//! depend on how many graphs are registered.

pub mod attention;
pub mod checkpoint;
pub mod gnn;
pub mod heads;
pub mod layers;
pub mod loss;
pub mod params;
pub mod scalar;
pub mod transformer;

use std::collections::BTreeMap;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use crate::sparse::CsrMatrix;
use gnn::{GcnBackbone, GcnCache, SageBackbone, SageCache};
use heads::{ClassifierHead, PairHead, PairHeadCache};
use layers::Linear;
use params::{ParamRef, ParamRefMut, ParamSet};
use scalar::Scalar;
use transformer::{TransformerBackbone, TransformerCache};

/// Which architecture the shared backbone uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UrlVariant {
    Transformer,
    Gcn,
    Sage,
}

impl FromStr for UrlVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(UrlVariant::Transformer),
            "gcn" => Ok(UrlVariant::Gcn),
            "sage" => Ok(UrlVariant::Sage),
            other => Err(Error::InvalidConfig(format!(
                "unknown url variant `{other}` (expected transformer/gcn/sage)"
            ))),
        }
    }
}

impl std::fmt::Display for UrlVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UrlVariant::Transformer => write!(f, "transformer"),
            UrlVariant::Gcn => write!(f, "gcn"),
            UrlVariant::Sage => write!(f, "sage"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub hop_k: usize,
    pub pe_dim: usize,
    pub url_variant: UrlVariant,
    pub ffn_multiplier: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 256,
            num_layers: 4,
            num_heads: 8,
            hop_k: 3,
            pe_dim: 15,
            url_variant: UrlVariant::Transformer,
            ffn_multiplier: 2,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.embed_dim == 0 || self.num_layers == 0 || self.num_heads == 0 {
            return bad("embed_dim, num_layers, and num_heads must be positive".into());
        }
        if self.embed_dim % self.num_heads != 0 {
            return bad(format!(
                "embed_dim ({}) must be divisible by num_heads ({})",
                self.embed_dim, self.num_heads
            ));
        }
        if self.ffn_multiplier == 0 {
            return bad("ffn_multiplier must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Encoder input width for a graph with `feature_dim` raw features.
    pub fn augmented_dim(&self, feature_dim: usize) -> usize {
        feature_dim + self.pe_dim
    }
}

/// The shared (universal) part of the model.
#[derive(Debug, Clone)]
pub enum Backbone<F> {
    Transformer(TransformerBackbone<F>),
    Gcn(GcnBackbone<F>),
    Sage(SageBackbone<F>),
}

impl<F: Scalar> ParamSet<F> for Backbone<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        match self {
            Backbone::Transformer(b) => b.visit(prefix, f),
            Backbone::Gcn(b) => b.visit(prefix, f),
            Backbone::Sage(b) => b.visit(prefix, f),
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        match self {
            Backbone::Transformer(b) => b.visit_mut(prefix, f),
            Backbone::Gcn(b) => b.visit_mut(prefix, f),
            Backbone::Sage(b) => b.visit_mut(prefix, f),
        }
    }
}

enum BackboneCache<F> {
    Transformer(TransformerCache<F>),
    Gcn(GcnCache<F>),
    Sage(SageCache<F>),
}

/// Everything backward needs to replay one representation pass.
pub struct ForwardCache<F> {
    graph_id: String,
    /// Rows fed to the graph encoder: (batch·tokens, aug_dim) for the
    /// transformer route, (num_nodes, aug_dim) for the GNN routes.
    input: Array2<F>,
    backbone: BackboneCache<F>,
}

#[derive(Debug)]
pub struct UniversalModel<F> {
    pub config: ModelConfig,
    pub init_seed: u64,
    encoders: BTreeMap<String, Linear<F>>,
    backbone: Backbone<F>,
    pair_heads: BTreeMap<String, PairHead<F>>,
    class_heads: BTreeMap<String, ClassifierHead<F>>,
}

impl<F: Scalar> UniversalModel<F> {
    /// Build a model with an initialized backbone and no graphs registered.
    pub fn new(config: ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds::rng(init_seed, "init.backbone", &[]);
        let backbone = match config.url_variant {
            UrlVariant::Transformer => Backbone::Transformer(TransformerBackbone::new(
                config.embed_dim,
                config.num_layers,
                config.num_heads,
                config.ffn_multiplier,
                &mut rng,
            )),
            UrlVariant::Gcn => Backbone::Gcn(GcnBackbone::new(config.embed_dim, &mut rng)),
            UrlVariant::Sage => Backbone::Sage(SageBackbone::new(config.embed_dim, &mut rng)),
        };
        Ok(UniversalModel {
            config,
            init_seed,
            encoders: BTreeMap::new(),
            backbone,
            pair_heads: BTreeMap::new(),
            class_heads: BTreeMap::new(),
        })
    }

    /// Register a graph: adds exactly one encoder, one pair head, and one
    /// classifier head. The backbone is untouched.
    pub fn register_graph(
        &mut self,
        graph_id: &str,
        aug_dim: usize,
        num_classes: usize,
    ) -> Result<()> {
        if self.encoders.contains_key(graph_id) {
            return Err(Error::DuplicateGraph(graph_id.to_string()));
        }
        let d = self.config.embed_dim;
        let mut enc_rng = seeds::rng(self.init_seed, &format!("init.encoder.{graph_id}"), &[]);
        self.encoders.insert(
            graph_id.to_string(),
            Linear::init_fan_in(aug_dim, d, &mut enc_rng),
        );
        self.pair_heads
            .insert(graph_id.to_string(), PairHead::new(d));
        let mut head_rng = seeds::rng(self.init_seed, &format!("init.head.{graph_id}"), &[]);
        self.class_heads.insert(
            graph_id.to_string(),
            ClassifierHead::new(d, num_classes, &mut head_rng),
        );
        Ok(())
    }

    pub fn is_registered(&self, graph_id: &str) -> bool {
        self.encoders.contains_key(graph_id)
    }

    pub fn graph_ids(&self) -> Vec<String> {
        self.encoders.keys().cloned().collect()
    }

    pub fn encoder(&self, graph_id: &str) -> Result<&Linear<F>> {
        self.encoders
            .get(graph_id)
            .ok_or_else(|| Error::UnknownGraph(graph_id.to_string()))
    }

    pub fn class_head(&self, graph_id: &str) -> Result<&ClassifierHead<F>> {
        self.class_heads
            .get(graph_id)
            .ok_or_else(|| Error::UnknownGraph(graph_id.to_string()))
    }

    /// Replace the classifier head of `graph_id` with a freshly initialized
    /// one (used for repeated downstream instances).
    pub fn reinit_class_head(&mut self, graph_id: &str, seed: u64) -> Result<()> {
        let head = self
            .class_heads
            .get_mut(graph_id)
            .ok_or_else(|| Error::UnknownGraph(graph_id.to_string()))?;
        let dim = self.config.embed_dim;
        let classes = head.num_classes();
        let mut rng = seeds::rng(seed, &format!("reinit.head.{graph_id}"), &[]);
        *head = ClassifierHead::new(dim, classes, &mut rng);
        Ok(())
    }

    /// Apply the graph encoder row-wise (same affine map for every token).
    pub fn encode(&self, graph_id: &str, rows: &ArrayView2<F>) -> Result<Array2<F>> {
        let enc = self.encoder(graph_id)?;
        if rows.ncols() != enc.in_dim() {
            return Err(Error::DimensionMismatch(format!(
                "graph `{graph_id}` tokens have width {}, encoder expects {}",
                rows.ncols(),
                enc.in_dim()
            )));
        }
        Ok(enc.forward(rows))
    }

    /// Transformer route: encode hop-token sequences and run the backbone.
    /// `rows` holds `batch` sequences of `tokens` consecutive rows.
    pub fn represent_tokens(
        &self,
        graph_id: &str,
        rows: &ArrayView2<F>,
        batch: usize,
        tokens: usize,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<F>, ForwardCache<F>)> {
        let Backbone::Transformer(tf) = &self.backbone else {
            return Err(Error::InvalidConfig(
                "represent_tokens requires the transformer backbone".into(),
            ));
        };
        let encoded = self.encode(graph_id, rows)?;
        let dropout = if dropout_rng.is_some() {
            self.config.dropout
        } else {
            0.0
        };
        let (reps, cache) = tf.forward(&encoded.view(), batch, tokens, dropout, dropout_rng)?;
        Ok((
            reps,
            ForwardCache {
                graph_id: graph_id.to_string(),
                input: rows.to_owned(),
                backbone: BackboneCache::Transformer(cache),
            },
        ))
    }

    /// GNN route: encode the full graph's augmented features and run message
    /// passing. `adj` is the normalized adjacency, `mean_adj` the
    /// row-normalized adjacency without self-loops (GraphSAGE only).
    pub fn represent_graph(
        &self,
        graph_id: &str,
        x_aug: &ArrayView2<F>,
        adj: &CsrMatrix,
        mean_adj: &CsrMatrix,
    ) -> Result<(Array2<F>, ForwardCache<F>)> {
        let encoded = self.encode(graph_id, x_aug)?;
        let (reps, backbone) = match &self.backbone {
            Backbone::Gcn(g) => {
                let (reps, cache) = g.forward(&encoded.view(), adj);
                (reps, BackboneCache::Gcn(cache))
            }
            Backbone::Sage(s) => {
                let (reps, cache) = s.forward(&encoded.view(), mean_adj);
                (reps, BackboneCache::Sage(cache))
            }
            Backbone::Transformer(_) => {
                return Err(Error::InvalidConfig(
                    "represent_graph requires a gcn or sage backbone".into(),
                ))
            }
        };
        if reps.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite representation for graph `{graph_id}`"
            )));
        }
        Ok((
            reps,
            ForwardCache {
                graph_id: graph_id.to_string(),
                input: x_aug.to_owned(),
                backbone,
            },
        ))
    }

    /// Backward through the backbone and the graph encoder, accumulating
    /// parameter gradients. Pass the adjacencies used in forward for the
    /// GNN routes.
    pub fn backward_represent(
        &mut self,
        cache: &ForwardCache<F>,
        d_reps: &ArrayView2<F>,
        adjacency: Option<(&CsrMatrix, &CsrMatrix)>,
    ) -> Result<()> {
        let d_encoded = match (&mut self.backbone, &cache.backbone) {
            (Backbone::Transformer(tf), BackboneCache::Transformer(c)) => tf.backward(c, d_reps),
            (Backbone::Gcn(g), BackboneCache::Gcn(c)) => {
                let (adj, _) = adjacency.ok_or_else(|| {
                    Error::InvalidConfig("gcn backward requires the adjacency".into())
                })?;
                g.backward(c, adj, d_reps)
            }
            (Backbone::Sage(s), BackboneCache::Sage(c)) => {
                let (_, mean_adj) = adjacency.ok_or_else(|| {
                    Error::InvalidConfig("sage backward requires the adjacency".into())
                })?;
                s.backward(c, mean_adj, d_reps)
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "forward cache does not match backbone variant".into(),
                ))
            }
        };
        let enc = self
            .encoders
            .get_mut(&cache.graph_id)
            .ok_or_else(|| Error::UnknownGraph(cache.graph_id.clone()))?;
        enc.backward(&cache.input.view(), &d_encoded.view());
        Ok(())
    }

    /// Pretext logits for pre-paired representation rows.
    pub fn pair_logits(
        &self,
        graph_id: &str,
        h_u: &ArrayView2<F>,
        h_v: &ArrayView2<F>,
    ) -> Result<(Array2<F>, PairHeadCache<F>)> {
        let head = self
            .pair_heads
            .get(graph_id)
            .ok_or_else(|| Error::UnknownGraph(graph_id.to_string()))?;
        Ok(head.forward(h_u, h_v))
    }

    pub fn pair_logits_backward(
        &mut self,
        graph_id: &str,
        cache: &PairHeadCache<F>,
        d_logits: &ArrayView2<F>,
    ) -> Result<(Array2<F>, Array2<F>)> {
        let head = self
            .pair_heads
            .get_mut(graph_id)
            .ok_or_else(|| Error::UnknownGraph(graph_id.to_string()))?;
        Ok(head.backward(cache, d_logits))
    }

    /// Downstream logits.
    pub fn class_logits(&self, graph_id: &str, h: &ArrayView2<F>) -> Result<Array2<F>> {
        Ok(self.class_head(graph_id)?.forward(h))
    }

    pub fn class_logits_backward(
        &mut self,
        graph_id: &str,
        h: &ArrayView2<F>,
        d_logits: &ArrayView2<F>,
    ) -> Result<Array2<F>> {
        let head = self
            .class_heads
            .get_mut(graph_id)
            .ok_or_else(|| Error::UnknownGraph(graph_id.to_string()))?;
        Ok(head.backward(h, d_logits))
    }

    /// Parameter count of the shared backbone only.
    pub fn backbone_param_count(&self) -> usize {
        params::count_params(&self.backbone)
    }

    pub fn param_count(&self) -> usize {
        params::count_params(self)
    }

    pub fn zero_grads(&mut self) {
        params::zero_grads(self);
    }

    /// Digest over all parameters whose dotted name starts with one of the
    /// given prefixes (empty list = everything).
    pub fn digest(&self, prefixes: &[&str]) -> String {
        params::digest_params(self, &|name: &str| {
            prefixes.is_empty() || prefixes.iter().any(|p| name.starts_with(p))
        })
    }
}

impl<F: Scalar> ParamSet<F> for UniversalModel<F> {
    fn visit(&self, _prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        for (gid, enc) in &self.encoders {
            enc.visit(&format!("encoder.{gid}.proj"), f);
        }
        self.backbone.visit("backbone", f);
        for (gid, head) in &self.pair_heads {
            head.visit(&format!("pair_head.{gid}"), f);
        }
        for (gid, head) in &self.class_heads {
            head.visit(&format!("head.{gid}"), f);
        }
    }
    fn visit_mut(&mut self, _prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        for (gid, enc) in &mut self.encoders {
            enc.visit_mut(&format!("encoder.{gid}.proj"), f);
        }
        self.backbone.visit_mut("backbone", f);
        for (gid, head) in &mut self.pair_heads {
            head.visit_mut(&format!("pair_head.{gid}"), f);
        }
        for (gid, head) in &mut self.class_heads {
            head.visit_mut(&format!("head.{gid}"), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            num_layers: 1,
            num_heads: 2,
            hop_k: 2,
            pe_dim: 2,
            ffn_multiplier: 2,
            dropout: 0.0,
            url_variant: UrlVariant::Transformer,
        }
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        let cfg = ModelConfig {
            embed_dim: 10,
            num_heads: 4,
            ..tiny_config()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn backbone_size_is_independent_of_graph_count() {
        let mut model = UniversalModel::<f32>::new(tiny_config(), 0).unwrap();
        let before = model.backbone_param_count();
        let total_before = model.param_count();
        model.register_graph("a", 6, 3).unwrap();
        model.register_graph("b", 11, 4).unwrap();
        assert_eq!(model.backbone_param_count(), before);
        // each registration adds encoder + pair head + classifier, nothing else
        let enc_a = 6 * 8 + 8;
        let pair_a = 8 * 2 + 2;
        let head_a = 8 * 3 + 3;
        let enc_b = 11 * 8 + 8;
        let pair_b = 8 * 2 + 2;
        let head_b = 8 * 4 + 4;
        assert_eq!(
            model.param_count(),
            total_before + enc_a + pair_a + head_a + enc_b + pair_b + head_b
        );
    }

    #[test]
    fn duplicate_registration_fails() {
        let mut model = UniversalModel::<f32>::new(tiny_config(), 0).unwrap();
        model.register_graph("a", 6, 3).unwrap();
        assert!(matches!(
            model.register_graph("a", 6, 3),
            Err(Error::DuplicateGraph(_))
        ));
    }

    #[test]
    fn unregistered_graph_is_an_error() {
        let model = UniversalModel::<f32>::new(tiny_config(), 0).unwrap();
        let rows = Array2::<f32>::zeros((3, 6));
        assert!(matches!(
            model.encode("missing", &rows.view()),
            Err(Error::UnknownGraph(_))
        ));
    }

    #[test]
    fn encoder_rejects_wrong_width() {
        let mut model = UniversalModel::<f32>::new(tiny_config(), 0).unwrap();
        model.register_graph("a", 6, 3).unwrap();
        let rows = Array2::<f32>::zeros((3, 7));
        assert!(matches!(
            model.encode("a", &rows.view()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn shared_backbone_gives_equal_outputs_for_equal_tokens() {
        let mut model = UniversalModel::<f64>::new(tiny_config(), 9).unwrap();
        model.register_graph("a", 4, 2).unwrap();
        model.register_graph("b", 4, 2).unwrap();
        // force identical encoders so identical tokens encode identically
        let enc_a = model.encoders.get("a").unwrap().clone();
        *model.encoders.get_mut("b").unwrap() = enc_a;

        let rows = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 3 + j) % 7) as f64 * 0.1);
        let (ra, _) = model
            .represent_tokens("a", &rows.view(), 2, 3, None)
            .unwrap();
        let (rb, _) = model
            .represent_tokens("b", &rows.view(), 2, 3, None)
            .unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn perturbing_one_encoder_leaves_other_graphs_unchanged() {
        let mut model = UniversalModel::<f64>::new(tiny_config(), 10).unwrap();
        model.register_graph("a", 4, 2).unwrap();
        model.register_graph("b", 5, 2).unwrap();
        let rows_b = Array2::from_shape_fn((6, 5), |(i, j)| (i + j) as f64 * 0.05);
        let (before, _) = model
            .represent_tokens("b", &rows_b.view(), 2, 3, None)
            .unwrap();
        model.encoders.get_mut("a").unwrap().w.v[[0, 0]] += 10.0;
        let (after, _) = model
            .represent_tokens("b", &rows_b.view(), 2, 3, None)
            .unwrap();
        assert_eq!(before, after);
    }
}
