//! Message-passing backbones used in the architecture ablation. Both
//! variants consume the homogenized hop-0 features of the whole graph plus
//! its adjacency, replacing hop tokenization with message passing. Three
//! layers; the last one has no nonlinearity.

use ndarray::{Array2, ArrayView2};

use super::params::{ParamRef, ParamRefMut, ParamSet, PMat};
use super::scalar::Scalar;
use crate::sparse::CsrMatrix;

pub const GNN_LAYERS: usize = 3;

/// One GCN layer pair of caches: the propagated input and the relu mask.
struct GcnLayerCache<F> {
    propagated: Array2<F>,
    mask: Option<Array2<F>>,
}

/// `h' = relu(Â h W)`, with the normalized adjacency `Â`.
#[derive(Debug, Clone)]
pub struct GcnBackbone<F> {
    pub weights: Vec<PMat<F>>,
}

pub struct GcnCache<F> {
    layers: Vec<GcnLayerCache<F>>,
}

impl<F: Scalar> GcnBackbone<F> {
    pub fn new(dim: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        GcnBackbone {
            weights: (0..GNN_LAYERS)
                .map(|_| PMat::init_uniform(dim, dim, bound, rng))
                .collect(),
        }
    }

    pub fn forward(&self, h0: &ArrayView2<F>, adj: &CsrMatrix) -> (Array2<F>, GcnCache<F>) {
        let mut h = h0.to_owned();
        let mut layers = Vec::with_capacity(self.weights.len());
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let propagated = adj.matmul(&h.view());
            let pre = propagated.dot(&w.v);
            let (out, mask) = if l == last {
                (pre, None)
            } else {
                let mask = pre.mapv(|v| if v > F::zero() { F::one() } else { F::zero() });
                (pre * &mask, Some(mask))
            };
            layers.push(GcnLayerCache { propagated, mask });
            h = out;
        }
        (h, GcnCache { layers })
    }

    pub fn backward(&mut self, cache: &GcnCache<F>, adj: &CsrMatrix, dy: &ArrayView2<F>) -> Array2<F> {
        let mut grad = dy.to_owned();
        for (w, layer) in self.weights.iter_mut().zip(cache.layers.iter()).rev() {
            let d_pre = match &layer.mask {
                Some(mask) => grad * mask,
                None => grad,
            };
            w.g += &layer.propagated.t().dot(&d_pre);
            let d_propagated = d_pre.dot(&w.v.t());
            // Â is symmetric, so Âᵀ · g = Â · g
            grad = adj.matmul(&d_propagated.view());
        }
        grad
    }
}

impl<F: Scalar> ParamSet<F> for GcnBackbone<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        for (i, w) in self.weights.iter().enumerate() {
            f(format!("{prefix}.layer{i}.w"), ParamRef::Mat(w));
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        for (i, w) in self.weights.iter_mut().enumerate() {
            f(format!("{prefix}.layer{i}.w"), ParamRefMut::Mat(w));
        }
    }
}

/// `h' = relu(h W_self + mean_neighbors(h) W_nb)`; isolated nodes take a
/// zero neighbor mean.
#[derive(Debug, Clone)]
pub struct SageBackbone<F> {
    pub w_self: Vec<PMat<F>>,
    pub w_nb: Vec<PMat<F>>,
}

struct SageLayerCache<F> {
    input: Array2<F>,
    nb_mean: Array2<F>,
    mask: Option<Array2<F>>,
}

pub struct SageCache<F> {
    layers: Vec<SageLayerCache<F>>,
}

impl<F: Scalar> SageBackbone<F> {
    pub fn new(dim: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        SageBackbone {
            w_self: (0..GNN_LAYERS)
                .map(|_| PMat::init_uniform(dim, dim, bound, rng))
                .collect(),
            w_nb: (0..GNN_LAYERS)
                .map(|_| PMat::init_uniform(dim, dim, bound, rng))
                .collect(),
        }
    }

    /// `mean_adj` must be the row-normalized adjacency without self-loops.
    pub fn forward(&self, h0: &ArrayView2<F>, mean_adj: &CsrMatrix) -> (Array2<F>, SageCache<F>) {
        let mut h = h0.to_owned();
        let mut layers = Vec::with_capacity(GNN_LAYERS);
        let last = GNN_LAYERS - 1;
        for l in 0..GNN_LAYERS {
            let nb_mean = mean_adj.matmul(&h.view());
            let pre = h.dot(&self.w_self[l].v) + nb_mean.dot(&self.w_nb[l].v);
            let (out, mask) = if l == last {
                (pre, None)
            } else {
                let mask = pre.mapv(|v| if v > F::zero() { F::one() } else { F::zero() });
                (pre * &mask, Some(mask))
            };
            layers.push(SageLayerCache {
                input: h,
                nb_mean,
                mask,
            });
            h = out;
        }
        (h, SageCache { layers })
    }

    pub fn backward(
        &mut self,
        cache: &SageCache<F>,
        mean_adj: &CsrMatrix,
        dy: &ArrayView2<F>,
    ) -> Array2<F> {
        let mut grad = dy.to_owned();
        for l in (0..GNN_LAYERS).rev() {
            let layer = &cache.layers[l];
            let d_pre = match &layer.mask {
                Some(mask) => grad * mask,
                None => grad,
            };
            self.w_self[l].g += &layer.input.t().dot(&d_pre);
            self.w_nb[l].g += &layer.nb_mean.t().dot(&d_pre);
            let d_nb = d_pre.dot(&self.w_nb[l].v.t());
            grad = d_pre.dot(&self.w_self[l].v.t()) + mean_adj.matmul_transpose(&d_nb.view());
        }
        grad
    }
}

impl<F: Scalar> ParamSet<F> for SageBackbone<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        for i in 0..GNN_LAYERS {
            f(format!("{prefix}.layer{i}.w_self"), ParamRef::Mat(&self.w_self[i]));
            f(format!("{prefix}.layer{i}.w_nb"), ParamRef::Mat(&self.w_nb[i]));
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        for i in 0..GNN_LAYERS {
            f(
                format!("{prefix}.layer{i}.w_self"),
                ParamRefMut::Mat(&mut self.w_self[i]),
            );
            f(
                format!("{prefix}.layer{i}.w_nb"),
                ParamRefMut::Mat(&mut self.w_nb[i]),
            );
        }
    }
}
