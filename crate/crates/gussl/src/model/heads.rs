//! Per-graph output heads: a pair-similarity head for pre-training and a
//! node-classification head for downstream learning. Each is one fully
//! connected layer.

use ndarray::{Array2, ArrayView2};

use super::layers::Linear;
use super::params::{ParamRef, ParamRefMut, ParamSet};
use super::scalar::Scalar;

/// Binary pair head: logits = W·|h_u − h_v| + b. The absolute difference
/// makes the head symmetric in (u, v). Weights start at zero so an
/// untrained head sits exactly at the ln 2 cross-entropy of balanced pairs;
/// the weight gradient is nonzero from the first batch, so training is
/// unaffected.
#[derive(Debug, Clone)]
pub struct PairHead<F> {
    pub fc: Linear<F>,
}

pub struct PairHeadCache<F> {
    /// |h_u − h_v| rows.
    diff_abs: Array2<F>,
    /// sign(h_u − h_v), zero where the difference is exactly zero.
    sign: Array2<F>,
}

impl<F: Scalar> PairHead<F> {
    pub fn new(dim: usize) -> Self {
        PairHead {
            fc: Linear::zeros(dim, 2),
        }
    }

    /// `h_u` and `h_v` are matching rows from the same forward pass; returns
    /// (pair_count, 2) logits.
    pub fn forward(
        &self,
        h_u: &ArrayView2<F>,
        h_v: &ArrayView2<F>,
    ) -> (Array2<F>, PairHeadCache<F>) {
        debug_assert_eq!(h_u.dim(), h_v.dim());
        let diff = h_u - h_v;
        let sign = diff.mapv(|d| {
            if d > F::zero() {
                F::one()
            } else if d < F::zero() {
                -F::one()
            } else {
                F::zero()
            }
        });
        let diff_abs = diff.mapv(|d| d.abs());
        let logits = self.fc.forward(&diff_abs.view());
        (logits, PairHeadCache { diff_abs, sign })
    }

    /// Returns (dL/dh_u, dL/dh_v).
    pub fn backward(
        &mut self,
        cache: &PairHeadCache<F>,
        d_logits: &ArrayView2<F>,
    ) -> (Array2<F>, Array2<F>) {
        let d_abs = self.fc.backward(&cache.diff_abs.view(), d_logits);
        let d_u = &d_abs * &cache.sign;
        let d_v = d_u.mapv(|v| -v);
        (d_u, d_v)
    }
}

impl<F: Scalar> ParamSet<F> for PairHead<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        self.fc.visit(&format!("{prefix}.fc"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        self.fc.visit_mut(&format!("{prefix}.fc"), f);
    }
}

/// Node classification head: one affine map to `num_classes` logits.
/// Softmax is applied only inside the loss.
#[derive(Debug, Clone)]
pub struct ClassifierHead<F> {
    pub fc: Linear<F>,
}

impl<F: Scalar> ClassifierHead<F> {
    pub fn new(dim: usize, num_classes: usize, rng: &mut impl rand::Rng) -> Self {
        ClassifierHead {
            fc: Linear::init_fan_in(dim, num_classes, rng),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.fc.out_dim()
    }

    pub fn forward(&self, h: &ArrayView2<F>) -> Array2<F> {
        self.fc.forward(h)
    }

    pub fn backward(&mut self, h: &ArrayView2<F>, d_logits: &ArrayView2<F>) -> Array2<F> {
        self.fc.backward(h, d_logits)
    }
}

impl<F: Scalar> ParamSet<F> for ClassifierHead<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        self.fc.visit(&format!("{prefix}.fc"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        self.fc.visit_mut(&format!("{prefix}.fc"), f);
    }
}
