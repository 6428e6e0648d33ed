//! Multi-head self-attention over per-node token sequences.
//!
//! Sequences here are short (K+1 hop tokens), so scores and probabilities
//! are materialized per (row, head) with simple loops while the heavy
//! projections run as one flat matrix multiply.

use ndarray::{s, Array2, Array4, ArrayView2};

use super::layers::{softmax_backward, softmax_inplace, Linear};
use super::params::{ParamRef, ParamRefMut, ParamSet};
use super::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct MultiHeadAttention<F> {
    pub wq: Linear<F>,
    pub wk: Linear<F>,
    pub wv: Linear<F>,
    pub wo: Linear<F>,
    pub num_heads: usize,
}

pub struct AttentionCache<F> {
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Array4<F>,
    concat: Array2<F>,
    batch: usize,
    tokens: usize,
}

impl<F: Scalar> MultiHeadAttention<F> {
    pub fn new(dim: usize, num_heads: usize, rng: &mut impl rand::Rng) -> Self {
        assert!(dim % num_heads == 0, "dim must be divisible by num_heads");
        MultiHeadAttention {
            wq: Linear::init_xavier(dim, dim, rng),
            wk: Linear::init_xavier(dim, dim, rng),
            wv: Linear::init_xavier(dim, dim, rng),
            wo: Linear::init_xavier(dim, dim, rng),
            num_heads,
        }
    }

    /// `x` has one row per token, laid out as `batch` blocks of `tokens`
    /// consecutive rows. Attention runs within each block.
    pub fn forward(
        &self,
        x: &ArrayView2<F>,
        batch: usize,
        tokens: usize,
    ) -> (Array2<F>, AttentionCache<F>) {
        let dim = x.ncols();
        debug_assert_eq!(x.nrows(), batch * tokens);
        let heads = self.num_heads;
        let dh = dim / heads;
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());

        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);

        let mut probs = Array4::<F>::zeros((batch, heads, tokens, tokens));
        let mut concat = Array2::<F>::zeros((batch * tokens, dim));

        for b in 0..batch {
            let row0 = b * tokens;
            for h in 0..heads {
                let cols = (h * dh)..((h + 1) * dh);
                let qh = q.slice(s![row0..row0 + tokens, cols.clone()]);
                let kh = k.slice(s![row0..row0 + tokens, cols.clone()]);
                let vh = v.slice(s![row0..row0 + tokens, cols.clone()]);

                let mut scores = qh.dot(&kh.t());
                scores.mapv_inplace(|s| s * scale);
                for i in 0..tokens {
                    softmax_inplace(scores.row_mut(i).as_slice_mut().unwrap());
                }
                let out = scores.dot(&vh);
                concat
                    .slice_mut(s![row0..row0 + tokens, cols])
                    .assign(&out);
                probs.slice_mut(s![b, h, .., ..]).assign(&scores);
            }
        }

        let y = self.wo.forward(&concat.view());
        (
            y,
            AttentionCache {
                q,
                k,
                v,
                probs,
                concat,
                batch,
                tokens,
            },
        )
    }

    /// `x` must be the forward input. Returns dL/dx.
    pub fn backward(
        &mut self,
        x: &ArrayView2<F>,
        cache: &AttentionCache<F>,
        dy: &ArrayView2<F>,
    ) -> Array2<F> {
        let dim = x.ncols();
        let heads = self.num_heads;
        let dh = dim / heads;
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let (batch, tokens) = (cache.batch, cache.tokens);

        let d_concat = self.wo.backward(&cache.concat.view(), dy);

        let mut dq = Array2::<F>::zeros((batch * tokens, dim));
        let mut dk = Array2::<F>::zeros((batch * tokens, dim));
        let mut dv = Array2::<F>::zeros((batch * tokens, dim));

        for b in 0..batch {
            let row0 = b * tokens;
            for h in 0..heads {
                let cols = (h * dh)..((h + 1) * dh);
                let qh = cache.q.slice(s![row0..row0 + tokens, cols.clone()]);
                let kh = cache.k.slice(s![row0..row0 + tokens, cols.clone()]);
                let vh = cache.v.slice(s![row0..row0 + tokens, cols.clone()]);
                let p = cache.probs.slice(s![b, h, .., ..]);
                let d_out = d_concat.slice(s![row0..row0 + tokens, cols.clone()]);

                // dV = Pᵀ dO ; dP = dO Vᵀ ; dS via softmax jacobian, scaled.
                let dvh = p.t().dot(&d_out);
                let dp = d_out.dot(&vh.t());
                let mut ds = Array2::<F>::zeros((tokens, tokens));
                for i in 0..tokens {
                    let row = softmax_backward(
                        p.row(i).as_slice().unwrap(),
                        dp.row(i).to_vec().as_slice(),
                    );
                    for (j, g) in row.into_iter().enumerate() {
                        ds[[i, j]] = g * scale;
                    }
                }
                let dqh = ds.dot(&kh);
                let dkh = ds.t().dot(&qh);

                dq.slice_mut(s![row0..row0 + tokens, cols.clone()]).assign(&dqh);
                dk.slice_mut(s![row0..row0 + tokens, cols.clone()]).assign(&dkh);
                dv.slice_mut(s![row0..row0 + tokens, cols]).assign(&dvh);
            }
        }

        let mut dx = self.wq.backward(x, &dq.view());
        dx += &self.wk.backward(x, &dk.view());
        dx += &self.wv.backward(x, &dv.view());
        dx
    }
}

impl<F: Scalar> ParamSet<F> for MultiHeadAttention<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        self.wq.visit(&format!("{prefix}.wq"), f);
        self.wk.visit(&format!("{prefix}.wk"), f);
        self.wv.visit(&format!("{prefix}.wv"), f);
        self.wo.visit(&format!("{prefix}.wo"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        self.wq.visit_mut(&format!("{prefix}.wq"), f);
        self.wk.visit_mut(&format!("{prefix}.wk"), f);
        self.wv.visit_mut(&format!("{prefix}.wv"), f);
        self.wo.visit_mut(&format!("{prefix}.wo"), f);
    }
}
