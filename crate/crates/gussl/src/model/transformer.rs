//! Pre-norm transformer encoder stack with an attention-based readout over
//! hop tokens. The readout scores each non-root token against the root (the
//! hop-0 token) and returns the root plus the softmax-weighted combination;
//! no MLP follows the readout.

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::attention::{AttentionCache, MultiHeadAttention};
use super::layers::{
    gelu, gelu_backward, softmax_backward, softmax_inplace, DropoutMask, LayerNorm,
    LayerNormCache, Linear,
};
use super::params::{ParamRef, ParamRefMut, ParamSet, PVec};
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EncoderLayer<F> {
    pub ln1: LayerNorm<F>,
    pub attn: MultiHeadAttention<F>,
    pub ln2: LayerNorm<F>,
    pub ffn_in: Linear<F>,
    pub ffn_out: Linear<F>,
}

pub struct EncoderLayerCache<F> {
    ln1: LayerNormCache<F>,
    attn_in: Array2<F>,
    attn: AttentionCache<F>,
    drop_attn: DropoutMask<F>,
    ln2: LayerNormCache<F>,
    ffn_in_x: Array2<F>,
    pre_act: Array2<F>,
    act: Array2<F>,
    drop_ffn: DropoutMask<F>,
}

impl<F: Scalar> EncoderLayer<F> {
    pub fn new(
        dim: usize,
        num_heads: usize,
        ffn_multiplier: usize,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let hidden = dim * ffn_multiplier;
        EncoderLayer {
            ln1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(dim, num_heads, rng),
            ln2: LayerNorm::new(dim),
            ffn_in: Linear::init_fan_in(dim, hidden, rng),
            ffn_out: Linear::init_fan_in(hidden, dim, rng),
        }
    }

    pub fn forward(
        &self,
        x: &ArrayView2<F>,
        batch: usize,
        tokens: usize,
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<F>, EncoderLayerCache<F>) {
        let (normed, ln1_cache) = self.ln1.forward(x);
        let (attn_out, attn_cache) = self.attn.forward(&normed.view(), batch, tokens);
        let drop_attn = DropoutMask::sample(attn_out.dim(), dropout, rng.as_deref_mut());
        let mid = x + &drop_attn.apply(attn_out);

        let (ffn_in_x, ln2_cache) = self.ln2.forward(&mid.view());
        let pre_act = self.ffn_in.forward(&ffn_in_x.view());
        let act = gelu(&pre_act.view());
        let ffn_out = self.ffn_out.forward(&act.view());
        let drop_ffn = DropoutMask::sample(ffn_out.dim(), dropout, rng);
        let y = &mid + &drop_ffn.apply(ffn_out);

        (
            y,
            EncoderLayerCache {
                ln1: ln1_cache,
                attn_in: normed,
                attn: attn_cache,
                drop_attn,
                ln2: ln2_cache,
                ffn_in_x,
                pre_act,
                act,
                drop_ffn,
            },
        )
    }

    pub fn backward(&mut self, cache: &EncoderLayerCache<F>, dy: &ArrayView2<F>) -> Array2<F> {
        // y = mid + drop(ffn_out(gelu(ffn_in(ln2(mid)))))
        let d_ffn_out = cache.drop_ffn.backward(dy.to_owned());
        let d_act = self.ffn_out.backward(&cache.act.view(), &d_ffn_out.view());
        let d_pre = gelu_backward(&cache.pre_act.view(), &d_act.view());
        let d_ffn_in_x = self.ffn_in.backward(&cache.ffn_in_x.view(), &d_pre.view());
        let mut d_mid = self.ln2.backward(&cache.ln2, &d_ffn_in_x.view());
        d_mid += dy;

        // mid = x + drop(attn(ln1(x)))
        let d_attn_out = cache.drop_attn.backward(d_mid.clone());
        let d_attn_in = self
            .attn
            .backward(&cache.attn_in.view(), &cache.attn, &d_attn_out.view());
        let mut dx = self.ln1.backward(&cache.ln1, &d_attn_in.view());
        dx += &d_mid;
        dx
    }
}

impl<F: Scalar> ParamSet<F> for EncoderLayer<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        self.ln1.visit(&format!("{prefix}.ln1"), f);
        self.attn.visit(&format!("{prefix}.attn"), f);
        self.ln2.visit(&format!("{prefix}.ln2"), f);
        self.ffn_in.visit(&format!("{prefix}.ffn_in"), f);
        self.ffn_out.visit(&format!("{prefix}.ffn_out"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        self.ln1.visit_mut(&format!("{prefix}.ln1"), f);
        self.attn.visit_mut(&format!("{prefix}.attn"), f);
        self.ln2.visit_mut(&format!("{prefix}.ln2"), f);
        self.ffn_in.visit_mut(&format!("{prefix}.ffn_in"), f);
        self.ffn_out.visit_mut(&format!("{prefix}.ffn_out"), f);
    }
}

/// Transformer backbone: encoder stack, final layer norm, attention readout.
#[derive(Debug, Clone)]
pub struct TransformerBackbone<F> {
    pub layers: Vec<EncoderLayer<F>>,
    pub final_ln: LayerNorm<F>,
    /// Readout scoring vector over `[root ‖ token]`, length 2·dim.
    pub readout: PVec<F>,
}

pub struct TransformerCache<F> {
    layer_caches: Vec<EncoderLayerCache<F>>,
    final_ln: LayerNormCache<F>,
    /// Tokens after the final layer norm, (batch·tokens, dim).
    final_tokens: Array2<F>,
    /// Readout attention weights, (batch, tokens-1); empty when tokens == 1.
    alphas: Array2<F>,
    batch: usize,
    tokens: usize,
}

impl<F: Scalar> TransformerCache<F> {
    /// Readout weights for inspection (each row sums to 1 when tokens > 1).
    pub fn readout_weights(&self) -> &Array2<F> {
        &self.alphas
    }
}

impl<F: Scalar> TransformerBackbone<F> {
    pub fn new(
        dim: usize,
        num_layers: usize,
        num_heads: usize,
        ffn_multiplier: usize,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|_| EncoderLayer::new(dim, num_heads, ffn_multiplier, rng))
            .collect();
        let bound = 1.0 / (2.0 * dim as f64).sqrt();
        TransformerBackbone {
            layers,
            final_ln: LayerNorm::new(dim),
            readout: PVec::init_uniform(2 * dim, bound, rng),
        }
    }

    /// `x` holds `batch` sequences of `tokens` consecutive rows. Returns one
    /// representation row per sequence.
    pub fn forward(
        &self,
        x: &ArrayView2<F>,
        batch: usize,
        tokens: usize,
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<F>, TransformerCache<F>)> {
        let dim = x.ncols();
        debug_assert_eq!(x.nrows(), batch * tokens);
        let mut h = x.to_owned();
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let (next, cache) =
                layer.forward(&h.view(), batch, tokens, dropout, rng.as_deref_mut());
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite activation in encoder layer {idx}"
                )));
            }
            h = next;
            layer_caches.push(cache);
        }
        let (final_tokens, final_ln_cache) = self.final_ln.forward(&h.view());

        let mut out = Array2::<F>::zeros((batch, dim));
        let extra = tokens.saturating_sub(1);
        let mut alphas = Array2::<F>::zeros((batch, extra));
        for b in 0..batch {
            let root = final_tokens.row(b * tokens);
            if tokens == 1 {
                out.row_mut(b).assign(&root);
                continue;
            }
            let mut scores: Vec<F> = (1..tokens)
                .map(|k| {
                    let tok = final_tokens.row(b * tokens + k);
                    let mut s = F::zero();
                    for j in 0..dim {
                        s = s + self.readout.v[j] * root[j] + self.readout.v[dim + j] * tok[j];
                    }
                    s
                })
                .collect();
            softmax_inplace(&mut scores);
            let mut row = root.to_owned();
            for (k, &alpha) in scores.iter().enumerate() {
                let tok = final_tokens.row(b * tokens + k + 1);
                for j in 0..dim {
                    row[j] = row[j] + alpha * tok[j];
                }
                alphas[[b, k]] = alpha;
            }
            out.row_mut(b).assign(&row);
        }
        Ok((
            out,
            TransformerCache {
                layer_caches,
                final_ln: final_ln_cache,
                final_tokens,
                alphas,
                batch,
                tokens,
            },
        ))
    }

    /// Returns dL/dx for the token input.
    pub fn backward(&mut self, cache: &TransformerCache<F>, d_out: &ArrayView2<F>) -> Array2<F> {
        let (batch, tokens) = (cache.batch, cache.tokens);
        let dim = cache.final_tokens.ncols();

        // readout backward into gradients w.r.t. post-final-LN tokens
        let mut d_final = Array2::<F>::zeros((batch * tokens, dim));
        for b in 0..batch {
            let d_row = d_out.row(b);
            {
                let mut d_root = d_final.row_mut(b * tokens);
                for j in 0..dim {
                    d_root[j] = d_root[j] + d_row[j];
                }
            }
            if tokens == 1 {
                continue;
            }
            let root = cache.final_tokens.row(b * tokens);
            let alphas: Vec<F> = cache.alphas.row(b).to_vec();
            let d_alpha: Vec<F> = (1..tokens)
                .map(|k| {
                    let tok = cache.final_tokens.row(b * tokens + k);
                    let mut s = F::zero();
                    for j in 0..dim {
                        s = s + d_row[j] * tok[j];
                    }
                    s
                })
                .collect();
            let d_scores = softmax_backward(&alphas, &d_alpha);
            let ds_total: F = d_scores.iter().copied().sum();
            for k in 1..tokens {
                let alpha = alphas[k - 1];
                let ds = d_scores[k - 1];
                let tok = cache.final_tokens.row(b * tokens + k);
                let mut d_tok = d_final.row_mut(b * tokens + k);
                for j in 0..dim {
                    d_tok[j] = d_tok[j] + alpha * d_row[j] + ds * self.readout.v[dim + j];
                    self.readout.g[j] = self.readout.g[j] + ds * root[j];
                    self.readout.g[dim + j] = self.readout.g[dim + j] + ds * tok[j];
                }
            }
            let mut d_root = d_final.row_mut(b * tokens);
            for j in 0..dim {
                d_root[j] = d_root[j] + ds_total * self.readout.v[j];
            }
        }

        let mut grad = self.final_ln.backward(&cache.final_ln, &d_final.view());
        for (layer, layer_cache) in self
            .layers
            .iter_mut()
            .zip(cache.layer_caches.iter())
            .rev()
        {
            grad = layer.backward(layer_cache, &grad.view());
        }
        grad
    }
}

impl<F: Scalar> ParamSet<F> for TransformerBackbone<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&format!("{prefix}.layer{i}"), f);
        }
        self.final_ln.visit(&format!("{prefix}.final_ln"), f);
        f(format!("{prefix}.readout"), ParamRef::Vec(&self.readout));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("{prefix}.layer{i}"), f);
        }
        self.final_ln.visit_mut(&format!("{prefix}.final_ln"), f);
        f(
            format!("{prefix}.readout"),
            ParamRefMut::Vec(&mut self.readout),
        );
    }
}
