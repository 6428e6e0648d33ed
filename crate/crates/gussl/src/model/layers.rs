//! Building-block layers with explicit forward caches and analytic backward
//! passes. Backward methods accumulate into the parameter gradient buffers
//! and return the gradient with respect to their input.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{ParamRef, ParamRefMut, ParamSet, PMat, PVec};
use super::scalar::Scalar;

/// Affine map `y = x · w + b` with `w` of shape (in, out).
#[derive(Debug, Clone)]
pub struct Linear<F> {
    pub w: PMat<F>,
    pub b: PVec<F>,
}

impl<F: Scalar> Linear<F> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: PMat::zeros(in_dim, out_dim),
            b: PVec::zeros(out_dim),
        }
    }

    /// Fan-in uniform init: U(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
    pub fn init_fan_in(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Linear {
            w: PMat::init_uniform(in_dim, out_dim, bound, rng),
            b: PVec::init_uniform(out_dim, bound, rng),
        }
    }

    /// Xavier-uniform weights with zero bias, used for attention projections.
    pub fn init_xavier(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Linear {
            w: PMat::init_uniform(in_dim, out_dim, bound, rng),
            b: PVec::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.v.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.v.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<F>) -> Array2<F> {
        debug_assert_eq!(x.ncols(), self.in_dim());
        let mut y = x.dot(&self.w.v);
        for mut row in y.rows_mut() {
            row += &self.b.v;
        }
        y
    }

    /// `x` must be the forward input. Returns dL/dx.
    pub fn backward(&mut self, x: &ArrayView2<F>, dy: &ArrayView2<F>) -> Array2<F> {
        self.w.g += &x.t().dot(dy);
        self.b.g += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.v.t())
    }
}

impl<F: Scalar> ParamSet<F> for Linear<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        f(format!("{prefix}.w"), ParamRef::Mat(&self.w));
        f(format!("{prefix}.b"), ParamRef::Vec(&self.b));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        f(format!("{prefix}.w"), ParamRefMut::Mat(&mut self.w));
        f(format!("{prefix}.b"), ParamRefMut::Vec(&mut self.b));
    }
}

/// Layer normalization over the last dimension.
#[derive(Debug, Clone)]
pub struct LayerNorm<F> {
    pub gamma: PVec<F>,
    pub beta: PVec<F>,
    pub eps: f64,
}

pub struct LayerNormCache<F> {
    normalized: Array2<F>,
    inv_std: Array1<F>,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: PVec::constant(dim, 1.0),
            beta: PVec::zeros(dim),
            eps: 1e-6,
        }
    }

    pub fn forward(&self, x: &ArrayView2<F>) -> (Array2<F>, LayerNormCache<F>) {
        let (n, d) = x.dim();
        let dim = F::from_usize(d);
        let mut normalized = Array2::zeros((n, d));
        let mut inv_std = Array1::zeros(n);
        let mut y = Array2::zeros((n, d));
        for i in 0..n {
            let row = x.row(i);
            let mean = row.iter().copied().sum::<F>() / dim;
            let var = row
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<F>()
                / dim;
            let inv = F::one() / (var + F::from_f64(self.eps)).sqrt();
            inv_std[i] = inv;
            for j in 0..d {
                let xh = (row[j] - mean) * inv;
                normalized[[i, j]] = xh;
                y[[i, j]] = self.gamma.v[j] * xh + self.beta.v[j];
            }
        }
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache<F>, dy: &ArrayView2<F>) -> Array2<F> {
        let (n, d) = dy.dim();
        let dim = F::from_usize(d);
        let mut dx = Array2::zeros((n, d));
        for i in 0..n {
            let xh = cache.normalized.row(i);
            let dy_row = dy.row(i);
            let mut sum_dxh = F::zero();
            let mut sum_dxh_xh = F::zero();
            for j in 0..d {
                let dxh = dy_row[j] * self.gamma.v[j];
                sum_dxh = sum_dxh + dxh;
                sum_dxh_xh = sum_dxh_xh + dxh * xh[j];
                self.gamma.g[j] = self.gamma.g[j] + dy_row[j] * xh[j];
                self.beta.g[j] = self.beta.g[j] + dy_row[j];
            }
            let inv = cache.inv_std[i];
            for j in 0..d {
                let dxh = dy_row[j] * self.gamma.v[j];
                dx[[i, j]] = inv / dim * (dim * dxh - sum_dxh - xh[j] * sum_dxh_xh);
            }
        }
        dx
    }
}

impl<F: Scalar> ParamSet<F> for LayerNorm<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        f(format!("{prefix}.gamma"), ParamRef::Vec(&self.gamma));
        f(format!("{prefix}.beta"), ParamRef::Vec(&self.beta));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        f(format!("{prefix}.gamma"), ParamRefMut::Vec(&mut self.gamma));
        f(format!("{prefix}.beta"), ParamRefMut::Vec(&mut self.beta));
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-form GELU.
pub fn gelu<F: Scalar>(x: &ArrayView2<F>) -> Array2<F> {
    let c = F::from_f64(GELU_C);
    let a = F::from_f64(GELU_A);
    let half = F::from_f64(0.5);
    x.mapv(|v| {
        let t = (c * (v + a * v * v * v)).tanh();
        half * v * (F::one() + t)
    })
}

/// dL/dx for the tanh-form GELU given the forward input.
pub fn gelu_backward<F: Scalar>(x: &ArrayView2<F>, dy: &ArrayView2<F>) -> Array2<F> {
    let c = F::from_f64(GELU_C);
    let a = F::from_f64(GELU_A);
    let half = F::from_f64(0.5);
    let three = F::from_f64(3.0);
    let mut dx = Array2::zeros(x.raw_dim());
    for ((o, &v), &d) in dx.iter_mut().zip(x.iter()).zip(dy.iter()) {
        let t = (c * (v + a * v * v * v)).tanh();
        let du = c * (F::one() + three * a * v * v);
        let grad = half * (F::one() + t) + half * v * (F::one() - t * t) * du;
        *o = grad * d;
    }
    dx
}

/// Inverted dropout. The returned mask already folds in the 1/(1-p) scale;
/// backward is an elementwise product with the same mask.
pub struct DropoutMask<F> {
    mask: Option<Array2<F>>,
}

impl<F: Scalar> DropoutMask<F> {
    /// `rng = None` means evaluation mode (identity).
    pub fn sample(
        shape: (usize, usize),
        rate: f64,
        rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> Self {
        match rng {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let scale = F::from_f64(1.0 / keep);
                let mask = Array2::from_shape_fn(shape, |_| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        F::zero()
                    }
                });
                DropoutMask { mask: Some(mask) }
            }
            _ => DropoutMask { mask: None },
        }
    }

    pub fn apply(&self, x: Array2<F>) -> Array2<F> {
        match &self.mask {
            Some(m) => x * m,
            None => x,
        }
    }

    pub fn backward(&self, dy: Array2<F>) -> Array2<F> {
        match &self.mask {
            Some(m) => dy * m,
            None => dy,
        }
    }
}

/// Numerically stable softmax over a mutable slice, in place.
pub fn softmax_inplace<F: Scalar>(row: &mut [F]) {
    let max = row
        .iter()
        .copied()
        .fold(F::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Given p = softmax(s) and dL/dp, returns dL/ds.
pub fn softmax_backward<F: Scalar>(p: &[F], dp: &[F]) -> Vec<F> {
    let dot: F = p.iter().zip(dp).map(|(&pi, &di)| pi * di).sum();
    p.iter().zip(dp).map(|(&pi, &di)| pi * (di - dot)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_identity_passthrough() {
        let mut lin = Linear::<f64>::zeros(2, 2);
        lin.w.v = Array2::eye(2);
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        assert_eq!(lin.forward(&x.view()), x);
    }

    #[test]
    fn linear_zero_input_gives_bias() {
        let mut lin = Linear::<f64>::zeros(3, 2);
        lin.b.v = array![0.7, -0.3];
        let x = Array2::zeros((4, 3));
        let y = lin.forward(&x.view());
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![0.7, -0.3]);
        }
    }

    #[test]
    fn layernorm_output_is_standardized() {
        let ln = LayerNorm::<f64>::new(4);
        let x = array![[1.0, 2.0, 3.0, 4.0]];
        let (y, _) = ln.forward(&x.view());
        let mean: f64 = y.row(0).iter().sum::<f64>() / 4.0;
        let var: f64 = y.row(0).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn gelu_matches_reference_points() {
        // reference values computed from the tanh-form definition
        let x = array![[0.0f64, 1.0, -1.0]];
        let y = gelu(&x.view());
        assert!((y[[0, 0]] - 0.0).abs() < 1e-12);
        assert!((y[[0, 1]] - 0.841192).abs() < 1e-5);
        assert!((y[[0, 2]] - (-0.158808)).abs() < 1e-5);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut row = vec![1.0f64, 2.0, 3.0];
        softmax_inplace(&mut row);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row[2] > row[1] && row[1] > row[0]);
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let x = array![[1.0f32, 2.0], [3.0, 4.0]];
        let mask = DropoutMask::<f32>::sample((2, 2), 0.5, None);
        assert_eq!(mask.apply(x.clone()), x);
    }
}
