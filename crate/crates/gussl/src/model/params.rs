//! Named parameter tensors with paired gradient buffers.
//!
//! Model components expose their parameters through a visitor so that the
//! optimizer, checkpointing, digesting, and gradient checks all walk one
//! flat name → tensor view of the model. Names are dotted paths such as
//! `phi.layer0.attn.wq.w` or `theta.cora.proj.b`.

use ndarray::{Array1, Array2};
use rand::Rng;
use sha2::{Digest, Sha256};

use super::scalar::Scalar;
use crate::graph::hex;

/// Matrix parameter with gradient buffer.
#[derive(Debug, Clone)]
pub struct PMat<F> {
    pub v: Array2<F>,
    pub g: Array2<F>,
}

impl<F: Scalar> PMat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PMat {
            v: Array2::zeros((rows, cols)),
            g: Array2::zeros((rows, cols)),
        }
    }

    /// Fill with U(-bound, bound).
    pub fn init_uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let v = Array2::from_shape_fn((rows, cols), |_| {
            F::from_f64(rng.random_range(-bound..bound))
        });
        let g = Array2::zeros((rows, cols));
        PMat { v, g }
    }
}

/// Vector parameter with gradient buffer.
#[derive(Debug, Clone)]
pub struct PVec<F> {
    pub v: Array1<F>,
    pub g: Array1<F>,
}

impl<F: Scalar> PVec<F> {
    pub fn zeros(len: usize) -> Self {
        PVec {
            v: Array1::zeros(len),
            g: Array1::zeros(len),
        }
    }

    pub fn constant(len: usize, value: f64) -> Self {
        PVec {
            v: Array1::from_elem(len, F::from_f64(value)),
            g: Array1::zeros(len),
        }
    }

    pub fn init_uniform(len: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let v = Array1::from_shape_fn(len, |_| F::from_f64(rng.random_range(-bound..bound)));
        let g = Array1::zeros(len);
        PVec { v, g }
    }
}

pub enum ParamRef<'a, F> {
    Mat(&'a PMat<F>),
    Vec(&'a PVec<F>),
}

pub enum ParamRefMut<'a, F> {
    Mat(&'a mut PMat<F>),
    Vec(&'a mut PVec<F>),
}

impl<F: Scalar> ParamRef<'_, F> {
    pub fn numel(&self) -> usize {
        match self {
            ParamRef::Mat(p) => p.v.len(),
            ParamRef::Vec(p) => p.v.len(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            ParamRef::Mat(p) => p.v.shape().to_vec(),
            ParamRef::Vec(p) => p.v.shape().to_vec(),
        }
    }

    pub fn values_f32(&self) -> Vec<f32> {
        match self {
            ParamRef::Mat(p) => p.v.iter().map(|x| x.as_f32()).collect(),
            ParamRef::Vec(p) => p.v.iter().map(|x| x.as_f32()).collect(),
        }
    }
}

/// Anything that owns named parameters.
pub trait ParamSet<F: Scalar> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>));
}

impl<F: Scalar> ParamSet<F> for PMat<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        f(prefix.to_string(), ParamRef::Mat(self));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        f(prefix.to_string(), ParamRefMut::Mat(self));
    }
}

impl<F: Scalar> ParamSet<F> for PVec<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, F>)) {
        f(prefix.to_string(), ParamRef::Vec(self));
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, F>)) {
        f(prefix.to_string(), ParamRefMut::Vec(self));
    }
}

/// Total element count over all parameters.
pub fn count_params<F: Scalar>(set: &dyn ParamSet<F>) -> usize {
    let mut total = 0;
    set.visit("", &mut |_, p| total += p.numel());
    total
}

/// Zero every gradient buffer.
pub fn zero_grads<F: Scalar>(set: &mut dyn ParamSet<F>) {
    set.visit_mut("", &mut |_, p| match p {
        ParamRefMut::Mat(m) => m.g.fill(F::zero()),
        ParamRefMut::Vec(v) => v.g.fill(F::zero()),
    });
}

/// SHA-256 over the f32 little-endian bytes of every parameter whose name
/// passes `include`, in name order. Used for byte-level freeze contracts.
pub fn digest_params<F: Scalar>(set: &dyn ParamSet<F>, include: &dyn Fn(&str) -> bool) -> String {
    let mut named: Vec<(String, Vec<f32>)> = Vec::new();
    set.visit("", &mut |name, p| {
        if include(&name) {
            named.push((name, p.values_f32()));
        }
    });
    named.sort_by(|a, b| a.0.cmp(&b.0));
    let mut h = Sha256::new();
    for (name, values) in &named {
        h.update(name.as_bytes());
        h.update([0]);
        for x in values {
            h.update(x.to_le_bytes());
        }
    }
    hex(&h.finalize())
}
