//! Adam with per-parameter first/second moment buffers, keyed by parameter
//! name so a filtered step touches exactly the intended tensors.

use std::collections::BTreeMap;

use crate::model::params::{ParamRefMut, ParamSet};
use crate::model::scalar::Scalar;

use super::ParamFilter;

struct Moments<F> {
    m: Vec<F>,
    v: Vec<F>,
}

pub struct Adam<F> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    moments: BTreeMap<String, Moments<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// One update over every parameter the filter admits. Parameters with
    /// existing moment state keep moving even on zero gradients, exactly as
    /// a single shared optimizer would.
    pub fn step(&mut self, params: &mut dyn ParamSet<F>, filter: &ParamFilter) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one = F::one();
        let corr1 = F::from_f64(1.0 - self.beta1.powi(t));
        let corr2 = F::from_f64(1.0 - self.beta2.powi(t));
        let lr = F::from_f64(self.lr);
        let eps = F::from_f64(self.eps);

        let moments = &mut self.moments;
        params.visit_mut("", &mut |name, p| {
            if !filter.matches(&name) {
                return;
            }
            let (values, grads): (&mut [F], Vec<F>) = match p {
                ParamRefMut::Mat(m) => (
                    m.v.as_slice_mut().expect("standard layout"),
                    m.g.iter().copied().collect(),
                ),
                ParamRefMut::Vec(vec) => (
                    vec.v.as_slice_mut().expect("standard layout"),
                    vec.g.iter().copied().collect(),
                ),
            };
            let entry = moments.entry(name).or_insert_with(|| Moments {
                m: vec![F::zero(); values.len()],
                v: vec![F::zero(); values.len()],
            });
            for i in 0..values.len() {
                let g = grads[i];
                entry.m[i] = b1 * entry.m[i] + (one - b1) * g;
                entry.v[i] = b2 * entry.v[i] + (one - b2) * g * g;
                let m_hat = entry.m[i] / corr1;
                let v_hat = entry.v[i] / corr2;
                values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }
}
