//! Adam with bias correction.

use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamState {
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        Adam {
            config,
            state: AdamState::new(store),
        }
    }

    /// One update. Parameters whose gradient is `None` are left untouched and
    /// keep their moments.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Vec<T>>]) {
        assert_eq!(grads.len(), store.len(), "one gradient slot per parameter");
        self.state.t += 1;
        let c = &self.config;
        let t = self.state.t as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
        let (nb1, nb2) = (T::c(1.0 - c.beta1), T::c(1.0 - c.beta2));
        let step = T::c(c.lr / bc1);
        let inv_sqrt_bc2 = T::c(1.0 / bc2.sqrt());
        let eps = T::c(c.eps);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads[id.index()].as_ref() else {
                continue;
            };
            let m = self.state.m[id.index()].data_mut();
            let v = self.state.v[id.index()].data_mut();
            let p = store.get_mut(id).data_mut();
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = b1 * *m + nb1 * g;
                *v = b2 * *v + nb2 * g * g;
                *p -= step * *m / ((*v).sqrt() * inv_sqrt_bc2 + eps);
            }
        }
    }
}
