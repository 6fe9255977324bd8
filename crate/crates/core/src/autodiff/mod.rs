//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node appended to a flat tape.
//! Because a node can only refer to nodes created before it, the tape order is
//! already a topological order and [`Graph::backward`] is a single reverse
//! sweep that visits each node once.
//!
//! Parameters live in a [`ParamStore`] and are bound into a graph lazily with
//! [`Graph::param`]; after `backward` their gradients are collected with
//! [`Graph::param_grads`].

mod backward;
pub(crate) mod conv;
pub mod gradcheck;
mod ops;

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

pub use conv::PadMode;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    ScaleBy {
        x: Var,
        s: Var,
    },
    AddScaled {
        x: Var,
        y: Var,
        s: Var,
    },
    Affine {
        x: Var,
        a: T,
    },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Relu(Var),
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Tanh(Var),
    Softplus(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: conv::ConvGeom,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: conv::ConvGeom,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Bmm {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    AdaptiveAvgPool(Var),
    InstanceNorm {
        x: Var,
        inv_std: Vec<T>,
    },
    ConcatChannels(Vec<Var>),
    Upsample2x(Var),
    Modulate {
        w: Var,
        style: Var,
        gain: Var,
    },
    Demodulate {
        x: Var,
        inv_norm: Vec<T>,
    },
    PixelNormalize {
        x: Var,
        inv_norm: Vec<T>,
    },
    NormalLoss {
        pred: Var,
        target: Vec<T>,
        weight: Vec<T>,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    bindings: HashMap<(u64, usize), Var>,
    frozen: HashSet<u64>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            bindings: HashMap::new(),
            frozen: HashSet::new(),
            grad_enabled: true,
        }
    }

    /// A graph in which nothing requires a gradient (inference, detached passes).
    pub fn no_grad() -> Self {
        Graph {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = self.grad_enabled && parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push_raw(value, op, requires_grad)
    }

    fn push_raw(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Inserts a leaf tensor.
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        let rg = requires_grad && self.grad_enabled;
        self.push_raw(value, Op::Leaf, rg)
    }

    /// Inserts a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Parameters of `store` bound after this call are constants: gradients
    /// still flow through them to other inputs but are not accumulated.
    pub fn freeze(&mut self, store: &ParamStore<T>) {
        self.frozen.insert(store.uid());
    }

    /// Binds a stored parameter as a leaf, reusing the node if already bound.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let key = (store.uid(), id.index());
        if let Some(&v) = self.bindings.get(&key) {
            return v;
        }
        let trainable = !self.frozen.contains(&store.uid());
        let v = self.input(store.get(id).clone(), trainable);
        self.bindings.insert(key, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated into `v` by the last [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Runs the reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.nodes[loss.0].value.shape();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                backward::propagate(&self.nodes, i, &g, &mut self.grads);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    /// Hash of which side of zero every relu / leaky-relu input lies on. Two
    /// evaluations with equal patterns ran through the same linear pieces.
    pub fn kink_pattern(&self) -> u64 {
        use std::hash::{DefaultHasher, Hasher};
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            let x = match node.op {
                Op::Relu(x) | Op::LeakyRelu { x, .. } => x,
                _ => continue,
            };
            for &v in self.nodes[x.0].value.data() {
                h.write_u8((v > T::zero()) as u8);
            }
        }
        h.finish()
    }

    /// Gradients of every parameter of `store` bound in this graph, indexed by
    /// [`ParamId`]. Unbound or unreached parameters yield `None`.
    pub fn param_grads(&self, store: &ParamStore<T>) -> Vec<Option<Vec<T>>> {
        let mut out = vec![None; store.len()];
        for (&(uid, idx), &v) in &self.bindings {
            if uid == store.uid() {
                out[idx] = self.grads[v.0].clone();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_unit_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_fn(&[2, 3], |i| i as f64), true);
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn square_gradient_at_three() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(3.0), true);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn non_scalar_backward_is_an_error() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::zeros(&[2]), true);
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn shared_node_accumulates() {
        // y = x + x  => dy/dx = 2
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(1.5), true);
        let y = g.add(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn no_grad_graph_records_nothing_differentiable() {
        let mut g = Graph::<f32>::no_grad();
        let x = g.input(Tensor::scalar(2.0), true);
        let y = g.mul(x, x).unwrap();
        assert!(!g.requires_grad(y));
        g.backward(y).unwrap();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn params_bind_once_and_report_grads() {
        let mut store = ParamStore::<f64>::new();
        let w = store.constant("w", &[1], 2.0);
        let unused = store.constant("u", &[1], 0.0);
        let mut g = Graph::new();
        let a = g.param(&store, w);
        let b = g.param(&store, w);
        assert_eq!(a, b);
        let y = g.mul(a, b).unwrap();
        g.backward(y).unwrap();
        let grads = g.param_grads(&store);
        assert_eq!(grads[w.index()].as_deref(), Some(&[4.0][..]));
        assert!(grads[unused.index()].is_none());
    }
}
