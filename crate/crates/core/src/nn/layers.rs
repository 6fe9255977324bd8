//! Thin parameterized wrappers around the graph's conv and linear ops.

use rand::Rng;

use crate::autodiff::{Graph, PadMode, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Scalar;

/// Odd square kernel, "same"-style padding of `k / 2`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
    pub mode: PadMode,
}

pub struct ConvSpec {
    pub ci: usize,
    pub co: usize,
    pub k: usize,
    pub stride: usize,
    pub bias: bool,
    pub mode: PadMode,
}

impl ConvSpec {
    pub fn new(ci: usize, co: usize, k: usize, stride: usize) -> Self {
        ConvSpec {
            ci,
            co,
            k,
            stride,
            bias: true,
            mode: PadMode::Zeros,
        }
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn replicate(mut self) -> Self {
        self.mode = PadMode::Replicate;
        self
    }
}

impl Conv2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, spec: ConvSpec, std: f64, rng: &mut impl Rng) -> Self {
        assert!(spec.k % 2 == 1, "{name}: conv kernels must be odd");
        let w = store.normal(format!("{name}.w"), &[spec.co, spec.ci, spec.k, spec.k], std, rng);
        let b = spec.bias.then(|| store.constant(format!("{name}.b"), &[spec.co], 0.0));
        Conv2d {
            w,
            b,
            stride: spec.stride,
            pad: spec.k / 2,
            mode: spec.mode,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(p, self.w);
        let b = self.b.map(|b| g.param(p, b));
        g.conv2d(x, w, b, self.stride, self.pad, self.mode)
    }
}

/// 4x4 stride-2 transposed conv with padding 1 (exact 2x upsampling).
#[derive(Clone, Debug)]
pub struct Up2x {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Up2x {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        ci: usize,
        co: usize,
        bias: bool,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.normal(format!("{name}.w"), &[ci, co, 4, 4], std, rng);
        let b = bias.then(|| store.constant(format!("{name}.b"), &[co], 0.0));
        Up2x { w, b }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(p, self.w);
        let b = self.b.map(|b| g.param(p, b));
        g.conv_transpose2d(x, w, b, 2, 1)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Weight drawn from N(0, std), bias filled with `bias_init`.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        din: usize,
        dout: usize,
        std: f64,
        bias_init: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.normal(format!("{name}.w"), &[dout, din], std, rng);
        let b = store.constant(format!("{name}.b"), &[dout], bias_init);
        Linear { w, b }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(p, self.w);
        let b = g.param(p, self.b);
        g.linear(x, w, Some(b))
    }
}

pub(crate) const IN_EPS: f64 = 1e-5;

/// Instance norm, skipped on 1x1 maps where it would zero the features.
pub(crate) fn norm<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.shape(x);
    if s[2] * s[3] == 1 {
        return Ok(x);
    }
    g.instance_norm(x, IN_EPS)
}
