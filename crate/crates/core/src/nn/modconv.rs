//! Modulated convolution.
//!
//! The base weight is scaled per input channel by a projection of the style
//! vector and by a learned scalar gain, then each output channel's kernel is
//! renormalized to unit L2 norm before a stride-1 "same" convolution.

use rand::Rng;

use super::layers::Linear;
use super::profile::STYLE_DIM;
use crate::autodiff::{Graph, PadMode, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Scalar;

#[derive(Clone, Debug)]
pub struct ModConv {
    pub w: ParamId,
    pub style: Linear,
    pub gain: ParamId,
    pub k: usize,
    pub eps: f64,
}

impl ModConv {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        ci: usize,
        co: usize,
        k: usize,
        eps: f64,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::Invalid(format!("{name}: kernel size must be odd, got {k}")));
        }
        if eps <= 0.0 {
            return Err(Error::Invalid(format!("{name}: epsilon must be positive")));
        }
        let w = store.normal(format!("{name}.w"), &[co, ci, k, k], std, rng);
        let style = Linear::new(store, &format!("{name}.style"), STYLE_DIM, ci, std, 1.0, rng);
        let gain = store.constant(format!("{name}.gain"), &[1], 1.0);
        Ok(ModConv { w, style, gain, k, eps })
    }

    /// Per-sample weights `[b, co, ci, k, k]` after modulation and
    /// demodulation.
    pub fn weights<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, z: Var) -> Result<Var> {
        let zs = g.shape(z);
        if zs.len() != 2 || zs[1] != STYLE_DIM {
            return Err(Error::shape(
                "modconv",
                format!("style must be [b, {STYLE_DIM}], got {zs:?}"),
            ));
        }
        let s = self.style.forward(g, p, z)?;
        let w = g.param(p, self.w);
        let gain = g.param(p, self.gain);
        let wbar = g.modulate(w, s, gain)?;
        g.demodulate(wbar, self.eps)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, z: Var) -> Result<Var> {
        let w = self.weights(g, p, z)?;
        g.conv2d(x, w, None, 1, self.k / 2, PadMode::Zeros)
    }
}
