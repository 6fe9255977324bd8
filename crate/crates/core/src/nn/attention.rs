//! Self-attention block: `o = gamma * beta + x`.
//!
//! Queries and keys are 1x1 projections to `c = C / 8` channels, values keep
//! all `C`. Attention weights are normalized over keys, so every row of the
//! `hw x hw` map sums to one.

use rand::Rng;

use super::layers::{Conv2d, ConvSpec};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Scalar;

#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub f: Conv2d,
    pub g: Conv2d,
    pub h: Conv2d,
    pub gamma: ParamId,
    pub channels: usize,
    pub cap: usize,
}

pub struct AttentionOut {
    pub out: Var,
    /// `[b, hw, hw]`, row `i` holds the weights position `i` puts on every key.
    pub phi: Var,
}

impl SelfAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        cap: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let c = channels / 8;
        if c == 0 {
            return Err(Error::Invalid(format!(
                "self-attention needs at least 8 channels, got {channels}"
            )));
        }
        // A bias on the key projection only shifts each row of logits by a
        // constant, which softmax removes, so queries and keys carry none.
        let f = Conv2d::new(
            store,
            &format!("{name}.f"),
            ConvSpec::new(channels, c, 1, 1).no_bias(),
            std,
            rng,
        );
        let g = Conv2d::new(
            store,
            &format!("{name}.g"),
            ConvSpec::new(channels, c, 1, 1).no_bias(),
            std,
            rng,
        );
        let h = Conv2d::new(
            store,
            &format!("{name}.h"),
            ConvSpec::new(channels, channels, 1, 1),
            std,
            rng,
        );
        let gamma = store.constant(format!("{name}.gamma"), &[1], 0.0);
        Ok(SelfAttention {
            f,
            g,
            h,
            gamma,
            channels,
            cap,
        })
    }

    pub fn forward<T: Scalar>(&self, gr: &mut Graph<T>, p: &ParamStore<T>, x: Var) -> Result<Var> {
        Ok(self.forward_full(gr, p, x)?.out)
    }

    pub fn forward_full<T: Scalar>(&self, gr: &mut Graph<T>, p: &ParamStore<T>, x: Var) -> Result<AttentionOut> {
        let s = gr.shape(x).to_vec();
        if s.len() != 4 || s[1] != self.channels {
            return Err(Error::shape(
                "self_attention",
                format!("expected [b, {}, h, w], got {s:?}", self.channels),
            ));
        }
        let (b, ch, n) = (s[0], s[1], s[2] * s[3]);
        if n > self.cap {
            return Err(Error::Resource {
                what: "attention positions",
                requested: n,
                cap: self.cap,
            });
        }
        let c = ch / 8;
        let fx = self.f.forward(gr, p, x)?;
        let fx = gr.reshape(fx, &[b, c, n])?;
        let gx = self.g.forward(gr, p, x)?;
        let gx = gr.reshape(gx, &[b, c, n])?;
        let hx = self.h.forward(gr, p, x)?;
        let hx = gr.reshape(hx, &[b, ch, n])?;
        let logits = gr.bmm(fx, gx, true, false)?;
        let phi = gr.softmax(logits, 2)?;
        let beta = gr.bmm(hx, phi, false, true)?;
        let beta = gr.reshape(beta, &s)?;
        let gamma = gr.param(p, self.gamma);
        let out = gr.add_scaled(x, beta, gamma)?;
        Ok(AttentionOut { out, phi })
    }
}
