//! Strided-conv discriminator with one self-attention block.

use rand::Rng;

use super::attention::SelfAttention;
use super::layers::{Conv2d, ConvSpec};
use super::profile::ArchProfile;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Scalar;

pub const DISC_STAGES: usize = 5;

#[derive(Clone, Debug)]
pub struct Discriminator {
    stages: Vec<Conv2d>,
    attention: Option<(usize, SelfAttention)>,
    head: Conv2d,
    slope: f64,
}

impl Discriminator {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, prof: &ArchProfile, rng: &mut impl Rng) -> Result<Self> {
        prof.validate()?;
        let std = prof.init_std;
        let mut stages = Vec::with_capacity(DISC_STAGES);
        let mut attention = None;
        let mut ci = 3;
        let mut size = prof.resolution;
        for i in 0..DISC_STAGES {
            let co = prof.widths[i];
            stages.push(Conv2d::new(
                store,
                &format!("d.s{i}"),
                ConvSpec::new(ci, co, 3, 2),
                std,
                rng,
            ));
            size = size.div_ceil(2);
            if size == prof.attention_resolution && attention.is_none() {
                let att = SelfAttention::new(store, "d.att", co, prof.attention_cap, std, rng)?;
                attention = Some((i, att));
            }
            ci = co;
        }
        let head = Conv2d::new(store, "d.head", ConvSpec::new(ci, 1, 3, 1), std, rng);
        Ok(Discriminator {
            stages,
            attention,
            head,
            slope: prof.leaky_slope,
        })
    }

    pub fn has_attention(&self) -> bool {
        self.attention.is_some()
    }

    /// Realness score `[b, 1]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, x: Var) -> Result<Var> {
        self.forward_opts(g, p, x, true)
    }

    /// `attention = false` runs the same stack with the attention block removed.
    pub fn forward_opts<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, attention: bool) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::shape(
                "discriminator",
                format!("expected [b, 3, h, w], got {s:?}"),
            ));
        }
        let b = s[0];
        let mut h = x;
        for (i, conv) in self.stages.iter().enumerate() {
            let y = conv.forward(g, p, h)?;
            h = g.leaky_relu(y, self.slope);
            if let Some((at, att)) = &self.attention {
                if attention && *at == i {
                    h = att.forward(g, p, h)?;
                }
            }
        }
        let y = self.head.forward(g, p, h)?;
        let y = g.adaptive_avg_pool(y, 1, 1)?;
        g.reshape(y, &[b, 1])
    }
}
