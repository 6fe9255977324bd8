//! The two NR-Net encoders: the face-structure pyramid over the input image
//! and the FPN that summarizes the coarse exemplar into a style vector.

use rand::Rng;

use super::layers::{norm, Conv2d, ConvSpec};
use super::profile::{ArchProfile, STYLE_DIM};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Scalar;

pub const FACE_LEVELS: usize = 6;

/// Six conv + instance-norm + leaky-relu levels. Level 0 keeps the input
/// resolution, every later level halves it.
#[derive(Clone, Debug)]
pub struct FaceEncoder {
    pub levels: Vec<Conv2d>,
    pub slope: f64,
}

impl FaceEncoder {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, prof: &ArchProfile, rng: &mut impl Rng) -> Self {
        let mut levels = Vec::with_capacity(FACE_LEVELS);
        let mut ci = 3;
        for (i, &co) in prof.widths.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            let spec = ConvSpec::new(ci, co, 3, stride).no_bias();
            levels.push(Conv2d::new(store, &format!("{name}.l{i}"), spec, prof.init_std, rng));
            ci = co;
        }
        FaceEncoder {
            levels,
            slope: prof.leaky_slope,
        }
    }

    /// Returns `f_0 .. f_5`; `f_5` is the deepest structure code.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, image: Var) -> Result<Vec<Var>> {
        let s = g.shape(image);
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::shape(
                "face_encoder",
                format!("expected [b, 3, h, w], got {s:?}"),
            ));
        }
        if s[2] % 32 != 0 || s[3] % 32 != 0 || s[2] == 0 || s[3] == 0 {
            return Err(Error::shape(
                "face_encoder",
                format!(
                    "height and width must be positive multiples of 32, got {}x{}",
                    s[2], s[3]
                ),
            ));
        }
        let mut feats = Vec::with_capacity(FACE_LEVELS);
        let mut x = image;
        for conv in &self.levels {
            let y = conv.forward(g, p, x)?;
            let y = norm(g, y)?;
            x = g.leaky_relu(y, self.slope);
            feats.push(x);
        }
        Ok(feats)
    }
}

/// Three-level FPN over the exemplar normal map, pooled to one global vector.
///
/// Bottom-up convs use replicate padding so that a constant input yields
/// constant feature maps, which makes `z` independent of the input size.
#[derive(Clone, Debug)]
pub struct NormalEncoder {
    pub stages: Vec<Conv2d>,
    pub laterals: Vec<Conv2d>,
    pub smooth: Vec<Conv2d>,
    pub head: Conv2d,
    pub slope: f64,
}

impl NormalEncoder {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, prof: &ArchProfile, rng: &mut impl Rng) -> Self {
        let std = prof.init_std;
        let d = prof.fpn_dim;
        let mut stages = Vec::new();
        let mut laterals = Vec::new();
        let mut smooth = Vec::new();
        let mut ci = 3;
        for (i, &co) in prof.fpn_widths.iter().enumerate() {
            let spec = ConvSpec::new(ci, co, 3, 2).replicate();
            stages.push(Conv2d::new(store, &format!("{name}.c{}", i + 1), spec, std, rng));
            laterals.push(Conv2d::new(
                store,
                &format!("{name}.lat{}", i + 1),
                ConvSpec::new(co, d, 1, 1),
                std,
                rng,
            ));
            let spec = ConvSpec::new(d, d, 3, 1).replicate();
            smooth.push(Conv2d::new(store, &format!("{name}.smooth{}", i + 1), spec, std, rng));
            ci = co;
        }
        let head = Conv2d::new(
            store,
            &format!("{name}.head"),
            ConvSpec::new(3 * d, STYLE_DIM, 1, 1),
            std,
            rng,
        );
        NormalEncoder {
            stages,
            laterals,
            smooth,
            head,
            slope: prof.leaky_slope,
        }
    }

    /// Maps `[b, 3, h, w]` to the style vector `[b, 256]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, exemplar: Var) -> Result<Var> {
        let s = g.shape(exemplar).to_vec();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::shape(
                "normal_encoder",
                format!("expected [b, 3, h, w], got {s:?}"),
            ));
        }
        if s[2] < 8 || s[3] < 8 || s[2] % 8 != 0 || s[3] % 8 != 0 {
            return Err(Error::shape(
                "normal_encoder",
                format!("input must be at least 8x8 and divisible by 8, got {}x{}", s[2], s[3]),
            ));
        }
        let mut c = Vec::with_capacity(3);
        let mut x = exemplar;
        for conv in &self.stages {
            let y = conv.forward(g, p, x)?;
            x = g.leaky_relu(y, self.slope);
            c.push(x);
        }
        // Top-down pathway.
        let mut td: Option<Var> = None;
        let mut pyramid = vec![None; 3];
        for i in (0..3).rev() {
            let lat = self.laterals[i].forward(g, p, c[i])?;
            let merged = match td {
                Some(up) => {
                    let up = g.upsample2x(up)?;
                    g.add(lat, up)?
                }
                None => lat,
            };
            td = Some(merged);
            pyramid[i] = Some(self.smooth[i].forward(g, p, merged)?);
        }
        let mut pooled = Vec::with_capacity(3);
        for level in pyramid.into_iter().flatten() {
            pooled.push(g.adaptive_avg_pool(level, 1, 1)?);
        }
        let cat = g.concat_channels(&pooled)?;
        let z = self.head.forward(g, p, cat)?;
        g.reshape(z, &[s[0], STYLE_DIM])
    }
}
