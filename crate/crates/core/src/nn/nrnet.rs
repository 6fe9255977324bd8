//! Refinement network: face-structure encoder, exemplar encoder and the
//! decoder that fuses modulated skip features at every level.

use rand::Rng;

use super::encoders::{FaceEncoder, NormalEncoder, FACE_LEVELS};
use super::layers::{norm, Conv2d, ConvSpec, Up2x};
use super::modconv::ModConv;
use super::profile::{ArchProfile, MergeMode};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Scalar;

pub const DECODER_LEVELS: usize = FACE_LEVELS - 1;

/// Eps used when renormalizing network outputs to unit normals.
pub const RENORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
struct DecoderLevel {
    up: Up2x,
    conv1: Conv2d,
    conv2: Conv2d,
    modconv: ModConv,
    fuse: Option<Conv2d>,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    levels: Vec<DecoderLevel>,
    out: Conv2d,
    merge: MergeMode,
    slope: f64,
}

impl Decoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        prof: &ArchProfile,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let std = prof.init_std;
        let w = &prof.widths;
        let mut levels = Vec::with_capacity(DECODER_LEVELS);
        let mut ci = w[5];
        for j in 0..DECODER_LEVELS {
            let co = w[4 - j];
            let n = format!("{name}.j{j}");
            let up = Up2x::new(store, &format!("{n}.up"), ci, co, false, std, rng);
            let conv1 = Conv2d::new(
                store,
                &format!("{n}.conv1"),
                ConvSpec::new(co, co, 3, 1).no_bias(),
                std,
                rng,
            );
            let conv2 = Conv2d::new(
                store,
                &format!("{n}.conv2"),
                ConvSpec::new(co, co, 3, 1).no_bias(),
                std,
                rng,
            );
            let modconv = ModConv::new(store, &format!("{n}.mod"), co, co, 3, prof.demod_eps, std, rng)?;
            let fuse = match prof.merge {
                MergeMode::Sum => None,
                MergeMode::Concat => Some(Conv2d::new(
                    store,
                    &format!("{n}.fuse"),
                    ConvSpec::new(2 * co, co, 1, 1),
                    std,
                    rng,
                )),
            };
            levels.push(DecoderLevel {
                up,
                conv1,
                conv2,
                modconv,
                fuse,
            });
            ci = co;
        }
        let out = Conv2d::new(store, &format!("{name}.out"), ConvSpec::new(w[0], 3, 3, 1), std, rng);
        Ok(Decoder {
            levels,
            out,
            merge: prof.merge,
            slope: prof.leaky_slope,
        })
    }

    fn block<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let y = norm(g, x)?;
        Ok(g.leaky_relu(y, self.slope))
    }

    /// `feats` are the six face-encoder outputs, `z` the `[b, 256]` style.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, feats: &[Var], z: Var) -> Result<Var> {
        if feats.len() != FACE_LEVELS {
            return Err(Error::shape(
                "decoder",
                format!("expected {FACE_LEVELS} features, got {}", feats.len()),
            ));
        }
        let mut x = feats[FACE_LEVELS - 1];
        for (j, lvl) in self.levels.iter().enumerate() {
            let skip = feats[4 - j];
            let d = lvl.up.forward(g, p, x)?;
            let d = self.block(g, d)?;
            let d = lvl.conv1.forward(g, p, d)?;
            let d = self.block(g, d)?;
            let d = lvl.conv2.forward(g, p, d)?;
            let d = self.block(g, d)?;
            if g.shape(d) != g.shape(skip) {
                return Err(Error::shape(
                    "decoder",
                    format!("level {j}: decoder {:?} vs skip {:?}", g.shape(d), g.shape(skip)),
                ));
            }
            let f = lvl.modconv.forward(g, p, skip, z)?;
            x = match (self.merge, &lvl.fuse) {
                (MergeMode::Concat, Some(fuse)) => {
                    let cat = g.concat_channels(&[d, f])?;
                    fuse.forward(g, p, cat)?
                }
                _ => g.add(d, f)?,
            };
        }
        let y = self.out.forward(g, p, x)?;
        let y = g.tanh(y);
        g.pixel_normalize(y, RENORM_EPS)
    }
}

#[derive(Clone, Debug)]
pub struct NrNet {
    pub face: FaceEncoder,
    pub exemplar: NormalEncoder,
    pub decoder: Decoder,
}

pub struct NrOutput {
    pub normals: Var,
    pub style: Var,
    pub features: Vec<Var>,
}

impl NrNet {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, prof: &ArchProfile, rng: &mut impl Rng) -> Result<Self> {
        prof.validate()?;
        Ok(NrNet {
            face: FaceEncoder::new(store, "ei", prof, rng),
            exemplar: NormalEncoder::new(store, "er", prof, rng),
            decoder: Decoder::new(store, "dn", prof, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, image: Var, exemplar: Var) -> Result<Var> {
        Ok(self.forward_full(g, p, image, exemplar)?.normals)
    }

    pub fn forward_full<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamStore<T>,
        image: Var,
        exemplar: Var,
    ) -> Result<NrOutput> {
        if g.shape(image) != g.shape(exemplar) {
            return Err(Error::shape(
                "nr_net",
                format!("image {:?} vs exemplar {:?}", g.shape(image), g.shape(exemplar)),
            ));
        }
        let features = self.face.forward(g, p, image)?;
        let style = self.exemplar.forward(g, p, exemplar)?;
        let normals = self.decoder.forward(g, p, &features, style)?;
        Ok(NrOutput {
            normals,
            style,
            features,
        })
    }
}
