//! Coarse predictor: a six-level U-Net generator with skip connections.

use rand::Rng;

use super::layers::{norm, Conv2d, ConvSpec, Up2x};
use super::nrnet::RENORM_EPS;
use super::profile::ArchProfile;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Scalar;

pub const CP_DEPTH: usize = 6;

#[derive(Clone, Debug)]
pub struct CpNet {
    down: Vec<Conv2d>,
    up: Vec<Up2x>,
    slope: f64,
}

impl CpNet {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, prof: &ArchProfile, rng: &mut impl Rng) -> Result<Self> {
        prof.validate()?;
        let std = prof.init_std;
        let w = &prof.widths;
        let mut down = Vec::with_capacity(CP_DEPTH);
        let mut ci = 3;
        for (i, &co) in w.iter().enumerate() {
            // The outermost and innermost levels are not normalized, so they
            // keep a bias.
            let mut spec = ConvSpec::new(ci, co, 3, 2);
            if i != 0 && i != CP_DEPTH - 1 {
                spec = spec.no_bias();
            }
            down.push(Conv2d::new(store, &format!("cp.down{i}"), spec, std, rng));
            ci = co;
        }
        // up[i] produces the level that is concatenated with down[i - 1];
        // up[0] is the output layer.
        let mut up = Vec::with_capacity(CP_DEPTH);
        for i in 0..CP_DEPTH {
            let cin = if i == CP_DEPTH - 1 { w[i] } else { 2 * w[i] };
            let (cout, bias) = if i == 0 { (3, true) } else { (w[i - 1], false) };
            up.push(Up2x::new(store, &format!("cp.up{i}"), cin, cout, bias, std, rng));
        }
        Ok(CpNet {
            down,
            up,
            slope: prof.leaky_slope,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &ParamStore<T>, image: Var) -> Result<Var> {
        let s = g.shape(image);
        let m = 1 << CP_DEPTH;
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::shape("cp_net", format!("expected [b, 3, h, w], got {s:?}")));
        }
        if s[2] % m != 0 || s[3] % m != 0 || s[2] == 0 || s[3] == 0 {
            return Err(Error::shape(
                "cp_net",
                format!(
                    "height and width must be positive multiples of {m}, got {}x{}",
                    s[2], s[3]
                ),
            ));
        }
        let mut skips = Vec::with_capacity(CP_DEPTH);
        let mut x = image;
        for (i, conv) in self.down.iter().enumerate() {
            let inp = if i == 0 { x } else { g.leaky_relu(x, self.slope) };
            let y = conv.forward(g, p, inp)?;
            x = if i == 0 || i == CP_DEPTH - 1 { y } else { norm(g, y)? };
            skips.push(x);
        }
        let mut u = x;
        for i in (0..CP_DEPTH).rev() {
            let a = g.relu(u);
            let y = self.up[i].forward(g, p, a)?;
            if i == 0 {
                u = y;
                break;
            }
            let y = norm(g, y)?;
            u = g.concat_channels(&[y, skips[i - 1]])?;
        }
        let y = g.tanh(u);
        g.pixel_normalize(y, RENORM_EPS)
    }
}
