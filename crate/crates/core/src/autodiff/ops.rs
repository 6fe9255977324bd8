use super::conv::{self, ConvGeom, PadMode};
use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

fn rank(op: &'static str, s: &[usize], r: usize) -> Result<()> {
    if s.len() != r {
        return Err(Error::shape(op, format!("expected rank {r}, got {s:?}")));
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    fn unary(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(t, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// `x * s` for a single-element tensor `s` (a learned scalar gain).
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(Error::shape(
                "scale_by",
                format!("scale must be scalar, got {:?}", self.shape(s)),
            ));
        }
        let sv = self.value(s).data()[0];
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v * sv).collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(t, Op::ScaleBy { x, s }, &[x, s]))
    }

    /// `x + s * y` for a scalar `s`. Where `s * y` is exactly zero the output is
    /// `x` bit for bit, so a zero gain gives an exact identity.
    pub fn add_scaled(&mut self, x: Var, y: Var, s: Var) -> Result<Var> {
        same_shape("add_scaled", self.shape(x), self.shape(y))?;
        if self.value(s).numel() != 1 {
            return Err(Error::shape("add_scaled", "scale must be scalar"));
        }
        let sv = self.value(s).data()[0];
        let (xv, yv) = (self.value(x), self.value(y));
        let data = xv
            .data()
            .iter()
            .zip(yv.data())
            .map(|(&a, &b)| {
                let sb = sv * b;
                if sb == T::zero() {
                    a
                } else {
                    a + sb
                }
            })
            .collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddScaled { x, y, s }, &[x, y, s]))
    }

    /// `a * x + b` with constants `a`, `b`.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let (at, bt) = (T::c(a), T::c(b));
        self.unary(x, Op::Affine { x, a: at }, |v| at * v + bt)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = xv.data().iter().copied().sum::<T>() / T::c(xv.numel() as f64);
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// NaN inputs pass through.
    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v < T::zero() { T::zero() } else { v })
    }

    /// Leaky ReLU. At exactly zero the backward pass uses the negative-side slope.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::c(slope);
        self.unary(
            x,
            Op::LeakyRelu { x, slope: s },
            |v| if v > T::zero() { v } else { v * s },
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), |v| v.tanh())
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), |v| {
            if v > T::zero() {
                v + (-v).exp().ln_1p()
            } else {
                v.exp().ln_1p()
            }
        })
    }

    /// 2-d convolution. `w` is `[co, ci, k, k]`, or `[batch, co, ci, k, k]` for
    /// a separate kernel per sample.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize, mode: PadMode) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        rank("conv2d", &xs, 4)?;
        let per_sample = ws.len() == 5;
        let wk = if per_sample { &ws[1..] } else { &ws[..] };
        if wk.len() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("weight must be rank 4 or 5, got {ws:?}"),
            ));
        }
        let (batch, ci, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (co, wci, k, k2) = (wk[0], wk[1], wk[2], wk[3]);
        if per_sample && ws[0] != batch {
            return Err(Error::shape(
                "conv2d",
                format!("per-sample weight batch {} vs input batch {batch}", ws[0]),
            ));
        }
        if wci != ci {
            return Err(Error::shape(
                "conv2d",
                format!("input has {ci} channels, weight expects {wci}"),
            ));
        }
        if k != k2 || k % 2 == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be square and odd, got {k}x{k2}"),
            ));
        }
        if stride == 0 {
            return Err(Error::Invalid("conv2d stride must be >= 1".into()));
        }
        if h + 2 * pad < k || wd + 2 * pad < k {
            return Err(Error::shape(
                "conv2d",
                format!("input {h}x{wd} smaller than kernel {k}"),
            ));
        }
        if mode == PadMode::Replicate && pad >= h.min(wd) + 1 {
            return Err(Error::shape("conv2d", "replicate padding wider than the input"));
        }
        if let Some(b) = b {
            if self.shape(b) != [co] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias {:?} vs {co} output channels", self.shape(b)),
                ));
            }
        }
        let geom = ConvGeom {
            ci,
            co,
            k,
            stride,
            pad,
            mode,
            h,
            w: wd,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (wd + 2 * pad - k) / stride + 1,
            batch,
            per_sample,
        };
        let out = conv::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let t = Tensor::new(vec![batch, co, geom.ho, geom.wo], out)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, &parents))
    }

    /// Transposed convolution, weight `[ci, co, k, k]`; output size
    /// `(h - 1) * stride - 2 * pad + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        rank("conv_transpose2d", &xs, 4)?;
        rank("conv_transpose2d", &ws, 4)?;
        let (batch, ci, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (wci, co, k, k2) = (ws[0], ws[1], ws[2], ws[3]);
        if wci != ci {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("input has {ci} channels, weight expects {wci}"),
            ));
        }
        if k != k2 {
            return Err(Error::shape("conv_transpose2d", "kernel must be square"));
        }
        if !(1..=2).contains(&stride) {
            return Err(Error::Invalid(format!(
                "conv_transpose2d stride must be 1 or 2, got {stride}"
            )));
        }
        let ho = ((h - 1) * stride + k).checked_sub(2 * pad).filter(|&v| v > 0);
        let wo = ((wd - 1) * stride + k).checked_sub(2 * pad).filter(|&v| v > 0);
        let (Some(ho), Some(wo)) = (ho, wo) else {
            return Err(Error::shape("conv_transpose2d", "padding larger than output"));
        };
        if let Some(b) = b {
            if self.shape(b) != [co] {
                return Err(Error::shape("conv_transpose2d", "bias length mismatch"));
            }
        }
        let geom = ConvGeom {
            ci,
            co,
            k,
            stride,
            pad,
            mode: PadMode::Zeros,
            h,
            w: wd,
            ho,
            wo,
            batch,
            per_sample: false,
        };
        let out = conv::conv_transpose2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let t = Tensor::new(vec![batch, co, ho, wo], out)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(t, Op::ConvTranspose2d { x, w, b, geom }, &parents))
    }

    /// `x · wᵀ + b` with `x: [batch, din]`, `w: [dout, din]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        rank("linear", &xs, 2)?;
        rank("linear", &ws, 2)?;
        let (batch, din, dout) = (xs[0], xs[1], ws[0]);
        if ws[1] != din {
            return Err(Error::shape("linear", format!("input dim {din} vs weight {ws:?}")));
        }
        let mut out = vec![T::zero(); batch * dout];
        if let Some(b) = b {
            if self.shape(b) != [dout] {
                return Err(Error::shape("linear", "bias length mismatch"));
            }
            let bv = self.value(b).data();
            for row in out.chunks_mut(dout) {
                row.copy_from_slice(bv);
            }
        }
        T::gemm(
            batch,
            din,
            dout,
            T::one(),
            self.value(x).data(),
            din,
            1,
            self.value(w).data(),
            1,
            din,
            T::one(),
            &mut out,
            dout,
            1,
        );
        let t = Tensor::new(vec![batch, dout], out)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(t, Op::Linear { x, w, b }, &parents))
    }

    /// Batched matrix product `op(a) · op(b)`, where `op` optionally transposes
    /// the last two axes. Operands are rank 3.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let as_ = self.shape(a).to_vec();
        let bs = self.shape(b).to_vec();
        rank("bmm", &as_, 3)?;
        rank("bmm", &bs, 3)?;
        if as_[0] != bs[0] {
            return Err(Error::shape("bmm", format!("batch {as_:?} vs {bs:?}")));
        }
        let (m, ka) = if ta { (as_[2], as_[1]) } else { (as_[1], as_[2]) };
        let (kb, n) = if tb { (bs[2], bs[1]) } else { (bs[1], bs[2]) };
        if ka != kb {
            return Err(Error::shape("bmm", format!("inner dims {ka} vs {kb}")));
        }
        let batch = as_[0];
        let (ra, ca) = mat_strides(as_[2], ta);
        let (rb, cb) = mat_strides(bs[2], tb);
        let asz = as_[1] * as_[2];
        let bsz = bs[1] * bs[2];
        let mut out = vec![T::zero(); batch * m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            T::gemm(
                m,
                ka,
                n,
                T::one(),
                &av[i * asz..(i + 1) * asz],
                ra,
                ca,
                &bv[i * bsz..(i + 1) * bsz],
                rb,
                cb,
                T::zero(),
                &mut out[i * m * n..(i + 1) * m * n],
                n,
                1,
            );
        }
        let t = Tensor::new(vec![batch, m, n], out)?;
        Ok(self.push(t, Op::Bmm { a, b, ta, tb }, &[a, b]))
    }

    /// Softmax along `axis`, stabilized by subtracting the running max.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(
                "softmax",
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |d: usize| (o * dim + d) * inner + i;
                let mx = (0..dim).map(|d| xv[idx(d)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for d in 0..dim {
                    let e = (xv[idx(d)] - mx).exp();
                    out[idx(d)] = e;
                    z += e;
                }
                for d in 0..dim {
                    out[idx(d)] = out[idx(d)] / z;
                }
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Softmax { x, axis }, &[x]))
    }

    /// Adaptive average pooling of `[b, c, h, w]` to `[b, c, oh, ow]`. Window
    /// `i` spans `floor(i*h/oh) .. ceil((i+1)*h/oh)`.
    pub fn adaptive_avg_pool(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        rank("adaptive_avg_pool", &s, 4)?;
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        if oh == 0 || ow == 0 || oh > h || ow > w {
            return Err(Error::Invalid(format!(
                "adaptive_avg_pool target {oh}x{ow} invalid for input {h}x{w}"
            )));
        }
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); b * c * oh * ow];
        for p in 0..b * c {
            let plane = &xv[p * h * w..(p + 1) * h * w];
            for oy in 0..oh {
                let (y0, y1) = pool_window(oy, h, oh);
                for ox in 0..ow {
                    let (x0, x1) = pool_window(ox, w, ow);
                    let mut acc = T::zero();
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            acc += plane[yy * w + xx];
                        }
                    }
                    out[(p * oh + oy) * ow + ox] = acc / T::c(((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        let t = Tensor::new(vec![b, c, oh, ow], out)?;
        Ok(self.push(t, Op::AdaptiveAvgPool(x), &[x]))
    }

    /// Instance normalization over the spatial axes of each `(sample, channel)`.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        rank("instance_norm", &s, 4)?;
        let n = s[2] * s[3];
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        let mut inv_std = Vec::with_capacity(s[0] * s[1]);
        let nt = T::c(n as f64);
        for (src, dst) in xv.chunks(n).zip(out.chunks_mut(n)) {
            let mean = src.iter().copied().sum::<T>() / nt;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
            let r = T::one() / (var + T::c(eps)).sqrt();
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = (v - mean) * r;
            }
            inv_std.push(r);
        }
        let t = Tensor::new(s, out)?;
        Ok(self.push(t, Op::InstanceNorm { x, inv_std }, &[x]))
    }

    /// Concatenates rank-4 tensors along the channel axis.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.shape(xs[0]).to_vec();
        rank("concat_channels", &first, 4)?;
        let mut total_c = 0;
        for &v in xs {
            let s = self.shape(v);
            if s.len() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3] {
                return Err(Error::shape("concat_channels", format!("{first:?} vs {s:?}")));
            }
            total_c += s[1];
        }
        let (b, n) = (first[0], first[2] * first[3]);
        let mut out = Vec::with_capacity(b * total_c * n);
        for bi in 0..b {
            for &v in xs {
                let c = self.shape(v)[1];
                out.extend_from_slice(&self.value(v).data()[bi * c * n..(bi + 1) * c * n]);
            }
        }
        let t = Tensor::new(vec![b, total_c, first[2], first[3]], out)?;
        Ok(self.push(t, Op::ConcatChannels(xs.to_vec()), xs))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        rank("upsample2x", &s, 4)?;
        let (h, w) = (s[2], s[3]);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len() * 4];
        for p in 0..s[0] * s[1] {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out[(p * 2 * h + y) * 2 * w + xx] = xv[(p * h + y / 2) * w + xx / 2];
                }
            }
        }
        let t = Tensor::new(vec![s[0], s[1], 2 * h, 2 * w], out)?;
        Ok(self.push(t, Op::Upsample2x(x), &[x]))
    }

    /// Per-sample weight modulation: `out[b,o,i,..] = w[o,i,..] * gain * style[b,i]`.
    pub fn modulate(&mut self, w: Var, style: Var, gain: Var) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        let ss = self.shape(style).to_vec();
        rank("modulate", &ws, 4)?;
        rank("modulate", &ss, 2)?;
        if ss[1] != ws[1] {
            return Err(Error::shape(
                "modulate",
                format!("style width {} vs {} input channels", ss[1], ws[1]),
            ));
        }
        if self.value(gain).numel() != 1 {
            return Err(Error::shape("modulate", "gain must be a scalar"));
        }
        let (co, ci, kk) = (ws[0], ws[1], ws[2] * ws[3]);
        let batch = ss[0];
        let s = self.value(gain).data()[0];
        let wv = self.value(w).data();
        let sv = self.value(style).data();
        let mut out = Vec::with_capacity(batch * wv.len());
        for b in 0..batch {
            for o in 0..co {
                for i in 0..ci {
                    let m = s * sv[b * ci + i];
                    let base = (o * ci + i) * kk;
                    out.extend(wv[base..base + kk].iter().map(|&v| v * m));
                }
            }
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&ws);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Modulate { w, style, gain }, &[w, style, gain]))
    }

    /// Divides each output-channel kernel (the last three axes: input channels
    /// and both kernel dimensions) by `sqrt(sum of squares + eps)`.
    pub fn demodulate(&mut self, x: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 4 {
            return Err(Error::shape("demodulate", format!("need at least rank 4, got {s:?}")));
        }
        if eps <= 0.0 {
            return Err(Error::Invalid("demodulation epsilon must be positive".into()));
        }
        let group: usize = s[s.len() - 3..].iter().product();
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        let mut inv_norm = Vec::with_capacity(xv.len() / group);
        for (src, dst) in xv.chunks(group).zip(out.chunks_mut(group)) {
            let ss = src.iter().map(|&v| v * v).sum::<T>();
            let r = T::one() / (ss + T::c(eps)).sqrt();
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = v * r;
            }
            inv_norm.push(r);
        }
        let t = Tensor::new(s, out)?;
        Ok(self.push(t, Op::Demodulate { x, inv_norm }, &[x]))
    }

    /// Rescales each pixel's channel vector of `[b, c, h, w]` to unit length.
    pub fn pixel_normalize(&mut self, x: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        rank("pixel_normalize", &s, 4)?;
        let (c, n) = (s[1], s[2] * s[3]);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        let mut inv_norm = vec![T::zero(); s[0] * n];
        for b in 0..s[0] {
            let base = b * c * n;
            for p in 0..n {
                let ss = (0..c).map(|ch| xv[base + ch * n + p].powi(2)).sum::<T>();
                let r = T::one() / (ss + T::c(eps)).sqrt();
                inv_norm[b * n + p] = r;
                for ch in 0..c {
                    out[base + ch * n + p] = xv[base + ch * n + p] * r;
                }
            }
        }
        let t = Tensor::new(s, out)?;
        Ok(self.push(t, Op::PixelNormalize { x, inv_norm }, &[x]))
    }

    /// Mean over valid pixels of `1 - <target, pred>` for `[b, 3, h, w]`
    /// fields. `mask` has one entry per `(b, y, x)`.
    pub fn normal_loss(&mut self, pred: Var, target: &Tensor<T>, mask: Option<&[bool]>) -> Result<Var> {
        let s = self.shape(pred).to_vec();
        rank("normal_loss", &s, 4)?;
        same_shape("normal_loss", &s, target.shape())?;
        let (b, c, n) = (s[0], s[1], s[2] * s[3]);
        if let Some(m) = mask {
            if m.len() != b * n {
                return Err(Error::shape(
                    "normal_loss",
                    format!("mask has {} entries, expected {}", m.len(), b * n),
                ));
            }
        }
        let count = mask.map_or(b * n, |m| m.iter().filter(|&&v| v).count());
        if count == 0 {
            return Err(Error::Invalid("normal_loss: mask has no valid pixels".into()));
        }
        let inv = T::one() / T::c(count as f64);
        let weight: Vec<T> = (0..b * n)
            .map(|i| if mask.is_none_or(|m| m[i]) { inv } else { T::zero() })
            .collect();
        let pv = self.value(pred).data();
        let tv = target.data();
        let mut total = T::zero();
        for bi in 0..b {
            for p in 0..n {
                let wgt = weight[bi * n + p];
                if wgt == T::zero() {
                    continue;
                }
                let dot = (0..c)
                    .map(|ch| pv[(bi * c + ch) * n + p] * tv[(bi * c + ch) * n + p])
                    .sum::<T>();
                total += (T::one() - dot) * wgt;
            }
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::NormalLoss {
                pred,
                target: tv.to_vec(),
                weight,
            },
            &[pred],
        ))
    }
}

pub(crate) fn mat_strides(cols: usize, transposed: bool) -> (usize, usize) {
    if transposed {
        (1, cols)
    } else {
        (cols, 1)
    }
}

pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn pool_window(i: usize, size: usize, out: usize) -> (usize, usize) {
    let start = i * size / out;
    let end = ((i + 1) * size).div_ceil(out);
    (start, end)
}
