//! im2col/col2im convolution kernels on top of `gemm`.

use crate::tensor::Scalar;

/// How out-of-range input taps are filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PadMode {
    #[default]
    Zeros,
    /// Clamp to the nearest edge pixel. Keeps spatially constant inputs constant.
    Replicate,
}

/// Geometry of one (transposed) convolution. For `conv2d`, `(h, w)` is the
/// input and `(ho, wo)` the output; for `conv_transpose2d` it is the other way
/// round in the im2col sense: `(ho, wo)` is the larger, upsampled image.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub ci: usize,
    pub co: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub mode: PadMode,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
    pub batch: usize,
    /// Weight has a leading batch dimension (one kernel per sample).
    pub per_sample: bool,
}

impl ConvGeom {
    fn pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

#[inline]
fn tap(i: usize, stride: usize, kk: usize, pad: usize) -> isize {
    (i * stride + kk) as isize - pad as isize
}

/// Unfolds a `[c, h, w]` image into a `[c*k*k, ho*wo]` column matrix.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    mode: PadMode,
    ho: usize,
    wo: usize,
    col: &mut [T],
) {
    let n = ho * wo;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = (ch * k + kh) * k + kw;
                let dst_rows = &mut col[row * n..(row + 1) * n];
                for oy in 0..ho {
                    let dst = &mut dst_rows[oy * wo..(oy + 1) * wo];
                    let iy = tap(oy, stride, kh, pad);
                    let iy = if iy >= 0 && (iy as usize) < h {
                        iy as usize
                    } else if mode == PadMode::Zeros {
                        dst.fill(T::zero());
                        continue;
                    } else {
                        iy.clamp(0, h as isize - 1) as usize
                    };
                    let src = &plane[iy * w..(iy + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = tap(ox, stride, kw, pad);
                        *d = if ix >= 0 && (ix as usize) < w {
                            src[ix as usize]
                        } else if mode == PadMode::Zeros {
                            T::zero()
                        } else {
                            src[ix.clamp(0, w as isize - 1) as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds a column matrix back into an image.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im<T: Scalar>(
    col: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    mode: PadMode,
    ho: usize,
    wo: usize,
    x: &mut [T],
) {
    let n = ho * wo;
    for ch in 0..c {
        let plane = &mut x[ch * h * w..(ch + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = (ch * k + kh) * k + kw;
                let src_rows = &col[row * n..(row + 1) * n];
                for oy in 0..ho {
                    let src = &src_rows[oy * wo..(oy + 1) * wo];
                    let iy = tap(oy, stride, kh, pad);
                    let iy = if iy >= 0 && (iy as usize) < h {
                        iy as usize
                    } else if mode == PadMode::Zeros {
                        continue;
                    } else {
                        iy.clamp(0, h as isize - 1) as usize
                    };
                    let dst = &mut plane[iy * w..(iy + 1) * w];
                    for (ox, &s) in src.iter().enumerate() {
                        let ix = tap(ox, stride, kw, pad);
                        if ix >= 0 && (ix as usize) < w {
                            dst[ix as usize] += s;
                        } else if mode == PadMode::Replicate {
                            dst[ix.clamp(0, w as isize - 1) as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], n: usize) {
    for (o, &b) in bias.iter().enumerate() {
        for v in &mut out[o * n..(o + 1) * n] {
            *v += b;
        }
    }
}

fn bias_grad<T: Scalar>(db: &mut [T], gout: &[T], n: usize) {
    for (o, d) in db.iter_mut().enumerate() {
        *d += gout[o * n..(o + 1) * n].iter().copied().sum::<T>();
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let ckk = g.ci * g.k * g.k;
    let n = g.ho * g.wo;
    let in_sz = g.ci * g.h * g.w;
    let mut out = vec![T::zero(); g.batch * g.co * n];
    let mut col = if g.pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); ckk * n]
    };
    for b in 0..g.batch {
        let xb = &x[b * in_sz..(b + 1) * in_sz];
        let colr: &[T] = if g.pointwise() {
            xb
        } else {
            im2col(xb, g.ci, g.h, g.w, g.k, g.stride, g.pad, g.mode, g.ho, g.wo, &mut col);
            &col
        };
        let wb = if g.per_sample {
            &w[b * g.co * ckk..(b + 1) * g.co * ckk]
        } else {
            w
        };
        let ob = &mut out[b * g.co * n..(b + 1) * g.co * n];
        T::gemm(g.co, ckk, n, T::one(), wb, ckk, 1, colr, n, 1, T::zero(), ob, n, 1);
        if let Some(bias) = bias {
            add_bias(ob, bias, n);
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    gout: &[T],
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let ckk = g.ci * g.k * g.k;
    let n = g.ho * g.wo;
    let in_sz = g.ci * g.h * g.w;
    let mut dx = need.0.then(|| vec![T::zero(); x.len()]);
    let mut dw = need.1.then(|| vec![T::zero(); w.len()]);
    let mut db = need.2.then(|| vec![T::zero(); g.co]);
    let mut col = if g.pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); ckk * n]
    };
    for b in 0..g.batch {
        let xb = &x[b * in_sz..(b + 1) * in_sz];
        let gb = &gout[b * g.co * n..(b + 1) * g.co * n];
        let woff = if g.per_sample { b * g.co * ckk } else { 0 };
        let wb = &w[woff..woff + g.co * ckk];
        if let Some(dw) = dw.as_mut() {
            let colr: &[T] = if g.pointwise() {
                xb
            } else {
                im2col(xb, g.ci, g.h, g.w, g.k, g.stride, g.pad, g.mode, g.ho, g.wo, &mut col);
                &col
            };
            let dwb = &mut dw[woff..woff + g.co * ckk];
            T::gemm(g.co, n, ckk, T::one(), gb, n, 1, colr, 1, n, T::one(), dwb, ckk, 1);
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * in_sz..(b + 1) * in_sz];
            if g.pointwise() {
                T::gemm(g.ci, g.co, n, T::one(), wb, 1, ckk, gb, n, 1, T::zero(), dxb, n, 1);
            } else {
                T::gemm(ckk, g.co, n, T::one(), wb, 1, ckk, gb, n, 1, T::zero(), &mut col, n, 1);
                col2im(&col, g.ci, g.h, g.w, g.k, g.stride, g.pad, g.mode, g.ho, g.wo, dxb);
            }
        }
        if let Some(db) = db.as_mut() {
            bias_grad(db, gb, n);
        }
    }
    ConvGrads { dx, dw, db }
}

/// Transposed convolution with weight layout `[ci, co, k, k]`; `(h, w)` is the
/// input size and `(ho, wo)` the upsampled output size.
pub(crate) fn conv_transpose2d_forward<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let cokk = g.co * g.k * g.k;
    let n_in = g.h * g.w;
    let n_out = g.ho * g.wo;
    let mut out = vec![T::zero(); g.batch * g.co * n_out];
    let mut col = vec![T::zero(); cokk * n_in];
    for b in 0..g.batch {
        let xb = &x[b * g.ci * n_in..(b + 1) * g.ci * n_in];
        T::gemm(
            cokk,
            g.ci,
            n_in,
            T::one(),
            w,
            1,
            cokk,
            xb,
            n_in,
            1,
            T::zero(),
            &mut col,
            n_in,
            1,
        );
        let ob = &mut out[b * g.co * n_out..(b + 1) * g.co * n_out];
        col2im(
            &col,
            g.co,
            g.ho,
            g.wo,
            g.k,
            g.stride,
            g.pad,
            PadMode::Zeros,
            g.h,
            g.w,
            ob,
        );
        if let Some(bias) = bias {
            add_bias(ob, bias, n_out);
        }
    }
    out
}

pub(crate) fn conv_transpose2d_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    gout: &[T],
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let cokk = g.co * g.k * g.k;
    let n_in = g.h * g.w;
    let n_out = g.ho * g.wo;
    let mut dx = need.0.then(|| vec![T::zero(); x.len()]);
    let mut dw = need.1.then(|| vec![T::zero(); w.len()]);
    let mut db = need.2.then(|| vec![T::zero(); g.co]);
    let mut gcol = vec![T::zero(); cokk * n_in];
    for b in 0..g.batch {
        let gb = &gout[b * g.co * n_out..(b + 1) * g.co * n_out];
        let xb = &x[b * g.ci * n_in..(b + 1) * g.ci * n_in];
        if dx.is_some() || dw.is_some() {
            im2col(
                gb,
                g.co,
                g.ho,
                g.wo,
                g.k,
                g.stride,
                g.pad,
                PadMode::Zeros,
                g.h,
                g.w,
                &mut gcol,
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * g.ci * n_in..(b + 1) * g.ci * n_in];
            T::gemm(
                g.ci,
                cokk,
                n_in,
                T::one(),
                w,
                cokk,
                1,
                &gcol,
                n_in,
                1,
                T::zero(),
                dxb,
                n_in,
                1,
            );
        }
        if let Some(dw) = dw.as_mut() {
            T::gemm(
                g.ci,
                n_in,
                cokk,
                T::one(),
                xb,
                n_in,
                1,
                &gcol,
                1,
                n_in,
                T::one(),
                dw,
                cokk,
                1,
            );
        }
        if let Some(db) = db.as_mut() {
            bias_grad(db, gb, n_out);
        }
    }
    ConvGrads { dx, dw, db }
}
