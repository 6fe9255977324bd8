use super::conv;
use super::ops::{mat_strides, pool_window, split_axis};
use super::{Node, Op, Var};
use crate::tensor::Scalar;

/// Adds `delta` into the gradient slot of `v` (if it needs one).
fn accumulate<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
    if !nodes[v.0].requires_grad {
        return;
    }
    let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.numel()]);
    f(slot);
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn rg<T>(nodes: &[Node<T>], v: Var) -> bool {
    nodes[v.0].requires_grad
}

pub(super) fn propagate<T: Scalar>(nodes: &[Node<T>], i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let val = |v: Var| nodes[v.0].value.data();
    let out = nodes[i].value.data();
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, |d| add_into(d, g));
            accumulate(nodes, grads, *b, |d| add_into(d, g));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            accumulate(nodes, grads, *a, |d| {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(bv) {
                    *d += g * y;
                }
            });
            accumulate(nodes, grads, *b, |d| {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(av) {
                    *d += g * x;
                }
            });
        }
        Op::ScaleBy { x, s } => {
            let sv = val(*s)[0];
            let xv = val(*x);
            accumulate(nodes, grads, *x, |d| {
                for (d, &g) in d.iter_mut().zip(g) {
                    *d += g * sv;
                }
            });
            accumulate(nodes, grads, *s, |d| {
                d[0] += g.iter().zip(xv).map(|(&g, &x)| g * x).sum::<T>();
            });
        }
        Op::AddScaled { x, y, s } => {
            let sv = val(*s)[0];
            let yv = val(*y);
            accumulate(nodes, grads, *x, |d| add_into(d, g));
            accumulate(nodes, grads, *y, |d| {
                for (d, &g) in d.iter_mut().zip(g) {
                    *d += g * sv;
                }
            });
            accumulate(nodes, grads, *s, |d| {
                d[0] += g.iter().zip(yv).map(|(&g, &y)| g * y).sum::<T>();
            });
        }
        Op::Affine { x, a } => accumulate(nodes, grads, *x, |d| {
            for (d, &g) in d.iter_mut().zip(g) {
                *d += g * *a;
            }
        }),
        Op::Sum(x) => accumulate(nodes, grads, *x, |d| {
            for d in d.iter_mut() {
                *d += g[0];
            }
        }),
        Op::Mean(x) => {
            let n = T::c(nodes[x.0].value.numel() as f64);
            accumulate(nodes, grads, *x, |d| {
                for d in d.iter_mut() {
                    *d += g[0] / n;
                }
            })
        }
        Op::Reshape(x) => accumulate(nodes, grads, *x, |d| add_into(d, g)),
        Op::Relu(x) => {
            let xv = val(*x);
            accumulate(nodes, grads, *x, |d| {
                for ((d, &g), &v) in d.iter_mut().zip(g).zip(xv) {
                    if v > T::zero() {
                        *d += g;
                    }
                }
            })
        }
        Op::LeakyRelu { x, slope } => {
            let xv = val(*x);
            accumulate(nodes, grads, *x, |d| {
                for ((d, &g), &v) in d.iter_mut().zip(g).zip(xv) {
                    *d += if v > T::zero() { g } else { g * *slope };
                }
            })
        }
        Op::Tanh(x) => accumulate(nodes, grads, *x, |d| {
            for ((d, &g), &y) in d.iter_mut().zip(g).zip(out) {
                *d += g * (T::one() - y * y);
            }
        }),
        Op::Softplus(x) => {
            let xv = val(*x);
            accumulate(nodes, grads, *x, |d| {
                for ((d, &g), &v) in d.iter_mut().zip(g).zip(xv) {
                    // sigmoid(v)
                    let s = if v >= T::zero() {
                        T::one() / (T::one() + (-v).exp())
                    } else {
                        let e = v.exp();
                        e / (T::one() + e)
                    };
                    *d += g * s;
                }
            })
        }
        Op::Conv2d { x, w, b, geom } => {
            let need = (rg(nodes, *x), rg(nodes, *w), b.is_some_and(|b| rg(nodes, b)));
            let cg = conv::conv2d_backward(val(*x), val(*w), g, geom, need);
            scatter_conv(nodes, grads, *x, *w, *b, cg);
        }
        Op::ConvTranspose2d { x, w, b, geom } => {
            let need = (rg(nodes, *x), rg(nodes, *w), b.is_some_and(|b| rg(nodes, b)));
            let cg = conv::conv_transpose2d_backward(val(*x), val(*w), g, geom, need);
            scatter_conv(nodes, grads, *x, *w, *b, cg);
        }
        Op::Linear { x, w, b } => {
            let xs = nodes[x.0].value.shape();
            let (batch, din) = (xs[0], xs[1]);
            let dout = nodes[w.0].value.shape()[0];
            let (xv, wv) = (val(*x), val(*w));
            accumulate(nodes, grads, *x, |d| {
                T::gemm(batch, dout, din, T::one(), g, dout, 1, wv, din, 1, T::one(), d, din, 1);
            });
            accumulate(nodes, grads, *w, |d| {
                T::gemm(dout, batch, din, T::one(), g, 1, dout, xv, din, 1, T::one(), d, din, 1);
            });
            if let Some(b) = b {
                accumulate(nodes, grads, *b, |d| {
                    for row in g.chunks(dout) {
                        add_into(d, row);
                    }
                });
            }
        }
        Op::Bmm { a, b, ta, tb } => {
            let as_ = nodes[a.0].value.shape();
            let bs = nodes[b.0].value.shape();
            let batch = as_[0];
            let (m, k) = if *ta { (as_[2], as_[1]) } else { (as_[1], as_[2]) };
            let n = if *tb { bs[1] } else { bs[2] };
            let (ra, ca) = mat_strides(as_[2], *ta);
            let (rb, cb) = mat_strides(bs[2], *tb);
            let (asz, bsz) = (as_[1] * as_[2], bs[1] * bs[2]);
            let (av, bv) = (val(*a), val(*b));
            // d op(A) = G · op(B)ᵀ, written through op(A)'s strides.
            accumulate(nodes, grads, *a, |d| {
                for i in 0..batch {
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        &g[i * m * n..(i + 1) * m * n],
                        n,
                        1,
                        &bv[i * bsz..(i + 1) * bsz],
                        cb,
                        rb,
                        T::one(),
                        &mut d[i * asz..(i + 1) * asz],
                        ra,
                        ca,
                    );
                }
            });
            // d op(B) = op(A)ᵀ · G
            accumulate(nodes, grads, *b, |d| {
                for i in 0..batch {
                    T::gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        &av[i * asz..(i + 1) * asz],
                        ca,
                        ra,
                        &g[i * m * n..(i + 1) * m * n],
                        n,
                        1,
                        T::one(),
                        &mut d[i * bsz..(i + 1) * bsz],
                        rb,
                        cb,
                    );
                }
            });
        }
        Op::Softmax { x, axis } => {
            let (outer, dim, inner) = split_axis(nodes[x.0].value.shape(), *axis);
            accumulate(nodes, grads, *x, |d| {
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |k: usize| (o * dim + k) * inner + i;
                        let dot = (0..dim).map(|k| g[idx(k)] * out[idx(k)]).sum::<T>();
                        for k in 0..dim {
                            d[idx(k)] += out[idx(k)] * (g[idx(k)] - dot);
                        }
                    }
                }
            })
        }
        Op::AdaptiveAvgPool(x) => {
            let s = nodes[x.0].value.shape();
            let (h, w) = (s[2], s[3]);
            let os = nodes[i].value.shape();
            let (oh, ow) = (os[2], os[3]);
            accumulate(nodes, grads, *x, |d| {
                for p in 0..s[0] * s[1] {
                    for oy in 0..oh {
                        let (y0, y1) = pool_window(oy, h, oh);
                        for ox in 0..ow {
                            let (x0, x1) = pool_window(ox, w, ow);
                            let share = g[(p * oh + oy) * ow + ox] / T::c(((y1 - y0) * (x1 - x0)) as f64);
                            for yy in y0..y1 {
                                for xx in x0..x1 {
                                    d[p * h * w + yy * w + xx] += share;
                                }
                            }
                        }
                    }
                }
            })
        }
        Op::InstanceNorm { x, inv_std } => {
            let s = nodes[x.0].value.shape();
            let n = s[2] * s[3];
            let nt = T::c(n as f64);
            accumulate(nodes, grads, *x, |d| {
                for (p, &r) in inv_std.iter().enumerate() {
                    let gs = &g[p * n..(p + 1) * n];
                    let ys = &out[p * n..(p + 1) * n];
                    let mg = gs.iter().copied().sum::<T>() / nt;
                    let mgy = gs.iter().zip(ys).map(|(&a, &b)| a * b).sum::<T>() / nt;
                    for ((dd, &gg), &yy) in d[p * n..(p + 1) * n].iter_mut().zip(gs).zip(ys) {
                        *dd += r * (gg - mg - yy * mgy);
                    }
                }
            })
        }
        Op::ConcatChannels(xs) => {
            let s = nodes[i].value.shape();
            let (b, total_c, n) = (s[0], s[1], s[2] * s[3]);
            let mut c_off = 0;
            for &v in xs {
                let c = nodes[v.0].value.shape()[1];
                accumulate(nodes, grads, v, |d| {
                    for bi in 0..b {
                        let src = &g[(bi * total_c + c_off) * n..(bi * total_c + c_off + c) * n];
                        add_into(&mut d[bi * c * n..(bi + 1) * c * n], src);
                    }
                });
                c_off += c;
            }
        }
        Op::Upsample2x(x) => {
            let s = nodes[x.0].value.shape();
            let (h, w) = (s[2], s[3]);
            accumulate(nodes, grads, *x, |d| {
                for p in 0..s[0] * s[1] {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            d[(p * h + y / 2) * w + xx / 2] += g[(p * 2 * h + y) * 2 * w + xx];
                        }
                    }
                }
            })
        }
        Op::Modulate { w, style, gain } => {
            let ws = nodes[w.0].value.shape();
            let (co, ci, kk) = (ws[0], ws[1], ws[2] * ws[3]);
            let batch = nodes[style.0].value.shape()[0];
            let (wv, sv) = (val(*w), val(*style));
            let s = val(*gain)[0];
            let at = |b: usize, o: usize, ci_: usize| ((b * co + o) * ci + ci_) * kk;
            accumulate(nodes, grads, *w, |d| {
                for b in 0..batch {
                    for o in 0..co {
                        for c in 0..ci {
                            let m = s * sv[b * ci + c];
                            let src = &g[at(b, o, c)..at(b, o, c) + kk];
                            for (dd, &gg) in d[(o * ci + c) * kk..(o * ci + c + 1) * kk].iter_mut().zip(src) {
                                *dd += gg * m;
                            }
                        }
                    }
                }
            });
            accumulate(nodes, grads, *style, |d| {
                for b in 0..batch {
                    for o in 0..co {
                        for c in 0..ci {
                            let src = &g[at(b, o, c)..at(b, o, c) + kk];
                            let wk = &wv[(o * ci + c) * kk..(o * ci + c + 1) * kk];
                            d[b * ci + c] += s * src.iter().zip(wk).map(|(&a, &b)| a * b).sum::<T>();
                        }
                    }
                }
            });
            accumulate(nodes, grads, *gain, |d| {
                let mut acc = T::zero();
                for b in 0..batch {
                    for o in 0..co {
                        for c in 0..ci {
                            let src = &g[at(b, o, c)..at(b, o, c) + kk];
                            let wk = &wv[(o * ci + c) * kk..(o * ci + c + 1) * kk];
                            acc += sv[b * ci + c] * src.iter().zip(wk).map(|(&a, &b)| a * b).sum::<T>();
                        }
                    }
                }
                d[0] += acc;
            });
        }
        Op::Demodulate { x, inv_norm } => {
            let group = nodes[x.0].value.numel() / inv_norm.len();
            let xv = val(*x);
            accumulate(nodes, grads, *x, |d| {
                for (p, &r) in inv_norm.iter().enumerate() {
                    let rng = p * group..(p + 1) * group;
                    let gx = g[rng.clone()]
                        .iter()
                        .zip(&xv[rng.clone()])
                        .map(|(&a, &b)| a * b)
                        .sum::<T>();
                    let r3 = r * r * r;
                    for ((dd, &gg), &xx) in d[rng.clone()].iter_mut().zip(&g[rng.clone()]).zip(&xv[rng]) {
                        *dd += r * gg - r3 * xx * gx;
                    }
                }
            })
        }
        Op::PixelNormalize { x, inv_norm } => {
            let s = nodes[x.0].value.shape();
            let (c, n) = (s[1], s[2] * s[3]);
            let xv = val(*x);
            accumulate(nodes, grads, *x, |d| {
                for b in 0..s[0] {
                    let base = b * c * n;
                    for p in 0..n {
                        let r = inv_norm[b * n + p];
                        let gx = (0..c).map(|ch| g[base + ch * n + p] * xv[base + ch * n + p]).sum::<T>();
                        let r3 = r * r * r;
                        for ch in 0..c {
                            let k = base + ch * n + p;
                            d[k] += r * g[k] - r3 * xv[k] * gx;
                        }
                    }
                }
            })
        }
        Op::NormalLoss { pred, target, weight } => {
            let s = nodes[pred.0].value.shape();
            let (c, n) = (s[1], s[2] * s[3]);
            accumulate(nodes, grads, *pred, |d| {
                for b in 0..s[0] {
                    for p in 0..n {
                        let wgt = weight[b * n + p];
                        if wgt == T::zero() {
                            continue;
                        }
                        for ch in 0..c {
                            let k = (b * c + ch) * n + p;
                            d[k] -= g[0] * wgt * target[k];
                        }
                    }
                }
            })
        }
    }
}

fn scatter_conv<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    x: Var,
    w: Var,
    b: Option<Var>,
    cg: conv::ConvGrads<T>,
) {
    if let Some(dx) = cg.dx {
        accumulate(nodes, grads, x, |d| add_into(d, &dx));
    }
    if let Some(dw) = cg.dw {
        accumulate(nodes, grads, w, |d| add_into(d, &dw));
    }
    if let (Some(b), Some(db)) = (b, cg.db) {
        accumulate(nodes, grads, b, |d| add_into(d, &db));
    }
}
