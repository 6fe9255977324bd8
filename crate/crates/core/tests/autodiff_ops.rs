//! Forward values of the engine's primitives against naive loop oracles, plus
//! finite-difference checks of their gradients.

use facenormal::autodiff::gradcheck::{check_inputs, DEFAULT_STEP};
use facenormal::autodiff::{Graph, PadMode, Var};
use facenormal::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Direct six-loop convolution with zero padding.
fn naive_conv(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> (Vec<usize>, Vec<f64>) {
    let (b, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let xd = x.data();
    let wdat = w.data();
    let mut out = vec![0.0; b * co * ho * wo];
    for n in 0..b {
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias.map_or(0.0, |bb| bb[o]);
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += xd[((n * ci + c) * h + iy as usize) * wd + ix as usize]
                                    * wdat[((o * ci + c) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((n * co + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (vec![b, co, ho, wo], out)
}

#[test]
fn conv2d_sum_of_ones() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::full(&[1, 1, 3, 3], 1.0), false);
    let w = g.input(Tensor::full(&[1, 1, 3, 3], 1.0), false);
    let y = g.conv2d(x, w, None, 1, 0, PadMode::Zeros).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 1, 1]);
    assert_eq!(g.value(y).data(), &[9.0]);
}

#[test]
fn conv2d_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xt = rand_tensor(&[2, 1, 5, 4], &mut rng);
    let mut g = Graph::<f64>::new();
    let x = g.input(xt.clone(), false);
    let w = g.input(Tensor::full(&[1, 1, 1, 1], 1.0), false);
    let y = g.conv2d(x, w, None, 1, 0, PadMode::Zeros).unwrap();
    assert_eq!(g.value(y), &xt);
}

#[test]
fn conv2d_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xt = rand_tensor(&[2, 3, 8, 8], &mut rng);
    let wt = rand_tensor(&[4, 3, 3, 3], &mut rng);
    let bt = rand_tensor(&[4], &mut rng);
    for &(stride, pad) in &[(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)] {
        let mut g = Graph::<f64>::new();
        let x = g.input(xt.clone(), false);
        let w = g.input(wt.clone(), false);
        let b = g.input(bt.clone(), false);
        let y = g.conv2d(x, w, Some(b), stride, pad, PadMode::Zeros).unwrap();
        let (shape, want) = naive_conv(&xt, &wt, Some(bt.data()), stride, pad);
        assert_eq!(g.shape(y), &shape[..]);
        assert!(
            max_abs_diff(g.value(y).data(), &want) < 1e-6,
            "stride {stride} pad {pad}"
        );
    }
}

#[test]
fn conv2d_per_sample_weights_match_individual_convs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xt = rand_tensor(&[2, 2, 6, 6], &mut rng);
    let wt = rand_tensor(&[2, 3, 2, 3, 3], &mut rng);
    let mut g = Graph::<f64>::new();
    let x = g.input(xt.clone(), false);
    let w = g.input(wt.clone(), false);
    let y = g.conv2d(x, w, None, 1, 1, PadMode::Zeros).unwrap();
    for n in 0..2 {
        let xn = Tensor::new(vec![1, 2, 6, 6], xt.data()[n * 72..(n + 1) * 72].to_vec()).unwrap();
        let wn = Tensor::new(vec![3, 2, 3, 3], wt.data()[n * 54..(n + 1) * 54].to_vec()).unwrap();
        let (_, want) = naive_conv(&xn, &wn, None, 1, 1);
        let got = &g.value(y).data()[n * 108..(n + 1) * 108];
        assert!(max_abs_diff(got, &want) < 1e-12);
    }
}

#[test]
fn conv2d_channel_mismatch_is_a_shape_error() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::zeros(&[1, 2, 4, 4]), false);
    let w = g.input(Tensor::zeros(&[1, 3, 3, 3]), false);
    let err = g.conv2d(x, w, None, 1, 1, PadMode::Zeros).unwrap_err();
    assert!(matches!(err, facenormal::Error::Shape { .. }), "{err}");
}

#[test]
fn replicate_padding_keeps_constants_constant() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::full(&[1, 2, 7, 5], 0.3), false);
    let w = g.input(Tensor::full(&[1, 2, 3, 3], 0.5), false);
    let y = g.conv2d(x, w, None, 2, 1, PadMode::Replicate).unwrap();
    for &v in g.value(y).data() {
        assert!((v - 0.3 * 0.5 * 18.0).abs() < 1e-12);
    }
}

#[test]
fn conv_transpose_output_size() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::zeros(&[1, 2, 4, 4]), false);
    let w = g.input(Tensor::zeros(&[2, 3, 4, 4]), false);
    let y = g.conv_transpose2d(x, w, None, 2, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 3, 8, 8]);
}

#[test]
fn conv_transpose_impulse_stamps_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kt = rand_tensor(&[1, 1, 3, 3], &mut rng);
    let mut xt = Tensor::zeros(&[1, 1, 4, 4]);
    xt.data_mut()[4 + 1] = 1.0; // (y=1, x=1)
    let mut g = Graph::<f64>::new();
    let x = g.input(xt, false);
    let w = g.input(kt.clone(), false);
    let y = g.conv_transpose2d(x, w, None, 1, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 6, 6]);
    let out = g.value(y).data();
    for oy in 0..6 {
        for ox in 0..6 {
            let want = if (1..4).contains(&oy) && (1..4).contains(&ox) {
                kt.data()[(oy - 1) * 3 + (ox - 1)]
            } else {
                0.0
            };
            assert_eq!(out[oy * 6 + ox], want);
        }
    }
}

/// conv_transpose2d(y, w) must equal d<conv2d(x, w), y>/dx.
#[test]
fn conv_transpose_is_the_input_gradient_of_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &(stride, pad, k, h) in &[(1, 1, 3, 6), (2, 1, 3, 8), (2, 0, 3, 7), (1, 0, 1, 5)] {
        let xt = rand_tensor(&[2, 3, h, h], &mut rng);
        let wt = rand_tensor(&[4, 3, k, k], &mut rng);
        let mut g = Graph::<f64>::new();
        let x = g.input(xt, true);
        let w = g.input(wt.clone(), false);
        let y = g.conv2d(x, w, None, stride, pad, PadMode::Zeros).unwrap();
        let ho = g.shape(y)[2];
        let yt = rand_tensor(&[2, 4, ho, ho], &mut rng);
        let yc = g.constant(yt.clone());
        let prod = g.mul(y, yc).unwrap();
        let s = g.sum(prod);
        g.backward(s).unwrap();
        let want = g.grad(x).unwrap().to_vec();

        let mut g2 = Graph::<f64>::new();
        let yv = g2.input(yt, false);
        let wv = g2.input(wt, false);
        // Transposed conv output is (ho-1)*stride - 2 pad + k, which can be one
        // short of h; the trailing row is then not represented and is skipped.
        let z = g2.conv_transpose2d(yv, wv, None, stride, pad).unwrap();
        let hz = g2.shape(z)[2];
        assert!(hz == h || hz + 1 == h);
        let zd = g2.value(z).data();
        for n in 0..2 {
            for c in 0..3 {
                for yy in 0..hz {
                    for xx in 0..hz {
                        let a = want[((n * 3 + c) * h + yy) * h + xx];
                        let b = zd[((n * 3 + c) * hz + yy) * hz + xx];
                        assert!((a - b).abs() < 1e-6, "stride {stride} pad {pad}: {a} vs {b}");
                    }
                }
            }
        }
    }
}

#[test]
fn linear_identity_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xt = rand_tensor(&[3, 4], &mut rng);
    let eye = Tensor::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
    let mut g = Graph::<f64>::new();
    let x = g.input(xt.clone(), false);
    let w = g.input(eye, false);
    let b = g.input(Tensor::zeros(&[4]), false);
    let y = g.linear(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y), &xt);

    let zero = g.input(Tensor::zeros(&[2, 4]), false);
    let bias = g.input(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap(), false);
    let w3 = g.input(rand_tensor(&[3, 4], &mut rng), false);
    let y = g.linear(zero, w3, Some(bias)).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
}

#[test]
fn linear_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xt = rand_tensor(&[4, 8], &mut rng);
    let wt = rand_tensor(&[3, 8], &mut rng);
    let bt = rand_tensor(&[3], &mut rng);
    let mut g = Graph::<f64>::new();
    let (x, w, b) = (
        g.input(xt.clone(), false),
        g.input(wt.clone(), false),
        g.input(bt.clone(), false),
    );
    let y = g.linear(x, w, Some(b)).unwrap();
    let mut want = vec![0.0; 12];
    for i in 0..4 {
        for o in 0..3 {
            want[i * 3 + o] = bt.data()[o] + (0..8).map(|k| xt.data()[i * 8 + k] * wt.data()[o * 8 + k]).sum::<f64>();
        }
    }
    assert!(max_abs_diff(g.value(y).data(), &want) < 1e-6);
    assert!(g.linear(x, b, None).is_err());
}

#[test]
fn softmax_closed_forms() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::full(&[5], 2.5), false);
    let y = g.softmax(x, 0).unwrap();
    for &v in g.value(y).data() {
        assert!((v - 0.2).abs() < 1e-15);
    }
    let x = g.input(Tensor::new(vec![2], vec![0.0, 3f64.ln()]).unwrap(), false);
    let y = g.softmax(x, 0).unwrap();
    let d = g.value(y).data();
    assert!((d[0] - 0.25).abs() < 1e-15 && (d[1] - 0.75).abs() < 1e-15);
    assert!(g.softmax(x, 1).is_err());
}

#[test]
fn softmax_f32_matches_f64_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xt = Tensor::<f64>::from_fn(&[3, 7], |_| rng.gen_range(-4.0..4.0));
    // 64-bit reference by direct evaluation.
    let mut want = vec![0.0; 21];
    for r in 0..3 {
        let row = &xt.data()[r * 7..(r + 1) * 7];
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        for c in 0..7 {
            want[r * 7 + c] = row[c].exp() / z;
        }
    }
    let mut g = Graph::<f32>::new();
    let x = g.input(xt.cast(), false);
    let y = g.softmax(x, 1).unwrap();
    let got: Vec<f64> = g.value(y).data().iter().map(|&v| v as f64).collect();
    assert!(max_abs_diff(&got, &want) < 1e-7);

    let mut g = Graph::<f64>::new();
    let x = g.input(xt, false);
    let y = g.softmax(x, 1).unwrap();
    assert!(max_abs_diff(g.value(y).data(), &want) < 1e-12);
}

#[test]
fn softmax_is_stable_for_large_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xt = Tensor::<f32>::from_fn(&[4, 16], |_| rng.gen_range(-1e4..1e4));
    let mut g = Graph::<f32>::new();
    let x = g.input(xt, false);
    let y = g.softmax(x, 1).unwrap();
    for row in g.value(y).data().chunks(16) {
        let s: f64 = row.iter().map(|&v| v as f64).sum();
        assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
        assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn activation_values_and_kinks() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::new(vec![3], vec![0.0, -1.0, 2.0]).unwrap(), true);
    let t = g.tanh(x);
    assert_eq!(g.value(t).data()[0], 0.0);
    let l = g.leaky_relu(x, 0.2);
    assert_eq!(g.value(l).data(), &[0.0, -0.2, 2.0]);
    let s = g.sum(l);
    g.backward(s).unwrap();
    // At exactly zero the negative-side slope is used.
    assert_eq!(g.grad(x).unwrap(), &[0.2, 0.2, 1.0]);

    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::new(vec![2], vec![2.0, -2.0]).unwrap(), true);
    let r = g.relu(x);
    let s = g.sum(r);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0]);
}

#[test]
fn adaptive_pool_examples_and_partition_oracle() {
    let mut g = Graph::<f64>::new();
    let c = g.input(Tensor::full(&[1, 1, 5, 3], 1.7), false);
    let p = g.adaptive_avg_pool(c, 1, 1).unwrap();
    assert!((g.value(p).data()[0] - 1.7).abs() < 1e-15);
    let x = g.input(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), false);
    let p = g.adaptive_avg_pool(x, 1, 1).unwrap();
    assert_eq!(g.value(p).data(), &[2.5]);
    assert!(g.adaptive_avg_pool(x, 3, 1).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (h, w) = (7, 10);
    let xt = rand_tensor(&[2, 3, h, w], &mut rng);
    for &(oh, ow) in &[(3, 4), (7, 10), (2, 3), (5, 1)] {
        let x = g.input(xt.clone(), false);
        let p = g.adaptive_avg_pool(x, oh, ow).unwrap();
        // Explicit partition: window i covers [floor(i*n/o), ceil((i+1)*n/o)).
        let mut want = Vec::new();
        for plane in xt.data().chunks(h * w) {
            for i in 0..oh {
                let (y0, y1) = ((i * h) as f64 / oh as f64, ((i + 1) * h) as f64 / oh as f64);
                let (y0, y1) = (y0.floor() as usize, y1.ceil() as usize);
                for j in 0..ow {
                    let (x0, x1) = ((j * w) as f64 / ow as f64, ((j + 1) * w) as f64 / ow as f64);
                    let (x0, x1) = (x0.floor() as usize, x1.ceil() as usize);
                    let mut s = 0.0;
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            s += plane[yy * w + xx];
                        }
                    }
                    want.push(s / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        assert!(max_abs_diff(g.value(p).data(), &want) < 1e-6);
    }
}

#[test]
fn bmm_matches_loops_with_transposes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_tensor(&[2, 3, 4], &mut rng); // used as a (3x4) or aᵀ (4x3)
    let b = rand_tensor(&[2, 3, 5], &mut rng);
    let mut g = Graph::<f64>::new();
    let (av, bv) = (g.input(a.clone(), false), g.input(b.clone(), false));
    let y = g.bmm(av, bv, true, false).unwrap(); // [2, 4, 5]
    assert_eq!(g.shape(y), &[2, 4, 5]);
    let mut want = vec![0.0; 40];
    for n in 0..2 {
        for i in 0..4 {
            for j in 0..5 {
                want[(n * 4 + i) * 5 + j] = (0..3)
                    .map(|k| a.data()[(n * 3 + k) * 4 + i] * b.data()[(n * 3 + k) * 5 + j])
                    .sum();
            }
        }
    }
    assert!(max_abs_diff(g.value(y).data(), &want) < 1e-12);
}

// ---- finite-difference checks -------------------------------------------------

const TOL: f64 = 1e-4;

fn assert_grads(
    label: &str,
    inputs: &[Tensor<f64>],
    build: impl Fn(&mut Graph<f64>, &[Var]) -> facenormal::Result<Var>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let reports = check_inputs(inputs, build, DEFAULT_STEP, Some(60), &mut rng).unwrap();
    for r in reports {
        assert!(r.passes(TOL), "{label}/{}: rel error {:.3e}", r.label, r.rel_error);
        assert!(r.analytic_norm > 0.0, "{label}/{}: zero gradient", r.label);
    }
}

/// Weighted sum with fixed random weights so every output element matters.
fn weighted_sum(g: &mut Graph<f64>, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wt = rand_tensor(g.shape(y), &mut rng);
    let w = g.constant(wt);
    let p = g.mul(y, w).unwrap();
    g.sum(p)
}

#[test]
fn gradcheck_conv2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let ins = [
        rand_tensor(&[2, 3, 6, 6], &mut rng),
        rand_tensor(&[4, 3, 3, 3], &mut rng),
        rand_tensor(&[4], &mut rng),
    ];
    for &(stride, pad, mode) in &[
        (1, 1, PadMode::Zeros),
        (2, 1, PadMode::Zeros),
        (2, 1, PadMode::Replicate),
    ] {
        assert_grads("conv2d", &ins, |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), stride, pad, mode)?;
            Ok(weighted_sum(g, y, 1))
        });
    }
}

#[test]
fn gradcheck_conv2d_per_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let ins = [
        rand_tensor(&[2, 2, 5, 5], &mut rng),
        rand_tensor(&[2, 3, 2, 3, 3], &mut rng),
    ];
    assert_grads("conv2d_per_sample", &ins, |g, v| {
        let y = g.conv2d(v[0], v[1], None, 1, 1, PadMode::Zeros)?;
        Ok(weighted_sum(g, y, 2))
    });
}

#[test]
fn gradcheck_conv_transpose2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let ins = [
        rand_tensor(&[2, 3, 4, 4], &mut rng),
        rand_tensor(&[3, 2, 4, 4], &mut rng),
        rand_tensor(&[2], &mut rng),
    ];
    assert_grads("conv_transpose2d", &ins, |g, v| {
        let y = g.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1)?;
        Ok(weighted_sum(g, y, 3))
    });
}

#[test]
fn gradcheck_linear_and_bmm() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let ins = [
        rand_tensor(&[4, 8], &mut rng),
        rand_tensor(&[3, 8], &mut rng),
        rand_tensor(&[3], &mut rng),
    ];
    assert_grads("linear", &ins, |g, v| {
        let y = g.linear(v[0], v[1], Some(v[2]))?;
        Ok(weighted_sum(g, y, 4))
    });
    let ins = [rand_tensor(&[2, 3, 4], &mut rng), rand_tensor(&[2, 5, 3], &mut rng)];
    assert_grads("bmm", &ins, |g, v| {
        let y = g.bmm(v[0], v[1], true, true)?;
        Ok(weighted_sum(g, y, 5))
    });
}

#[test]
fn gradcheck_softmax_and_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let ins = [rand_tensor(&[3, 4, 5], &mut rng)];
    for axis in 0..3 {
        assert_grads("softmax", &ins, |g, v| {
            let y = g.softmax(v[0], axis)?;
            Ok(weighted_sum(g, y, 6))
        });
    }
    // Keep inputs away from the kinks of the piecewise-linear activations.
    let xs = Tensor::from_fn(&[40], |i| {
        let v = rng.gen_range(0.05..2.0);
        if i % 2 == 0 {
            v
        } else {
            -v
        }
    });
    let ins = [xs];
    assert_grads("relu", &ins, |g, v| {
        let y = g.relu(v[0]);
        Ok(weighted_sum(g, y, 7))
    });
    assert_grads("leaky_relu", &ins, |g, v| {
        let y = g.leaky_relu(v[0], 0.2);
        Ok(weighted_sum(g, y, 8))
    });
    assert_grads("tanh", &ins, |g, v| {
        let y = g.tanh(v[0]);
        Ok(weighted_sum(g, y, 9))
    });
    assert_grads("softplus", &ins, |g, v| {
        let y = g.softplus(v[0]);
        Ok(weighted_sum(g, y, 10))
    });
}

#[test]
fn gradcheck_pooling_norms_and_reshapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let ins = [rand_tensor(&[2, 3, 7, 6], &mut rng)];
    assert_grads("adaptive_avg_pool", &ins, |g, v| {
        let y = g.adaptive_avg_pool(v[0], 3, 4)?;
        Ok(weighted_sum(g, y, 11))
    });
    assert_grads("instance_norm", &ins, |g, v| {
        let y = g.instance_norm(v[0], 1e-5)?;
        Ok(weighted_sum(g, y, 12))
    });
    assert_grads("pixel_normalize", &ins, |g, v| {
        let y = g.pixel_normalize(v[0], 1e-12)?;
        Ok(weighted_sum(g, y, 13))
    });
    assert_grads("upsample2x", &ins, |g, v| {
        let y = g.upsample2x(v[0])?;
        Ok(weighted_sum(g, y, 14))
    });
    let ins2 = [
        rand_tensor(&[2, 3, 4, 4], &mut rng),
        rand_tensor(&[2, 2, 4, 4], &mut rng),
    ];
    assert_grads("concat_channels", &ins2, |g, v| {
        let y = g.concat_channels(&[v[0], v[1]])?;
        let y = g.reshape(y, &[2, 80])?;
        Ok(weighted_sum(g, y, 15))
    });
}

#[test]
fn gradcheck_elementwise_and_scalars() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let ins = [
        rand_tensor(&[3, 4], &mut rng),
        rand_tensor(&[3, 4], &mut rng),
        rand_tensor(&[1], &mut rng),
    ];
    assert_grads("add_mul", &ins[..2], |g, v| {
        let a = g.add(v[0], v[1])?;
        let m = g.mul(a, v[1])?;
        Ok(weighted_sum(g, m, 16))
    });
    assert_grads("scale_by/add_scaled", &ins, |g, v| {
        let a = g.scale_by(v[0], v[2])?;
        let b = g.add_scaled(a, v[1], v[2])?;
        let b = g.affine(b, -1.5, 0.25);
        let m = g.mean(b);
        let s = weighted_sum(g, b, 17);
        g.add(m, s)
    });
}

#[test]
fn gradcheck_modulate_demodulate() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let ins = [
        rand_tensor(&[3, 2, 3, 3], &mut rng),
        rand_tensor(&[2, 2], &mut rng),
        Tensor::scalar(0.8),
    ];
    assert_grads("modulate", &ins, |g, v| {
        let y = g.modulate(v[0], v[1], v[2])?;
        Ok(weighted_sum(g, y, 18))
    });
    let ins = [rand_tensor(&[2, 3, 2, 3, 3], &mut rng)];
    assert_grads("demodulate", &ins, |g, v| {
        let y = g.demodulate(v[0], 1e-8)?;
        Ok(weighted_sum(g, y, 19))
    });
}

#[test]
fn activations_propagate_nan() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::new(vec![3], vec![f64::NAN, -1.0, 2.0]).unwrap(), false);
    let r = g.relu(x);
    let l = g.leaky_relu(x, 0.2);
    assert!(g.value(r).data()[0].is_nan() && g.value(l).data()[0].is_nan());
    assert_eq!(&g.value(r).data()[1..], &[0.0, 2.0]);
}
