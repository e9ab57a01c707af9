use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Direct nested-loop strided "same" convolution.
fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, bias: &[f64], stride: usize) -> Vec<f64> {
    let (b_n, cin, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, w_n) = (k.shape()[0], k.shape()[2]);
    let pad = (w_n - 1) / 2;
    let t_out = t.div_ceil(stride);
    let mut out = vec![0.0; b_n * cout * t_out];
    for b in 0..b_n {
        for co in 0..cout {
            for o in 0..t_out {
                let mut acc = bias[co];
                for ci in 0..cin {
                    for w in 0..w_n {
                        let p = (o * stride + w) as isize - pad as isize;
                        if p >= 0 && (p as usize) < t {
                            acc += x.data()[(b * cin + ci) * t + p as usize] * k.data()[(co * cin + ci) * w_n + w];
                        }
                    }
                }
                out[(b * cout + co) * t_out + o] = acc;
            }
        }
    }
    out
}

fn matmul_oracle(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted-sum loss so every output element contributes a distinct gradient.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(&mut rng, tape.shape(out));
    let w = tape.constant(w);
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

#[test]
fn conv1d_width_one_is_strided_scale() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_f64(&[1, 1, 4], &[1., 2., 3., 4.]).unwrap());
    let k = tape.constant(Tensor::from_f64(&[1, 1, 1], &[2.]).unwrap());
    let b = tape.constant(Tensor::zeros(&[1]));
    let y = tape.conv1d(x, k, b, 2).unwrap();
    assert_eq!(tape.value(y).data(), &[2.0, 6.0]);
}

#[test]
fn conv1d_zero_kernel_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(rand_tensor(&mut rng, &[2, 3, 7]));
    let k = tape.constant(Tensor::zeros(&[4, 3, 5]));
    let b = tape.constant(Tensor::zeros(&[4]));
    let y = tape.conv1d(x, k, b, 2).unwrap();
    assert_eq!(tape.shape(y), &[2, 4, 4]);
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv1d_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_tensor(&mut rng, &[2, 3, 8]);
    let k = rand_tensor(&mut rng, &[4, 3, 5]);
    let bias = rand_tensor(&mut rng, &[4]);
    let expected = conv_oracle(&x, &k, bias.data(), 2);
    let mut tape = Tape::<f64>::new();
    let (xv, kv, bv) = (tape.constant(x), tape.constant(k), tape.constant(bias));
    let y = tape.conv1d(xv, kv, bv, 2).unwrap();
    assert_eq!(tape.shape(y), &[2, 4, 4]);
    for (a, e) in tape.value(y).data().iter().zip(&expected) {
        assert_abs_diff_eq!(a, e, epsilon = 1e-12);
    }
}

#[test]
fn conv1d_odd_lengths_and_even_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (t, w, s) in [(1, 1, 1), (5, 4, 2), (9, 6, 3), (7, 3, 1)] {
        let x = rand_tensor(&mut rng, &[1, 2, t]);
        let k = rand_tensor(&mut rng, &[3, 2, w]);
        let expected = conv_oracle(&x, &k, &[0.0; 3], s);
        let mut tape = Tape::<f64>::new();
        let (xv, kv) = (tape.constant(x), tape.constant(k));
        let bv = tape.constant(Tensor::zeros(&[3]));
        let y = tape.conv1d(xv, kv, bv, s).unwrap();
        assert_eq!(tape.shape(y)[2], t.div_ceil(s));
        for (a, e) in tape.value(y).data().iter().zip(&expected) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-12);
        }
    }
}

#[test]
fn conv1d_rejects_channel_mismatch() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[1, 2, 4]));
    let k = tape.constant(Tensor::zeros(&[1, 3, 3]));
    let b = tape.constant(Tensor::zeros(&[1]));
    assert!(matches!(tape.conv1d(x, k, b, 1), Err(crate::Error::Contract(_))));
}

#[test]
fn deconv1d_places_taps_at_source_positions() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_f64(&[1, 1, 2], &[1., 1.]).unwrap());
    let k = tape.constant(Tensor::from_f64(&[1, 1, 1], &[3.]).unwrap());
    let b = tape.constant(Tensor::zeros(&[1]));
    let y = tape.deconv1d(x, k, b, 2).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 0.0, 3.0, 0.0]);
}

#[test]
fn deconv1d_zero_input_and_bad_stride() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[2, 3, 5]));
    let k = tape.constant(Tensor::full(&[3, 2, 4], 0.7));
    let b = tape.constant(Tensor::zeros(&[2]));
    let y = tape.deconv1d(x, k, b, 2).unwrap();
    assert_eq!(tape.shape(y), &[2, 2, 10]);
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    assert!(tape.deconv1d(x, k, b, 0).is_err());
}

#[test]
fn deconv1d_is_adjoint_of_conv1d() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for w in [1, 2, 5, 8] {
        // conv maps [1,3,12] -> [1,2,6] with kernel [2,3,W]; deconv maps back with the same memory.
        let a = rand_tensor(&mut rng, &[1, 3, 12]);
        let bt = rand_tensor(&mut rng, &[1, 2, 6]);
        let k = rand_tensor(&mut rng, &[2, 3, w]);
        let mut tape = Tape::<f64>::new();
        let (av, bv, kv) = (tape.constant(a.clone()), tape.constant(bt.clone()), tape.constant(k));
        let z2 = tape.constant(Tensor::zeros(&[2]));
        let z3 = tape.constant(Tensor::zeros(&[3]));
        let ca = tape.conv1d(av, kv, z2, 2).unwrap();
        let db = tape.deconv1d(bv, kv, z3, 2).unwrap();
        let lhs = dot(tape.value(ca).data(), bt.data());
        let rhs = dot(a.data(), tape.value(db).data());
        assert!((lhs - rhs).abs() < 1e-10, "width {}: {} vs {}", w, lhs, rhs);
    }
}

#[test]
fn affine_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_f64(&[1, 2], &[1., 2.]).unwrap());
    let w = tape.constant(Tensor::from_f64(&[2, 2], &[1., 0., 0., 2.]).unwrap());
    let b = tape.constant(Tensor::from_f64(&[2], &[1., 1.]).unwrap());
    let y = tape.affine(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[2.0, 5.0]);

    let eye = tape.constant(Tensor::from_f64(&[2, 2], &[1., 0., 0., 1.]).unwrap());
    let z = tape.constant(Tensor::zeros(&[2]));
    let y = tape.affine(x, eye, z).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

    let bad = tape.constant(Tensor::zeros(&[3, 2]));
    assert!(tape.affine(x, bad, z).is_err());
}

#[test]
fn affine_matches_matmul_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // 150 rows spans several parallel row blocks.
    let x = rand_tensor(&mut rng, &[3, 50, 7]);
    let w = rand_tensor(&mut rng, &[7, 5]);
    let b = rand_tensor(&mut rng, &[5]);
    let mut expected = matmul_oracle(x.data(), w.data(), 150, 7, 5);
    for row in expected.chunks_mut(5) {
        row.iter_mut().zip(b.data()).for_each(|(o, bb)| *o += bb);
    }
    let mut tape = Tape::<f64>::new();
    let (xv, wv, bv) = (tape.constant(x), tape.constant(w), tape.constant(b));
    let y = tape.affine(xv, wv, bv).unwrap();
    assert_eq!(tape.shape(y), &[3, 50, 5]);
    for (a, e) in tape.value(y).data().iter().zip(&expected) {
        assert_abs_diff_eq!(a, e, epsilon = 1e-12);
    }
}

#[test]
fn activation_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_f64(&[3], &[-1., 0., 2.]).unwrap());
    let y = tape.activation(x, Activation::Relu).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    let x = tape.constant(Tensor::from_f64(&[1], &[-5.]).unwrap());
    let y = tape.activation(x, Activation::LeakyRelu(0.2)).unwrap();
    assert_abs_diff_eq!(tape.value(y).data()[0], -1.0, epsilon = 1e-15);
    assert!(tape.activation(x, Activation::LeakyRelu(1.5)).is_err());
}

#[test]
fn activation_gradient_at_zero_is_positive_side() {
    for kind in [Activation::Relu, Activation::LeakyRelu(0.2)] {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_f64(&[1], &[0.0]).unwrap());
        let y = tape.activation(x, kind).unwrap();
        let l = tape.sum(y);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0]);
    }
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[3]));
    let y = tape.softmax(x).unwrap();
    for &v in tape.value(y).data() {
        assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
    }
    let x = tape.constant(Tensor::from_f64(&[2], &[1000., 0.]).unwrap());
    let y = tape.softmax(x).unwrap();
    let v = tape.value(y).data();
    assert!(v.iter().all(|x| x.is_finite()));
    assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-15);
    assert!(v[1] < 1e-300);
}

#[test]
fn dropout_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[100]);
    let mut tape = Tape::<f64>::new();
    let xv = tape.constant(x.clone());
    let y = tape.dropout(xv, 0.5, false, &mut rng).unwrap();
    assert_eq!(tape.value(y), &x);
    let y = tape.dropout(xv, 0.0, true, &mut rng).unwrap();
    assert_eq!(tape.value(y), &x);
    assert!(tape.dropout(xv, 1.0, true, &mut rng).is_err());
}

#[test]
fn dropout_zero_fraction_is_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::full(&[1_000_000], 1.0));
    let y = tape.dropout(x, 0.5, true, &mut rng).unwrap();
    let v = tape.value(y).data();
    let zeros = v.iter().filter(|&&v| v == 0.0).count() as f64 / v.len() as f64;
    assert!((zeros - 0.5).abs() < 0.01, "zero fraction {}", zeros);
    assert!(v.iter().all(|&x| x == 0.0 || x == 2.0));
}

#[test]
fn stop_gradient_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::from_f64(&[3], &[1., 2., 3.]).unwrap());
    let s = tape.stop_gradient(x);
    assert_eq!(tape.value(s).data(), &[1.0, 2.0, 3.0]);
    let l = tape.sum(s);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(x).data(), &[0.0, 0.0, 0.0]);

    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::from_f64(&[1], &[2.]).unwrap());
    let s = tape.stop_gradient(x);
    let p = tape.mul(x, s).unwrap();
    let l = tape.sum(p);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(x).data(), &[2.0]);
}

#[test]
fn straight_through_forwards_replacement_and_passes_gradient() {
    let mut tape = Tape::<f64>::new();
    let h = tape.param(Tensor::from_f64(&[2], &[0.1, 0.3]).unwrap());
    let q = tape
        .straight_through(h, Tensor::from_f64(&[2], &[0.0, 1.0]).unwrap())
        .unwrap();
    assert_eq!(tape.value(q).data(), &[0.0, 1.0]);
    let l = weighted_sum(&mut tape, q, 9).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(h), g.wrt(q));
}

#[test]
fn backward_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::from_f64(&[3], &[1., -2., 5.]).unwrap());
    let l = tape.sum(x);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(x).data(), &[1.0, 1.0, 1.0]);

    let l = tape.mse(x, x).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(x).data(), &[0.0, 0.0, 0.0]);

    assert!(tape.backward(x).is_err());
}

#[test]
fn disconnected_parameter_gets_exact_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::from_f64(&[2], &[1., 2.]).unwrap());
    let unused = tape.param(Tensor::from_f64(&[4], &[1., 2., 3., 4.]).unwrap());
    let l = tape.sum(x);
    let g = tape.backward(l).unwrap();
    assert!(!g.has(unused));
    assert_eq!(g.wrt(unused).data(), &[0.0; 4]);
}

#[test]
fn composed_network_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let inputs = vec![
        rand_tensor(&mut rng, &[2, 3, 8]),
        rand_tensor(&mut rng, &[4, 3, 5]),
        rand_tensor(&mut rng, &[4]),
        rand_tensor(&mut rng, &[4, 6]),
        rand_tensor(&mut rng, &[6]),
        rand_tensor(&mut rng, &[2, 6, 4]),
    ];
    let report = grad_check(
        &inputs,
        |t, v| {
            let c = t.conv1d(v[0], v[1], v[2], 2)?;
            let a = t.activation(c, Activation::LeakyRelu(0.2))?;
            let p = t.permute(a, &[0, 2, 1])?;
            let y = t.affine(p, v[3], v[4])?;
            let y = t.permute(y, &[0, 2, 1])?;
            t.mse(y, v[5])
        },
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-5, "{:?}", report);
}

#[test]
fn primitive_gradients_pass_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let check = |name: &str, inputs: Vec<Tensor<f64>>, f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>| {
        let report = grad_check(&inputs, f, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-6, "{}: {:?}", name, report);
    };
    check(
        "affine",
        vec![rand_tensor(&mut rng, &[5, 4]), rand_tensor(&mut rng, &[4, 3]), rand_tensor(&mut rng, &[3])],
        &|t, v| {
            let y = t.affine(v[0], v[1], v[2])?;
            weighted_sum(t, y, 1)
        },
    );
    check("softmax", vec![rand_tensor(&mut rng, &[3, 5])], &|t, v| {
        let y = t.softmax(v[0])?;
        weighted_sum(t, y, 2)
    });
    check(
        "conv1d",
        vec![rand_tensor(&mut rng, &[2, 3, 9]), rand_tensor(&mut rng, &[2, 3, 4]), rand_tensor(&mut rng, &[2])],
        &|t, v| {
            let y = t.conv1d(v[0], v[1], v[2], 2)?;
            weighted_sum(t, y, 3)
        },
    );
    check(
        "deconv1d",
        vec![rand_tensor(&mut rng, &[2, 3, 4]), rand_tensor(&mut rng, &[3, 2, 5]), rand_tensor(&mut rng, &[2])],
        &|t, v| {
            let y = t.deconv1d(v[0], v[1], v[2], 2)?;
            weighted_sum(t, y, 4)
        },
    );
    // Inputs kept away from the kink at zero.
    let away: Tensor<f64> = Tensor::from_fn(&[12], |i| if i % 2 == 0 { 0.3 + i as f64 * 0.1 } else { -0.2 - i as f64 * 0.1 });
    check("relu", vec![away.clone()], &|t, v| {
        let y = t.activation(v[0], Activation::Relu)?;
        weighted_sum(t, y, 5)
    });
    check("leaky", vec![away], &|t, v| {
        let y = t.activation(v[0], Activation::LeakyRelu(0.2))?;
        weighted_sum(t, y, 6)
    });
    check("matmul", vec![rand_tensor(&mut rng, &[2, 3, 4]), rand_tensor(&mut rng, &[2, 4, 5])], &|t, v| {
        let y = t.matmul(v[0], v[1], false)?;
        weighted_sum(t, y, 7)
    });
    check("matmul_t", vec![rand_tensor(&mut rng, &[2, 3, 4]), rand_tensor(&mut rng, &[2, 5, 4])], &|t, v| {
        let y = t.matmul(v[0], v[1], true)?;
        weighted_sum(t, y, 8)
    });
    check("concat_permute_reshape", vec![rand_tensor(&mut rng, &[2, 3, 4]), rand_tensor(&mut rng, &[2, 2, 4])], &|t, v| {
        let c = t.concat(&[v[0], v[1]], 1)?;
        let p = t.permute(c, &[2, 0, 1])?;
        let r = t.reshape(p, &[8, 5])?;
        weighted_sum(t, r, 9)
    });
    check("embedding", vec![rand_tensor(&mut rng, &[4, 3])], &|t, v| {
        let e = t.embedding(v[0], &[0, 2, 2, 3, 1, 0], &[2, 3])?;
        weighted_sum(t, e, 10)
    });
    check("dropout_mul_sub", vec![rand_tensor(&mut rng, &[20]), rand_tensor(&mut rng, &[20])], &|t, v| {
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let d = t.dropout(v[0], 0.3, true, &mut r)?;
        let m = t.mul(d, v[1])?;
        let s = t.sub(m, v[0])?;
        let s = t.scale(s, 0.7);
        let a = t.add(s, v[1])?;
        t.mse(a, v[1])
    });
}

#[test]
fn adam_examples() {
    let mut params = ParamStore::new();
    params.insert("w", Tensor::<f64>::from_f64(&[1], &[0.0]).unwrap()).unwrap();
    let mut adam = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() });
    let mut grads = std::collections::BTreeMap::new();
    grads.insert("w".to_string(), Tensor::from_f64(&[1], &[1.0]).unwrap());
    adam.step(&mut params, &grads).unwrap();
    assert_eq!(adam.steps(), 1);
    assert_abs_diff_eq!(params.get("w").unwrap().data()[0], -0.1, epsilon = 1e-8);

    let mut params = ParamStore::new();
    params.insert("w", Tensor::<f64>::from_f64(&[2], &[0.5, -0.25]).unwrap()).unwrap();
    let before = params.clone();
    let mut adam = Adam::new(AdamConfig::default());
    let mut grads = std::collections::BTreeMap::new();
    grads.insert("w".to_string(), Tensor::zeros(&[2]));
    adam.step(&mut params, &grads).unwrap();
    assert_eq!(params, before);

    grads.insert("w".to_string(), Tensor::zeros(&[3]));
    assert!(adam.step(&mut params, &grads).is_err());
}

#[test]
fn adam_minimizes_quadratic_bowl() {
    let mut params = ParamStore::new();
    params.insert("w", Tensor::<f64>::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap()).unwrap();
    let f = |p: &ParamStore<f64>| p.get("w").unwrap().sum_sq();
    let start = f(&params);
    let mut adam = Adam::new(AdamConfig { lr: 0.05, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 });
    for _ in 0..500 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let w = bound.get("w").unwrap();
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        adam.step(&mut params, &bound.gradients(&grads)).unwrap();
    }
    assert!(f(&params) < 0.01 * start, "{} -> {}", start, f(&params));
}

#[test]
fn identical_steps_are_bitwise_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Tensor::<f32>::from_fn(&[4, 3, 16], |_| rng.gen_range(-1.0..1.0));
        let k = Tensor::<f32>::from_fn(&[5, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let mut tape = Tape::new();
        let (xv, kv) = (tape.constant(x), tape.param(k));
        let b = tape.param(Tensor::zeros(&[5]));
        let y = tape.conv1d(xv, kv, b, 2).unwrap();
        let y = tape.dropout(y, 0.2, true, &mut rng).unwrap();
        let l = tape.mean(y);
        let g = tape.backward(l).unwrap();
        (tape.value(l).item().to_bits(), g.wrt(kv))
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_normalize_and_ignore_shifts(row in proptest::collection::vec(-30.0f64..30.0, 1..12), shift in -100.0f64..100.0) {
        let n = row.len();
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[n], &row).unwrap());
        let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
        let xs = tape.constant(Tensor::from_f64(&[n], &shifted).unwrap());
        let y = tape.softmax(x).unwrap();
        let ys = tape.softmax(xs).unwrap();
        let total: f64 = tape.value(y).data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6);
        prop_assert!(tape.value(y).data().iter().all(|&p| p >= 0.0));
        for (a, b) in tape.value(y).data().iter().zip(tape.value(ys).data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn conv_deconv_adjoint_holds(seed in 0u64..1000, w in 1usize..7, stride in 1usize..4, t in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, &[2, 2, t * stride]);
        let b = rand_tensor(&mut rng, &[2, 3, t]);
        let k = rand_tensor(&mut rng, &[3, 2, w]);
        let mut tape = Tape::<f64>::new();
        let (av, bv, kv) = (tape.constant(a.clone()), tape.constant(b.clone()), tape.constant(k));
        let z3 = tape.constant(Tensor::zeros(&[3]));
        let z2 = tape.constant(Tensor::zeros(&[2]));
        let ca = tape.conv1d(av, kv, z3, stride).unwrap();
        let db = tape.deconv1d(bv, kv, z2, stride).unwrap();
        prop_assert!((dot(tape.value(ca).data(), b.data()) - dot(a.data(), tape.value(db).data())).abs() < 1e-10);
    }
}
