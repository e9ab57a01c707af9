use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symse_core::model::*;
use symse_core::tensor::{grad_check_params, BoundParams, ParamStore, Tape, Tensor};
use symse_core::vq::{SymbolicBook, VqConfig};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn input(cfg: &ModelConfig, b: usize, rng: &mut ChaCha8Rng) -> ModelInput<f64> {
    let t = cfg.segment_len;
    ModelInput {
        noisy: rand_tensor(rng, &[b, cfg.n_bins, t]),
        mfcc: Some(rand_tensor(rng, &[b, cfg.mfcc_dim, t])),
        labels: Some((0..b * t).map(|_| rng.gen_range(0..cfg.n_phonemes)).collect()),
    }
}

struct Setup {
    cfg: ModelConfig,
    params: ParamStore<f64>,
    book: SymbolicBook<f64>,
    rng: ChaCha8Rng,
}

/// Parameters with small random biases so bias gradients and kinks are exercised.
fn setup(cfg: ModelConfig, seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params::<f64, _>(&cfg, &mut rng).unwrap();
    for (name, t) in params.iter_mut() {
        if name.ends_with(".b") || name.ends_with(".bq") || name.ends_with(".bk") || name.ends_with(".bv") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let book = SymbolicBook::new(cfg.vq.clone(), &mut rng).unwrap();
    Setup { cfg, params, book, rng }
}

fn forward(s: &Setup, tape: &mut Tape<f64>, p: &BoundParams, inp: &ModelInput<f64>, training: bool) -> Forward {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    model_forward(tape, p, &s.cfg, inp, Some(Quantizer::Book(&s.book)), training, &mut rng).unwrap()
}

#[test]
fn default_encoder_strides() {
    let mut s = setup(ModelConfig::default(), 1);
    let mut tape = Tape::new();
    let p = s.params.bind(&mut tape);
    let x = tape.constant(rand_tensor(&mut s.rng, &[1, 257, 64]));
    let (bottleneck, skips) = unet_encode(&mut tape, &p, &s.cfg, x).unwrap();
    let lens: Vec<usize> = skips.iter().map(|&v| tape.shape(v)[2]).collect();
    assert_eq!(lens, vec![32, 16, 8, 4]);
    assert_eq!(tape.shape(bottleneck), &[1, 256, 4]);
}

#[test]
fn zero_input_with_zero_biases_gives_zero_bottleneck() {
    let cfg = ModelConfig::reduced(Variant::Unet);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = init_params::<f64, _>(&cfg, &mut rng).unwrap();
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let x = tape.constant(Tensor::zeros(&[2, 257, 64]));
    let (bottleneck, _) = unet_encode(&mut tape, &p, &cfg, x).unwrap();
    assert!(tape.value(bottleneck).data().iter().all(|&v| v == 0.0));
}

#[test]
fn every_variant_keeps_the_shape_law() {
    for variant in Variant::ALL {
        for cfg in [ModelConfig { variant, ..ModelConfig::default() }, ModelConfig::reduced(variant), ModelConfig::miniature(variant)] {
            let mut s = setup(cfg, 3);
            let inp = input(&s.cfg, 1, &mut s.rng);
            let mut tape = Tape::new();
            let p = s.params.bind(&mut tape);
            let f = forward(&s, &mut tape, &p, &inp, false);
            assert_eq!(tape.shape(f.enhanced), &[1, s.cfg.n_bins, s.cfg.segment_len], "{:?}", variant);
            assert_eq!(f.mfcc_pred.is_some(), variant == Variant::UnetMol);
        }
    }
}

#[test]
fn decode_layer_doubles_length() {
    let mut s = setup(ModelConfig::miniature(Variant::Proposed), 4);
    let inp = input(&s.cfg, 1, &mut s.rng);
    let mut tape = Tape::new();
    let p = s.params.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sym = symbolic_encoder_forward(&mut tape, &p, &s.cfg, &inp, Some(Quantizer::Book(&s.book)), false, &mut rng).unwrap();
    let prev = tape.constant(rand_tensor(&mut s.rng, &[1, 8, 4]));
    let skip = tape.constant(rand_tensor(&mut s.rng, &[1, 8, 4]));
    let d = decode_layer(&mut tape, &p, &s.cfg, 1, prev, skip, Some(sym.sequence)).unwrap();
    assert_eq!(tape.shape(d), &[1, 8, 8]);
    let bad_skip = tape.constant(rand_tensor(&mut s.rng, &[1, 8, 2]));
    assert!(decode_layer(&mut tape, &p, &s.cfg, 1, prev, bad_skip, Some(sym.sequence)).is_err());
}

#[test]
fn symbolic_encoder_shapes_determinism_and_membership() {
    let mut s = setup(ModelConfig::default(), 5);
    let inp = input(&s.cfg, 1, &mut s.rng);
    let run = || {
        let mut tape = Tape::new();
        let p = s.params.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sym = symbolic_encoder_forward(&mut tape, &p, &s.cfg, &inp, Some(Quantizer::Book(&s.book)), false, &mut rng).unwrap();
        assert_eq!(tape.shape(sym.sequence), &[1, 64, 64]);
        let q = tape.value(sym.quantized.unwrap()).clone();
        (tape.value(sym.sequence).clone(), q, sym.indices)
    };
    let (a, q, idx) = run();
    assert_eq!(a, run().0);
    for (r, row) in q.data().chunks(s.cfg.vq.dim).enumerate() {
        let member = (0..s.book.size()).any(|j| s.book.prototype(j) == row);
        assert!(member, "row {} is not a prototype", r);
        assert_eq!(row, s.book.prototype(idx[r]));
    }
}

#[test]
fn every_parameter_is_reachable() {
    for variant in Variant::ALL {
        let mut s = setup(ModelConfig::miniature(variant), 6);
        let inp = input(&s.cfg, 2, &mut s.rng);
        let clean = rand_tensor(&mut s.rng, &[2, s.cfg.n_bins, s.cfg.segment_len]);
        let clean_mfcc = rand_tensor(&mut s.rng, &[2, s.cfg.mfcc_dim, s.cfg.segment_len]);
        let mut tape = Tape::new();
        let p = s.params.bind(&mut tape);
        let f = forward(&s, &mut tape, &p, &inp, false);
        let loss = total_loss(&mut tape, &f, &s.cfg, &clean, Some(&clean_mfcc)).unwrap();
        let g = tape.backward(loss.total).unwrap();
        for (name, grad) in p.gradients(&g) {
            assert!(grad.data().iter().any(|&v| v != 0.0), "{:?}: `{}` receives no gradient", variant, name);
        }
    }
}

#[test]
fn straight_through_is_exact_in_the_model() {
    let mut s = setup(ModelConfig::miniature(Variant::Proposed), 7);
    let inp = input(&s.cfg, 3, &mut s.rng);
    let clean = rand_tensor(&mut s.rng, &[3, s.cfg.n_bins, s.cfg.segment_len]);
    let mut tape = Tape::new();
    let p = s.params.bind(&mut tape);
    let f = forward(&s, &mut tape, &p, &inp, true);
    let target = tape.constant(clean);
    let loss = tape.mse(f.enhanced, target).unwrap();
    let g = tape.backward(loss).unwrap();
    let sym = f.symbolic.as_ref().unwrap();
    let (gh, gq) = (g.wrt(sym.pre_quant.unwrap()), g.wrt(sym.quantized.unwrap()));
    assert!(gq.data().iter().any(|&v| v != 0.0));
    assert_eq!(gh, gq);
}

#[test]
fn unet_ignores_mfcc() {
    let mut s = setup(ModelConfig::miniature(Variant::Unet), 8);
    let inp = input(&s.cfg, 1, &mut s.rng);
    let mut other = inp.clone();
    other.mfcc = Some(rand_tensor(&mut s.rng, &[1, s.cfg.mfcc_dim, s.cfg.segment_len]));
    let out = |i: &ModelInput<f64>| {
        let mut tape = Tape::new();
        let p = s.params.bind(&mut tape);
        let f = forward(&s, &mut tape, &p, i, false);
        tape.value(f.enhanced).clone()
    };
    assert_eq!(out(&inp), out(&other));
}

#[test]
fn proposed_output_depends_on_the_book() {
    let mut s = setup(ModelConfig::miniature(Variant::Proposed), 9);
    let inp = input(&s.cfg, 1, &mut s.rng);
    let out = |book: &SymbolicBook<f64>| {
        let mut tape = Tape::new();
        let p = s.params.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = model_forward(&mut tape, &p, &s.cfg, &inp, Some(Quantizer::Book(book)), false, &mut rng).unwrap();
        tape.value(f.enhanced).clone()
    };
    let base = out(&s.book);
    // Reordering rows cannot matter: the forward pass only sees prototype values.
    let (m, d) = (s.book.size(), s.book.dim());
    let mut rows: Vec<f64> = Vec::new();
    for j in (0..m).rev() {
        rows.extend_from_slice(s.book.prototype(j));
    }
    let reversed = SymbolicBook::from_parts(s.cfg.vq.clone(), rows, vec![0.0; m], vec![0.0; m * d], vec![0; m]).unwrap();
    assert_eq!(out(&reversed), base);
    let fresh = SymbolicBook::new(s.cfg.vq.clone(), &mut s.rng).unwrap();
    assert_ne!(out(&fresh), base);
}

#[test]
fn inference_is_bitwise_repeatable() {
    let mut s = setup(ModelConfig::reduced(Variant::Proposed), 10);
    let inp = input(&s.cfg, 2, &mut s.rng);
    let out = || {
        let mut tape = Tape::new();
        let p = s.params.bind(&mut tape);
        let f = forward(&s, &mut tape, &p, &inp, false);
        tape.value(f.enhanced).clone()
    };
    assert_eq!(out(), out());
}

#[test]
fn missing_inputs_are_contract_errors() {
    let mut s = setup(ModelConfig::miniature(Variant::Oracle), 11);
    let mut inp = input(&s.cfg, 1, &mut s.rng);
    inp.labels = None;
    let mut tape = Tape::new();
    let p = s.params.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(model_forward(&mut tape, &p, &s.cfg, &inp, None, false, &mut rng).is_err());

    let s = setup(ModelConfig::miniature(Variant::Proposed), 12);
    let wrong = SymbolicBook::<f64>::new(VqConfig { dim: 5, ..s.cfg.vq.clone() }, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let inp = input(&s.cfg, 1, &mut ChaCha8Rng::seed_from_u64(2));
    let mut tape = Tape::new();
    let p = s.params.bind(&mut tape);
    assert!(model_forward(&mut tape, &p, &s.cfg, &inp, Some(Quantizer::Book(&wrong)), false, &mut rng).is_err());
}

#[test]
fn config_validation() {
    let mut cfg = ModelConfig::default();
    cfg.segment_len = 60;
    assert!(cfg.validate().is_err());
    let cfg = ModelConfig {
        dec_widths: vec![3],
        ..ModelConfig::default()
    };
    assert!(cfg.validate().is_err());
    assert_eq!(ModelConfig::reduced(Variant::Unet).dec_channels(0), 64);
    assert_eq!(ModelConfig::reduced(Variant::Unet).dec_channels(1), 32);
    assert_eq!(ModelConfig::reduced(Variant::Unet).dec_channels(2), 32);
}

#[test]
fn total_loss_examples() {
    let cfg = ModelConfig::miniature(Variant::Proposed);
    let clean = Tensor::from_fn(&[1, 3, 4], |i| i as f64 * 0.1);
    let mut tape = Tape::<f64>::new();
    let same = tape.constant(clean.clone());
    let shifted = tape.constant(Tensor::from_fn(&[1, 3, 4], |i| i as f64 * 0.1 + 1.0));
    let commit = tape.param(Tensor::scalar(0.0));
    let make = |enhanced, commitment| Forward {
        enhanced,
        symbolic: Some(Symbolic {
            sequence: enhanced,
            pre_quant: None,
            quantized: None,
            commitment: Some(commitment),
            indices: Vec::new(),
        }),
        mfcc_pred: None,
    };
    let l = total_loss(&mut tape, &make(same, commit), &cfg, &clean, None).unwrap();
    assert_eq!(tape.value(l.total).item(), 0.0);
    let l = total_loss(&mut tape, &make(shifted, commit), &cfg, &clean, None).unwrap();
    assert_abs_diff_eq!(tape.value(l.total).item(), 1.0, epsilon = 1e-12);
    let g = tape.backward(l.total).unwrap();
    assert_abs_diff_eq!(g.wrt(commit).item(), cfg.vq.commitment, epsilon = 1e-15);
}

/// Finite differences over every parameter of the miniature model. The
/// quantizer is frozen at the base point so the checked function is the
/// straight-through surrogate whose derivative the tape computes.
fn full_model_check(variant: Variant, seed: u64) -> f64 {
    let mut s = setup(ModelConfig::miniature(variant), seed);
    let inp = input(&s.cfg, 2, &mut s.rng);
    let clean = rand_tensor(&mut s.rng, &[2, s.cfg.n_bins, s.cfg.segment_len]);
    let clean_mfcc = rand_tensor(&mut s.rng, &[2, s.cfg.mfcc_dim, s.cfg.segment_len]);
    let frozen = {
        let mut tape = Tape::new();
        let p = s.params.bind(&mut tape);
        let f = forward(&s, &mut tape, &p, &inp, false);
        freeze_quantization(&tape, &f)
    };
    let report = grad_check_params(
        &s.params,
        |tape, p| {
            let q = match &frozen {
                Some((prototypes, offsets)) => Some(Quantizer::Frozen { prototypes, offsets }),
                None => None,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let f = model_forward(tape, p, &s.cfg, &inp, q, false, &mut rng)?;
            Ok(total_loss(tape, &f, &s.cfg, &clean, Some(&clean_mfcc))?.total)
        },
        1e-5,
    )
    .unwrap();
    assert!(report.checked == s.params.num_elements());
    report.max_rel_error
}

#[test]
fn miniature_model_passes_finite_differences() {
    for (i, variant) in Variant::ALL.into_iter().enumerate() {
        let err = full_model_check(variant, 20 + i as u64);
        assert!(err < 1e-4, "{:?}: max relative error {}", variant, err);
    }
}
