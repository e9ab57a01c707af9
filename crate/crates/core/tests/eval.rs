use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symse_core::dsp::Waveform;
use symse_core::eval::*;

/// Amplitude-modulated tones with a silent gap, at 10 kHz.
fn tones() -> Vec<f64> {
    let fs = 10_000.0;
    let mut x: Vec<f64> = (0..30_000)
        .map(|i| {
            let t = i as f64 / fs;
            let am = 0.5 + 0.5 * (2.0 * PI * 3.0 * t).sin();
            am * ((2.0 * PI * 440.0 * t).sin() + 0.5 * (2.0 * PI * 1230.0 * t).sin() + 0.3 * (2.0 * PI * 2500.0 * t).sin())
        })
        .collect();
    x[12_000..15_000].iter_mut().for_each(|v| *v = 0.0);
    x
}

/// Uniform noise in [-0.5, 0.5) from a 32-bit LCG.
fn lcg_noise(n: usize) -> Vec<f64> {
    let mut x: u64 = 12345;
    (0..n)
        .map(|_| {
            x = (1_664_525 * x + 1_013_904_223) % (1 << 32);
            x as f64 / 4_294_967_296.0 - 0.5
        })
        .collect()
}

fn wave(x: Vec<f64>, rate: u32) -> Waveform {
    Waveform::new(x, rate).unwrap()
}

#[test]
fn stoi_matches_reference_implementation() {
    // Values from pystoi 0.4 on the same signals.
    let clean = tones();
    let noise = lcg_noise(clean.len());
    for (a, expected) in [(0.3, 0.4712654558845566), (1.0, 0.42123726513323134), (3.0, 0.35871332936481354)] {
        let degraded: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + a * n).collect();
        let got = stoi(&wave(clean.clone(), 10_000), &wave(degraded, 10_000)).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-6);
    }
}

fn speechlike(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..12 {
        let f0 = rng.gen_range(100.0..200.0);
        let f1 = rng.gen_range(300.0..900.0);
        let n = rng.gen_range(1500..4000);
        for i in 0..n {
            let t = i as f64 / 16_000.0;
            let env = (PI * i as f64 / n as f64).sin();
            out.push(env * ((2.0 * PI * f0 * t).sin() + 0.6 * (2.0 * PI * f1 * t).sin()) * 0.1);
        }
    }
    out
}

#[test]
fn stoi_of_identical_signals_is_one() {
    let x = wave(speechlike(1), 16_000);
    assert_abs_diff_eq!(stoi(&x, &x).unwrap(), 1.0, epsilon = 1e-9);
}

#[test]
fn stoi_ignores_degraded_gain() {
    let clean = speechlike(2);
    let noise = lcg_noise(clean.len());
    let degraded: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + 0.05 * n).collect();
    let doubled: Vec<f64> = degraded.iter().map(|v| 2.0 * v).collect();
    let c = wave(clean, 16_000);
    let a = stoi(&c, &wave(degraded, 16_000)).unwrap();
    let b = stoi(&c, &wave(doubled, 16_000)).unwrap();
    assert_abs_diff_eq!(a, b, epsilon = 1e-9);
}

#[test]
fn stoi_drops_with_noise_level() {
    let clean = speechlike(3);
    let p = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let noise = lcg_noise(clean.len());
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let at = |snr: f64| {
        let g = (p / pn / 10f64.powf(snr / 10.0)).sqrt();
        let d: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + g * n).collect();
        stoi(&wave(clean.clone(), 16_000), &wave(d, 16_000)).unwrap()
    };
    assert!(at(20.0) > at(0.0));
}

#[test]
fn stoi_rejects_short_input() {
    let x = wave(vec![0.1; 2000], 16_000);
    assert!(stoi(&x, &x).is_err());
}

#[test]
fn resampling_preserves_a_low_tone() {
    let x: Vec<f64> = (0..16_000).map(|i| (2.0 * PI * 300.0 * i as f64 / 16_000.0).sin()).collect();
    let y = resample(&x, 16_000, 10_000);
    assert_eq!(y.len(), 10_000);
    for (i, v) in y.iter().enumerate().skip(200).take(9_600) {
        assert_abs_diff_eq!(*v, (2.0 * PI * 300.0 * i as f64 / 10_000.0).sin(), epsilon = 1e-3);
    }
}

#[test]
fn ssnr_of_identical_signals_is_the_ceiling() {
    let x = wave(speechlike(4), 16_000);
    assert_eq!(segmental_snr(&x, &x).unwrap(), SSNR_MAX);
}

#[test]
fn ssnr_with_equal_power_error_is_zero() {
    // Per-frame error equal to the signal gives 0 dB in every frame.
    let clean = speechlike(5);
    let enhanced: Vec<f64> = clean.iter().map(|v| 2.0 * v).collect();
    let s = segmental_snr(&wave(clean, 16_000), &wave(enhanced, 16_000)).unwrap();
    assert_abs_diff_eq!(s, 0.0, epsilon = 1e-9);
}

#[test]
fn ssnr_is_floored() {
    let clean = speechlike(6);
    let enhanced: Vec<f64> = clean.iter().map(|v| -100.0 * v).collect();
    assert_eq!(segmental_snr(&wave(clean, 16_000), &wave(enhanced, 16_000)).unwrap(), SSNR_MIN);
}

#[test]
fn ssnr_rejects_silence_and_length_mismatch() {
    let z = wave(vec![0.0; 4096], 16_000);
    assert!(segmental_snr(&z, &z).is_err());
    let a = wave(vec![0.1; 4096], 16_000);
    let b = wave(vec![0.1; 4000], 16_000);
    assert!(segmental_snr(&a, &b).is_err());
}

#[test]
fn js_matches_reference_values() {
    // scipy.spatial.distance.jensenshannon(p, q, base=2) ** 2
    let p = [0.1, 0.2, 0.3, 0.4];
    let q = [0.4, 0.3, 0.2, 0.1];
    let r = [0.5, 0.5, 0.0, 0.0];
    assert_abs_diff_eq!(js_divergence(&p, &q), 0.15356065532898464, epsilon = 1e-12);
    assert_abs_diff_eq!(js_divergence(&p, &r), 0.5029010745071728, epsilon = 1e-12);
    assert_abs_diff_eq!(js_divergence(&[1.0, 0.0], &[0.5, 0.5]), 0.3112781244591328, epsilon = 1e-12);
}

#[test]
fn js_of_disjoint_one_hots_is_exactly_one() {
    assert_eq!(js_divergence(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]), 1.0);
}

#[test]
fn js_matrix_is_symmetric_with_zero_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hs: Vec<PhonemeHistogram> = (0..5)
        .map(|c| PhonemeHistogram::from_counts(c, (0..8).map(|_| rng.gen_range(0..20)).collect()))
        .collect();
    let m = js_matrix(&hs).unwrap();
    for i in 0..5 {
        assert_eq!(m.get(i, i), 0.0);
        for j in 0..5 {
            assert_eq!(m.get(i, j), m.get(j, i));
            assert!((0.0..=1.0).contains(&m.get(i, j)));
        }
    }
    assert!(js_matrix(&hs[..1]).is_err());
}

#[test]
fn histograms_normalize_per_class() {
    let tokens = [0, 0, 1, 2, 2, 2];
    let labels = [5, 5, 5, 1, 1, 1];
    let hs = token_histograms(
        &[LabeledTokens {
            utterance: "u",
            tokens: &tokens,
            labels: &labels,
        }],
        4,
    )
    .unwrap();
    assert_eq!(hs.iter().map(|h| h.class).collect::<Vec<_>>(), vec![1, 5]);
    assert_eq!(hs[0].pdf, vec![0.0, 0.0, 1.0, 0.0]);
    assert_eq!(hs[1].counts, vec![2, 1, 0, 0]);
    for h in &hs {
        assert_abs_diff_eq!(h.pdf.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn histograms_reject_misaligned_labels() {
    let err = token_histograms(
        &[LabeledTokens {
            utterance: "utt_7",
            tokens: &[0, 1],
            labels: &[0],
        }],
        2,
    )
    .unwrap_err();
    assert!(err.to_string().contains("utt_7"));
}

#[test]
fn separated_clusters_give_near_disjoint_histograms() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let labels: Vec<usize> = (0..400).map(|i| i % 2).collect();
    let tokens: Vec<usize> = labels.iter().map(|&l| if rng.gen_bool(0.97) { l * 4 + rng.gen_range(0..4) } else { rng.gen_range(0..8) }).collect();
    let hs = token_histograms(
        &[LabeledTokens {
            utterance: "u",
            tokens: &tokens,
            labels: &labels,
        }],
        8,
    )
    .unwrap();
    assert!(js_matrix(&hs).unwrap().get(0, 1) > 0.8);
}

#[test]
fn plots_are_well_formed_svg() {
    let hs = vec![
        PhonemeHistogram::from_counts(0, vec![3, 1, 0]),
        PhonemeHistogram::from_counts(1, vec![0, 1, 3]),
    ];
    let m = js_matrix(&hs).unwrap();
    let names = vec!["aa".to_string(), "s".to_string()];
    roxmltree::Document::parse(&heatmap_svg(&m, &names)).unwrap();
    roxmltree::Document::parse(&histogram_svg(&hs[0], "aa")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plots(&hs, &m, &names, dir.path()).unwrap();
    assert!(files.iter().all(|f| f.exists()));
    let csv = std::fs::read_to_string(dir.path().join("jsd_matrix.csv")).unwrap();
    assert!(csv.lines().count() >= 3);
}

#[test]
fn score_csv_leaves_unknowns_empty() {
    let rows = [ScoreRow {
        utterance: "a".into(),
        stoi_enhanced: 0.5,
        ssnr_enhanced: 1.0,
        ..Default::default()
    }];
    assert_eq!(scores_csv(&rows).lines().nth(1).unwrap(), "a,,,,0.5,,1");
}
