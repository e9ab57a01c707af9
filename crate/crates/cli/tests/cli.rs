use std::path::Path;

use symse_cli::run;

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn synth(out: &Path, seed: &str) -> i32 {
    run(["synth-corpus", "--out", &s(out), "--n", "6", "--noises", "2", "--classes", "3", "--seed", seed])
}

#[test]
fn missing_arguments_exit_with_usage_code() {
    assert_eq!(run(["train"]), 1);
    assert_eq!(run(["no-such-command"]), 1);
    assert_eq!(run(["--help"]), 0);
}

#[test]
fn bad_config_value_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    let code = run([
        "train",
        "--manifest",
        &s(&dir.path().join("manifest.tsv")),
        "--out",
        &s(&dir.path().join("m.ckpt")),
        "--set",
        "vq.book_size=-1",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn missing_input_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(["inspect-book", "--ckpt", &s(&dir.path().join("absent.ckpt"))]), 2);
    std::fs::write(dir.path().join("junk.ckpt"), b"garbage").unwrap();
    assert_eq!(run(["inspect-book", "--ckpt", &s(&dir.path().join("junk.ckpt"))]), 2);
}

#[test]
fn synth_corpus_is_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(synth(a.path(), "4"), 0);
    assert_eq!(synth(b.path(), "4"), 0);
    for rel in ["manifest.tsv", "clean/utt_0000.wav", "labels/utt_0000.phn", "noise/noise_000_white.wav"] {
        assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn eval_of_identical_directories_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2");
    let clean = dir.path().join("clean");
    let out = dir.path().join("scores.csv");
    assert_eq!(run(["eval", "--clean", &s(&clean), "--degraded", &s(&clean), "--out", &s(&out)]), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "utterance,snr_db,noise,stoi_noisy,stoi_enhanced,ssnr_noisy,ssnr_enhanced");
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let stoi: f64 = f[4].parse().unwrap();
        assert!((stoi - 1.0).abs() < 1e-9, "{line}");
        assert_eq!(f[6], "35");
    }
}

#[test]
fn full_workflow_on_a_tiny_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(synth(root, "3"), 0);
    let manifest = root.join("manifest.tsv");

    let mixed = root.join("mixed");
    assert_eq!(run(["mix", "--manifest", &s(&manifest), "--out", &s(&mixed), "--snr", "-5,5", "--exhaustive"]), 0);
    let listing = std::fs::read_to_string(mixed.join("mixtures.tsv")).unwrap();
    assert!(listing.starts_with("split\tclean\tnoisy\tsnr_db\tmeasured_snr_db\tnoise\tlabels"));
    assert!(listing.lines().count() > 1);

    let ckpt = root.join("run").join("m.ckpt");
    let code = run([
        "train",
        "--manifest",
        &s(&manifest),
        "--out",
        &s(&ckpt),
        "--set",
        "model.preset=miniature",
        "--set",
        "train.max_epochs=2",
        "--set",
        "train.batch_size=8",
    ]);
    assert_eq!(code, 0);
    for suffix in ["m.ckpt", "m.config", "m.log.csv", "m.steps.csv"] {
        assert!(root.join("run").join(suffix).exists(), "{suffix}");
    }

    let enhanced = root.join("enhanced");
    assert_eq!(run(["enhance", "--ckpt", &s(&ckpt), "--in", &s(&mixed.join("noisy")), "--out", &s(&enhanced)]), 0);
    let scores = root.join("scores.csv");
    let code = run([
        "eval",
        "--clean",
        &s(&mixed.join("clean")),
        "--degraded",
        &s(&enhanced),
        "--noisy",
        &s(&mixed.join("noisy")),
        "--mixtures",
        &s(&mixed.join("mixtures.tsv")),
        "--out",
        &s(&scores),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&scores).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[1].is_empty() && !row[2].is_empty() && !row[3].is_empty());

    let interp = root.join("interp");
    let code = run(["interpret", "--ckpt", &s(&ckpt), "--manifest", &s(&manifest), "--out", &s(&interp), "--split", "all"]);
    assert_eq!(code, 0);
    assert!(interp.join("jsd_matrix.csv").exists());
    assert!(interp.join("jsd_heatmap.svg").exists());

    assert_eq!(run(["inspect-book", "--ckpt", &s(&ckpt)]), 0);
}
