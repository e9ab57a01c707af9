//! `symse` subcommands. [`run`] maps outcomes to exit codes:
//! 0 success, 1 usage or config error, 2 data or format error, 3 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use symse_core::config::RunConfig;
use symse_core::dsp::{read_wav, write_wav};
use symse_core::eval::{emit_plots, js_matrix, segmental_snr, stoi_with, token_histograms, write_scores, LabeledTokens, ScoreRow, StoiConfig};
use symse_core::par;
use symse_core::pipeline::{
    build_dataset, enhance_utterance, epoch_log_csv, mix_split, step_log_csv, synth_corpus, token_sequences, train, Checkpoint,
    DatasetConfig, Manifest, MixConfig, PhonemeFolding, Split, SynthConfig, TrainedModel,
};
use symse_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "symse", version, about = "Speech enhancement with a vector-quantized symbolic encoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct ConfigArgs {
    /// Sectioned `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set vq.book_size=16`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> symse_core::Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mix manifest entries with noise and write noisy/clean WAV pairs plus mixtures.tsv.
    Mix {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated SNR levels in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        snr: Vec<f64>,
        /// train, valid, test or all.
        #[arg(long, default_value = "test")]
        split: String,
        /// Write every utterance at every SNR instead of one sampled SNR.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model; writes the checkpoint, logs and the resolved config.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Enhance a WAV file or every WAV in a directory.
    Enhance {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score degraded WAVs against clean WAVs with matching file names.
    Eval {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        degraded: PathBuf,
        /// Unprocessed noisy WAVs, for the *_noisy columns.
        #[arg(long)]
        noisy: Option<PathBuf>,
        /// mixtures.tsv written by `mix`, for the snr_db and noise columns.
        #[arg(long)]
        mixtures: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Token histograms per phoneme class and their divergence matrix.
    Interpret {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
        snr: Vec<f64>,
        /// Alternative `source target` phoneme folding table.
        #[arg(long)]
        folding: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Book size, usage perplexity and collapsed tokens of a checkpoint.
    InspectBook {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Generate the synthetic corpus and its manifest.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        /// Training utterances.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Validation utterances (default: max(n / 10, 1)).
        #[arg(long)]
        valid: Option<usize>,
        /// Test utterances (default: max(n / 10, 1)).
        #[arg(long)]
        test: Option<usize>,
        #[arg(long, default_value_t = 6)]
        noises: usize,
        /// Phone classes to draw from.
        #[arg(long, default_value_t = symse_core::pipeline::synth::MAX_CLASSES)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Runs one subcommand; `args` excludes the program name.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("symse")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config { .. }) => EXIT_USAGE,
        Some(Error::NonFinite(_)) => EXIT_NUMERIC,
        Some(_) => EXIT_DATA,
        None if e.chain().any(|c| c.is::<std::io::Error>()) => EXIT_DATA,
        None => EXIT_USAGE,
    }
}

fn splits(name: &str) -> anyhow::Result<Vec<Split>> {
    if name == "all" {
        return Ok(vec![Split::Train, Split::Valid, Split::Test]);
    }
    name.parse::<Split>().map(|s| vec![s]).map_err(|_| anyhow!("--split must be train, valid, test or all, got `{name}`"))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `*.wav` files in `dir`, sorted by name.
fn wav_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Mix {
            manifest,
            out,
            snr,
            split,
            exhaustive,
            seed,
        } => mix(&manifest, &out, snr, &split, exhaustive, seed),
        Command::Train { manifest, out, config } => train_cmd(&manifest, &out, &config),
        Command::Enhance { ckpt, input, out } => enhance(&ckpt, &input, &out),
        Command::Eval {
            clean,
            degraded,
            noisy,
            mixtures,
            out,
            config,
        } => eval(&clean, &degraded, noisy.as_deref(), mixtures.as_deref(), &out, &config),
        Command::Interpret {
            ckpt,
            manifest,
            out,
            split,
            snr,
            folding,
            seed,
        } => interpret(&ckpt, &manifest, &out, &split, snr, folding.as_deref(), seed),
        Command::InspectBook { ckpt } => inspect_book(&ckpt),
        Command::SynthCorpus {
            out,
            n,
            valid,
            test,
            noises,
            classes,
            seed,
        } => {
            let held_out = (n / 10).max(1);
            let cfg = SynthConfig {
                n_train: n,
                n_valid: valid.unwrap_or(held_out),
                n_test: test.unwrap_or(held_out),
                n_noise: noises,
                classes,
                seed,
                ..SynthConfig::default()
            };
            let path = synth_corpus(&out, &cfg)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn mix(manifest: &Path, out: &Path, snr: Vec<f64>, split: &str, exhaustive: bool, seed: u64) -> anyhow::Result<()> {
    let manifest = Manifest::load(manifest)?;
    let cfg = MixConfig {
        snr_levels: snr,
        exhaustive,
    };
    create_dir(&out.join("clean"))?;
    create_dir(&out.join("noisy"))?;
    let mut tsv = String::from("split\tclean\tnoisy\tsnr_db\tmeasured_snr_db\tnoise\tlabels\n");
    for s in splits(split)? {
        if manifest.split(s).next().is_none() {
            continue;
        }
        for m in mix_split(&manifest, s, &cfg, seed)? {
            let name = format!("{}.wav", m.file_stem());
            let (clean, noisy) = (out.join("clean").join(&name), out.join("noisy").join(&name));
            write_wav(&clean, &m.clean)?;
            write_wav(&noisy, &m.noisy)?;
            let labels = manifest
                .split(s)
                .find(|e| e.clean.file_stem().is_some_and(|f| f.to_string_lossy() == m.utterance))
                .and_then(|e| e.labels.as_ref())
                .map_or("-".to_string(), |p| p.display().to_string());
            let _ = writeln!(
                tsv,
                "{}\tclean/{name}\tnoisy/{name}\t{}\t{}\t{}\t{}",
                s,
                m.snr_db,
                m.measured_snr(),
                m.noise,
                labels
            );
        }
    }
    write_text(&out.join("mixtures.tsv"), &tsv)?;
    println!("wrote {}", out.join("mixtures.tsv").display());
    Ok(())
}

fn train_cmd(manifest: &Path, out: &Path, args: &ConfigArgs) -> anyhow::Result<()> {
    let cfg = args.resolve()?;
    let manifest = Manifest::load(manifest)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(&sibling(out, ".config"), &cfg.to_text())?;
    let folding = PhonemeFolding::timit();
    let data = |split, mix: &MixConfig, seed| {
        build_dataset(
            &manifest,
            split,
            &DatasetConfig {
                mix: mix.clone(),
                features: cfg.train.features.clone(),
                seed,
            },
            &folding,
        )
    };
    let train_set = data(Split::Train, &cfg.train.train_mix, cfg.train.seed).context("building the training set")?;
    let valid_set = data(Split::Valid, &cfg.train.valid_mix, cfg.train.seed.wrapping_add(1)).context("building the validation set")?;
    log::info!("{} training and {} validation segments", train_set.len(), valid_set.len());
    let outcome = train(&train_set, &valid_set, &cfg.train, &cfg.model)?;
    outcome.checkpoint.save(out)?;
    write_text(&sibling(out, ".log.csv"), &epoch_log_csv(&outcome.epochs))?;
    write_text(&sibling(out, ".steps.csv"), &step_log_csv(&outcome.steps))?;
    println!(
        "best epoch {} (valid mse {:.5}) after {} epochs; wrote {}",
        outcome.checkpoint.epoch,
        outcome.checkpoint.best_valid_loss.unwrap_or(f64::NAN),
        outcome.epochs.len(),
        out.display()
    );
    Ok(())
}

fn enhance(ckpt: &Path, input: &Path, out: &Path) -> anyhow::Result<()> {
    let model = TrainedModel::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let files = if input.is_dir() { wav_files(input)? } else { vec![input.to_path_buf()] };
    if files.is_empty() {
        bail!(Error::Format(format!("no WAV files in {}", input.display())));
    }
    create_dir(out)?;
    let results = par::map(&files, |f| -> symse_core::Result<PathBuf> {
        let noisy = read_wav(f)?;
        let enhanced = enhance_utterance(&noisy, &model, &model.features)?;
        let dest = out.join(f.file_name().expect("file path"));
        write_wav(&dest, &enhanced)?;
        Ok(dest)
    });
    for r in results {
        println!("wrote {}", r?.display());
    }
    Ok(())
}

/// `noisy file name -> (snr_db, noise)` from a mixtures.tsv.
fn mixture_info(path: &Path) -> anyhow::Result<BTreeMap<String, (f64, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            bail!(Error::Format(format!("{} line {}: expected 7 fields", path.display(), no + 1)));
        }
        let snr = f[3]
            .parse()
            .map_err(|_| Error::Format(format!("{} line {}: bad SNR `{}`", path.display(), no + 1, f[3])))?;
        let name = Path::new(f[2]).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        map.insert(name, (snr, f[5].to_string()));
    }
    Ok(map)
}

fn eval(
    clean: &Path,
    degraded: &Path,
    noisy: Option<&Path>,
    mixtures: Option<&Path>,
    out: &Path,
    args: &ConfigArgs,
) -> anyhow::Result<()> {
    let stoi_cfg: StoiConfig = args.resolve()?.stoi;
    let info = mixtures.map(mixture_info).transpose()?.unwrap_or_default();
    let files = wav_files(clean)?;
    if files.is_empty() {
        bail!(Error::Format(format!("no WAV files in {}", clean.display())));
    }
    let rows = par::map(&files, |f| -> symse_core::Result<ScoreRow> {
        let name = f.file_name().expect("file path");
        let c = read_wav(f)?;
        let d = read_wav(degraded.join(name))?;
        let n = noisy.map(|dir| read_wav(dir.join(name))).transpose()?;
        let key = name.to_string_lossy().into_owned();
        Ok(ScoreRow {
            utterance: f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            snr_db: info.get(&key).map(|i| i.0),
            noise: info.get(&key).map(|i| i.1.clone()),
            stoi_noisy: n.as_ref().map(|n| stoi_with(&c, n, &stoi_cfg)).transpose()?,
            stoi_enhanced: stoi_with(&c, &d, &stoi_cfg)?,
            ssnr_noisy: n.as_ref().map(|n| segmental_snr(&c, n)).transpose()?,
            ssnr_enhanced: segmental_snr(&c, &d)?,
        })
    });
    let rows = rows.into_iter().collect::<symse_core::Result<Vec<_>>>()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_scores(out, &rows)?;
    let mean = |f: &dyn Fn(&ScoreRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    println!(
        "{} files: mean STOI {:.4}, mean SSNR {:.2} dB; wrote {}",
        rows.len(),
        mean(&|r| r.stoi_enhanced),
        mean(&|r| r.ssnr_enhanced),
        out.display()
    );
    Ok(())
}

fn interpret(
    ckpt: &Path,
    manifest: &Path,
    out: &Path,
    split: &str,
    snr: Vec<f64>,
    folding: Option<&Path>,
    seed: u64,
) -> anyhow::Result<()> {
    let model = TrainedModel::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let book_size = model.model.vq.book_size;
    let manifest = Manifest::load(manifest)?;
    let folding = match folding {
        Some(p) => PhonemeFolding::load(p)?,
        None => PhonemeFolding::timit(),
    };
    let cfg = MixConfig {
        snr_levels: snr,
        exhaustive: true,
    };
    let mut sequences = Vec::new();
    for s in splits(split)? {
        if manifest.split(s).next().is_none() {
            continue;
        }
        let mixtures = mix_split(&manifest, s, &cfg, seed)?;
        sequences.extend(token_sequences(&model, &mixtures, &model.features, &folding)?);
    }
    let labeled: Vec<LabeledTokens> = sequences
        .iter()
        .map(|s| LabeledTokens {
            utterance: &s.utterance,
            tokens: &s.tokens,
            labels: &s.labels,
        })
        .collect();
    let histograms = token_histograms(&labeled, book_size)?;
    let matrix = js_matrix(&histograms)?;
    let names: Vec<String> = histograms.iter().map(|h| folding.class_name(h.class).to_string()).collect();
    let written = emit_plots(&histograms, &matrix, &names, out)?;
    println!("{} classes from {} utterances; wrote {} files to {}", names.len(), sequences.len(), written.len(), out.display());
    Ok(())
}

fn inspect_book(ckpt: &Path) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(ckpt)?;
    let Some(book) = ckpt.book.as_ref() else {
        bail!(Error::Format(format!("the {} checkpoint has no symbolic book", ckpt.model.variant.name())));
    };
    let frames: u64 = book.usage().iter().sum();
    let report = book.collapse_report(frames);
    println!("book size: {}", book.size());
    println!("dimension: {}", book.dim());
    println!("frames counted: {frames}");
    println!("perplexity: {:.4}", report.perplexity);
    println!(
        "collapsed tokens: {} of {} ({:.1}%)",
        report.collapsed.len(),
        book.size(),
        100.0 * report.collapsed_fraction()
    );
    if !report.collapsed.is_empty() {
        println!("collapsed ids: {}", report.collapsed.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
