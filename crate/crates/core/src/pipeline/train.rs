use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::dataset::{make_batch, Batch, FeatureOptions, MixConfig, SegmentPair};
use crate::error::{ensure, Error, Result};
use crate::model::{init_params, model_forward, total_loss, ModelConfig, ModelInput, Quantizer};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape};
use crate::vq::SymbolicBook;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub train_mix: MixConfig,
    pub valid_mix: MixConfig,
    pub features: FeatureOptions,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub patience: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            train_mix: MixConfig {
                snr_levels: vec![20.0, 15.0, 10.0, 5.0, 0.0, -5.0],
                exhaustive: false,
            },
            valid_mix: MixConfig {
                snr_levels: vec![-4.0, 0.0, 4.0, 8.0],
                exhaustive: false,
            },
            features: FeatureOptions::default(),
            batch_size: 32,
            adam: AdamConfig::default(),
            max_epochs: 50,
            patience: 5,
            max_steps: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.batch_size >= 1, "batch size must be at least 1");
        ensure!(self.patience >= 1, "patience must be at least 1");
        ensure!(self.max_epochs >= 1, "max epochs must be at least 1");
        ensure!(self.adam.lr >= 0.0 && self.adam.lr.is_finite(), "learning rate must be finite and non-negative");
        ensure!(
            (0.0..1.0).contains(&self.adam.beta1) && (0.0..1.0).contains(&self.adam.beta2),
            "Adam betas must lie in [0, 1)"
        );
        self.train_mix.validate()?;
        self.valid_mix.validate()
    }
}

/// Loss terms of one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub total: f64,
    pub mse: f64,
    pub commitment: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_total: f64,
    pub train_mse: f64,
    pub train_commit: f64,
    pub valid_mse: f64,
    /// Perplexity of this epoch's token usage; `None` without a book.
    pub book_perplexity: Option<f64>,
}

pub struct TrainOutcome {
    /// State at the best validation epoch.
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochLog>,
    pub steps: Vec<StepLog>,
    pub stopped_early: bool,
}

/// Patience counter over strictly improving validation losses.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records a validation loss; returns whether it is a new best.
    pub fn observe(&mut self, loss: f64) -> bool {
        if self.best.map_or(true, |b| loss < b) {
            self.best = Some(loss);
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }
}

/// Parameters, book and optimizer of one training run.
pub struct Trainer {
    pub model: ModelConfig,
    pub features: FeatureOptions,
    pub params: ParamStore<f32>,
    pub book: Option<SymbolicBook<f32>>,
    pub adam: Adam<f32>,
    rng: ChaCha8Rng,
    steps: usize,
}

fn input_of(batch: &Batch<f32>) -> ModelInput<f32> {
    ModelInput {
        noisy: batch.noisy.clone(),
        mfcc: Some(batch.mfcc.clone()),
        labels: batch.labels.clone(),
    }
}

impl Trainer {
    pub fn new(model: &ModelConfig, features: &FeatureOptions, adam: AdamConfig, seed: u64) -> Result<Self> {
        model.validate()?;
        ensure!(
            features.segment_len == model.segment_len,
            "feature segments have {} frames but the model expects {}",
            features.segment_len,
            model.segment_len
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(model, &mut rng)?;
        let book = if model.variant.uses_book() {
            Some(SymbolicBook::new(model.vq.clone(), &mut rng)?)
        } else {
            None
        };
        Ok(Trainer {
            model: model.clone(),
            features: features.clone(),
            params,
            book,
            adam: Adam::new(adam),
            rng,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn warm_start(&mut self, input: &ModelInput<f32>) -> Result<()> {
        let Some(book) = self.book.as_mut().filter(|b| b.needs_warm_start()) else {
            return Ok(());
        };
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let fwd = model_forward(&mut tape, &p, &self.model, input, Some(Quantizer::Book(&*book)), false, &mut self.rng)?;
        let h = fwd.symbolic.and_then(|s| s.pre_quant).expect("book variants quantize");
        book.warm_start(tape.value(h))
    }

    /// One Adam step on `batch`, then the EMA book update.
    pub fn step(&mut self, batch: &Batch<f32>, epoch: usize) -> Result<StepLog> {
        let input = input_of(batch);
        self.warm_start(&input)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let quantizer = self.book.as_ref().map(Quantizer::Book);
        let fwd = model_forward(&mut tape, &p, &self.model, &input, quantizer, true, &mut self.rng)?;
        let loss = total_loss(&mut tape, &fwd, &self.model, &batch.clean, Some(&batch.clean_mfcc))?;
        let log = StepLog {
            step: self.steps + 1,
            epoch,
            total: tape.value(loss.total).item().into(),
            mse: tape.value(loss.mse).item().into(),
            commitment: loss.commitment.map_or(0.0, |c| tape.value(c).item().into()),
        };
        if !log.total.is_finite() {
            let mut norms = String::new();
            for (name, n) in self.params.norms() {
                let _ = write!(norms, " {name}={n:.4e}");
            }
            return Err(Error::NonFinite(format!(
                "loss became {} at step {} (epoch {}); parameter norms:{}",
                log.total, log.step, epoch, norms
            )));
        }
        let grads = p.gradients(&tape.backward(loss.total)?);
        self.adam.step(&mut self.params, &grads)?;
        if let (Some(book), Some(s)) = (self.book.as_mut(), fwd.symbolic.as_ref()) {
            if let Some(h) = s.pre_quant {
                book.ema_update(tape.value(h), &s.indices)?;
            }
        }
        self.steps += 1;
        Ok(log)
    }

    /// Mean inference-mode MSE over `data`, weighted by batch size.
    pub fn validation_mse(&mut self, data: &[SegmentPair], batch_size: usize) -> Result<f64> {
        ensure!(!data.is_empty(), "validation set is empty");
        let mut acc = 0.0;
        for chunk in data.chunks(batch_size) {
            let refs: Vec<&SegmentPair> = chunk.iter().collect();
            let batch = make_batch::<f32>(&refs)?;
            let mut tape = Tape::new();
            let p = self.params.bind(&mut tape);
            let quantizer = self.book.as_ref().map(Quantizer::Book);
            let fwd = model_forward(&mut tape, &p, &self.model, &input_of(&batch), quantizer, false, &mut self.rng)?;
            let target = tape.constant(batch.clean.clone());
            let mse = tape.mse(fwd.enhanced, target)?;
            acc += f64::from(tape.value(mse).item()) * chunk.len() as f64;
        }
        Ok(acc / data.len() as f64)
    }

    pub fn checkpoint(&self, epoch: usize, best_valid_loss: Option<f64>) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            features: self.features.clone(),
            params: self.params.clone(),
            book: self.book.clone(),
            adam: Some(self.adam.clone()),
            epoch,
            best_valid_loss,
        }
    }
}

/// Minibatch Adam with per-epoch validation and early stopping on validation MSE.
///
/// Returns the state from the epoch with the lowest validation MSE.
pub fn train(train_set: &[SegmentPair], valid_set: &[SegmentPair], cfg: &TrainConfig, model: &ModelConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(!train_set.is_empty(), "training set is empty");
    ensure!(!valid_set.is_empty(), "validation set is empty");
    let mut trainer = Trainer::new(model, &cfg.features, cfg.adam, cfg.seed)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_0bde);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = trainer.checkpoint(0, None);
    let mut epochs = Vec::new();
    let mut steps = Vec::new();
    let mut stopped_early = false;
    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        if let Some(b) = trainer.book.as_mut() {
            b.reset_usage();
        }
        let (mut total, mut mse, mut commit, mut n) = (0.0, 0.0, 0.0, 0usize);
        let mut frames = 0u64;
        let mut capped = false;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| trainer.steps() >= m) {
                capped = true;
                break;
            }
            let refs: Vec<&SegmentPair> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch = make_batch::<f32>(&refs)?;
            let log = trainer.step(&batch, epoch)?;
            total += log.total;
            mse += log.mse;
            commit += log.commitment;
            n += 1;
            frames += refs.iter().map(|p| p.len as u64).sum::<u64>();
            steps.push(log);
        }
        if n == 0 {
            break 'epochs;
        }
        let valid_mse = trainer.validation_mse(valid_set, cfg.batch_size)?;
        if !valid_mse.is_finite() {
            return Err(Error::NonFinite(format!("validation MSE became {} after epoch {}", valid_mse, epoch)));
        }
        let book_perplexity = trainer.book.as_ref().map(|b| b.collapse_report(frames).perplexity);
        epochs.push(EpochLog {
            epoch,
            train_total: total / n as f64,
            train_mse: mse / n as f64,
            train_commit: commit / n as f64,
            valid_mse,
            book_perplexity,
        });
        log::info!("epoch {epoch}: train mse {:.5}, valid mse {:.5}", mse / n as f64, valid_mse);
        if stopper.observe(valid_mse) {
            best = trainer.checkpoint(epoch, Some(valid_mse));
        }
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
        if capped {
            break;
        }
    }
    Ok(TrainOutcome {
        checkpoint: best,
        epochs,
        steps,
        stopped_early,
    })
}

pub fn epoch_log_csv(epochs: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_total,train_mse,train_commit,valid_mse,book_perplexity\n");
    for e in epochs {
        let ppl = e.book_perplexity.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.epoch, e.train_total, e.train_mse, e.train_commit, e.valid_mse, ppl
        );
    }
    s
}

pub fn step_log_csv(steps: &[StepLog]) -> String {
    let mut s = String::from("step,epoch,total,mse,commitment\n");
    for l in steps {
        let _ = writeln!(s, "{},{},{},{},{}", l.step, l.epoch, l.total, l.mse, l.commitment);
    }
    s
}

pub fn write_log_csv(path: impl AsRef<Path>, epochs: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, epoch_log_csv(epochs)).map_err(|e| Error::io(path, e))
}
