//! Training: Bernoulli loss with label smoothing, analytic gradients, Adam
//! and the epoch driver.

mod adam;
mod grad;
mod loss;

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use grad::{forward_backward, BnBatchStats, BnGradient, GradientSet, StepOutput};
pub use loss::{bce_loss, sigmoid, smooth_labels, PROB_CLAMP};

use crate::data::{TrainingPairs, TripleStore};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::model::{init_model, DropoutRates, TuckerModel};

/// Full hyper-parameter record for a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Per-epoch learning-rate multiplier.
    pub decay: f64,
    pub d_e: usize,
    pub d_r: usize,
    pub dropout: DropoutRates,
    pub label_smoothing: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Use running batch-norm statistics as constants instead of batch
    /// statistics. Off for normal training.
    pub freeze_bn_stats: bool,
}

pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_BATCH_SIZE: usize = 128;

impl Default for TrainConfig {
    fn default() -> Self {
        Preset::Wn18rr.config()
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!(
                "decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "label smoothing must be in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        if self.batch_size == 0 || self.d_e == 0 || self.d_r == 0 {
            return Err(Error::Config(
                "batch size and embedding sizes must be positive".into(),
            ));
        }
        self.dropout.validate()
    }

    /// Learning rate in effect at the start of 0-based `epoch`.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi(epoch as i32)
    }
}

/// Published best settings per benchmark dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fb15k,
    Fb15k237,
    Wn18,
    Wn18rr,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Fb15k,
        Preset::Fb15k237,
        Preset::Wn18,
        Preset::Wn18rr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fb15k => "fb15k",
            Preset::Fb15k237 => "fb15k-237",
            Preset::Wn18 => "wn18",
            Preset::Wn18rr => "wn18rr",
        }
    }

    pub fn config(self) -> TrainConfig {
        // (lr, decay, d_e, d_r, d1, d2, d3, ls)
        let (lr, decay, d_e, d_r, d1, d2, d3, ls) = match self {
            Preset::Fb15k => (0.003, 0.99, 200, 200, 0.2, 0.2, 0.3, 0.0),
            Preset::Fb15k237 => (0.0005, 1.0, 200, 200, 0.3, 0.4, 0.5, 0.1),
            Preset::Wn18 => (0.005, 0.995, 200, 30, 0.2, 0.1, 0.2, 0.1),
            Preset::Wn18rr => (0.01, 1.0, 200, 30, 0.2, 0.2, 0.3, 0.1),
        };
        TrainConfig {
            lr,
            decay,
            d_e,
            d_r,
            dropout: DropoutRates::new(d1, d2, d3),
            label_smoothing: ls,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            adam: AdamConfig::default(),
            freeze_bn_stats: false,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str =
        "epoch,lr,train_loss,valid_mrr,valid_hits1,valid_hits3,valid_hits10";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for rec in &self.records {
            let _ = write!(out, "{},{},{}", rec.epoch, rec.lr, rec.train_loss);
            match &rec.valid {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        ",{},{},{},{}",
                        r.mrr,
                        r.hits_at(1),
                        r.hits_at(3),
                        r.hits_at(10)
                    );
                }
                None => out.push_str(",,,,\n"),
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Randomly initialized model sized for `cfg`, seeded by `cfg.seed` and
/// carrying the configured dropout rates.
pub fn model_for_config(n_e: usize, n_r_aug: usize, cfg: &TrainConfig) -> Result<TuckerModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(init_model(n_e, n_r_aug, cfg.d_e, cfg.d_r, &mut rng)?.with_dropout(cfg.dropout))
}

/// Seeds the training stream for `seed`, distinct from the stream used for
/// initialization.
pub fn training_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Trains `model` for `cfg.epochs` epochs on the augmented training split.
///
/// `on_epoch` runs after every epoch with the 0-based epoch index and may
/// return a validation report to log alongside the loss.
pub fn fit<F>(
    model: &mut TuckerModel,
    store: &TripleStore,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainLog>
where
    F: FnMut(usize, &TuckerModel) -> Result<Option<EvalReport>>,
{
    cfg.validate()?;
    if !store.augmented {
        return Err(Error::NotAugmented);
    }
    let pairs = TrainingPairs::new(store, model.n_entities())?;
    let mut rng = training_rng(cfg.seed);
    let mut adam = AdamState::new(model, cfg.adam);
    let mut log = TrainLog::default();
    if pairs.is_empty() && cfg.epochs > 0 {
        return Err(Error::Config("training split is empty".into()));
    }
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (b, batch) in pairs.batches(cfg.batch_size, &mut rng).iter().enumerate() {
            let step = forward_backward(model, batch, cfg, &mut rng)?;
            if !step.loss.is_finite() || !step.grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: step.loss,
                });
            }
            adam_step(model, &step.grads, &mut adam, lr);
            step.bn_stats.apply(model);
            loss_sum += step.loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = loss_sum / seen as f64;
        log::debug!("epoch {epoch}: lr {lr:.6} loss {train_loss:.6}");
        let valid = on_epoch(epoch, model)?;
        if let Some(r) = &valid {
            log::info!("epoch {epoch}: valid MRR {:.4}", r.mrr);
        }
        log.records.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            valid,
        });
    }
    Ok(log)
}
