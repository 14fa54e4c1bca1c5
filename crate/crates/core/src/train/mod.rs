//! Adam training with best-validation model selection, and evaluation.

mod report;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{
    report_csv, rerender_summary, EvalReport, Summary, Tally, ACCURACY_FILE, BAND_SNRS, CONFUSION_FILE,
    CURVES_FILE, SUMMARY_FILE,
};

use crate::dataset::{batches, frames_to_tensor, FrameSet};
use crate::error::{invalid, Error, Result};
use crate::model::{argmax, SeMsfn};
use crate::tensor::{adam_step, softmax, softmax_cross_entropy, AdamConfig, NormMode, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Period, in epochs, of the checkpoint callback; `None` disables it.
    pub checkpoint_every: Option<usize>,
    /// Stop after this many epochs without a validation improvement.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
            checkpoint_every: None,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid!("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid!("learning rate must be positive, got {}", self.lr));
        }
        if self.checkpoint_every == Some(0) || self.early_stop_patience == Some(0) {
            return Err(invalid!("checkpoint period and patience must be >= 1 when set"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// One entry per completed epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights the returned model carries.
    pub best_epoch: usize,
}

impl TrainingCurve {
    pub fn best(&self) -> Option<&EpochStats> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

/// What the per-epoch callback may ask of the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Trains `model` in place and leaves it holding the best-validation weights.
pub fn train(
    model: &mut SeMsfn,
    set: &FrameSet,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainingCurve> {
    train_with(model, set, train_idx, val_idx, cfg, |_, _| Ok(Control::Continue))
}

/// As [`train`], calling `on_epoch` after every epoch with the stats and the
/// current (not best) model.
pub fn train_with(
    model: &mut SeMsfn,
    set: &FrameSet,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &SeMsfn) -> Result<Control>,
) -> Result<TrainingCurve> {
    cfg.validate()?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(invalid!("training and validation sets must be non-empty"));
    }
    let mut sorted_val = val_idx.to_vec();
    sorted_val.sort_unstable();
    if train_idx.iter().any(|i| sorted_val.binary_search(i).is_ok()) {
        return Err(invalid!("training and validation sets overlap"));
    }
    if model.config().num_classes != set.num_classes() {
        return Err(Error::Incompatible(format!(
            "model has {} classes, data has {}",
            model.config().num_classes,
            set.num_classes()
        )));
    }
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut curve = TrainingCurve::default();
    let mut best: Option<(f64, SeMsfn)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in batches(set, train_idx, cfg.batch_size, Some(cfg.seed), epoch)? {
            let b = batch.len();
            model.zero_grad();
            let logits = model.forward(&batch.inputs, NormMode::Train)?;
            let out = softmax_cross_entropy(&logits, &batch.labels)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
            }
            model.backward(&out.grad)?;
            for p in model.params_mut_vec() {
                if p.grad.data().iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of {}", p.name)));
                }
                adam_step(p, &adam);
            }
            loss_sum += out.loss * b as f64;
            correct += (0..b)
                .filter(|&s| argmax(logits.sample(s)) == batch.labels[s])
                .count();
        }
        let n = train_idx.len() as f64;
        let (val_loss, val_accuracy) = loss_and_accuracy(model, set, val_idx, cfg.batch_size)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy,
        };
        info!(
            "epoch {epoch:>3}: loss {:.4} acc {:.4} | val loss {:.4} acc {:.4}",
            stats.train_loss, stats.train_accuracy, stats.val_loss, stats.val_accuracy
        );
        curve.epochs.push(stats);
        if best.as_ref().is_none_or(|(acc, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, model.clone()));
            curve.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
        }
        let control = on_epoch(&stats, model)?;
        if control == Control::Stop || cfg.early_stop_patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(curve)
}

/// Mean cross-entropy and accuracy in inference mode.
pub fn loss_and_accuracy(
    model: &SeMsfn,
    set: &FrameSet,
    indices: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let per_chunk = indices
        .par_chunks(batch_size.max(1))
        .map_init(
            || model.clone(),
            |m, chunk| -> Result<(f64, usize)> {
                let x = frames_to_tensor(chunk.iter().map(|&i| &set.frames[i]))?;
                let labels: Vec<usize> = chunk.iter().map(|&i| set.label_index(i)).collect();
                let logits = m.forward(&x, NormMode::Infer)?;
                let out = softmax_cross_entropy(&logits, &labels)?;
                let correct = (0..labels.len())
                    .filter(|&s| argmax(logits.sample(s)) == labels[s])
                    .count();
                Ok((out.loss * labels.len() as f64, correct))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let n = indices.len() as f64;
    let (loss, correct) = per_chunk
        .into_iter()
        .fold((0.0, 0), |(l, c), (dl, dc)| (l + dl, c + dc));
    Ok((loss / n, correct as f64 / n))
}

/// Anything that maps `[b, length, 2]` inputs to `[b, 1, K]` probabilities.
pub trait Classifier: Clone + Send + Sync {
    fn num_classes(&self) -> usize;
    fn predict_proba(&mut self, inputs: &Tensor) -> Result<Tensor>;
}

impl Classifier for SeMsfn {
    fn num_classes(&self) -> usize {
        self.config().num_classes
    }

    fn predict_proba(&mut self, inputs: &Tensor) -> Result<Tensor> {
        softmax(&self.forward(inputs, NormMode::Infer)?)
    }
}

/// Class probabilities for `indices`, one row per frame, in index order.
pub fn predict_probabilities<C: Classifier>(
    model: &C,
    set: &FrameSet,
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<Vec<f32>>> {
    if batch_size == 0 {
        return Err(invalid!("batch size must be >= 1"));
    }
    let k = model.num_classes();
    let chunks = indices
        .par_chunks(batch_size)
        .map_init(
            || model.clone(),
            |m, chunk| -> Result<Vec<Vec<f32>>> {
                let x = frames_to_tensor(chunk.iter().map(|&i| &set.frames[i]))?;
                let p = m.predict_proba(&x)?;
                if p.shape() != [chunk.len(), 1, k] {
                    return Err(crate::error::shape_err!(
                        "classifier returned {:?} for {} frames and {k} classes",
                        p.shape(),
                        chunk.len()
                    ));
                }
                Ok((0..chunk.len()).map(|s| p.sample(s).to_vec()).collect())
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Predicts every frame in `indices` and tallies the results. The confusion
/// matrix covers all SNRs unless `confusion_snr` selects one.
pub fn evaluate<C: Classifier>(
    model: &C,
    set: &FrameSet,
    indices: &[usize],
    batch_size: usize,
    confusion_snr: Option<i32>,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(invalid!("test set is empty"));
    }
    if model.num_classes() != set.num_classes() {
        return Err(Error::Incompatible(format!(
            "classifier has {} classes, data has {}",
            model.num_classes(),
            set.num_classes()
        )));
    }
    let probs = predict_probabilities(model, set, indices, batch_size)?;
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    report_for(set, indices, &predicted, confusion_snr)
}

/// Builds a report from predictions aligned with `indices`.
pub fn report_for(
    set: &FrameSet,
    indices: &[usize],
    predicted: &[usize],
    confusion_snr: Option<i32>,
) -> Result<EvalReport> {
    let truth: Vec<usize> = indices.iter().map(|&i| set.label_index(i)).collect();
    let snr: Vec<i32> = indices.iter().map(|&i| set.frames[i].snr_db).collect();
    let classes = set.classes.iter().map(|m| m.name().to_string()).collect();
    EvalReport::from_predictions(classes, &truth, predicted, &snr, confusion_snr)
}
