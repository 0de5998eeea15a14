use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{au_metrics_from_predictions, label_rows, AuMetrics};
use crate::error::{Error, Result};
use crate::losses::classifier_pretrain_loss;
use crate::models::{AuClassifier, ClassifierConfig};
use crate::synthdata::SplitData;
use crate::tensor::{load_checkpoint, save_checkpoint, Adam, AdamConfig, Checkpoint, Graph, Tensor};

const PARAM_PREFIX: &str = "cls.";
const MEAN_IMAGE: &str = "mean_image";
/// Training images used to set the perceptual tap scales.
const CALIBRATION_ROWS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierMeta {
    config: ClassifierConfig,
    best_epoch: usize,
    val_f1: f64,
}

/// Result of classifier pretraining; the classifier holds the best-validation weights and is frozen.
#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub classifier: AuClassifier<f32>,
    pub mean_image: Option<Tensor<f32>>,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Macro validation F1 per epoch.
    pub val_f1: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Training-split rows held out for validation.
    pub val_rows: Vec<usize>,
}

/// Macro F1/accuracy of `classifier` on `images` in chunks of `batch` rows.
pub fn au_metrics(classifier: &AuClassifier<f32>, images: &Tensor<f32>, labels: &Tensor<f32>, batch: usize) -> Result<AuMetrics> {
    let n = images.shape().first().copied().unwrap_or(0);
    if labels.shape().first() != Some(&n) {
        return Err(Error::InvalidArgument(format!("{n} images but labels {:?}", labels.shape())));
    }
    let mut predictions = Vec::with_capacity(n);
    let row: usize = images.shape()[1..].iter().product();
    for start in (0..n).step_by(batch.max(1)) {
        let end = (start + batch.max(1)).min(n);
        let mut shape = images.shape().to_vec();
        shape[0] = end - start;
        let chunk = Tensor::new(&shape, images.data()[start * row..end * row].to_vec())?;
        predictions.extend(classifier.predict(&chunk)?);
    }
    au_metrics_from_predictions(&predictions, &label_rows(labels)?)
}

/// Trains the AU classifier on ground-truth images and returns it frozen at
/// the epoch with the best macro validation F1, with its taps calibrated to
/// unit RMS on training images.
pub fn pretrain_classifier(cfg: &TrainConfig, train: &SplitData, mean_image: Option<&Tensor<f32>>) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot pretrain the classifier on an empty training split".into()));
    }
    let side = train.gt.shape()[2];
    let ccfg = ClassifierConfig { n_au: train.n_au(), ..cfg.classifier_config(side) };
    let mut classifier = AuClassifier::<f32>::new(&ccfg, mean_image, cfg.seed)?;

    let rng = &mut ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows: Vec<usize> = (0..train.len()).collect();
    rows.shuffle(rng);
    let n_val = ((train.len() as f64 * cfg.val_fraction).round() as usize).min(train.len() - 1);
    let (val_rows, fit_rows) = rows.split_at(n_val);
    let (val_rows, mut fit_rows) = (val_rows.to_vec(), fit_rows.to_vec());
    let val = if val_rows.is_empty() { train.batch(&fit_rows) } else { train.batch(&val_rows) };

    let mut opt = Adam::new(AdamConfig { lr: cfg.cls_lr, ..AdamConfig::default() }, classifier.params.tensors());
    let mut best = (0, f64::NEG_INFINITY, classifier.params.clone());
    let mut epoch_losses = Vec::with_capacity(cfg.cls_epochs);
    let mut val_f1 = Vec::with_capacity(cfg.cls_epochs);
    for epoch in 0..cfg.cls_epochs {
        fit_rows.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in fit_rows.chunks(cfg.cls_batch_size) {
            let batch = train.batch(chunk);
            let mut g = Graph::new();
            let p = classifier.params.bind(&mut g, true);
            let x = g.constant(batch.gt);
            let logits = classifier.forward(&mut g, &p, x)?.logits;
            let loss = classifier_pretrain_loss(&mut g, logits, &batch.labels)?;
            let value = g.value(loss).item() as f64;
            if !value.is_finite() {
                return Err(Error::NonFinite { step: epoch as u64, what: "classifier pretraining loss".into() });
            }
            g.backward(loss)?;
            let grads = p.grads(&g);
            opt.step(classifier.params.tensors_mut(), &grads)?;
            total += value;
            batches += 1;
        }
        epoch_losses.push(total / batches.max(1) as f64);
        let f1 = au_metrics(&classifier, &val.gt, &val.labels, 64)?.mean_f1;
        log::info!("classifier epoch {epoch}: loss {:.5}, validation F1 {f1:.4}", epoch_losses[epoch]);
        val_f1.push(f1);
        if f1 > best.1 {
            best = (epoch, f1, classifier.params.clone());
        }
    }
    let (best_epoch, best_val_f1, params) = best;
    classifier.params = params;
    let calibration = &fit_rows[..fit_rows.len().min(CALIBRATION_ROWS)];
    classifier.calibrate_taps(&train.batch(calibration).gt)?;
    classifier.freeze();
    Ok(PretrainOutcome {
        classifier,
        mean_image: mean_image.cloned(),
        epoch_losses,
        val_f1,
        best_epoch,
        best_val_f1: if best_val_f1.is_finite() { best_val_f1 } else { 0.0 },
        val_rows,
    })
}

pub fn save_classifier(path: &Path, outcome: &PretrainOutcome) -> Result<()> {
    let meta = ClassifierMeta {
        config: outcome.classifier.config.clone(),
        best_epoch: outcome.best_epoch,
        val_f1: outcome.best_val_f1,
    };
    let mut ckpt = Checkpoint::new(serde_json::to_string(&meta).expect("classifier meta serializes"));
    if let Some(mean) = &outcome.mean_image {
        ckpt.tensors.push((MEAN_IMAGE.into(), mean.clone()));
    }
    outcome.classifier.params.write_into(&mut ckpt, PARAM_PREFIX);
    save_checkpoint(path, &ckpt)
}

/// Loads a frozen classifier and the validation F1 recorded when it was saved.
pub fn load_classifier(path: &Path) -> Result<(AuClassifier<f32>, f64)> {
    let ckpt = load_checkpoint::<f32>(path)?;
    let meta: ClassifierMeta = serde_json::from_str(&ckpt.meta).map_err(|e| Error::format(path, e))?;
    let mut classifier = AuClassifier::new(&meta.config, ckpt.tensor(MEAN_IMAGE), 0)?;
    classifier.params.read_from(&ckpt, PARAM_PREFIX).map_err(|e| Error::format(path, e))?;
    classifier.freeze();
    Ok((classifier, meta.val_f1))
}
