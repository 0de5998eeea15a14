use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{psnr, ssim};
use super::pretrain::au_metrics;
use crate::error::{Error, Result};
use crate::losses::{
    classifier_losses, discriminator_loss, generator_adversarial_loss, pixel_loss, total_generator_loss, LossParts,
    LossValues, ReferenceFeatures,
};
use crate::models::{AuClassifier, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, GeneratorKind};
use crate::synthdata::{Batch, SplitData};
use crate::tensor::{load_checkpoint, save_checkpoint, Adam, Checkpoint, Graph, Tensor};

const GEN_PREFIX: &str = "gen.";
const DISC_PREFIX: &str = "disc.";
const MEAN_IMAGE: &str = "mean_image";

/// Checkpoint file of a generator kind inside a run directory.
pub fn checkpoint_path(out_dir: &Path, kind: GeneratorKind) -> PathBuf {
    out_dir.join(format!("gan_{}.ckpt", kind_name(kind)))
}

/// Metrics log of a generator kind inside a run directory.
pub fn metrics_log_path(out_dir: &Path, kind: GeneratorKind) -> PathBuf {
    out_dir.join(format!("metrics_{}.jsonl", kind_name(kind)))
}

pub fn kind_name(kind: GeneratorKind) -> &'static str {
    match kind {
        GeneratorKind::Igcn => "igcn",
        GeneratorKind::Residual => "residual",
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounters {
    pub iterations: u64,
    pub g_steps: u64,
    pub d_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GanMeta {
    kind: GeneratorKind,
    generator: GeneratorConfig,
    discriminator: DiscriminatorConfig,
    counters: StepCounters,
    train_config: TrainConfig,
}

/// Everything needed to continue GAN training.
#[derive(Debug, Clone)]
pub struct GanState {
    pub kind: GeneratorKind,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub g_opt: Adam<f32>,
    pub d_opt: Adam<f32>,
    pub counters: StepCounters,
    pub mean_image: Option<Tensor<f32>>,
}

impl GanState {
    pub fn new(
        cfg: &TrainConfig,
        kind: GeneratorKind,
        input_side: usize,
        gt_side: usize,
        mean_image: Option<&Tensor<f32>>,
    ) -> Result<Self> {
        let generator = Generator::new(&cfg.generator_config(input_side, gt_side)?, kind, mean_image, cfg.seed)?;
        let discriminator = Discriminator::new(&cfg.discriminator_config(gt_side), cfg.seed.wrapping_add(1))?;
        Ok(Self {
            kind,
            g_opt: Adam::new(cfg.adam(), generator.params.tensors()),
            d_opt: Adam::new(cfg.adam(), discriminator.params.tensors()),
            generator,
            discriminator,
            counters: StepCounters::default(),
            mean_image: mean_image.cloned(),
        })
    }

    /// Writes to a temporary file first so an existing checkpoint survives a failed write.
    pub fn save(&self, path: &Path, cfg: &TrainConfig) -> Result<()> {
        let meta = GanMeta {
            kind: self.kind,
            generator: self.generator.config.clone(),
            discriminator: self.discriminator.config.clone(),
            counters: self.counters,
            train_config: cfg.clone(),
        };
        let mut ckpt = Checkpoint::new(serde_json::to_string(&meta).expect("GAN meta serializes"));
        if let Some(mean) = &self.mean_image {
            ckpt.tensors.push((MEAN_IMAGE.into(), mean.clone()));
        }
        self.generator.params.write_into(&mut ckpt, GEN_PREFIX);
        self.discriminator.params.write_into(&mut ckpt, DISC_PREFIX);
        ckpt.optimizers.push(("gen".into(), self.g_opt.state.clone()));
        ckpt.optimizers.push(("disc".into(), self.d_opt.state.clone()));
        let tmp = path.with_extension("ckpt.tmp");
        save_checkpoint(&tmp, &ckpt)?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    /// Restores a state and the run configuration it was trained with.
    pub fn load(path: &Path) -> Result<(Self, TrainConfig)> {
        let ckpt = load_checkpoint::<f32>(path)?;
        let meta: GanMeta = serde_json::from_str(&ckpt.meta).map_err(|e| Error::format(path, e))?;
        let mean = ckpt.tensor(MEAN_IMAGE);
        let mut generator = Generator::new(&meta.generator, meta.kind, mean, 0)?;
        generator.params.read_from(&ckpt, GEN_PREFIX).map_err(|e| Error::format(path, e))?;
        let mut discriminator = Discriminator::new(&meta.discriminator, 0)?;
        discriminator.params.read_from(&ckpt, DISC_PREFIX).map_err(|e| Error::format(path, e))?;
        let optimizer = |name: &str, params: &[Tensor<f32>]| -> Result<Adam<f32>> {
            let state = ckpt.optimizer(name).ok_or_else(|| Error::format(path, format!("missing optimizer {name}")))?;
            if state.m.len() != params.len() || state.m.iter().zip(params).any(|(m, p)| m.shape() != p.shape()) {
                return Err(Error::format(path, format!("optimizer {name} does not match its parameters")));
            }
            Ok(Adam { config: meta.train_config.adam(), state: state.clone() })
        };
        let g_opt = optimizer("gen", generator.params.tensors())?;
        let d_opt = optimizer("disc", discriminator.params.tensors())?;
        let state = Self {
            kind: meta.kind,
            generator,
            discriminator,
            g_opt,
            d_opt,
            counters: meta.counters,
            mean_image: mean.cloned(),
        };
        Ok((state, meta.train_config))
    }
}

/// Loads only the generator of a GAN checkpoint.
pub fn load_generator(path: &Path) -> Result<Generator<f32>> {
    Ok(GanState::load(path)?.0.generator)
}

/// Mean generator loss terms over the G steps of one iteration, and the D loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub g_steps: u64,
    pub d_steps: u64,
    pub generator: LossValues,
    pub g_total: f64,
    pub d_loss: f64,
}

/// Quality of restored held-out images at one point of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub g_steps: u64,
    pub d_steps: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Epoch {
        epoch: u64,
        iteration: u64,
        g_steps: u64,
        d_steps: u64,
        generator: LossValues,
        g_total: f64,
        d_loss: f64,
    },
    Eval(EvalRecord),
}

#[derive(Debug, Clone)]
pub struct GanRun {
    pub state: GanState,
    pub history: Vec<IterationRecord>,
    pub evals: Vec<EvalRecord>,
    pub classifier_hash_before: String,
    pub classifier_hash_after: String,
}

/// Where a run keeps its checkpoint and log; `None` trains in memory only.
#[derive(Debug, Clone, Default)]
pub struct GanOptions {
    pub out_dir: Option<PathBuf>,
    /// Continue from the checkpoint in `out_dir` when one exists.
    pub resume: bool,
}

/// Iterations per epoch: each iteration consumes `g_steps_per_d_step` batches.
pub fn iterations_per_epoch(cfg: &TrainConfig, n_train: usize) -> usize {
    n_train / (cfg.batch_size * cfg.g_steps_per_d_step)
}

fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch + 1);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    rows
}

fn non_finite(step: u64, what: &str) -> Error {
    Error::NonFinite { step, what: what.into() }
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    classifier: &'a AuClassifier<f32>,
    state: GanState,
}

impl Trainer<'_> {
    fn generator_step(&mut self, batch: &Batch) -> Result<(LossValues, f64, Tensor<f32>)> {
        let weights = self.cfg.loss_weights();
        let state = &mut self.state;
        let mut g = Graph::new();
        let gp = state.generator.params.bind(&mut g, true);
        let x = g.constant(batch.degraded.clone());
        let y = g.constant(batch.gt.clone());
        let out = state.generator.forward(&mut g, &gp, x)?;
        let pixel = pixel_loss(&mut g, out, y)?;
        let zero = g.constant(Tensor::scalar(0.0));
        let adversarial = if weights.lambda1 > 0.0 {
            let dp = state.discriminator.params.bind(&mut g, false);
            generator_adversarial_loss(&mut g, &state.discriminator, &dp, out)?
        } else {
            zero
        };
        let (au, perceptual) = if weights.lambda2 > 0.0 || weights.lambda3 > 0.0 {
            let cp = self.classifier.params.bind(&mut g, false);
            let reference = ReferenceFeatures::compute(&mut g, self.classifier, &cp, y)?;
            classifier_losses(&mut g, self.classifier, &cp, out, &reference)?
        } else {
            (zero, zero)
        };
        let parts = LossParts { pixel, adversarial, au, perceptual };
        let total = total_generator_loss(&mut g, &parts, &weights)?;
        let total_value = g.value(total).item() as f64;
        if !total_value.is_finite() {
            return Err(non_finite(state.counters.g_steps, "generator loss"));
        }
        g.backward(total)?;
        let grads = gp.grads(&g);
        state.g_opt.step(state.generator.params.tensors_mut(), &grads)?;
        state.counters.g_steps += 1;
        Ok((parts.values(&g), total_value, g.value(out).clone()))
    }

    fn discriminator_step(&mut self, restored: Tensor<f32>, gt: &Tensor<f32>) -> Result<f64> {
        let state = &mut self.state;
        let mut g = Graph::new();
        let dp = state.discriminator.params.bind(&mut g, true);
        let fake = g.constant(restored);
        let real = g.constant(gt.clone());
        let loss = discriminator_loss(&mut g, &state.discriminator, &dp, fake, real)?;
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(non_finite(state.counters.d_steps, "discriminator loss"));
        }
        g.backward(loss)?;
        let grads = dp.grads(&g);
        state.d_opt.step(state.discriminator.params.tensors_mut(), &grads)?;
        state.counters.d_steps += 1;
        Ok(value)
    }
}

/// Restores `degraded` in chunks of `batch` images.
pub fn restore_batched(generator: &Generator<f32>, degraded: &Tensor<f32>, batch: usize) -> Result<Tensor<f32>> {
    let n = degraded.shape()[0];
    let row: usize = degraded.shape()[1..].iter().product();
    let mut parts = Vec::new();
    for start in (0..n).step_by(batch.max(1)) {
        let end = (start + batch.max(1)).min(n);
        let mut shape = degraded.shape().to_vec();
        shape[0] = end - start;
        let chunk = Tensor::new(&shape, degraded.data()[start * row..end * row].to_vec())?;
        parts.push(generator.restore(&chunk)?);
    }
    let side = generator.config.output_side();
    let data: Vec<f32> = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(&[n, 3, side, side], data)
}

/// Restoration quality and AU metrics of `generator` on the first `limit` rows of `split`.
pub fn evaluate_generator(
    generator: &Generator<f32>,
    classifier: &AuClassifier<f32>,
    split: &SplitData,
    limit: usize,
) -> Result<(f64, f64, f64, f64)> {
    let batch = split.range(0, limit);
    let restored = restore_batched(generator, &batch.degraded, 32)?;
    let au = au_metrics(classifier, &restored, &batch.labels, 64)?;
    Ok((psnr(&restored, &batch.gt)?, ssim(&restored, &batch.gt)?, au.mean_f1, au.mean_accuracy))
}

fn open_log(path: &Path, append: bool) -> Result<BufWriter<File>> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

fn write_event(log: &mut Option<(PathBuf, BufWriter<File>)>, event: &LogEvent) -> Result<()> {
    if let Some((path, w)) = log {
        let line = serde_json::to_string(event).expect("log event serializes");
        writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|e| Error::io(&*path, e))?;
    }
    Ok(())
}

/// Alternating GAN training: every iteration runs `g_steps_per_d_step`
/// generator updates on consecutive batches, then one discriminator update
/// on the last batch against the images the generator produced for it.
pub fn train_gan(
    cfg: &TrainConfig,
    train: &SplitData,
    eval: Option<&SplitData>,
    classifier: &AuClassifier<f32>,
    kind: GeneratorKind,
    options: &GanOptions,
) -> Result<GanRun> {
    cfg.validate()?;
    let mut state = None;
    if let (Some(dir), true) = (&options.out_dir, options.resume) {
        let path = checkpoint_path(dir, kind);
        if path.exists() {
            let (loaded, _) = GanState::load(&path)?;
            log::info!("resuming from {} at iteration {}", path.display(), loaded.counters.iterations);
            state = Some(loaded);
        }
    }
    let state = match state {
        Some(s) => s,
        None => {
            let (input_side, gt_side) = (train.degraded.shape()[2], train.gt.shape()[2]);
            GanState::new(cfg, kind, input_side, gt_side, Some(&train.mean_gt()))?
        }
    };
    train_gan_from(cfg, state, train, eval, classifier, options)
}

/// Continues training `state` until `cfg.epochs` epochs are complete.
pub fn train_gan_from(
    cfg: &TrainConfig,
    state: GanState,
    train: &SplitData,
    eval: Option<&SplitData>,
    classifier: &AuClassifier<f32>,
    options: &GanOptions,
) -> Result<GanRun> {
    cfg.validate()?;
    if !classifier.is_frozen() {
        return Err(Error::NotFrozen("AU classifier"));
    }
    let per_epoch = iterations_per_epoch(cfg, train.len()) as u64;
    if per_epoch == 0 {
        return Err(Error::InvalidArgument(format!(
            "training split of {} images cannot fill {} batches of {}",
            train.len(),
            cfg.g_steps_per_d_step,
            cfg.batch_size
        )));
    }
    let hash_before = classifier.params.hash();
    let resumed = state.counters.iterations > 0;
    let mut log = match &options.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = metrics_log_path(dir, state.kind);
            let w = open_log(&path, resumed)?;
            Some((path, w))
        }
        None => None,
    };
    let ckpt_path = options.out_dir.as_ref().map(|d| checkpoint_path(d, state.kind));
    let mut trainer = Trainer { cfg, classifier, state };
    let mut history = Vec::new();
    let mut evals = Vec::new();
    let total = per_epoch * cfg.epochs as u64;
    let n_g = cfg.g_steps_per_d_step;
    let mut epoch_acc: Vec<IterationRecord> = Vec::new();

    while trainer.state.counters.iterations < total {
        let it = trainer.state.counters.iterations;
        let epoch = it / per_epoch;
        let pos = (it % per_epoch) as usize;
        let order = epoch_order(cfg.seed, epoch, train.len());
        let mut sums = LossValues::default();
        let mut g_total = 0.0;
        let mut last = None;
        for k in 0..n_g {
            let start = (pos * n_g + k) * cfg.batch_size;
            let batch = train.batch(&order[start..start + cfg.batch_size]);
            let (values, total_value, restored) = trainer.generator_step(&batch)?;
            sums.pixel += values.pixel;
            sums.adversarial += values.adversarial;
            sums.au += values.au;
            sums.perceptual += values.perceptual;
            g_total += total_value;
            last = Some((restored, batch.gt));
        }
        let (restored, gt) = last.expect("at least one generator step");
        let d_loss = trainer.discriminator_step(restored, &gt)?;
        trainer.state.counters.iterations += 1;
        let c = trainer.state.counters;
        let scale = 1.0 / n_g as f64;
        let record = IterationRecord {
            iteration: it,
            epoch,
            g_steps: c.g_steps,
            d_steps: c.d_steps,
            generator: LossValues {
                pixel: sums.pixel * scale,
                adversarial: sums.adversarial * scale,
                au: sums.au * scale,
                perceptual: sums.perceptual * scale,
            },
            g_total: g_total * scale,
            d_loss,
        };
        epoch_acc.push(record.clone());
        history.push(record);

        let epoch_end = c.iterations % per_epoch == 0;
        let periodic = cfg.eval_every > 0 && c.iterations % cfg.eval_every as u64 == 0;
        if let (Some(split), true) = (eval, epoch_end || periodic) {
            let (p, s, f1, acc) = evaluate_generator(&trainer.state.generator, classifier, split, cfg.eval_samples)?;
            let rec = EvalRecord {
                iteration: c.iterations,
                epoch: if epoch_end { epoch + 1 } else { epoch },
                g_steps: c.g_steps,
                d_steps: c.d_steps,
                psnr: p,
                ssim: s,
                f1,
                accuracy: acc,
            };
            log::info!("iteration {}: PSNR {p:.3} dB, SSIM {s:.4}, F1 {f1:.4}", c.iterations);
            write_event(&mut log, &LogEvent::Eval(rec.clone()))?;
            evals.push(rec);
        }
        if epoch_end {
            let k = epoch_acc.len() as f64;
            let mean = |f: &dyn Fn(&IterationRecord) -> f64| epoch_acc.iter().map(f).sum::<f64>() / k;
            let event = LogEvent::Epoch {
                epoch: epoch + 1,
                iteration: c.iterations,
                g_steps: c.g_steps,
                d_steps: c.d_steps,
                generator: LossValues {
                    pixel: mean(&|r| r.generator.pixel),
                    adversarial: mean(&|r| r.generator.adversarial),
                    au: mean(&|r| r.generator.au),
                    perceptual: mean(&|r| r.generator.perceptual),
                },
                g_total: mean(&|r| r.g_total),
                d_loss: mean(&|r| r.d_loss),
            };
            log::info!("epoch {} done: {event:?}", epoch + 1);
            write_event(&mut log, &event)?;
            epoch_acc.clear();
            if let Some(path) = &ckpt_path {
                trainer.state.save(path, cfg)?;
            }
        }
    }
    let hash_after = classifier.params.hash();
    Ok(GanRun {
        state: trainer.state,
        history,
        evals,
        classifier_hash_before: hash_before,
        classifier_hash_after: hash_after,
    })
}
