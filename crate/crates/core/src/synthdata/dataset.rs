//! Corpus generation and loading.
//!
//! ```text
//! out_dir/
//!   dataset.json      generation config and AU names
//!   manifest.jsonl    one record per sample
//!   gt/NNNNN.png      ground truth, gt_side × gt_side
//!   degraded/NNNNN.png  model input, input_side × input_side
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::au::AuSet;
use super::degrade::{degrade, DegradationSpec};
use super::png_io::{load_png, quantize, save_png};
use super::render::{render_face, FaceStyle, SyntheticFaceParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Total number of samples, train and test together.
    pub n: usize,
    pub test_fraction: f64,
    pub gt_side: usize,
    pub input_side: usize,
    pub n_au: usize,
    pub seed: u64,
    pub mask_fraction: f64,
    /// Per-AU occurrence probabilities; the vocabulary's defaults when absent.
    pub au_probabilities: Option<Vec<f64>>,
    pub train_subjects: usize,
    pub test_subjects: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n: 2500,
            test_fraction: 0.2,
            gt_side: 64,
            input_side: 8,
            n_au: 8,
            seed: 0,
            mask_fraction: 0.25,
            au_probabilities: None,
            train_subjects: 28,
            test_subjects: 13,
        }
    }
}

impl DatasetConfig {
    pub fn n_test(&self) -> usize {
        (self.n as f64 * self.test_fraction).round() as usize
    }

    pub fn n_train(&self) -> usize {
        self.n - self.n_test()
    }

    pub fn au_set(&self) -> Result<AuSet> {
        AuSet::for_count(self.n_au)
    }

    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let set = self.au_set()?;
        Ok(self.au_probabilities.clone().unwrap_or_else(|| set.default_probabilities().to_vec()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return bad(format!("test fraction {} outside [0, 1]", self.test_fraction));
        }
        if self.input_side < 2 || self.input_side > self.gt_side {
            return bad(format!("input side {} must be in [2, {}]", self.input_side, self.gt_side));
        }
        if self.train_subjects == 0 || self.test_subjects == 0 {
            return bad("both splits need at least one subject".into());
        }
        let probs = self.probabilities()?;
        if probs.len() != self.n_au {
            return bad(format!("{} occurrence probabilities for {} AUs", probs.len(), self.n_au));
        }
        Ok(())
    }

    /// Style of subject `id`; ids below `train_subjects` form the training pool.
    pub fn subject_style(&self, id: usize) -> FaceStyle {
        FaceStyle::sample(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.seed, id as u64, Stream::Subject)))
    }

    pub fn subject_pool(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.train_subjects,
            Split::Test => self.train_subjects..self.train_subjects + self.test_subjects,
        }
    }

    pub fn split_of(&self, index: usize) -> Split {
        if index < self.n_train() {
            Split::Train
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy)]
enum Stream {
    Sample = 1,
    Subject = 2,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(base: u64, index: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(base) ^ splitmix64(index.wrapping_mul(4).wrapping_add(stream as u64)))
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: usize,
    pub split: Split,
    pub subject: usize,
    pub labels: Vec<u8>,
    pub sample_seed: u64,
    pub render_seed: u64,
    pub mask_seed: u64,
    pub mask_offset: [usize; 2],
    pub gt_path: String,
    pub degraded_path: String,
}

/// A ground-truth / degraded pair with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub record: ManifestRecord,
    pub params: SyntheticFaceParams,
    pub gt_image: Tensor<f32>,
    pub degraded_image: Tensor<f32>,
}

/// Builds sample `index` of the corpus. Images are 8-bit quantized, and the
/// degraded input is computed from the quantized ground truth.
pub fn synthesize_sample(config: &DatasetConfig, index: usize) -> Result<SyntheticSample> {
    let set = config.au_set()?;
    let probs = config.probabilities()?;
    let split = config.split_of(index);
    let sample_seed = derive_seed(config.seed, index as u64, Stream::Sample);
    let rng = &mut ChaCha8Rng::seed_from_u64(sample_seed);
    let subject = rng.gen_range(config.subject_pool(split));
    let attributes = set.sample(&probs, rng)?;
    let render_seed: u64 = rng.gen();
    let mask_seed: u64 = rng.gen();
    let params = SyntheticFaceParams { attributes, style: config.subject_style(subject), seed: render_seed };
    let gt_image = quantize(&render_face::<f32>(&params, config.gt_side)?);
    let spec = DegradationSpec { target_side: config.input_side, mask_fraction: config.mask_fraction, seed: mask_seed };
    let masked = degrade(&gt_image, &spec)?;
    let record = ManifestRecord {
        id: index,
        split,
        subject,
        labels: params.attributes.iter().map(|&b| b as u8).collect(),
        sample_seed,
        render_seed,
        mask_seed,
        mask_offset: masked.offset,
        gt_path: format!("gt/{index:05}.png"),
        degraded_path: format!("degraded/{index:05}.png"),
    };
    Ok(SyntheticSample { record, params, gt_image, degraded_image: quantize(&masked.image) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetHeader {
    config: DatasetConfig,
    au_names: Vec<String>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes the corpus described by `config` to `out_dir`.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<Vec<ManifestRecord>> {
    config.validate()?;
    create_dir(&out_dir.join("gt"))?;
    create_dir(&out_dir.join("degraded"))?;
    let header = DatasetHeader {
        config: config.clone(),
        au_names: config.au_set()?.names().iter().map(|s| s.to_string()).collect(),
    };
    let header_path = out_dir.join(DATASET_FILE);
    let header_json = serde_json::to_string_pretty(&header).map_err(|e| Error::format(&header_path, e))?;
    fs::write(&header_path, header_json + "\n").map_err(|e| Error::io(&header_path, e))?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut manifest = Vec::new();
    let mut records = Vec::with_capacity(config.n);
    for index in 0..config.n {
        let sample = synthesize_sample(config, index)?;
        save_png(&out_dir.join(&sample.record.gt_path), &sample.gt_image)?;
        save_png(&out_dir.join(&sample.record.degraded_path), &sample.degraded_image)?;
        let line = serde_json::to_string(&sample.record).map_err(|e| Error::format(&manifest_path, e))?;
        writeln!(manifest, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
        records.push(sample.record);
    }
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(records)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// One split held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub ids: Vec<usize>,
    /// `[N, 3, S, S]`.
    pub gt: Tensor<f32>,
    /// `[N, 3, s, s]`.
    pub degraded: Tensor<f32>,
    /// `[N, n_au]` of 0/1.
    pub labels: Tensor<f32>,
}

/// Ground truth, degraded input and labels for a subset of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub gt: Tensor<f32>,
    pub degraded: Tensor<f32>,
    pub labels: Tensor<f32>,
}

fn gather(t: &Tensor<f32>, rows: &[usize]) -> Tensor<f32> {
    let row_len: usize = t.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(rows.len() * row_len);
    for &r in rows {
        data.extend_from_slice(&t.data()[r * row_len..(r + 1) * row_len]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = rows.len();
    Tensor::new(&shape, data).expect("gathered rows match shape")
}

impl SplitData {
    pub fn from_samples(samples: &[SyntheticSample], config: &DatasetConfig) -> Result<Self> {
        let n = samples.len();
        let (big, small) = (config.gt_side, config.input_side);
        let mut gt = Vec::with_capacity(n * 3 * big * big);
        let mut degraded = Vec::with_capacity(n * 3 * small * small);
        let mut labels = Vec::with_capacity(n * config.n_au);
        for s in samples {
            if s.gt_image.shape() != [3, big, big] || s.degraded_image.shape() != [3, small, small] {
                return Err(Error::Shape(format!(
                    "sample {} has images {:?} and {:?}, expected sides {big} and {small}",
                    s.record.id,
                    s.gt_image.shape(),
                    s.degraded_image.shape()
                )));
            }
            gt.extend_from_slice(s.gt_image.data());
            degraded.extend_from_slice(s.degraded_image.data());
            labels.extend(s.record.labels.iter().map(|&b| b as f32));
        }
        Ok(Self {
            ids: samples.iter().map(|s| s.record.id).collect(),
            gt: Tensor::new(&[n, 3, big, big], gt)?,
            degraded: Tensor::new(&[n, 3, small, small], degraded)?,
            labels: Tensor::new(&[n, config.n_au], labels)?,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_au(&self) -> usize {
        self.labels.shape()[1]
    }

    pub fn batch(&self, rows: &[usize]) -> Batch {
        Batch { gt: gather(&self.gt, rows), degraded: gather(&self.degraded, rows), labels: gather(&self.labels, rows) }
    }

    /// Rows `start..end`, clipped to the split.
    pub fn range(&self, start: usize, end: usize) -> Batch {
        let rows: Vec<usize> = (start..end.min(self.len())).collect();
        self.batch(&rows)
    }

    /// Pixelwise mean ground truth `[3, S, S]`.
    pub fn mean_gt(&self) -> Tensor<f32> {
        let n = self.len();
        let row_len: usize = self.gt.shape()[1..].iter().product();
        let mut acc = vec![0.0f64; row_len];
        for row in self.gt.data().chunks(row_len) {
            acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v as f64);
        }
        let data = acc.iter().map(|a| (a / n as f64) as f32).collect();
        Tensor::new(&self.gt.shape()[1..], data).expect("mean image shape")
    }
}

/// A loaded corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub config: DatasetConfig,
    pub au_names: Vec<String>,
    pub records: Vec<ManifestRecord>,
    pub train: SplitData,
    pub test: SplitData,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let header_path = dir.join(DATASET_FILE);
        let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let header: DatasetHeader = serde_json::from_str(&text).map_err(|e| Error::format(&header_path, e))?;
        let records = read_manifest(&dir.join(MANIFEST_FILE))?;
        let n_au = header.config.n_au;
        let mut splits = [Vec::new(), Vec::new()];
        for record in &records {
            if record.labels.len() != n_au {
                return Err(Error::format(
                    dir.join(MANIFEST_FILE),
                    format!("sample {} has {} labels, expected {n_au}", record.id, record.labels.len()),
                ));
            }
            let gt_image = load_png(&dir.join(&record.gt_path))?;
            let degraded_image = load_png(&dir.join(&record.degraded_path))?;
            let params = SyntheticFaceParams {
                attributes: record.labels.iter().map(|&b| b != 0).collect(),
                style: header.config.subject_style(record.subject),
                seed: record.render_seed,
            };
            let sample = SyntheticSample { record: record.clone(), params, gt_image, degraded_image };
            splits[(record.split == Split::Test) as usize].push(sample);
        }
        let [train, test] = splits;
        let train = SplitData::from_samples(&train, &header.config)?;
        let test = SplitData::from_samples(&test, &header.config)?;
        Ok(Self {
            root: dir.to_path_buf(),
            config: header.config,
            au_names: header.au_names,
            train,
            test,
            records,
        })
    }
}

/// Builds a corpus in memory without touching the disk.
pub fn synthesize_splits(config: &DatasetConfig) -> Result<(SplitData, SplitData)> {
    config.validate()?;
    let samples = (0..config.n).map(|i| synthesize_sample(config, i)).collect::<Result<Vec<_>>>()?;
    let (train, test): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.record.split == Split::Train);
    Ok((SplitData::from_samples(&train, config)?, SplitData::from_samples(&test, config)?))
}
