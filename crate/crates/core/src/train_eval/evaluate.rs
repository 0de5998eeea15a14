use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::gan::restore_batched;
use super::metrics::{psnr, ssim, AuMetrics, PSNR_CAP};
use super::pretrain::au_metrics;
use crate::error::{Error, Result};
use crate::models::{AuClassifier, Generator};
use crate::synthdata::{bicubic_resize, load_png, save_png, SplitData};
use crate::tensor::Tensor;

pub const GROUND_TRUTH: &str = "ground_truth";
pub const BICUBIC: &str = "bicubic";
pub const BASELINE: &str = "baseline";
pub const FULL: &str = "full";

/// One method's restoration quality and AU metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub au: AuMetrics,
    pub psnr: f64,
    pub ssim: f64,
    pub step: u64,
    pub epoch: u64,
}

/// Bicubic upsampling of the degraded inputs to `side`, clamped to `[0, 1]`;
/// masked pixels stay as upsampled zeros.
pub fn bicubic_baseline(degraded: &Tensor<f32>, side: usize) -> Result<Tensor<f32>> {
    Ok(bicubic_resize(degraded, side)?.map(|v| v.clamp(0.0, 1.0)))
}

fn report(method: &str, classifier: &AuClassifier<f32>, images: &Tensor<f32>, split: &SplitData) -> Result<MetricsReport> {
    Ok(MetricsReport {
        method: method.into(),
        au: au_metrics(classifier, images, &split.labels, 64)?,
        psnr: psnr(images, &split.gt)?,
        ssim: ssim(images, &split.gt)?,
        step: 0,
        epoch: 0,
    })
}

/// Reports for the ground truth itself, bicubic upsampling, and whichever
/// generators are given; a missing generator's row is skipped.
pub fn evaluate_pipeline(
    classifier: &AuClassifier<f32>,
    test: &SplitData,
    baseline: Option<&Generator<f32>>,
    full: Option<&Generator<f32>>,
) -> Result<Vec<MetricsReport>> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("evaluation split is empty".into()));
    }
    let side = test.gt.shape()[2];
    let mut rows = vec![MetricsReport {
        psnr: PSNR_CAP,
        ssim: 1.0,
        ..report(GROUND_TRUTH, classifier, &test.gt, test)?
    }];
    rows.push(report(BICUBIC, classifier, &bicubic_baseline(&test.degraded, side)?, test)?);
    for (name, generator) in [(BASELINE, baseline), (FULL, full)] {
        match generator {
            Some(g) => rows.push(report(name, classifier, &restore_batched(g, &test.degraded, 32)?, test)?),
            None => log::warn!("no {name} generator given; skipping its row"),
        }
    }
    Ok(rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    method: String,
    au_id: String,
    f1: f64,
    accuracy: f64,
    psnr: Option<f64>,
    ssim: Option<f64>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e)
}

/// One row per AU and one `overall` row per method.
pub fn write_report_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in reports {
        for (k, (&f1, &accuracy)) in r.au.f1.iter().zip(&r.au.accuracy).enumerate() {
            let row = CsvRow { method: r.method.clone(), au_id: k.to_string(), f1, accuracy, psnr: None, ssim: None };
            w.serialize(row).map_err(|e| csv_error(path, e))?;
        }
        let overall = CsvRow {
            method: r.method.clone(),
            au_id: "overall".into(),
            f1: r.au.mean_f1,
            accuracy: r.au.mean_accuracy,
            psnr: Some(r.psnr),
            ssim: Some(r.ssim),
        };
        w.serialize(overall).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a report CSV; step and epoch are not stored there and read back as 0.
pub fn read_report_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut reports: Vec<MetricsReport> = Vec::new();
    let mut f1 = Vec::new();
    let mut accuracy = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if row.au_id == "overall" {
            let (Some(p), Some(s)) = (row.psnr, row.ssim) else {
                return Err(Error::format(path, format!("overall row of {} lacks psnr/ssim", row.method)));
            };
            reports.push(MetricsReport {
                method: row.method,
                au: AuMetrics {
                    f1: std::mem::take(&mut f1),
                    accuracy: std::mem::take(&mut accuracy),
                    mean_f1: row.f1,
                    mean_accuracy: row.accuracy,
                },
                psnr: p,
                ssim: s,
                step: 0,
                epoch: 0,
            });
        } else {
            let k: usize = row.au_id.parse().map_err(|_| Error::format(path, format!("bad au_id {}", row.au_id)))?;
            if k != f1.len() {
                return Err(Error::format(path, format!("AU rows of {} out of order", row.method)));
            }
            f1.push(row.f1);
            accuracy.push(row.accuracy);
        }
    }
    if !f1.is_empty() {
        return Err(Error::format(path, "trailing AU rows without an overall row"));
    }
    Ok(reports)
}

pub fn write_report_json(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let text = serde_json::to_string_pretty(reports).expect("reports serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Restores every `*.png` in `input_dir` (sorted by name) and writes
/// `<stem>_restored.png` into `out_dir`. Files already ending in
/// `_restored.png` are ignored.
pub fn restore_pngs(generator: &Generator<f32>, input_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(input_dir).map_err(|e| Error::io(input_dir, e))?;
    let mut inputs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(input_dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".png") && !name.ends_with("_restored.png") {
            inputs.push(path);
        }
    }
    inputs.sort();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let side = generator.config.input_side;
    let mut written = Vec::with_capacity(inputs.len());
    for path in inputs {
        let image: Tensor<f32> = load_png(&path)?;
        if image.shape() != [3, side, side] {
            return Err(Error::Shape(format!(
                "{}: image is {:?}, generator expects {side}×{side}",
                path.display(),
                &image.shape()[1..]
            )));
        }
        let restored = generator.restore(&image.reshape(&[1, 3, side, side])?)?;
        let out_side = generator.config.output_side();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let target = out_dir.join(format!("{stem}_restored.png"));
        save_png(&target, &restored.reshape(&[3, out_side, out_side])?)?;
        written.push(target);
    }
    Ok(written)
}
