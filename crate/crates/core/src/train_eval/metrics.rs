use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// `(images, channels, height, width)` of a `[C,H,W]` or `[N,C,H,W]` pair.
fn image_dims<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("image shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    match *a.shape() {
        [c, h, w] => Ok((1, c, h, w)),
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::Shape(format!("expected [C,H,W] or [N,C,H,W], got {:?}", a.shape()))),
    }
}

/// Per-image PSNR in dB for images in `[0, max_val]`, capped at 100 dB.
pub fn psnr_per_image<T: Element>(a: &Tensor<T>, b: &Tensor<T>, max_val: f64) -> Result<Vec<f64>> {
    let (n, c, h, w) = image_dims(a, b)?;
    let len = c * h * w;
    Ok((0..n)
        .map(|i| {
            let (x, y) = (&a.data()[i * len..(i + 1) * len], &b.data()[i * len..(i + 1) * len]);
            let mse = x.iter().zip(y).map(|(&p, &q)| (p.as_f64() - q.as_f64()).powi(2)).sum::<f64>() / len as f64;
            if mse < 1e-10 {
                PSNR_CAP
            } else {
                (10.0 * (max_val * max_val / mse).log10()).min(PSNR_CAP)
            }
        })
        .collect())
}

/// Mean per-image PSNR with `max_val = 1`.
pub fn psnr<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let v = psnr_per_image(a, b, 1.0)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Summed-area table with a zero first row and column.
fn integral(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    for r in 0..h {
        let mut row = 0.0;
        for c in 0..w {
            row += plane[r * w + c];
            s[(r + 1) * (w + 1) + c + 1] = s[r * (w + 1) + c + 1] + row;
        }
    }
    s
}

fn window_sum(s: &[f64], w: usize, r: usize, c: usize, k: usize) -> f64 {
    let stride = w + 1;
    s[(r + k) * stride + c + k] - s[r * stride + c + k] - s[(r + k) * stride + c] + s[r * stride + c]
}

/// SSIM of one channel: mean over all `k×k` windows at stride 1, using
/// population moments of a uniform window.
fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let k = SSIM_WINDOW.min(h).min(w);
    let products = |f: &dyn Fn(usize) -> f64| integral(&(0..h * w).map(f).collect::<Vec<_>>(), h, w);
    let sx = integral(x, h, w);
    let sy = integral(y, h, w);
    let sxx = products(&|i| x[i] * x[i]);
    let syy = products(&|i| y[i] * y[i]);
    let sxy = products(&|i| x[i] * y[i]);
    let area = (k * k) as f64;
    let mut total = 0.0;
    for r in 0..=h - k {
        for c in 0..=w - k {
            let mx = window_sum(&sx, w, r, c, k) / area;
            let my = window_sum(&sy, w, r, c, k) / area;
            let vx = window_sum(&sxx, w, r, c, k) / area - mx * mx;
            let vy = window_sum(&syy, w, r, c, k) / area - my * my;
            let cov = window_sum(&sxy, w, r, c, k) / area - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
        }
    }
    total / ((h - k + 1) * (w - k + 1)) as f64
}

/// Per-image SSIM, averaged over channels.
pub fn ssim_per_image<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<f64>> {
    let (n, c, h, w) = image_dims(a, b)?;
    if h == 0 || w == 0 {
        return Err(Error::Shape("SSIM of an empty image".into()));
    }
    let plane = h * w;
    let to_f64 = |t: &Tensor<T>, off: usize| t.data()[off..off + plane].iter().map(|v| v.as_f64()).collect::<Vec<_>>();
    Ok((0..n)
        .map(|i| {
            (0..c).map(|ch| ssim_plane(&to_f64(a, (i * c + ch) * plane), &to_f64(b, (i * c + ch) * plane), h, w)).sum::<f64>()
                / c as f64
        })
        .collect())
}

/// Mean per-image SSIM.
pub fn ssim<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let v = ssim_per_image(a, b)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Confusion counts of one binary attribute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, or 0 when `P + R = 0`.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-AU F1 and accuracy with their macro averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuMetrics {
    pub f1: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub mean_f1: f64,
    pub mean_accuracy: f64,
}

impl AuMetrics {
    pub fn from_confusions(confusions: &[Confusion]) -> Self {
        let f1: Vec<f64> = confusions.iter().map(Confusion::f1).collect();
        let accuracy: Vec<f64> = confusions.iter().map(Confusion::accuracy).collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        Self { mean_f1: mean(&f1), mean_accuracy: mean(&accuracy), f1, accuracy }
    }
}

/// Per-AU confusion counts of row-major `[N, n_au]` predictions against labels.
pub fn confusions(predictions: &[Vec<bool>], labels: &[Vec<bool>]) -> Result<Vec<Confusion>> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labelled samples",
            predictions.len(),
            labels.len()
        )));
    }
    let n_au = labels.first().map_or(0, Vec::len);
    let mut out = vec![Confusion::default(); n_au];
    for (i, (p, l)) in predictions.iter().zip(labels).enumerate() {
        if p.len() != n_au || l.len() != n_au {
            return Err(Error::InvalidArgument(format!(
                "sample {i}: {} predictions and {} labels for {n_au} AUs",
                p.len(),
                l.len()
            )));
        }
        for (k, c) in out.iter_mut().enumerate() {
            c.add(p[k], l[k]);
        }
    }
    Ok(out)
}

pub fn au_metrics_from_predictions(predictions: &[Vec<bool>], labels: &[Vec<bool>]) -> Result<AuMetrics> {
    Ok(AuMetrics::from_confusions(&confusions(predictions, labels)?))
}

/// Converts a `[N, n_au]` tensor of 0/1 values into boolean rows.
pub fn label_rows<T: Element>(labels: &Tensor<T>) -> Result<Vec<Vec<bool>>> {
    let &[_, n_au] = labels.shape() else {
        return Err(Error::Shape(format!("labels must be [N, n_au], got {:?}", labels.shape())));
    };
    labels
        .data()
        .chunks(n_au.max(1))
        .map(|row| {
            row.iter()
                .map(|&v| {
                    if v == T::one() {
                        Ok(true)
                    } else if v == T::zero() {
                        Ok(false)
                    } else {
                        Err(Error::InvalidArgument(format!("AU labels must be 0 or 1, got {v}")))
                    }
                })
                .collect()
        })
        .collect()
}
