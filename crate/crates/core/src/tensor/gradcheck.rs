//! Central finite-difference verification of the tape's analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Graph, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Central-difference step.
    pub step: f64,
    /// Coordinates probed per input slot; `None` probes every element.
    pub max_probes: Option<usize>,
    /// Sampled inputs are redrawn until `|x| ≥ min_abs` (keeps probes off kinks).
    pub min_abs: f64,
    /// Times a probe may retry with a 10× smaller step when its one-sided
    /// differences disagree, i.e. the step straddles a ReLU kink.
    pub kink_retries: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { rtol: 1e-3, atol: 1e-4, step: 1e-5, max_probes: None, min_abs: 0.0, kink_retries: 2 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SlotReport {
    pub slot: usize,
    pub shape: Vec<usize>,
    pub probes: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Probes that needed a smaller step.
    pub refined: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub op_name: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub passed: bool,
    pub slots: Vec<SlotReport>,
    pub error: Option<String>,
}

impl GradCheckReport {
    fn failed(op_name: &str, error: String) -> Self {
        Self {
            op_name: op_name.to_string(),
            max_abs_err: f64::INFINITY,
            max_rel_err: f64::INFINITY,
            passed: false,
            slots: Vec::new(),
            error: Some(error),
        }
    }
}

/// Check `op` at inputs drawn from a seeded `uniform(−1, 1)`.
pub fn grad_check<F>(op_name: &str, op: F, input_shapes: &[Vec<usize>], cfg: &GradCheckConfig, seed: u64) -> GradCheckReport
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = input_shapes
        .iter()
        .map(|shape| {
            let n = shape.iter().product();
            let data = (0..n)
                .map(|_| loop {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    if v.abs() >= cfg.min_abs {
                        break v;
                    }
                })
                .collect();
            Tensor::new(shape, data).expect("shape product matches")
        })
        .collect();
    grad_check_at(op_name, op, inputs, cfg, seed)
}

/// Check `op` at the given inputs. The scalar objective is the sum of the op's outputs.
///
/// Per element the relative error is `|a − n| / max(|a|, |n|, atol/rtol)`, so
/// `max_rel_err ≤ rtol` certifies every element is within either tolerance.
pub fn grad_check_at<F>(op_name: &str, op: F, inputs: Vec<Tensor<f64>>, cfg: &GradCheckConfig, seed: u64) -> GradCheckReport
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let objective = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = op(&mut g, &vars)?;
        Ok(g.value(out).sum())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let analytic = match op(&mut g, &vars).and_then(|out| {
        let total = g.sum(out);
        g.backward(total)?;
        Ok(())
    }) {
        Ok(()) => vars
            .iter()
            .zip(&inputs)
            .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect::<Vec<_>>(),
        Err(e) => return GradCheckReport::failed(op_name, e.to_string()),
    };
    drop(g);

    let base = match objective(&inputs) {
        Ok(v) => v,
        Err(e) => return GradCheckReport::failed(op_name, e.to_string()),
    };
    let floor = cfg.atol / cfg.rtol;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut values = inputs;
    let mut slots = Vec::with_capacity(values.len());
    let mut finite = true;
    for slot in 0..values.len() {
        let numel = values[slot].numel();
        let probes: Vec<usize> = match cfg.max_probes {
            Some(m) if m < numel => {
                let mut idx = sample(&mut rng, numel, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..numel).collect(),
        };
        let (mut max_abs, mut max_rel, mut refined) = (0.0f64, 0.0f64, 0);
        for &i in &probes {
            let orig = values[slot].data()[i];
            let mut step = cfg.step;
            let (mut numeric, mut best_gap) = (f64::NAN, f64::INFINITY);
            for attempt in 0..=cfg.kink_retries {
                values[slot].data_mut()[i] = orig + step;
                let plus = objective(&values);
                values[slot].data_mut()[i] = orig - step;
                let minus = objective(&values);
                values[slot].data_mut()[i] = orig;
                let (plus, minus) = match (plus, minus) {
                    (Ok(p), Ok(m)) => (p, m),
                    (Err(e), _) | (_, Err(e)) => return GradCheckReport::failed(op_name, e.to_string()),
                };
                let estimate = (plus - minus) / (2.0 * step);
                // Half the gap between the one-sided slopes bounds the central estimate's
                // error from a kink inside the step; keep the step where it is smallest.
                let gap = ((plus - base) - (base - minus)).abs() / (2.0 * step);
                if gap < best_gap || !numeric.is_finite() {
                    numeric = estimate;
                    best_gap = gap;
                }
                if gap <= 0.1 * cfg.atol.max(cfg.rtol * estimate.abs()) {
                    break;
                }
                if attempt == 0 && cfg.kink_retries > 0 {
                    refined += 1;
                }
                step /= 10.0;
            }
            let a = analytic[slot].data()[i];
            if !numeric.is_finite() || !a.is_finite() {
                finite = false;
                max_abs = f64::INFINITY;
                max_rel = f64::INFINITY;
                continue;
            }
            let abs = (a - numeric).abs();
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(abs / a.abs().max(numeric.abs()).max(floor));
        }
        slots.push(SlotReport {
            slot,
            shape: values[slot].shape().to_vec(),
            probes: probes.len(),
            max_abs_err: max_abs,
            max_rel_err: max_rel,
            refined,
        });
    }
    let max_abs_err = slots.iter().map(|s| s.max_abs_err).fold(0.0, f64::max);
    let max_rel_err = slots.iter().map(|s| s.max_rel_err).fold(0.0, f64::max);
    GradCheckReport {
        op_name: op_name.to_string(),
        max_abs_err,
        max_rel_err,
        passed: finite && (max_rel_err <= cfg.rtol || max_abs_err <= cfg.atol),
        slots,
        error: None,
    }
}
