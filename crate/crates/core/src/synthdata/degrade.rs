use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::resize::bicubic_resize;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub target_side: usize,
    /// Occluded area fraction; the mask is a square of side `round(√f · s)`.
    pub mask_fraction: f64,
    pub seed: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self { target_side: 16, mask_fraction: 0.25, seed: 0 }
    }
}

impl DegradationSpec {
    pub fn mask_side(&self) -> Result<usize> {
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::InvalidArgument(format!("mask fraction {} outside [0, 1]", self.mask_fraction)));
        }
        Ok((self.mask_fraction.sqrt() * self.target_side as f64).round() as usize)
    }
}

/// Occluded image plus the binary `[s, s]` mask (1 = occluded) and the
/// mask's top-left `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Masked<T> {
    pub image: Tensor<T>,
    pub mask: Tensor<T>,
    pub offset: [usize; 2],
}

/// Zeroes a square of the `[C, s, s]` image at a uniformly drawn position.
/// The square's side comes from `spec.mask_fraction` and the image side.
pub fn apply_mask<T: Element, R: Rng + ?Sized>(image: &Tensor<T>, spec: &DegradationSpec, rng: &mut R) -> Result<Masked<T>> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::Shape(format!("mask expects [C,s,s], got {:?}", image.shape())));
    };
    if h != w {
        return Err(Error::Shape(format!("mask expects a square image, got {h}×{w}")));
    }
    if h < 2 {
        return Err(Error::InvalidArgument(format!("image side {h} is too small to mask")));
    }
    let spec = DegradationSpec { target_side: h, ..*spec };
    let m = spec.mask_side()?;
    let row = rng.gen_range(0..=h - m);
    let col = rng.gen_range(0..=w - m);
    let mut out = image.clone();
    let mut mask = Tensor::zeros(&[h, w]);
    for r in row..row + m {
        for cc in col..col + m {
            mask.data_mut()[r * w + cc] = T::one();
            for ch in 0..c {
                out.data_mut()[(ch * h + r) * w + cc] = T::zero();
            }
        }
    }
    Ok(Masked { image: out, mask, offset: [row, col] })
}

/// Bicubic downsampling to `spec.target_side`, then a seeded occlusion mask.
pub fn degrade<T: Element>(ground_truth: &Tensor<T>, spec: &DegradationSpec) -> Result<Masked<T>> {
    let small = bicubic_resize(ground_truth, spec.target_side)?.map(|v| v.max(T::zero()).min(T::one()));
    apply_mask(&small, spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}
