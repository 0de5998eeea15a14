//! Graph convolution over a grid of image patches.

mod adjacency;
mod igcn;

pub use adjacency::{
    au_patch_pairs, build_adjacency, normalize_adjacency, read_matrix_text, write_matrix_text, AdjacencyConfig,
    AdjacencyMatrix, RegionPair,
};
pub use igcn::{IgcnLayer, IgcnMode, RrmbBlock, RRMB_SPLITS};

use crate::error::{Error, Result};
use crate::tensor::{dims4, patch_permute, Element, Tensor};

/// A `k×k` grid over a feature map; patches are numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSplitSpec {
    pub k: usize,
    pub feature_height: usize,
    pub feature_width: usize,
}

impl PatchSplitSpec {
    pub fn new(k: usize, feature_height: usize, feature_width: usize) -> Result<Self> {
        if k == 0 || feature_height % k != 0 || feature_width % k != 0 {
            return Err(Error::Shape(format!(
                "{feature_height}×{feature_width} feature not divisible into a {k}×{k} grid"
            )));
        }
        Ok(Self { k, feature_height, feature_width })
    }

    pub fn num_patches(&self) -> usize {
        self.k * self.k
    }

    pub fn patch_height(&self) -> usize {
        self.feature_height / self.k
    }

    pub fn patch_width(&self) -> usize {
        self.feature_width / self.k
    }

    pub fn patch_index(&self, row: usize, col: usize) -> usize {
        row * self.k + col
    }

    /// Horizontal mirror of a patch index: `(r, c) ↦ (r, k-1-c)`.
    pub fn mirror(&self, index: usize) -> usize {
        let (r, c) = (index / self.k, index % self.k);
        self.patch_index(r, self.k - 1 - c)
    }
}

/// `[N,C,H,W]` → `[P,N,C,H/k,W/k]`.
pub fn split_patches<T: Element>(feature: &Tensor<T>, spec: &PatchSplitSpec) -> Result<Tensor<T>> {
    let [n, c, h, w] = dims4("split_patches", feature.shape())?;
    if (h, w) != (spec.feature_height, spec.feature_width) {
        return Err(Error::Shape(format!(
            "split_patches: feature is {h}×{w}, split expects {}×{}",
            spec.feature_height, spec.feature_width
        )));
    }
    let data = patch_permute(feature.data(), n, c, h, w, spec.k, true);
    Tensor::new(&[spec.num_patches(), n, c, spec.patch_height(), spec.patch_width()], data)
}

/// Inverse of [`split_patches`].
pub fn merge_patches<T: Element>(patches: &Tensor<T>, spec: &PatchSplitSpec) -> Result<Tensor<T>> {
    let (n, c) = match *patches.shape() {
        [p, n, c, ph, pw] if p == spec.num_patches() && ph == spec.patch_height() && pw == spec.patch_width() => {
            (n, c)
        }
        ref s => {
            return Err(Error::Shape(format!(
                "merge_patches: expected [{}, N, C, {}, {}] patches, got {s:?}",
                spec.num_patches(),
                spec.patch_height(),
                spec.patch_width()
            )))
        }
    };
    let (h, w) = (spec.feature_height, spec.feature_width);
    Tensor::new(&[n, c, h, w], patch_permute(patches.data(), n, c, h, w, spec.k, false))
}
