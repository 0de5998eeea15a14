use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AdjacencyConfig, AdjacencyMatrix, PatchSplitSpec};
use crate::error::{Error, Result};
use crate::nn::{conv_params, deconv_params, Bound, ParamId, ParamStore};
use crate::tensor::{conv2d_output_size, deconv2d_output_size, dims4, Element, Graph, Tensor, Var};

/// Grid sizes of the three RRMB branches.
pub const RRMB_SPLITS: [usize; 3] = [1, 2, 8];

/// Per-patch operator. `Conv` keeps the patch size (stride 1, "same" padding);
/// `Deconv` upsamples each patch by `stride` with no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IgcnMode {
    Conv { kernel: usize },
    Deconv { kernel: usize, stride: usize },
}

impl IgcnMode {
    fn kernel(self) -> usize {
        match self {
            IgcnMode::Conv { kernel } | IgcnMode::Deconv { kernel, .. } => kernel,
        }
    }

    fn stride(self) -> usize {
        match self {
            IgcnMode::Conv { .. } => 1,
            IgcnMode::Deconv { stride, .. } => stride,
        }
    }

    fn padding(self) -> usize {
        match self {
            IgcnMode::Conv { kernel } => kernel / 2,
            IgcnMode::Deconv { .. } => 0,
        }
    }

    fn output_size(self, size: usize) -> Result<usize> {
        match self {
            IgcnMode::Conv { .. } => conv2d_output_size(size, self.kernel(), 1, self.padding()),
            IgcnMode::Deconv { .. } => deconv2d_output_size(size, self.kernel(), self.stride(), 0),
        }
    }
}

/// Patch graph convolution: every patch goes through one shared
/// `relu(conv(x) + b)`, then patch features are mixed by the normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct IgcnLayer {
    pub split: PatchSplitSpec,
    pub adjacency: AdjacencyMatrix,
    pub weight: ParamId,
    pub bias: ParamId,
    pub mode: IgcnMode,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl IgcnLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        split: PatchSplitSpec,
        adjacency: AdjacencyMatrix,
        mode: IgcnMode,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (weight, bias) = match mode {
            IgcnMode::Conv { kernel } => conv_params(store, name, in_channels, out_channels, kernel, rng),
            IgcnMode::Deconv { kernel, stride } => {
                deconv_params(store, name, in_channels, out_channels, kernel, stride, rng)
            }
        };
        Self::from_params(store, split, adjacency, mode, weight, bias)
    }

    /// Wrap existing parameters, checking them against the mode and split.
    pub fn from_params<T: Element>(
        store: &ParamStore<T>,
        split: PatchSplitSpec,
        adjacency: AdjacencyMatrix,
        mode: IgcnMode,
        weight: ParamId,
        bias: ParamId,
    ) -> Result<Self> {
        if adjacency.size() != split.num_patches() {
            return Err(Error::Shape(format!(
                "adjacency is {0}×{0} but a {1}×{1} split has {2} patches",
                adjacency.size(),
                split.k,
                split.num_patches()
            )));
        }
        let k = mode.kernel();
        if let IgcnMode::Conv { .. } = mode {
            if k % 2 == 0 {
                return Err(Error::InvalidArgument(format!("conv mode needs an odd kernel, got {k}")));
            }
        }
        let (in_channels, out_channels) = match (store.get(weight).shape(), mode) {
            (&[o, i, kh, kw], IgcnMode::Conv { .. }) if kh == k && kw == k => (i, o),
            (&[i, o, kh, kw], IgcnMode::Deconv { .. }) if kh == k && kw == k => (i, o),
            (s, _) => return Err(Error::Shape(format!("weight shape {s:?} does not fit {mode:?}"))),
        };
        if store.get(bias).shape() != [out_channels] {
            return Err(Error::Shape(format!(
                "bias shape {:?}, expected [{out_channels}]",
                store.get(bias).shape()
            )));
        }
        mode.output_size(split.patch_height())?;
        mode.output_size(split.patch_width())?;
        Ok(Self { split, adjacency, weight, bias, mode, in_channels, out_channels })
    }

    pub fn output_shape(&self, batch: usize) -> Result<[usize; 4]> {
        Ok([
            batch,
            self.out_channels,
            self.mode.output_size(self.split.patch_height())? * self.split.k,
            self.mode.output_size(self.split.patch_width())? * self.split.k,
        ])
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, params: &Bound, feature: Var) -> Result<Var> {
        let [n, c, h, w] = dims4("igcn", g.shape(feature))?;
        if (h, w) != (self.split.feature_height, self.split.feature_width) || c != self.in_channels {
            return Err(Error::Shape(format!(
                "igcn: feature [{n}, {c}, {h}, {w}] does not match layer input [N, {}, {}, {}]",
                self.in_channels, self.split.feature_height, self.split.feature_width
            )));
        }
        let k = self.split.k;
        let p = self.split.num_patches();
        let (ph, pw) = (self.split.patch_height(), self.split.patch_width());
        let patches = g.split_patches(feature, k)?;
        let batch = g.reshape(patches, &[p * n, c, ph, pw])?;
        let (wv, bv) = (params[self.weight], params[self.bias]);
        let (stride, pad) = (self.mode.stride(), self.mode.padding());
        let z = match self.mode {
            IgcnMode::Conv { .. } => g.conv2d(batch, wv, bv, stride, pad)?,
            IgcnMode::Deconv { .. } => g.deconv2d(batch, wv, bv, stride, pad)?,
        };
        let act = g.relu(z);
        let [_, co, oh, ow] = dims4("igcn", g.shape(act))?;
        let stacked = g.reshape(act, &[p, n, co, oh, ow])?;
        let mixed = g.mix_patches(stacked, self.adjacency.normalized())?;
        g.merge_patches(mixed, k)
    }

    /// Forward on plain tensors with no gradient tracking.
    pub fn apply<T: Element>(&self, params: &ParamStore<T>, feature: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, false);
        let x = g.constant(feature.clone());
        let y = self.forward(&mut g, &bound, x)?;
        Ok(g.value(y).clone())
    }
}

/// Three IGCN branches over 1×1, 2×2 and 8×8 grids, summed pixel-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct RrmbBlock {
    pub branch_1x1: IgcnLayer,
    pub branch_2x2: IgcnLayer,
    pub branch_8x8: IgcnLayer,
}

impl RrmbBlock {
    /// Shape-preserving block on `channels`-wide `height×width` features.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        adjacency: &AdjacencyConfig,
        mean_image: Option<&Tensor<T>>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut branches = Vec::with_capacity(3);
        for k in RRMB_SPLITS {
            let split = PatchSplitSpec::new(k, height, width)?;
            let adj = adjacency.build(&split, mean_image)?;
            let mode = IgcnMode::Conv { kernel };
            let layer = IgcnLayer::new(store, &format!("{name}.split{k}"), split, adj, mode, channels, channels, rng)?;
            branches.push(layer);
        }
        let [b1, b2, b8]: [IgcnLayer; 3] = branches.try_into().expect("three branches");
        Self::from_branches(b1, b2, b8)
    }

    pub fn from_branches(branch_1x1: IgcnLayer, branch_2x2: IgcnLayer, branch_8x8: IgcnLayer) -> Result<Self> {
        let block = Self { branch_1x1, branch_2x2, branch_8x8 };
        let [a, b, c] = block.branches();
        for (layer, k) in [a, b, c].into_iter().zip(RRMB_SPLITS) {
            if layer.split.k != k {
                return Err(Error::InvalidArgument(format!("branch expected a {k}×{k} split, got {0}×{0}", layer.split.k)));
            }
        }
        let shape = a.output_shape(1)?;
        for layer in [b, c] {
            let same_input = layer.in_channels == a.in_channels
                && (layer.split.feature_height, layer.split.feature_width)
                    == (a.split.feature_height, a.split.feature_width);
            if !same_input || layer.output_shape(1)? != shape {
                return Err(Error::Shape(format!(
                    "branch output {:?} (input {} channels) differs from {shape:?} (input {} channels)",
                    layer.output_shape(1)?,
                    layer.in_channels,
                    a.in_channels
                )));
            }
        }
        Ok(block)
    }

    pub fn branches(&self) -> [&IgcnLayer; 3] {
        [&self.branch_1x1, &self.branch_2x2, &self.branch_8x8]
    }

    pub fn output_shape(&self, batch: usize) -> Result<[usize; 4]> {
        self.branch_1x1.output_shape(batch)
    }

    pub fn forward<T: Element>(&self, g: &mut Graph<T>, params: &Bound, feature: Var) -> Result<Var> {
        let a = self.branch_1x1.forward(g, params, feature)?;
        let b = self.branch_2x2.forward(g, params, feature)?;
        let c = self.branch_8x8.forward(g, params, feature)?;
        let ab = g.add(a, b)?;
        g.add(ab, c)
    }

    pub fn apply<T: Element>(&self, params: &ParamStore<T>, feature: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, false);
        let x = g.constant(feature.clone());
        let y = self.forward(&mut g, &bound, x)?;
        Ok(g.value(y).clone())
    }
}
