use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_image, check_kernel, ConvParams};
use crate::error::{Error, Result};
use crate::graph_conv::{AdjacencyConfig, RrmbBlock};
use crate::nn::{conv_params, deconv_params, Bound, ParamId, ParamStore};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Initial weight scale of residual updates, keeping the trunk near identity at start.
const RESIDUAL_INIT_SCALE: f64 = 0.1;
/// Initial weight scale of the output conv, so untrained outputs sit near mid-grey.
const OUTPUT_INIT_SCALE: f64 = 0.1;
/// Output logits start as `RGB_GAIN·(rgb − ½)`, close to the identity through the sigmoid.
const RGB_GAIN: f64 = 4.0;

/// Makes output channels `0..3` of a `[cout, cin, k, k]` conv copy input channels `0..3` at the centre tap.
fn pass_rgb_conv<T: Element>(params: &mut ParamStore<T>, conv: ConvParams, gain: f64, bias: f64) {
    let shape = params.get(conv.weight).shape().to_vec();
    let (cin, k) = (shape[1], shape[2]);
    let w = params.get_mut(conv.weight).data_mut();
    for o in 0..3 {
        w[o * cin * k * k..(o + 1) * cin * k * k].fill(T::zero());
        w[((o * cin + o) * k + k / 2) * k + k / 2] = T::of_f64(gain);
    }
    params.get_mut(conv.bias).data_mut()[..3].fill(T::of_f64(bias));
}

/// Makes output channels `0..3` of a `[cin, cout, k, k]` deconv a nearest-neighbour copy of input channels `0..3`.
fn pass_rgb_deconv<T: Element>(params: &mut ParamStore<T>, deconv: ConvParams) {
    let shape = params.get(deconv.weight).shape().to_vec();
    let (cin, cout, kk) = (shape[0], shape[1], shape[2] * shape[3]);
    let w = params.get_mut(deconv.weight).data_mut();
    for i in 0..cin {
        for o in 0..3 {
            let v = if i == o { T::one() } else { T::zero() };
            w[(i * cout + o) * kk..(i * cout + o + 1) * kk].fill(v);
        }
    }
    params.get_mut(deconv.bias).data_mut()[..3].fill(T::zero());
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub n_rrmb: usize,
    /// Each stage doubles the spatial size.
    pub upsample_stages: usize,
    pub kernel_size: usize,
    /// Side of the square degraded input.
    pub input_side: usize,
    pub adjacency: AdjacencyConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            n_rrmb: 3,
            upsample_stages: 3,
            kernel_size: 3,
            input_side: 8,
            adjacency: AdjacencyConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn output_side(&self) -> usize {
        self.input_side << self.upsample_stages
    }

    /// Channel width after upsample stage `stage` (0-based).
    pub fn stage_width(&self, stage: usize) -> usize {
        (self.base_channels >> (stage + 1)).max(8)
    }

    pub fn validate(&self) -> Result<()> {
        check_kernel(self.kernel_size)?;
        if self.base_channels == 0 {
            return Err(Error::InvalidArgument("base_channels must be positive".into()));
        }
        if self.input_side == 0 || self.input_side % 8 != 0 {
            return Err(Error::InvalidArgument(format!(
                "input side {} must be a positive multiple of 8",
                self.input_side
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// RRMB body.
    Igcn,
    /// Plain residual conv body, otherwise identical.
    Residual,
}

#[derive(Debug, Clone, PartialEq)]
enum BodyBlock {
    Rrmb(RrmbBlock),
    Residual(ConvParams),
}

/// Head conv, residual body at input resolution, ×2 upsample stages, sigmoid output conv.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub config: GeneratorConfig,
    pub kind: GeneratorKind,
    pub params: ParamStore<T>,
    head: ConvParams,
    body: Vec<BodyBlock>,
    stages: Vec<(ConvParams, ConvParams)>,
    out: ConvParams,
}

impl<T: Element> Generator<T> {
    /// `mean_image` is required when the adjacency uses the similarity rule.
    pub fn new(config: &GeneratorConfig, kind: GeneratorKind, mean_image: Option<&Tensor<T>>, seed: u64) -> Result<Self> {
        config.validate()?;
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (c, k, side) = (config.base_channels, config.kernel_size, config.input_side);
        let head = conv_params(&mut params, "head", 3, c, k, rng).into();
        let mut body = Vec::with_capacity(config.n_rrmb);
        for i in 0..config.n_rrmb {
            let name = format!("body{i}");
            body.push(match kind {
                GeneratorKind::Igcn => BodyBlock::Rrmb(RrmbBlock::new(
                    &mut params,
                    &name,
                    c,
                    side,
                    side,
                    k,
                    &config.adjacency,
                    mean_image,
                    rng,
                )?),
                GeneratorKind::Residual => {
                    BodyBlock::Residual(conv_params(&mut params, &format!("{name}.conv"), c, c, k, rng).into())
                }
            });
        }
        let mut stages = Vec::with_capacity(config.upsample_stages);
        let mut width = c;
        for s in 0..config.upsample_stages {
            let next = config.stage_width(s);
            let name = format!("up{s}");
            let up = deconv_params(&mut params, &format!("{name}.deconv"), width, next, 2, 2, rng).into();
            let refine = conv_params(&mut params, &format!("{name}.conv"), next, next, k, rng).into();
            stages.push((up, refine));
            width = next;
        }
        let out = conv_params(&mut params, "out", width, 3, k, rng).into();
        for i in 0..params.len() {
            let id = ParamId(i);
            let name = params.name(id);
            let scale = if name.starts_with("body") && name.ends_with(".weight") {
                RESIDUAL_INIT_SCALE
            } else if name == "out.weight" {
                OUTPUT_INIT_SCALE
            } else {
                continue;
            };
            let scale = T::of_f64(scale);
            params.get_mut(id).data_mut().iter_mut().for_each(|w| *w = *w * scale);
        }
        if c >= 3 && (0..config.upsample_stages).all(|s| config.stage_width(s) >= 3) {
            pass_rgb_conv(&mut params, head, 1.0, 0.0);
            for &(up, refine) in &stages {
                pass_rgb_deconv(&mut params, up);
                pass_rgb_conv(&mut params, refine, 1.0, 0.0);
            }
            pass_rgb_conv(&mut params, out, RGB_GAIN, -RGB_GAIN / 2.0);
        }
        Ok(Self { config: config.clone(), kind, params, head, body, stages, out })
    }

    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, degraded: Var) -> Result<Var> {
        check_image("generator", g, degraded, self.config.input_side)?;
        let pad = self.config.kernel_size / 2;
        let h = self.head.conv(g, p, degraded, 1, pad)?;
        let mut x = g.relu(h);
        for block in &self.body {
            let update = match block {
                BodyBlock::Rrmb(rrmb) => rrmb.forward(g, p, x)?,
                BodyBlock::Residual(conv) => {
                    let z = conv.conv(g, p, x, 1, pad)?;
                    g.relu(z)
                }
            };
            x = g.add(x, update)?;
        }
        for (up, refine) in &self.stages {
            let z = up.deconv(g, p, x, 2)?;
            x = g.relu(z);
            let z = refine.conv(g, p, x, 1, pad)?;
            x = g.relu(z);
        }
        let logits = self.out.conv(g, p, x, 1, pad)?;
        Ok(g.sigmoid(logits))
    }

    /// Inference without gradient tracking.
    pub fn restore(&self, degraded: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(degraded.clone());
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn rrmb_blocks(&self) -> impl Iterator<Item = &RrmbBlock> {
        self.body.iter().filter_map(|b| match b {
            BodyBlock::Rrmb(r) => Some(r),
            BodyBlock::Residual(_) => None,
        })
    }
}
