use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_image, check_kernel, exact_log2, ConvParams};
use crate::error::{Error, Result};
use crate::nn::{conv_params, linear_params, Bound, ParamStore};
use crate::tensor::{Element, Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub base_channels: usize,
    pub max_channels: usize,
    pub kernel_size: usize,
    pub input_side: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { base_channels: 16, max_channels: 64, kernel_size: 3, input_side: 64 }
    }
}

/// Stride-2 conv stack down to 4×4, then a dense layer to one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub config: DiscriminatorConfig,
    pub params: ParamStore<T>,
    convs: Vec<ConvParams>,
    fc: ConvParams,
}

impl<T: Element> Discriminator<T> {
    pub fn new(config: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        check_kernel(config.kernel_size)?;
        let stages = exact_log2(config.input_side / 4)
            .filter(|_| config.input_side >= 8 && config.input_side % 4 == 0)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("discriminator input side {} must be 4·2^n, n ≥ 1", config.input_side))
            })?;
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut convs = Vec::with_capacity(stages);
        let mut width = 3;
        for s in 0..stages {
            let next = (config.base_channels << s).min(config.max_channels).max(1);
            convs.push(conv_params(&mut params, &format!("conv{s}"), width, next, config.kernel_size, rng).into());
            width = next;
        }
        let fc = linear_params(&mut params, "fc", width * 16, 1, rng).into();
        Ok(Self { config: config.clone(), params, convs, fc })
    }

    /// Raw logits `[N, 1]`.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<Var> {
        let n = check_image("discriminator", g, image, self.config.input_side)?;
        let pad = self.config.kernel_size / 2;
        let mut x = image;
        for conv in &self.convs {
            let z = conv.conv(g, p, x, 2, pad)?;
            x = g.relu(z);
        }
        let features = g.shape(x)[1..].iter().product();
        let flat = g.reshape(x, &[n, features])?;
        self.fc.linear(g, p, flat)
    }

    pub fn logits(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(image.clone());
        let y = self.forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }
}
