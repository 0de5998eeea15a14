use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_image, check_kernel, exact_log2, ConvParams};
use crate::error::{Error, Result};
use crate::graph_conv::{AdjacencyConfig, RrmbBlock};
use crate::nn::{conv_params, linear_params, Bound, ParamStore};
use crate::tensor::{sigmoid, Element, Graph, Tensor, Var};

/// Spatial side of the trunk output the RRMB runs on.
const TRUNK_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub n_au: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub kernel_size: usize,
    pub input_side: usize,
    pub adjacency: AdjacencyConfig,
    /// Fixed divisors applied to the shallow and deep taps; see [`AuClassifier::calibrate_taps`].
    pub tap_scales: [f64; 2],
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            n_au: 8,
            base_channels: 16,
            max_channels: 32,
            kernel_size: 3,
            input_side: 64,
            adjacency: AdjacencyConfig::default(),
            tap_scales: [1.0, 1.0],
        }
    }
}

/// Graph handles produced by one classifier pass.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierTaps {
    /// Pre-activation logits `[N, n_au]`.
    pub logits: Var,
    /// First trunk activation.
    pub shallow: Var,
    /// Last trunk activation, the RRMB input.
    pub deep: Var,
}

/// Trunk of 2×2 average pools each followed by a conv, down to 8×8, then one RRMB, global average pool, dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct AuClassifier<T> {
    pub config: ClassifierConfig,
    pub params: ParamStore<T>,
    /// Convs, each flagged when a 2×2 average pool precedes it.
    trunk: Vec<(ConvParams, bool)>,
    rrmb: RrmbBlock,
    fc: ConvParams,
    frozen: bool,
}

impl<T: Element> AuClassifier<T> {
    pub fn new(config: &ClassifierConfig, mean_image: Option<&Tensor<T>>, seed: u64) -> Result<Self> {
        check_kernel(config.kernel_size)?;
        if config.n_au == 0 {
            return Err(Error::InvalidArgument("classifier needs at least one AU".into()));
        }
        let downs = exact_log2(config.input_side / TRUNK_SIDE)
            .filter(|_| config.input_side % TRUNK_SIDE == 0)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("classifier input side {} must be 8·2^n", config.input_side))
            })?;
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut trunk = Vec::new();
        let mut width = 3;
        for s in 0..downs.max(1) {
            let next = (config.base_channels << s).min(config.max_channels).max(1);
            trunk.push((conv_params(&mut params, &format!("conv{s}"), width, next, config.kernel_size, rng).into(), s < downs));
            width = next;
        }
        let rrmb = RrmbBlock::new(
            &mut params,
            "rrmb",
            width,
            TRUNK_SIDE,
            TRUNK_SIDE,
            config.kernel_size,
            &config.adjacency,
            mean_image,
            rng,
        )?;
        let fc = linear_params(&mut params, "fc", width, config.n_au, rng).into();
        Ok(Self { config: config.clone(), params, trunk, rrmb, fc, frozen: false })
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<ClassifierTaps> {
        check_image("classifier", g, image, self.config.input_side)?;
        let pad = self.config.kernel_size / 2;
        let mut x = image;
        let mut shallow = None;
        for &(conv, pooled) in &self.trunk {
            if pooled {
                x = g.avg_pool2(x)?;
            }
            let z = conv.conv(g, p, x, 1, pad)?;
            x = g.relu(z);
            shallow.get_or_insert(x);
        }
        let deep = x;
        let update = self.rrmb.forward(g, p, x)?;
        let features = g.add(x, update)?;
        let pooled = g.global_avg_pool(features)?;
        let logits = self.fc.linear(g, p, pooled)?;
        let shallow = shallow.expect("trunk has at least one conv");
        let [s, d] = self.config.tap_scales;
        let shallow = if s == 1.0 { shallow } else { g.scale(shallow, T::of_f64(1.0 / s)) };
        let deep = if d == 1.0 { deep } else { g.scale(deep, T::of_f64(1.0 / d)) };
        Ok(ClassifierTaps { logits, shallow, deep })
    }

    /// Sets the tap divisors so both taps have unit root-mean-square over `images`.
    pub fn calibrate_taps(&mut self, images: &Tensor<T>) -> Result<()> {
        self.config.tap_scales = [1.0, 1.0];
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(images.clone());
        let taps = self.forward(&mut g, &p, x)?;
        let rms = |v: Var| {
            let t = g.value(v);
            (t.data().iter().map(|x| x.as_f64().powi(2)).sum::<f64>() / t.numel().max(1) as f64).sqrt()
        };
        let scales = [rms(taps.shallow), rms(taps.deep)];
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(format!("cannot calibrate taps with RMS {scales:?}")));
        }
        self.config.tap_scales = scales;
        Ok(())
    }

    pub fn logits(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(image.clone());
        let taps = self.forward(&mut g, &p, x)?;
        Ok(g.value(taps.logits).clone())
    }

    pub fn probabilities(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.logits(image)?.map(sigmoid))
    }

    /// Binary predictions at probability 0.5.
    pub fn predict(&self, image: &Tensor<T>) -> Result<Vec<Vec<bool>>> {
        let logits = self.logits(image)?;
        Ok(logits.data().chunks(self.config.n_au).map(|row| row.iter().map(|&z| z >= T::zero()).collect()).collect())
    }
}
