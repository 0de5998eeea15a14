//! Restoration generator (IGCN and residual variants), discriminator, and AU classifier.

mod classifier;
mod discriminator;
mod generator;

pub use classifier::{AuClassifier, ClassifierConfig, ClassifierTaps};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig, GeneratorKind};

use crate::error::{Error, Result};
use crate::nn::{Bound, ParamId};
use crate::tensor::{dims4, Element, Graph, Var};

/// Conv weight and bias handles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvParams {
    pub(crate) fn conv<T: Element>(&self, g: &mut Graph<T>, p: &Bound, x: Var, stride: usize, pad: usize) -> Result<Var> {
        g.conv2d(x, p[self.weight], p[self.bias], stride, pad)
    }

    pub(crate) fn deconv<T: Element>(&self, g: &mut Graph<T>, p: &Bound, x: Var, stride: usize) -> Result<Var> {
        g.deconv2d(x, p[self.weight], p[self.bias], stride, 0)
    }

    pub(crate) fn linear<T: Element>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.linear(x, p[self.weight], p[self.bias])
    }
}

impl From<(ParamId, ParamId)> for ConvParams {
    fn from((weight, bias): (ParamId, ParamId)) -> Self {
        Self { weight, bias }
    }
}

pub(crate) fn check_image<T: Element>(what: &str, g: &Graph<T>, x: Var, side: usize) -> Result<usize> {
    let [n, c, h, w] = dims4(what, g.shape(x))?;
    if c != 3 || h != side || w != side {
        return Err(Error::Shape(format!("{what}: expected [N, 3, {side}, {side}] images, got [{n}, {c}, {h}, {w}]")));
    }
    Ok(n)
}

pub(crate) fn check_kernel(kernel: usize) -> Result<()> {
    if kernel % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel size must be odd, got {kernel}")));
    }
    Ok(())
}

/// `log2(n)` for a power of two, otherwise `None`.
pub(crate) fn exact_log2(n: usize) -> Option<usize> {
    n.is_power_of_two().then(|| n.trailing_zeros() as usize)
}
