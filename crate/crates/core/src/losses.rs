//! Generator, discriminator and classifier objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{AuClassifier, Discriminator};
use crate::nn::Bound;
use crate::tensor::{Element, Graph, Tensor, Var};

/// Weights of the adversarial, AU-consistency and perceptual terms; the pixel term has weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 0.001, lambda2: 0.001, lambda3: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be a finite non-negative weight, got {v}")));
            }
        }
        Ok(())
    }

    /// `pixel + λ1·adversarial + λ2·au + λ3·perceptual` on plain numbers.
    pub fn combine(&self, parts: &LossValues) -> Result<f64> {
        self.validate()?;
        Ok(parts.pixel + self.lambda1 * parts.adversarial + self.lambda2 * parts.au + self.lambda3 * parts.perceptual)
    }
}

/// The four generator loss terms as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub pixel: Var,
    pub adversarial: Var,
    pub au: Var,
    pub perceptual: Var,
}

/// The four generator loss terms as numbers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub pixel: f64,
    pub adversarial: f64,
    pub au: f64,
    pub perceptual: f64,
}

impl LossParts {
    pub fn values<T: Element>(&self, g: &Graph<T>) -> LossValues {
        LossValues {
            pixel: g.value(self.pixel).item().as_f64(),
            adversarial: g.value(self.adversarial).item().as_f64(),
            au: g.value(self.au).item().as_f64(),
            perceptual: g.value(self.perceptual).item().as_f64(),
        }
    }
}

/// Mean squared error between restored and ground-truth images.
pub fn pixel_loss<T: Element>(g: &mut Graph<T>, restored: Var, ground_truth: Var) -> Result<Var> {
    g.mse(restored, ground_truth)
}

/// `pixel + λ1·adversarial + λ2·au + λ3·perceptual`.
pub fn total_generator_loss<T: Element>(g: &mut Graph<T>, parts: &LossParts, weights: &LossWeights) -> Result<Var> {
    weights.validate()?;
    let adv = g.scale(parts.adversarial, T::of_f64(weights.lambda1));
    let au = g.scale(parts.au, T::of_f64(weights.lambda2));
    let per = g.scale(parts.perceptual, T::of_f64(weights.lambda3));
    let a = g.add(parts.pixel, adv)?;
    let b = g.add(a, au)?;
    g.add(b, per)
}

fn ensure_frozen<T: Element>(classifier: &AuClassifier<T>, params: &Bound, g: &Graph<T>) -> Result<()> {
    if !classifier.is_frozen() {
        return Err(Error::NotFrozen("AU classifier"));
    }
    if params.vars().iter().any(|&v| g.requires_grad(v)) {
        return Err(Error::InvalidArgument("frozen classifier parameters must be bound without gradients".into()));
    }
    Ok(())
}

/// Classifier outputs for the ground truth, computed once and held as constants.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceFeatures {
    pub logits: Var,
    pub shallow: Var,
    pub deep: Var,
}

impl ReferenceFeatures {
    pub fn compute<T: Element>(
        g: &mut Graph<T>,
        classifier: &AuClassifier<T>,
        params: &Bound,
        ground_truth: Var,
    ) -> Result<Self> {
        ensure_frozen(classifier, params, g)?;
        let taps = classifier.forward(g, params, ground_truth)?;
        Ok(Self { logits: g.detach(taps.logits), shallow: g.detach(taps.shallow), deep: g.detach(taps.deep) })
    }
}

/// AU-consistency and perceptual terms from one classifier pass over the restored images.
pub fn classifier_losses<T: Element>(
    g: &mut Graph<T>,
    classifier: &AuClassifier<T>,
    params: &Bound,
    restored: Var,
    reference: &ReferenceFeatures,
) -> Result<(Var, Var)> {
    ensure_frozen(classifier, params, g)?;
    let taps = classifier.forward(g, params, restored)?;
    let au = g.mse(taps.logits, reference.logits)?;
    let shallow = g.mse(taps.shallow, reference.shallow)?;
    let deep = g.mse(taps.deep, reference.deep)?;
    let perceptual = g.add(shallow, deep)?;
    Ok((au, perceptual))
}

/// Sum of shallow- and deep-tap feature MSEs of the frozen classifier trunk.
pub fn perceptual_loss<T: Element>(
    g: &mut Graph<T>,
    classifier: &AuClassifier<T>,
    params: &Bound,
    restored: Var,
    ground_truth: Var,
) -> Result<Var> {
    let reference = ReferenceFeatures::compute(g, classifier, params, ground_truth)?;
    Ok(classifier_losses(g, classifier, params, restored, &reference)?.1)
}

/// MSE between pre-activation classifier logits.
pub fn au_consistency_loss<T: Element>(
    g: &mut Graph<T>,
    classifier: &AuClassifier<T>,
    params: &Bound,
    restored: Var,
    ground_truth: Var,
) -> Result<Var> {
    let reference = ReferenceFeatures::compute(g, classifier, params, ground_truth)?;
    Ok(classifier_losses(g, classifier, params, restored, &reference)?.0)
}

/// Non-saturating generator term: `BCE(D(restored), 1)`.
pub fn generator_adversarial_loss<T: Element>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    params: &Bound,
    restored: Var,
) -> Result<Var> {
    let logits = disc.forward(g, params, restored)?;
    let ones = Tensor::full(g.shape(logits), T::one());
    g.bce_with_logits(logits, &ones)
}

/// `BCE(D(real), 1) + BCE(D(fake), 0)` with `fake` detached from its producer.
pub fn discriminator_loss<T: Element>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    params: &Bound,
    restored: Var,
    ground_truth: Var,
) -> Result<Var> {
    let fake = g.detach(restored);
    let real_logits = disc.forward(g, params, ground_truth)?;
    let fake_logits = disc.forward(g, params, fake)?;
    let ones = Tensor::full(g.shape(real_logits), T::one());
    let zeros = Tensor::zeros(g.shape(fake_logits));
    let real = g.bce_with_logits(real_logits, &ones)?;
    let fake = g.bce_with_logits(fake_logits, &zeros)?;
    g.add(real, fake)
}

/// `(generator term, discriminator loss)`.
pub fn adversarial_losses<T: Element>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    params: &Bound,
    restored: Var,
    ground_truth: Var,
) -> Result<(Var, Var)> {
    let gen = generator_adversarial_loss(g, disc, params, restored)?;
    let d = discriminator_loss(g, disc, params, restored, ground_truth)?;
    Ok((gen, d))
}

/// Mean sigmoid cross-entropy over AUs and batch; labels must be 0 or 1.
pub fn classifier_pretrain_loss<T: Element>(g: &mut Graph<T>, logits: Var, labels: &Tensor<T>) -> Result<Var> {
    if let Some(bad) = labels.data().iter().find(|&&v| v != T::zero() && v != T::one()) {
        return Err(Error::InvalidArgument(format!("AU labels must be 0 or 1, got {bad}")));
    }
    g.bce_with_logits(logits, labels)
}
