//! Named parameter storage shared by every network, plus weight initializers.

use std::ops::Index;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Checkpoint, Element, Graph, Tensor, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Place every parameter on `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        Bound { vars: self.tensors.iter().map(|t| g.leaf(t.clone(), trainable)).collect() }
    }

    /// SHA-256 over names, shapes and raw values.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            h.update(T::to_le_bytes_vec(t.data()));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }

    pub fn write_into(&self, ckpt: &mut Checkpoint<T>, prefix: &str) {
        for (name, t) in self.names.iter().zip(&self.tensors) {
            ckpt.tensors.push((format!("{prefix}{name}"), t.clone()));
        }
    }

    /// Overwrite every parameter from `ckpt`; names and shapes must all match.
    pub fn read_from(&mut self, ckpt: &Checkpoint<T>, prefix: &str) -> Result<()> {
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let key = format!("{prefix}{name}");
            let src = ckpt
                .tensor(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{key}`")))?;
            if src.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{key}` has shape {:?}, model expects {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            *t = src.clone();
        }
        Ok(())
    }
}

/// Graph handles for a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Handles in [`ParamId`] order, e.g. inputs supplied by a gradient check.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients for every parameter, zero-filled where none flowed.
    pub fn grads<T: Element>(&self, g: &Graph<T>) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .map(|&v| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.shape(v))))
            .collect()
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// He-uniform weights (`bound = √(6 / fan_in)`).
pub fn he_uniform<T: Element, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::rand_uniform(shape, -bound, bound, rng)
}

/// Conv `[cout, cin, k, k]` weight and zero bias.
pub fn conv_params<T: Element, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    rng: &mut R,
) -> (ParamId, ParamId) {
    let w = store.add(format!("{name}.weight"), he_uniform(&[cout, cin, k, k], cin * k * k, rng));
    let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
    (w, b)
}

/// Transposed-conv `[cin, cout, k, k]` weight and zero bias. Fan-in counts the
/// inputs that reach one output pixel, `cin·k²/stride²`.
pub fn deconv_params<T: Element, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    rng: &mut R,
) -> (ParamId, ParamId) {
    let fan_in = (cin * k * k / (stride * stride)).max(1);
    let w = store.add(format!("{name}.weight"), he_uniform(&[cin, cout, k, k], fan_in, rng));
    let b = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
    (w, b)
}

/// Dense `[out, in]` weight and zero bias.
pub fn linear_params<T: Element, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    inputs: usize,
    outputs: usize,
    rng: &mut R,
) -> (ParamId, ParamId) {
    let w = store.add(format!("{name}.weight"), he_uniform(&[outputs, inputs], inputs, rng));
    let b = store.add(format!("{name}.bias"), Tensor::zeros(&[outputs]));
    (w, b)
}
