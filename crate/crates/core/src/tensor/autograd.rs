//! Reverse-mode tape. Every op appends a node holding its forward value; the
//! backward sweep walks the tape in reverse and accumulates gradients only into
//! nodes that (transitively) depend on a leaf with `requires_grad`.

use super::conv::{self, Geom};
use super::{dims4, ensure_same_shape, Element, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, geom: Geom, cols: Option<Vec<T>> },
    Deconv2d { x: Var, w: Var, b: Var, geom: Geom, xmat: Option<Vec<T>> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    Reshape(Var),
    Linear { x: Var, w: Var, b: Var },
    GlobalAvgPool(Var),
    AvgPool2(Var),
    SplitPatches { x: Var, k: usize },
    MergePatches { x: Var, k: usize },
    MixPatches { x: Var, adjacency: Vec<T> },
    BceWithLogits { logits: Var, targets: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A single forward/backward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable (gradient-tracked) leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Copy of `v`'s value as a new gradient-free leaf.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated into `v` by the last [`Graph::backward`]. Leaves only.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ---- ops ----

    /// Cross-correlation of `x [N,Cin,H,W]` with `w [Cout,Cin,k,k]` plus `b [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let [n, cin, h, wd] = dims4("conv2d input", self.shape(x))?;
        let [cout, wcin, k, k2] = dims4("conv2d weight", self.shape(w))?;
        if wcin != cin {
            return Err(Error::Shape(format!("conv2d: input has {cin} channels but weight expects {wcin}")));
        }
        if k != k2 || k % 2 == 0 {
            return Err(Error::Shape(format!("conv2d: kernel must be square with odd side, got {k}×{k2}")));
        }
        if self.shape(b) != [cout] {
            return Err(Error::Shape(format!("conv2d: bias shape {:?}, expected [{cout}]", self.shape(b))));
        }
        let oh = conv::conv2d_output_size(h, k, stride, padding)?;
        let ow = conv::conv2d_output_size(wd, k, stride, padding)?;
        let geom = Geom { n, c: cin, h, w: wd, k, stride, pad: padding, oh, ow };
        let (out, cols) =
            conv::conv_forward(&geom, cout, self.value(x).data(), self.value(w).data(), self.value(b).data());
        let rg = self.any_grad(&[x, w, b]);
        let value = Tensor::new(&[n, cout, oh, ow], out)?;
        Ok(self.push(value, Op::Conv2d { x, w, b, geom, cols: rg.then_some(cols) }, rg))
    }

    /// Transposed convolution of `x [N,Cin,H,W]` with `w [Cin,Cout,k,k]` plus `b [Cout]`.
    /// Output side `(H−1)·stride − 2·padding + k`.
    pub fn deconv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let [n, cin, h, wd] = dims4("deconv2d input", self.shape(x))?;
        let [wcin, cout, k, k2] = dims4("deconv2d weight", self.shape(w))?;
        if wcin != cin {
            return Err(Error::Shape(format!("deconv2d: input has {cin} channels but weight expects {wcin}")));
        }
        if k != k2 {
            return Err(Error::Shape(format!("deconv2d: kernel must be square, got {k}×{k2}")));
        }
        if self.shape(b) != [cout] {
            return Err(Error::Shape(format!("deconv2d: bias shape {:?}, expected [{cout}]", self.shape(b))));
        }
        let oh = conv::deconv2d_output_size(h, k, stride, padding)?;
        let ow = conv::deconv2d_output_size(wd, k, stride, padding)?;
        let geom = Geom { n, c: cout, h: oh, w: ow, k, stride, pad: padding, oh: h, ow: wd };
        let (out, xmat) =
            conv::deconv_forward(&geom, cin, self.value(x).data(), self.value(w).data(), self.value(b).data());
        let rg = self.any_grad(&[x, w, b]);
        let value = Tensor::new(&[n, cout, oh, ow], out)?;
        Ok(self.push(value, Op::Deconv2d { x, w, b, geom, xmat: rg.then_some(xmat) }, rg))
    }

    fn binary(&mut self, name: &str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        ensure_same_shape(name, self.shape(a), self.shape(b))?;
        self.value(a).zip_map(self.value(b), f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let v = self.value(a).map(|x| x * factor);
        let rg = self.any_grad(&[a]);
        self.push(v, Op::Scale(a, factor), rg)
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.any_grad(&[a]);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.any_grad(&[a]);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.any_grad(&[a]);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / T::of_f64(t.numel() as f64));
        let rg = self.any_grad(&[a]);
        self.push(v, Op::Mean(a), rg)
    }

    /// `mean((a − b)²)`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        ensure_same_shape("mse", self.shape(a), self.shape(b))?;
        let (ta, tb) = (self.value(a), self.value(b));
        let total: T = ta.data().iter().zip(tb.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let v = Tensor::scalar(total / T::of_f64(ta.numel() as f64));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, Op::Mse(a, b), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(v, Op::Reshape(a), rg))
    }

    /// Fully connected layer: `x [N,F] · wᵀ + b` with `w [O,F]`, `b [O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, f) = match *self.shape(x) {
            [n, f] => (n, f),
            ref s => return Err(Error::Shape(format!("linear: expected [N,F] input, got {s:?}"))),
        };
        let o = match *self.shape(w) {
            [o, wf] if wf == f => o,
            ref s => return Err(Error::Shape(format!("linear: weight {s:?} incompatible with {f} features"))),
        };
        if self.shape(b) != [o] {
            return Err(Error::Shape(format!("linear: bias shape {:?}, expected [{o}]", self.shape(b))));
        }
        let mut out = vec![T::zero(); n * o];
        T::gemm(n, f, o, T::one(), self.value(x).data(), f as isize, 1, self.value(w).data(), 1, f as isize, T::zero(), &mut out);
        let bias = self.value(b).data();
        for row in out.chunks_mut(o) {
            for (v, &bb) in row.iter_mut().zip(bias) {
                *v = *v + bb;
            }
        }
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(Tensor::new(&[n, o], out)?, Op::Linear { x, w, b }, rg))
    }

    /// `[N,C,H,W]` → `[N,C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = dims4("global_avg_pool", self.shape(x))?;
        let inv = T::of_f64(1.0 / (h * w) as f64);
        let data = self.value(x).data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[n, c], data)?, Op::GlobalAvgPool(x), rg))
    }

    /// `[N,C,H,W]` → `[N,C,H/2,W/2]`, averaging non-overlapping 2×2 blocks.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = dims4("avg_pool2", self.shape(x))?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("avg_pool2: {h}×{w} feature has an odd side")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::of_f64(0.25);
        let src = self.value(x).data();
        let mut data = vec![T::zero(); n * c * oh * ow];
        for (p, out) in data.chunks_mut(oh * ow).enumerate() {
            let plane = &src[p * h * w..(p + 1) * h * w];
            for i in 0..oh {
                let (top, bottom) = (&plane[2 * i * w..][..w], &plane[(2 * i + 1) * w..][..w]);
                for j in 0..ow {
                    out[i * ow + j] = (top[2 * j] + top[2 * j + 1] + bottom[2 * j] + bottom[2 * j + 1]) * quarter;
                }
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[n, c, oh, ow], data)?, Op::AvgPool2(x), rg))
    }

    /// `[N,C,H,W]` → `[k², N, C, H/k, W/k]`, patch `r·k + c` holding block row `r`, column `c`.
    pub fn split_patches(&mut self, x: Var, k: usize) -> Result<Var> {
        let [n, c, h, w] = dims4("split_patches", self.shape(x))?;
        if k == 0 || h % k != 0 || w % k != 0 {
            return Err(Error::Shape(format!("split_patches: {h}×{w} feature not divisible into a {k}×{k} grid")));
        }
        let data = patch_permute(self.value(x).data(), n, c, h, w, k, true);
        let rg = self.any_grad(&[x]);
        let value = Tensor::new(&[k * k, n, c, h / k, w / k], data)?;
        Ok(self.push(value, Op::SplitPatches { x, k }, rg))
    }

    /// Inverse of [`Graph::split_patches`].
    pub fn merge_patches(&mut self, x: Var, k: usize) -> Result<Var> {
        let (n, c, ph, pw) = match *self.shape(x) {
            [p, n, c, ph, pw] if p == k * k => (n, c, ph, pw),
            ref s => {
                return Err(Error::Shape(format!("merge_patches: expected [{}, N, C, h, w] patches, got {s:?}", k * k)))
            }
        };
        let data = patch_permute(self.value(x).data(), n, c, ph * k, pw * k, k, false);
        let rg = self.any_grad(&[x]);
        let value = Tensor::new(&[n, c, ph * k, pw * k], data)?;
        Ok(self.push(value, Op::MergePatches { x, k }, rg))
    }

    /// Contract a constant `P×P` matrix over the leading (patch) axis: `out_i = Σ_j A[i][j]·x_j`.
    pub fn mix_patches(&mut self, x: Var, adjacency: &[f64]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let p = *shape.first().ok_or_else(|| Error::Shape("mix_patches on rank-0 tensor".into()))?;
        if adjacency.len() != p * p {
            return Err(Error::Shape(format!(
                "mix_patches: adjacency has {} entries, {p} patches need {}",
                adjacency.len(),
                p * p
            )));
        }
        let adj: Vec<T> = adjacency.iter().map(|&v| T::of_f64(v)).collect();
        let rest = self.value(x).numel() / p.max(1);
        let mut out = vec![T::zero(); p * rest];
        T::gemm(p, p, rest, T::one(), &adj, p as isize, 1, self.value(x).data(), rest as isize, 1, T::zero(), &mut out);
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&shape, out)?, Op::MixPatches { x, adjacency: adj }, rg))
    }

    /// Mean sigmoid binary cross-entropy of `logits` against constant 0/1 `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor<T>) -> Result<Var> {
        ensure_same_shape("bce_with_logits", self.shape(logits), targets.shape())?;
        let z = self.value(logits).data();
        let total: T = z
            .iter()
            .zip(targets.data())
            .map(|(&z, &y)| z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let v = Tensor::scalar(total / T::of_f64(z.len() as f64));
        let rg = self.any_grad(&[logits]);
        Ok(self.push(v, Op::BceWithLogits { logits, targets: targets.data().to_vec() }, rg))
    }

    // ---- backward ----

    /// Backpropagate from a scalar node. Leaf gradients stay readable through [`Graph::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!("backward: loss must be scalar, got {:?}", self.shape(loss))));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            let contributions = self.local_grads(i, &g)?;
            for (v, t) in contributions {
                if self.nodes[v.0].requires_grad {
                    accumulate(&mut self.grads[v.0], t);
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[i];
        let gd = g.data();
        let val = |v: Var| &self.nodes[v.0].value;
        let like = |v: Var, data: Vec<T>| Tensor::new(val(v).shape(), data);
        let mut out = Vec::with_capacity(3);
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, cols } => {
                let cols = cols.as_ref().expect("conv2d cached columns");
                let cout = val(*w).shape()[0];
                let need_x = self.nodes[x.0].requires_grad;
                let (dx, dw, db) = conv::conv_backward(geom, cout, val(*w).data(), cols, gd, need_x);
                if let Some(dx) = dx {
                    out.push((*x, like(*x, dx)?));
                }
                out.push((*w, like(*w, dw)?));
                out.push((*b, like(*b, db)?));
            }
            Op::Deconv2d { x, w, b, geom, xmat } => {
                let xmat = xmat.as_ref().expect("deconv2d cached input");
                let cin = val(*w).shape()[0];
                let need_x = self.nodes[x.0].requires_grad;
                let (dx, dw, db) = conv::deconv_backward(geom, cin, val(*w).data(), xmat, gd, need_x);
                if let Some(dx) = dx {
                    out.push((*x, like(*x, dx)?));
                }
                out.push((*w, like(*w, dw)?));
                out.push((*b, like(*b, db)?));
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.map(|v| -v)));
            }
            Op::Mul(a, b) => {
                out.push((*a, g.zip_map(val(*b), |gg, y| gg * y)?));
                out.push((*b, g.zip_map(val(*a), |gg, x| gg * x)?));
            }
            Op::Scale(a, f) => out.push((*a, g.map(|v| v * *f))),
            Op::Relu(a) => {
                out.push((*a, g.zip_map(val(*a), |gg, x| if x > T::zero() { gg } else { T::zero() })?));
            }
            Op::Sigmoid(a) => {
                out.push((*a, g.zip_map(&node.value, |gg, s| gg * s * (T::one() - s))?));
            }
            Op::Sum(a) => out.push((*a, Tensor::full(val(*a).shape(), gd[0]))),
            Op::Mean(a) => {
                let n = T::of_f64(val(*a).numel() as f64);
                out.push((*a, Tensor::full(val(*a).shape(), gd[0] / n)));
            }
            Op::Mse(a, b) => {
                let n = T::of_f64(val(*a).numel() as f64);
                let coef = gd[0] * T::of_f64(2.0) / n;
                let da = val(*a).zip_map(val(*b), |x, y| coef * (x - y))?;
                out.push((*b, da.map(|v| -v)));
                out.push((*a, da));
            }
            Op::Reshape(a) => out.push((*a, like(*a, gd.to_vec())?)),
            Op::Linear { x, w, b } => {
                let (n, f) = (val(*x).shape()[0], val(*x).shape()[1]);
                let o = val(*w).shape()[0];
                let mut dx = vec![T::zero(); n * f];
                T::gemm(n, o, f, T::one(), gd, o as isize, 1, val(*w).data(), f as isize, 1, T::zero(), &mut dx);
                let mut dw = vec![T::zero(); o * f];
                T::gemm(o, n, f, T::one(), gd, 1, o as isize, val(*x).data(), f as isize, 1, T::zero(), &mut dw);
                let mut db = vec![T::zero(); o];
                for row in gd.chunks(o) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d = *d + v;
                    }
                }
                out.push((*x, like(*x, dx)?));
                out.push((*w, like(*w, dw)?));
                out.push((*b, like(*b, db)?));
            }
            Op::GlobalAvgPool(x) => {
                let [_, _, h, w] = dims4("global_avg_pool", val(*x).shape())?;
                let inv = T::of_f64(1.0 / (h * w) as f64);
                let dx = gd.iter().flat_map(|&v| std::iter::repeat(v * inv).take(h * w)).collect();
                out.push((*x, like(*x, dx)?));
            }
            Op::AvgPool2(x) => {
                let [n, c, h, w] = dims4("avg_pool2", val(*x).shape())?;
                let (oh, ow) = (h / 2, w / 2);
                let quarter = T::of_f64(0.25);
                let mut dx = vec![T::zero(); n * c * h * w];
                for (p, plane) in dx.chunks_mut(h * w).enumerate() {
                    let g = &gd[p * oh * ow..(p + 1) * oh * ow];
                    for (r, row) in plane.chunks_mut(w).enumerate() {
                        for (col, v) in row.iter_mut().enumerate() {
                            *v = g[(r / 2) * ow + col / 2] * quarter;
                        }
                    }
                }
                out.push((*x, like(*x, dx)?));
            }
            Op::SplitPatches { x, k } => {
                let [n, c, h, w] = dims4("split_patches", val(*x).shape())?;
                out.push((*x, like(*x, patch_permute(gd, n, c, h, w, *k, false))?));
            }
            Op::MergePatches { x, k } => {
                let [n, c, h, w] = dims4("merge_patches", node.value.shape())?;
                out.push((*x, like(*x, patch_permute(gd, n, c, h, w, *k, true))?));
            }
            Op::MixPatches { x, adjacency } => {
                let p = val(*x).shape()[0];
                let rest = gd.len() / p.max(1);
                let mut dx = vec![T::zero(); gd.len()];
                T::gemm(p, p, rest, T::one(), adjacency, 1, p as isize, gd, rest as isize, 1, T::zero(), &mut dx);
                out.push((*x, like(*x, dx)?));
            }
            Op::BceWithLogits { logits, targets } => {
                let z = val(*logits).data();
                let coef = gd[0] / T::of_f64(z.len() as f64);
                let dz = z.iter().zip(targets).map(|(&z, &y)| coef * (sigmoid(z) - y)).collect();
                out.push((*logits, like(*logits, dz)?));
            }
        }
        Ok(out)
    }
}

fn accumulate<T: Element>(slot: &mut Option<Tensor<T>>, t: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                *a = *a + *b;
            }
        }
        None => *slot = Some(t),
    }
}

pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Image ↔ patch-major layout shuffle. `split = true` maps `[n,c,h,w]` to `[k²,n,c,h/k,w/k]`.
pub(crate) fn patch_permute<T: Element>(src: &[T], n: usize, c: usize, h: usize, w: usize, k: usize, split: bool) -> Vec<T> {
    let (ph, pw) = (h / k, w / k);
    let mut dst = vec![T::zero(); src.len()];
    for r in 0..k {
        for col in 0..k {
            let p = r * k + col;
            for ni in 0..n {
                for ci in 0..c {
                    for i in 0..ph {
                        let img = ((ni * c + ci) * h + r * ph + i) * w + col * pw;
                        let pat = (((p * n + ni) * c + ci) * ph + i) * pw;
                        if split {
                            dst[pat..pat + pw].copy_from_slice(&src[img..img + pw]);
                        } else {
                            dst[img..img + pw].copy_from_slice(&src[pat..pat + pw]);
                        }
                    }
                }
            }
        }
    }
    dst
}
