//! im2col-based convolution kernels. Both conv and transposed conv reduce to a
//! single GEMM over a column matrix laid out `[C·k·k, N·L]`, so tiny spatial
//! extents (1×1 patches) still batch into one product.

use super::Element;
use crate::error::{Error, Result};

/// Output side of a cross-correlation: `(size + 2·pad − k) / stride + 1`.
pub fn conv2d_output_size(size: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || k == 0 {
        return Err(Error::Shape("conv: stride and kernel size must be ≥ 1".into()));
    }
    let padded = size + 2 * pad;
    if padded < k {
        return Err(Error::Shape(format!("conv: kernel {k} larger than padded input {padded}")));
    }
    Ok((padded - k) / stride + 1)
}

/// Output side of a transposed convolution: `(size − 1)·stride − 2·pad + k`.
pub fn deconv2d_output_size(size: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || k == 0 || size == 0 {
        return Err(Error::Shape("deconv: size, stride and kernel size must be ≥ 1".into()));
    }
    let full = (size - 1) * stride + k;
    if full <= 2 * pad {
        return Err(Error::Shape(format!("deconv: padding {pad} consumes the whole output")));
    }
    Ok(full - 2 * pad)
}

/// Geometry of a correlation from an `[n, c, h, w]` image to `[n, ·, oh, ow]` positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geom {
    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.oh * self.ow
    }

    pub fn cols_len(&self) -> usize {
        self.rows() * self.n * self.positions()
    }

    /// Source pixel for output position `o` and kernel tap `t`, or `None` in the padding.
    #[inline]
    fn src(&self, o: usize, t: usize, limit: usize) -> Option<usize> {
        let v = (o * self.stride + t) as isize - self.pad as isize;
        (v >= 0 && (v as usize) < limit).then_some(v as usize)
    }

    /// Output positions `lo..hi` whose tap `t` lands inside `0..limit`, and the source of `lo`.
    #[inline]
    fn valid(&self, t: usize, outputs: usize, limit: usize) -> (usize, usize, usize) {
        let s = self.stride;
        let lo = self.pad.saturating_sub(t).div_ceil(s);
        let hi = if limit + self.pad > t { ((limit + self.pad - t - 1) / s + 1).min(outputs) } else { 0 };
        let hi = hi.max(lo);
        (lo, hi, (lo * s + t).saturating_sub(self.pad))
    }

    /// `[n, c, h, w]` → `[c·k·k, n·oh·ow]`.
    pub fn im2col<T: Element>(&self, image: &[T]) -> Vec<T> {
        let (l, nl) = (self.positions(), self.n * self.positions());
        let mut cols = vec![T::zero(); self.cols_len()];
        for c in 0..self.c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let dst_row = &mut cols[row * nl..(row + 1) * nl];
                    let (x_lo, x_hi, x0) = self.valid(kj, self.ow, self.w);
                    for n in 0..self.n {
                        let plane = &image[(n * self.c + c) * self.h * self.w..][..self.h * self.w];
                        for oy in 0..self.oh {
                            let Some(y) = self.src(oy, ki, self.h) else { continue };
                            let src_row = &plane[y * self.w..(y + 1) * self.w];
                            let dst = &mut dst_row[n * l + oy * self.ow..][x_lo..x_hi];
                            if self.stride == 1 {
                                dst.copy_from_slice(&src_row[x0..x0 + dst.len()]);
                            } else {
                                for (d, &v) in dst.iter_mut().zip(src_row[x0..].iter().step_by(self.stride)) {
                                    *d = v;
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Geom::im2col`]: scatter-add columns back onto an `[n, c, h, w]` image.
    pub fn col2im<T: Element>(&self, cols: &[T]) -> Vec<T> {
        let (l, nl) = (self.positions(), self.n * self.positions());
        let mut image = vec![T::zero(); self.n * self.c * self.h * self.w];
        for c in 0..self.c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let src_row = &cols[row * nl..(row + 1) * nl];
                    let (x_lo, x_hi, x0) = self.valid(kj, self.ow, self.w);
                    for n in 0..self.n {
                        let plane = &mut image[(n * self.c + c) * self.h * self.w..][..self.h * self.w];
                        for oy in 0..self.oh {
                            let Some(y) = self.src(oy, ki, self.h) else { continue };
                            let src = &src_row[n * l + oy * self.ow..][x_lo..x_hi];
                            let dst_row = &mut plane[y * self.w..(y + 1) * self.w];
                            if self.stride == 1 {
                                for (d, &v) in dst_row[x0..x0 + src.len()].iter_mut().zip(src) {
                                    *d = *d + v;
                                }
                            } else {
                                for (d, &v) in dst_row[x0..].iter_mut().step_by(self.stride).zip(src) {
                                    *d = *d + v;
                                }
                            }
                        }
                    }
                }
            }
        }
        image
    }
}

/// `[n, c, l]` → `[c, n·l]`.
pub(crate) fn ncl_to_cnl<T: Element>(data: &[T], n: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for ni in 0..n {
        for ci in 0..c {
            out[ci * n * l + ni * l..][..l].copy_from_slice(&data[(ni * c + ci) * l..][..l]);
        }
    }
    out
}

/// `[c, n·l]` → `[n, c, l]`.
pub(crate) fn cnl_to_ncl<T: Element>(data: &[T], n: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for ni in 0..n {
        for ci in 0..c {
            out[(ni * c + ci) * l..][..l].copy_from_slice(&data[ci * n * l + ni * l..][..l]);
        }
    }
    out
}

/// Channel counts at or below which the direct products below beat packed GEMM.
const SMALL_CHANNELS: usize = 16;
/// Column block of the direct products, sized to keep operand rows in cache.
const BLOCK: usize = 512;

/// `out[m×n] = a[m×k] · b[k×n]`, dense row-major, for small `m`.
fn product_small<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        for i in 0..m {
            let o = &mut out[i * n + start..i * n + end];
            o.fill(T::zero());
            for r in 0..k {
                let s = a[i * k + r];
                for (o, &v) in o.iter_mut().zip(&b[r * n + start..r * n + end]) {
                    *o = *o + s * v;
                }
            }
        }
    }
}

/// `out[k×n] = a[m×k]ᵀ · b[m×n]`, dense row-major, for small `m`.
fn transpose_product_small<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        for r in 0..k {
            let o = &mut out[r * n + start..r * n + end];
            o.fill(T::zero());
            for i in 0..m {
                let s = a[i * k + r];
                for (o, &v) in o.iter_mut().zip(&b[i * n + start..i * n + end]) {
                    *o = *o + s * v;
                }
            }
        }
    }
}

/// Dot product with eight independent partial sums.
fn dot<T: Element>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let tail: T = xc.remainder().iter().zip(yc.remainder()).map(|(&p, &q)| p * q).sum();
    for (p, q) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] = acc[l] + p[l] * q[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// `out[m×k] = a[m×n] · b[k×n]ᵀ`, dense row-major, for small `m`.
fn gram_small<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    out.fill(T::zero());
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        for i in 0..m {
            for r in 0..k {
                let d = dot(&a[i * n + start..i * n + end], &b[r * n + start..r * n + end]);
                out[i * k + r] = out[i * k + r] + d;
            }
        }
    }
}

/// Correlation forward. Returns the `[n, cout, oh, ow]` output and the column matrix.
pub(crate) fn conv_forward<T: Element>(g: &Geom, cout: usize, x: &[T], w: &[T], b: &[T]) -> (Vec<T>, Vec<T>) {
    let cols = g.im2col(x);
    let nl = g.n * g.positions();
    let mut out_mat = vec![T::zero(); cout * nl];
    if cout <= SMALL_CHANNELS {
        product_small(cout, g.rows(), nl, w, &cols, &mut out_mat);
    } else {
        T::gemm(cout, g.rows(), nl, T::one(), w, g.rows() as isize, 1, &cols, nl as isize, 1, T::zero(), &mut out_mat);
    }
    for (co, row) in out_mat.chunks_mut(nl).enumerate() {
        for v in row {
            *v = *v + b[co];
        }
    }
    (cnl_to_ncl(&out_mat, g.n, cout, g.positions()), cols)
}

/// Gradients of the correlation w.r.t. (input, weight, bias).
pub(crate) fn conv_backward<T: Element>(
    g: &Geom,
    cout: usize,
    w: &[T],
    cols: &[T],
    dout: &[T],
    need_input: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let nl = g.n * g.positions();
    let k = g.rows();
    let dmat = ncl_to_cnl(dout, g.n, cout, g.positions());
    let mut dw = vec![T::zero(); cout * k];
    if cout <= SMALL_CHANNELS {
        gram_small(cout, k, nl, &dmat, cols, &mut dw);
    } else {
        T::gemm(cout, nl, k, T::one(), &dmat, nl as isize, 1, cols, 1, nl as isize, T::zero(), &mut dw);
    }
    let db = dmat.chunks(nl).map(|row| row.iter().copied().sum()).collect();
    let dx = need_input.then(|| {
        let mut dcols = vec![T::zero(); k * nl];
        if cout <= SMALL_CHANNELS {
            transpose_product_small(cout, k, nl, w, &dmat, &mut dcols);
        } else {
            T::gemm(k, cout, nl, T::one(), w, 1, k as isize, &dmat, nl as isize, 1, T::zero(), &mut dcols);
        }
        g.col2im(&dcols)
    });
    (dx, dw, db)
}

/// Transposed-convolution forward. `g` describes the adjoint correlation from the
/// `[n, cout, oh_full, ow_full]` output back onto the `[n, cin, h, w]` input grid
/// (so `g.c = cout`, `g.oh = h`). Returns the output and the input as a `[cin, n·l]` matrix.
pub(crate) fn deconv_forward<T: Element>(g: &Geom, cin: usize, x: &[T], w: &[T], b: &[T]) -> (Vec<T>, Vec<T>) {
    let l = g.positions();
    let nl = g.n * l;
    let rows = g.rows();
    let xmat = ncl_to_cnl(x, g.n, cin, l);
    let mut cols = vec![T::zero(); rows * nl];
    if cin <= SMALL_CHANNELS {
        transpose_product_small(cin, rows, nl, w, &xmat, &mut cols);
    } else {
        T::gemm(rows, cin, nl, T::one(), w, 1, rows as isize, &xmat, nl as isize, 1, T::zero(), &mut cols);
    }
    let mut out = g.col2im(&cols);
    let plane = g.h * g.w;
    for (i, chunk) in out.chunks_mut(plane).enumerate() {
        let bias = b[i % g.c];
        for v in chunk {
            *v = *v + bias;
        }
    }
    (out, xmat)
}

/// Gradients of the transposed convolution w.r.t. (input, weight, bias).
pub(crate) fn deconv_backward<T: Element>(
    g: &Geom,
    cin: usize,
    w: &[T],
    xmat: &[T],
    dout: &[T],
    need_input: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let l = g.positions();
    let nl = g.n * l;
    let rows = g.rows();
    let dcols = g.im2col(dout);
    let mut dw = vec![T::zero(); cin * rows];
    if cin <= SMALL_CHANNELS {
        gram_small(cin, rows, nl, xmat, &dcols, &mut dw);
    } else {
        T::gemm(cin, nl, rows, T::one(), xmat, nl as isize, 1, &dcols, 1, nl as isize, T::zero(), &mut dw);
    }
    let plane = g.h * g.w;
    let mut db = vec![T::zero(); g.c];
    for (i, chunk) in dout.chunks(plane).enumerate() {
        let s: T = chunk.iter().copied().sum();
        db[i % g.c] = db[i % g.c] + s;
    }
    let dx = need_input.then(|| {
        let mut dxmat = vec![T::zero(); cin * nl];
        if cin <= SMALL_CHANNELS {
            product_small(cin, rows, nl, w, &dcols, &mut dxmat);
        } else {
            T::gemm(cin, rows, nl, T::one(), w, rows as isize, 1, &dcols, nl as isize, 1, T::zero(), &mut dxmat);
        }
        cnl_to_ncl(&dxmat, g.n, cin, l)
    });
    (dx, dw, db)
}
