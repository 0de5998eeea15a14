use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Catmull-Rom cubic (`a = -0.5`).
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let t = x.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output taps along one axis: `(anchor, [(source index, weight)])`,
/// with weights summing to one.
#[derive(Debug, Clone)]
struct AxisTaps {
    anchor: usize,
    taps: Vec<(usize, f64)>,
}

/// Half-pixel-centred sampling; the kernel is stretched by the scale factor
/// when shrinking so that the result is low-passed.
fn axis_taps(src: usize, dst: usize) -> Vec<AxisTaps> {
    let scale = dst as f64 / src as f64;
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let last = src as isize - 1;
    (0..dst)
        .map(|i| {
            let centre = (i as f64 + 0.5) / scale - 0.5;
            let lo = (centre - 2.0 * stretch).floor() as isize;
            let hi = (centre + 2.0 * stretch).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for j in lo..=hi {
                let w = cubic_kernel((j as f64 - centre) / stretch);
                if w == 0.0 {
                    continue;
                }
                let idx = j.clamp(0, last) as usize;
                match taps.iter_mut().find(|(k, _)| *k == idx) {
                    Some(tap) => tap.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            let anchor = (centre.round() as isize).clamp(0, last) as usize;
            AxisTaps { anchor, taps }
        })
        .collect()
}

/// Weighted sum written as `x[anchor] + Σ w·(x[j] − x[anchor])` so that
/// constant rows are reproduced exactly.
fn apply_taps(taps: &AxisTaps, at: impl Fn(usize) -> f64) -> f64 {
    let base = at(taps.anchor);
    base + taps.taps.iter().map(|&(j, w)| w * (at(j) - base)).sum::<f64>()
}

/// Separable bicubic resize of `[C, H, W]` or `[N, C, H, W]` images to
/// `target × target`, with edge clamping.
pub fn bicubic_resize<T: Element>(image: &Tensor<T>, target_side: usize) -> Result<Tensor<T>> {
    if target_side < 1 {
        return Err(Error::InvalidArgument("resize target side must be at least 1".into()));
    }
    let shape = image.shape();
    let (planes, h, w) = match *shape {
        [c, h, w] => (c, h, w),
        [n, c, h, w] => (n * c, h, w),
        _ => return Err(Error::Shape(format!("resize expects [C,H,W] or [N,C,H,W], got {shape:?}"))),
    };
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("cannot resize an empty image {shape:?}")));
    }
    let t = target_side;
    let rows = axis_taps(h, t);
    let cols = axis_taps(w, t);
    let src = image.data();
    let mut wide = vec![0.0f64; h * t];
    let mut out = Vec::with_capacity(planes * t * t);
    for p in 0..planes {
        let plane = &src[p * h * w..(p + 1) * h * w];
        for r in 0..h {
            let row = &plane[r * w..(r + 1) * w];
            for (c, taps) in cols.iter().enumerate() {
                wide[r * t + c] = apply_taps(taps, |j| row[j].as_f64());
            }
        }
        for taps in &rows {
            for c in 0..t {
                out.push(T::of_f64(apply_taps(taps, |r| wide[r * t + c])));
            }
        }
    }
    let mut out_shape = shape.to_vec();
    let rank = out_shape.len();
    out_shape[rank - 2] = t;
    out_shape[rank - 1] = t;
    Tensor::new(&out_shape, out)
}
