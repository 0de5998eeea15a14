//! Procedural face renderer.
//!
//! Every pixel is shaded at its centre from signed distances to a handful of
//! primitives, with coverage ramped over one pixel for anti-aliasing. Geometry
//! is evaluated in centred coordinates, where column `j` of an `S`-wide image
//! sits at `(2j + 1 - S) / 2S`, so mirrored pixels see exactly negated `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::au::{AuSet, Side};
use crate::error::{Error, Result};
use crate::face_layout as layout;
use crate::tensor::{Element, Tensor};

/// Continuous nuisance parameters of one synthetic subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceStyle {
    /// Scale of the whole face about its centre.
    pub face_scale: f64,
    /// 0 = light, 1 = dark.
    pub skin_tone: f64,
    /// Background grey level.
    pub background: f64,
    /// Horizontal shift of the face, in image widths.
    pub offset_x: f64,
}

impl Default for FaceStyle {
    fn default() -> Self {
        Self { face_scale: 1.0, skin_tone: 0.3, background: 0.2, offset_x: 0.0 }
    }
}

impl FaceStyle {
    pub const SCALE_RANGE: (f64, f64) = (0.9, 1.05);
    pub const TONE_RANGE: (f64, f64) = (0.0, 0.6);
    pub const BACKGROUND_RANGE: (f64, f64) = (0.05, 0.35);
    pub const OFFSET_RANGE: (f64, f64) = (-0.03, 0.03);

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut draw = |(lo, hi): (f64, f64)| rng.gen_range(lo..hi);
        Self {
            face_scale: draw(Self::SCALE_RANGE),
            skin_tone: draw(Self::TONE_RANGE),
            background: draw(Self::BACKGROUND_RANGE),
            offset_x: draw(Self::OFFSET_RANGE),
        }
    }

    /// Style of the horizontally mirrored face.
    pub fn mirrored(&self) -> Self {
        Self { offset_x: -self.offset_x, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFaceParams {
    pub attributes: Vec<bool>,
    pub style: FaceStyle,
    /// Drives small symmetric jitter of feature geometry.
    pub seed: u64,
}

impl SyntheticFaceParams {
    /// Parameters of the mirrored face: left/right attributes swapped, style mirrored.
    pub fn mirrored(&self) -> Result<Self> {
        let set = AuSet::for_count(self.attributes.len())?;
        let mut attributes = self.attributes.clone();
        for &(l, r) in set.bilateral_pairs() {
            attributes.swap(l, r);
        }
        Ok(Self { attributes, style: self.style.mirrored(), seed: self.seed })
    }
}

type Rgb = [f64; 3];

const BROW_COLOR: Rgb = [0.20, 0.13, 0.08];
const WRINKLE_COLOR: Rgb = [0.32, 0.18, 0.12];
const SCLERA_COLOR: Rgb = [0.97, 0.97, 0.97];
const IRIS_COLOR: Rgb = [0.10, 0.10, 0.25];
const LID_COLOR: Rgb = [0.15, 0.08, 0.06];
const LIP_COLOR: Rgb = [0.60, 0.18, 0.20];
const MOUTH_CAVITY_COLOR: Rgb = [0.25, 0.04, 0.06];
const BLUSH_COLOR: Rgb = [0.92, 0.40, 0.40];
const LIGHT_SKIN: Rgb = [0.96, 0.82, 0.70];
const DARK_SKIN: Rgb = [0.50, 0.34, 0.25];

/// Geometry of one rendered face in centred face coordinates.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    eye_x: f64,
    eye_y: f64,
    brow_y: f64,
    brow_radius: f64,
    mouth_y: f64,
    mouth_half_width: f64,
    cheek_x: f64,
    cheek_y: f64,
    nose_y: f64,
    face_cy: f64,
    face_rx: f64,
    face_ry: f64,
}

impl Geometry {
    fn jittered(seed: u64) -> Self {
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let mut j = |amount: f64| rng.gen_range(-amount..amount);
        Self {
            eye_x: layout::EYE_OFFSET + j(0.01),
            eye_y: layout::EYE_Y - 0.5 + j(0.008),
            brow_y: layout::BROW_Y - 0.5 + j(0.008),
            brow_radius: 0.03 + j(0.004),
            mouth_y: layout::MOUTH_Y - 0.5 + j(0.008),
            mouth_half_width: layout::MOUTH_HALF_WIDTH - 0.02 + j(0.01),
            cheek_x: layout::CHEEK_OFFSET,
            cheek_y: layout::CHEEK_Y - 0.5,
            nose_y: layout::NOSE[1] - 0.5,
            face_cy: layout::FACE_CENTER[1] - 0.5,
            face_rx: layout::FACE_RADII[0],
            face_ry: layout::FACE_RADII[1],
        }
    }
}

/// Bounding box `(x0, y0, x1, y1)` of the mouth in normalized image
/// coordinates, over every mouth state and jitter.
pub fn mouth_region(style: &FaceStyle) -> [f64; 4] {
    let s = style.face_scale;
    let cy = layout::FACE_CENTER[1] - 0.5;
    let half_w = (layout::MOUTH_HALF_WIDTH + 0.01) * s;
    let top = (layout::MOUTH_Y - 0.5 - 0.008 - 0.11 - cy) * s + cy;
    let bottom = (layout::MOUTH_Y - 0.5 + 0.008 + 0.11 - cy) * s + cy;
    [0.5 + style.offset_x - half_w, 0.5 + top, 0.5 + style.offset_x + half_w, 0.5 + bottom]
}

fn length(x: f64, y: f64) -> f64 {
    (x * x + y * y).sqrt()
}

/// Approximate signed distance to an axis-aligned ellipse.
fn ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
    (length(dx, dy) - 1.0) * rx.min(ry)
}

/// Signed distance to a segment thickened by `r`.
fn capsule(x: f64, y: f64, a: [f64; 2], b: [f64; 2], r: f64) -> f64 {
    let (px, py) = (x - a[0], y - a[1]);
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let t = ((px * bx + py * by) / (bx * bx + by * by)).clamp(0.0, 1.0);
    length(px - bx * t, py - by * t) - r
}

/// Signed distance to the stroke `y = y0 + bend·(x/w)²`, `|x| ≤ w`, thickened by `r`.
fn parabola_stroke(x: f64, y: f64, y0: f64, bend: f64, w: f64, r: f64) -> f64 {
    if x.abs() > w {
        let end = [w * x.signum(), y0 + bend];
        return length(x - end[0], y - end[1]) - r;
    }
    let f = y0 + bend * (x / w).powi(2);
    let slope = 2.0 * bend * x / (w * w);
    (y - f).abs() / (1.0 + slope * slope).sqrt() - r
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn shade(c: Rgb, f: f64) -> Rgb {
    [c[0] * f, c[1] * f, c[2] * f]
}

struct Canvas {
    color: Rgb,
    aa: f64,
}

impl Canvas {
    fn paint(&mut self, sd: f64, color: Rgb, alpha: f64) {
        let cover = (0.5 - sd / self.aa).clamp(0.0, 1.0) * alpha;
        if cover > 0.0 {
            self.color = lerp(self.color, color, cover);
        }
    }
}

/// Renders an anti-aliased `[3, side, side]` face in `[0, 1]`.
pub fn render_face<T: Element>(params: &SyntheticFaceParams, side: usize) -> Result<Tensor<T>> {
    if side < 32 || side % 8 != 0 {
        return Err(Error::InvalidArgument(format!("render side must be ≥ 32 and divisible by 8, got {side}")));
    }
    let set = AuSet::for_count(params.attributes.len())?;
    let on = |name: &str| set.index(name).is_some_and(|i| params.attributes[i]);
    let side_on = |name: &str, s: Side| set.sided_index(name, s).is_some_and(|i| params.attributes[i]);
    let style = params.style;
    let geo = Geometry::jittered(params.seed);
    let skin = lerp(LIGHT_SKIN, DARK_SKIN, style.skin_tone.clamp(0.0, 1.0));
    let bg = style.background.clamp(0.0, 1.0);
    let background = [bg, bg, (bg + 0.1).min(1.0)];
    let scale = style.face_scale;

    let smile = on("smile");
    let frown = on("frown");
    let mut bend = if smile { -0.08 } else { 0.0 };
    if on("lip_corner_depressor") {
        bend += 0.05;
    }

    let mut out = vec![0.0; 3 * side * side];
    let plane = side * side;
    let inv = 1.0 / (2 * side) as f64;
    for i in 0..side {
        let v = (2 * i + 1) as f64 * inv - 0.5;
        let y = (v - geo.face_cy) / scale + geo.face_cy;
        for j in 0..side {
            let u = (2 * j + 1) as f64 * inv - 0.5;
            let x = (u - style.offset_x) / scale;
            let ax = x.abs();
            let s = if x < 0.0 { Side::Left } else { Side::Right };
            let mut c = Canvas { color: background, aa: 1.0 / (side as f64 * scale) };

            c.paint(ellipse(x, y, 0.0, geo.face_cy, geo.face_rx, geo.face_ry), skin, 1.0);
            if smile {
                c.paint(ellipse(ax, y, geo.cheek_x, geo.cheek_y, 0.09, 0.07), BLUSH_COLOR, 1.0);
            }
            c.paint(capsule(x, y, [0.0, geo.nose_y - 0.13], [0.0, geo.nose_y - 0.01], 0.012), shade(skin, 0.75), 1.0);
            c.paint(ellipse(x, y, 0.0, geo.nose_y, 0.06, 0.025), shade(skin, 0.8), 1.0);
            if on("nose_wrinkle") {
                c.paint(ellipse(x, y, 0.0, geo.nose_y - 0.07, 0.24, 0.05), shade(skin, 0.55), 1.0);
                for dy in [-0.09, -0.055] {
                    let yy = geo.nose_y + dy;
                    c.paint(capsule(x, y, [-0.07, yy], [0.07, yy], 0.012), WRINKLE_COLOR, 1.0);
                }
            }

            let raise = if side_on("brow_raise", s) { 0.07 } else { 0.0 };
            let inner_drop = if frown { 0.07 } else { 0.0 };
            let drop = if frown { 0.05 } else { 0.0 };
            let inner = [0.07, geo.brow_y - raise + drop + inner_drop];
            let outer = [0.29, geo.brow_y - raise + drop];
            c.paint(capsule(ax, y, inner, outer, geo.brow_radius), BROW_COLOR, 1.0);
            if frown {
                c.paint(ellipse(x, y, 0.0, geo.brow_y + 0.03, 0.09, 0.06), shade(skin, 0.55), 1.0);
                c.paint(capsule(ax, y, [0.03, geo.brow_y - 0.02], [0.03, geo.brow_y + 0.07], 0.012), WRINKLE_COLOR, 1.0);
            }

            if side_on("eye_closed", s) {
                c.paint(ellipse(ax, y, geo.eye_x, geo.eye_y, 0.08, 0.05), shade(skin, 0.45), 1.0);
                c.paint(parabola_stroke(ax - geo.eye_x, y, geo.eye_y + 0.01, -0.015, 0.08, 0.014), LID_COLOR, 1.0);
            } else {
                let white = ellipse(ax, y, geo.eye_x, geo.eye_y, 0.08, 0.05);
                c.paint(white, SCLERA_COLOR, 1.0);
                let iris = ellipse(ax, y, geo.eye_x, geo.eye_y, 0.03, 0.03).max(white);
                c.paint(iris, IRIS_COLOR, 1.0);
            }

            if on("chin_raiser") {
                c.paint(ellipse(x, y, 0.0, geo.mouth_y + 0.14, 0.08, 0.035), shade(skin, 0.7), 1.0);
            }
            if on("mouth_open") {
                c.paint(ellipse(x, y, 0.0, geo.mouth_y + 0.015, 0.12, 0.08), MOUTH_CAVITY_COLOR, 1.0);
            }
            c.paint(parabola_stroke(x, y, geo.mouth_y, bend, geo.mouth_half_width, 0.018), LIP_COLOR, 1.0);
            if side_on("dimple", s) {
                c.paint(ellipse(ax, y, geo.mouth_half_width + 0.05, geo.mouth_y + bend, 0.022, 0.022), WRINKLE_COLOR, 1.0);
            }

            for (ch, &val) in c.color.iter().enumerate() {
                out[ch * plane + i * side + j] = val.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_f64(&[3, side, side], &out)
}
