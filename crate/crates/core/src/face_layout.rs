//! Facial landmark positions of the synthetic faces, in normalized image
//! coordinates `(x, y)` with `x` to the right and `y` downwards, both in `[0, 1)`.

pub type Point = [f64; 2];

pub const FACE_CENTER: Point = [0.5, 0.52];
pub const FACE_RADII: [f64; 2] = [0.40, 0.47];

/// Horizontal offset of eyes, brows and cheeks from the vertical midline.
pub const EYE_OFFSET: f64 = 0.18;
pub const EYE_Y: f64 = 0.42;
pub const BROW_Y: f64 = 0.28;
pub const NOSE: Point = [0.5, 0.57];
pub const MOUTH_Y: f64 = 0.74;
pub const MOUTH_HALF_WIDTH: f64 = 0.17;
pub const CHEEK_OFFSET: f64 = 0.27;
pub const CHEEK_Y: f64 = 0.62;

pub const LEFT_EYE: Point = [0.5 - EYE_OFFSET, EYE_Y];
pub const RIGHT_EYE: Point = [0.5 + EYE_OFFSET, EYE_Y];
pub const LEFT_BROW: Point = [0.5 - EYE_OFFSET, BROW_Y];
pub const RIGHT_BROW: Point = [0.5 + EYE_OFFSET, BROW_Y];
pub const BROW_CENTER: Point = [0.5, BROW_Y];
pub const LEFT_MOUTH_CORNER: Point = [0.5 - MOUTH_HALF_WIDTH, MOUTH_Y];
pub const RIGHT_MOUTH_CORNER: Point = [0.5 + MOUTH_HALF_WIDTH, MOUTH_Y];
pub const LEFT_CHEEK: Point = [0.5 - CHEEK_OFFSET, CHEEK_Y];
pub const RIGHT_CHEEK: Point = [0.5 + CHEEK_OFFSET, CHEEK_Y];

/// Regions whose action units co-occur; each pair becomes a patch link.
pub const AU_REGION_PAIRS: [[Point; 2]; 8] = [
    [LEFT_EYE, RIGHT_EYE],
    [LEFT_BROW, RIGHT_BROW],
    [LEFT_BROW, LEFT_EYE],
    [RIGHT_BROW, RIGHT_EYE],
    [LEFT_MOUTH_CORNER, RIGHT_MOUTH_CORNER],
    [LEFT_CHEEK, LEFT_MOUTH_CORNER],
    [RIGHT_CHEEK, RIGHT_MOUTH_CORNER],
    [NOSE, BROW_CENTER],
];
