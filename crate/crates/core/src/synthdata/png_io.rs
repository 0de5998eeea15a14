//! 8-bit RGB PNG encoding of `[3, H, W]` tensors in `[0, 1]`.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
pub fn quantize<T: Element>(image: &Tensor<T>) -> Tensor<T> {
    image.map(|v| T::of_f64(to_byte(v.as_f64()) as f64 / 255.0))
}

pub fn encode_png<T: Element>(image: &Tensor<T>) -> Result<Vec<u8>> {
    let &[3, h, w] = image.shape() else {
        return Err(Error::Shape(format!("PNG export expects [3,H,W], got {:?}", image.shape())));
    };
    let plane = h * w;
    let data = image.data();
    let mut rgb = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            rgb.push(to_byte(data[c * plane + p].as_f64()));
        }
    }
    let mut bytes = Vec::new();
    let mut encoder = png::Encoder::new(&mut bytes, w as u32, h as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let encode_err = |e: png::EncodingError| Error::InvalidArgument(format!("PNG encoding failed: {e}"));
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(&rgb).map_err(encode_err)?;
    writer.finish().map_err(encode_err)?;
    Ok(bytes)
}

pub fn save_png<T: Element>(path: &Path, image: &Tensor<T>) -> Result<()> {
    let bytes = encode_png(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit grey, grey+alpha, RGB or RGBA PNG as `[3, H, W]`; alpha is dropped.
pub fn load_png<T: Element>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e))?;
    let (h, w) = (info.height as usize, info.width as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::format(path, format!("unsupported colour type {other:?}"))),
    };
    let plane = h * w;
    let mut out = vec![T::zero(); 3 * plane];
    for p in 0..plane {
        let px = &buf[p * channels..(p + 1) * channels];
        for c in 0..3 {
            let v = if channels < 3 { px[0] } else { px[c] };
            out[c * plane + p] = T::of_f64(v as f64 / 255.0);
        }
    }
    Tensor::new(&[3, h, w], out)
}
