//! Image and debug-buffer files.

use std::fs;
use std::path::Path;

use super::{Raster, RenderError};
use crate::engine::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ppm") => ImageFormat::Ppm,
            _ => ImageFormat::Png,
        }
    }
}

fn dims(image: &Tensor) -> Result<(usize, usize), RenderError> {
    match image.shape() {
        [3, h, w] => Ok((*h, *w)),
        s => Err(RenderError::ImageShape(s.to_vec())),
    }
}

/// Interleaved RGB bytes, `round(255·v)` after clamping to `[0, 1]`.
pub fn to_bytes(image: &Tensor) -> Result<Vec<u8>, RenderError> {
    let (h, w) = dims(image)?;
    let plane = h * w;
    let d = image.data();
    let mut out = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            out.push((d[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Binary PPM (P6, maxval 255).
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>, RenderError> {
    let (h, w) = dims(image)?;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(to_bytes(image)?);
    Ok(out)
}

pub fn encode_png(image: &Tensor) -> Result<Vec<u8>, RenderError> {
    let (h, w) = dims(image)?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&to_bytes(image)?)?;
    }
    Ok(out)
}

pub fn write_image(path: &Path, image: &Tensor, format: ImageFormat) -> Result<(), RenderError> {
    let bytes = match format {
        ImageFormat::Ppm => encode_ppm(image)?,
        ImageFormat::Png => encode_png(image)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Face-index buffer dump: `u32 H`, `u32 W`, then `H·W` `i32` indices,
/// all little-endian.
pub fn write_buffer_dump(path: &Path, raster: &Raster) -> Result<(), RenderError> {
    let mut out = Vec::with_capacity(8 + 4 * raster.face_index.len());
    out.extend((raster.height as u32).to_le_bytes());
    out.extend((raster.width as u32).to_le_bytes());
    for &f in &raster.face_index {
        out.extend(f.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dump written by [`write_buffer_dump`] as `(H, W, indices)`.
pub fn read_buffer_dump(bytes: &[u8]) -> Result<(usize, usize, Vec<i32>), RenderError> {
    if bytes.len() < 8 {
        return Err(RenderError::Dump("truncated header".into()));
    }
    let h = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() != h * w * 4 {
        return Err(RenderError::Dump(format!("expected {} indices", h * w)));
    }
    let idx = body
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((h, w, idx))
}
