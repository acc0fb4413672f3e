//! Mask and map serialization.
//!
//! Masks are single-channel 8-bit PNGs holding `{0, 255}`; on load any
//! nonzero luma counts as foreground. Scalar maps use a debug blob: an
//! 8-byte little-endian `(width: u32, height: u32)` header followed by
//! `width * height` little-endian `f32` values.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, GrayImage, ImageEncoder, RgbImage};

use super::{BinaryMask, ScalarMap};
use crate::error::RasterError;

pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    let (w, h) = mask.dims();
    let data = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    GrayImage::from_raw(w as u32, h as u32, data).expect("buffer sized from mask")
}

pub fn mask_from_gray(img: &GrayImage) -> Result<BinaryMask, RasterError> {
    let bits = img.as_raw().iter().map(|&v| v != 0).collect();
    BinaryMask::from_vec(img.width() as usize, img.height() as usize, bits)
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>, RasterError> {
    let gray = mask_to_gray(mask);
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf).write_image(gray.as_raw(), gray.width(), gray.height(), ExtendedColorType::L8)?;
    Ok(buf)
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask, RasterError> {
    let img = image::load_from_memory(bytes)?;
    mask_from_gray(&img.to_luma8())
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), RasterError> {
    std::fs::write(path, encode_mask_png(mask)?)?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, RasterError> {
    let img = image::ImageReader::open(path)?.with_guessed_format()?.decode()?;
    mask_from_gray(&img.to_luma8())
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage, RasterError> {
    Ok(image::ImageReader::open(path)?.with_guessed_format()?.decode()?.to_rgb8())
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage, RasterError> {
    Ok(image::load_from_memory(bytes)?.to_rgb8())
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>, RasterError> {
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf).write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)?;
    Ok(buf)
}

pub fn encode_scalar_blob(map: &ScalarMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = Vec::with_capacity(8 + 4 * w * h);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for v in map.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_scalar_blob(bytes: &[u8]) -> Result<ScalarMap, RasterError> {
    if bytes.len() < 8 {
        return Err(RasterError::Blob(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let mut rdr = Cursor::new(bytes);
    let mut word = [0u8; 4];
    let mut next = |r: &mut Cursor<&[u8]>| {
        std::io::Read::read_exact(r, &mut word).map(|_| u32::from_le_bytes(word))
    };
    let w = next(&mut rdr)? as usize;
    let h = next(&mut rdr)? as usize;
    let body = &bytes[8..];
    if body.len() != 4 * w * h {
        return Err(RasterError::Blob(format!("{w}x{h} needs {} payload bytes, got {}", 4 * w * h, body.len())));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    ScalarMap::from_vec(w, h, values)
}
