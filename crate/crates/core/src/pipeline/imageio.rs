//! PNG reading and writing at 8 or 16 bits per channel.

use crate::photometric::ImageBuffer;
use crate::streak::RainMask;
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Decodes a PNG into normalized RGB. Gray inputs are expanded, alpha is
/// dropped. The source bit depth is returned so outputs can match it.
pub fn decode_png(bytes: &[u8]) -> Result<(ImageBuffer, BitDepth), image::ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    Ok(from_dynamic(img))
}

pub fn read_png(path: &Path) -> Result<(ImageBuffer, BitDepth), image::ImageError> {
    let bytes = std::fs::read(path).map_err(image::ImageError::IoError)?;
    decode_png(&bytes)
}

fn from_dynamic(img: DynamicImage) -> (ImageBuffer, BitDepth) {
    let (w, h) = (img.width(), img.height());
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    if sixteen {
        let buf = img.into_rgb16();
        let data = buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect();
        (ImageBuffer::new(w, h, data), BitDepth::Sixteen)
    } else {
        let buf = img.into_rgb8();
        let data = buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        (ImageBuffer::new(w, h, data), BitDepth::Eight)
    }
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

fn encode(raw: &[u8], w: u32, h: u32, color: ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(raw, w, h, color)
        .expect("in-memory PNG encoding cannot fail for consistent buffers");
    out
}

fn encode_samples(values: &[f64], w: u32, h: u32, depth: BitDepth, channels: usize) -> Vec<u8> {
    let max = depth.max_value();
    match depth {
        BitDepth::Eight => {
            let raw: Vec<u8> = values.iter().map(|&v| quantize(v, max) as u8).collect();
            let color = if channels == 3 { ExtendedColorType::Rgb8 } else { ExtendedColorType::L8 };
            encode(&raw, w, h, color)
        }
        BitDepth::Sixteen => {
            let raw: Vec<u8> = values
                .iter()
                .flat_map(|&v| (quantize(v, max) as u16).to_ne_bytes())
                .collect();
            let color = if channels == 3 { ExtendedColorType::Rgb16 } else { ExtendedColorType::L16 };
            encode(&raw, w, h, color)
        }
    }
}

pub fn encode_png(image: &ImageBuffer, depth: BitDepth) -> Vec<u8> {
    encode_samples(&image.data, image.width, image.height, depth, 3)
}

/// Masks are always stored as 16-bit grayscale.
pub fn encode_mask_png(mask: &RainMask) -> Vec<u8> {
    encode_samples(&mask.values, mask.width, mask.height, BitDepth::Sixteen, 1)
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<RainMask, image::ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let (w, h) = (img.width(), img.height());
    let values = img.into_luma16().as_raw().iter().map(|&v| v as f64 / 65535.0).collect();
    Ok(RainMask {
        width: w,
        height: h,
        values,
    })
}

/// Lowercase hex SHA-256.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
