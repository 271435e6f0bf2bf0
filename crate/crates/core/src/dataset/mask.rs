//! Mask and image file I/O.
//!
//! Annotations are read from the raw stored samples (palette indices are not
//! expanded to colours), and any nonzero sample marks foreground. Masks are
//! written as 8-bit grayscale PNG with 0 for background and 255 for
//! foreground.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::RgbImage;
use png::{BitDepth, ColorType, Transformations};

use crate::fsutil::write_atomic;
use crate::segmentation::BinaryMask;

#[derive(Debug, thiserror::Error)]
pub enum MaskIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode: {message}")]
    Decode { path: PathBuf, message: String },
}

fn decode_err(path: &Path, e: impl std::fmt::Display) -> MaskIoError {
    MaskIoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> MaskIoError {
    MaskIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads an annotation; nonzero means foreground.
pub fn read_mask(path: &Path) -> Result<BinaryMask, MaskIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if is_png(path) {
        decode_png_mask(&bytes).map_err(|e| decode_err(path, e))
    } else {
        let img = image::load_from_memory(&bytes).map_err(|e| decode_err(path, e))?.into_rgba8();
        let (w, h) = img.dimensions();
        Ok(BinaryMask::from_fn(h as usize, w as usize, |y, x| {
            let p = img.get_pixel(x as u32, y as u32);
            p[0] != 0 || p[1] != 0 || p[2] != 0
        }))
    }
}

fn decode_png_mask(bytes: &[u8]) -> Result<BinaryMask, png::DecodingError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().expect("bounded by decoder limits")];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bits = match info.bit_depth {
        BitDepth::One => 1,
        BitDepth::Two => 2,
        BitDepth::Four => 4,
        BitDepth::Eight => 8,
        BitDepth::Sixteen => 16,
    };
    // Samples per pixel, and how many of them carry colour (alpha is ignored).
    let (samples, colour) = match info.color_type {
        ColorType::Grayscale | ColorType::Indexed => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
    };
    let sample = |row: &[u8], i: usize| -> u32 {
        match bits {
            8 => row[i] as u32,
            16 => u16::from_be_bytes([row[2 * i], row[2 * i + 1]]) as u32,
            b => {
                let per_byte = 8 / b;
                let byte = row[i / per_byte];
                let shift = 8 - b * (i % per_byte + 1);
                ((byte >> shift) & ((1u8 << b) - 1)) as u32
            }
        }
    };
    Ok(BinaryMask::from_fn(h, w, |y, x| {
        let row = &buf[y * info.line_size..(y + 1) * info.line_size];
        (0..colour).any(|c| sample(row, x * samples + c) != 0)
    }))
}

/// 8-bit grayscale PNG, 0 / 255.
pub fn encode_mask_png(mask: &BinaryMask) -> Vec<u8> {
    let (h, w) = mask.dim();
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
    encoder.set_color(ColorType::Grayscale);
    encoder.set_depth(BitDepth::Eight);
    let data: Vec<u8> = mask.as_array().iter().map(|&v| if v { 255 } else { 0 }).collect();
    let mut writer = encoder.write_header().expect("in-memory PNG header");
    writer.write_image_data(&data).expect("in-memory PNG data");
    writer.finish().expect("in-memory PNG trailer");
    out
}

pub fn write_mask(mask: &BinaryMask, path: &Path) -> Result<(), MaskIoError> {
    write_atomic(path, &encode_mask_png(mask)).map_err(|e| io_err(path, e))
}

pub fn read_image(path: &Path) -> Result<RgbImage, MaskIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(image::load_from_memory(&bytes).map_err(|e| decode_err(path, e))?.into_rgb8())
}

pub fn encode_rgb_png(image: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    image
        .write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn write_rgb_png(image: &RgbImage, path: &Path) -> Result<(), MaskIoError> {
    write_atomic(path, &encode_rgb_png(image)).map_err(|e| io_err(path, e))
}
