//! PNG codecs.
//!
//! Normal maps are RGBA8: each channel stores `floor((n + 1) / 2 * 255 + 0.5)`
//! and alpha is 255 on valid pixels. Invalid pixels are written as
//! `(0, 0, 0, 0)`. Decoding inverts the mapping and renormalizes.

use std::path::Path;

use image::{ColorType, ImageBuffer, ImageReader, Luma, Rgb, Rgba};

use super::{normalize, to_u8, Image, NormalMap};
use crate::error::{CodecError, Error, Result};

pub fn encode_normal_rgba(nm: &NormalMap) -> Vec<[u8; 4]> {
    nm.normals
        .iter()
        .zip(&nm.mask)
        .map(|(n, &valid)| {
            if !valid {
                return [0, 0, 0, 0];
            }
            let [r, g, b] = n.map(|c| to_u8((c + 1.0) / 2.0));
            [r, g, b, 255]
        })
        .collect()
}

pub fn decode_normal_rgba(width: usize, height: usize, px: &[[u8; 4]]) -> NormalMap {
    let mut normals = Vec::with_capacity(px.len());
    let mut mask = Vec::with_capacity(px.len());
    for p in px {
        let valid = p[3] != 0;
        mask.push(valid);
        normals.push(if valid {
            normalize([0, 1, 2].map(|c| p[c] as f64 / 255.0 * 2.0 - 1.0))
        } else {
            [0.0, 0.0, 1.0]
        });
    }
    NormalMap::new(width, height, normals, mask).expect("consistent size")
}

fn save(path: &Path, result: image::ImageResult<()>) -> Result<()> {
    result.map_err(|e| {
        CodecError::Encode {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
        .into()
    })
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| {
        CodecError::Decode {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
        .into()
    })
}

fn expect_color(path: &Path, found: ColorType, want: ColorType, label: &'static str) -> Result<()> {
    if found != want {
        return Err(CodecError::Format {
            path: path.to_path_buf(),
            expected: label,
            found: format!("{found:?}"),
        }
        .into());
    }
    Ok(())
}

pub fn encode_normal_png(nm: &NormalMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = encode_normal_rgba(nm).into_iter().flatten().collect();
    let buf: ImageBuffer<Rgba<u8>, _> =
        ImageBuffer::from_raw(nm.width as u32, nm.height as u32, raw).expect("sized buffer");
    save(path, buf.save_with_format(path, image::ImageFormat::Png))
}

pub fn decode_normal_png(path: impl AsRef<Path>) -> Result<NormalMap> {
    let path = path.as_ref();
    let img = open(path)?;
    expect_color(path, img.color(), ColorType::Rgba8, "8-bit RGBA")?;
    let rgba = img.into_rgba8();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let px: Vec<[u8; 4]> = rgba.pixels().map(|p| p.0).collect();
    Ok(decode_normal_rgba(w, h, &px))
}

pub fn save_image_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = img.pixels.iter().flat_map(|p| p.map(to_u8)).collect();
    let buf: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, raw).expect("sized buffer");
    save(path, buf.save_with_format(path, image::ImageFormat::Png))
}

pub fn load_image_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = open(path)?;
    expect_color(path, img.color(), ColorType::Rgb8, "8-bit RGB")?;
    let rgb = img.into_rgb8();
    let pixels = rgb.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
    Ok(Image {
        width: rgb.width() as usize,
        height: rgb.height() as usize,
        pixels,
    })
}

/// 8-bit grayscale PNG from values in `[0, 1]`.
pub fn save_gray_png(width: usize, height: usize, values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = values.iter().map(|&v| to_u8(v)).collect();
    let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(width as u32, height as u32, raw).expect("sized buffer");
    save(path, buf.save_with_format(path, image::ImageFormat::Png))
}

/// RGB8 PNG from raw bytes.
pub fn save_rgb8_png(width: usize, height: usize, px: &[[u8; 3]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = px.iter().flatten().copied().collect();
    let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(width as u32, height as u32, raw).expect("sized buffer");
    save(path, buf.save_with_format(path, image::ImageFormat::Png))
}
