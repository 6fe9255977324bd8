//! Procedural face-like scenes with exact ground-truth normals, their
//! Lambertian renders, PNG codecs and the on-disk dataset layout.

pub mod codec;
pub mod dataset;
pub mod scene;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use codec::{decode_normal_png, encode_normal_png, load_image_png, save_image_png};
pub use dataset::{build_dataset, load_split, split_indices, Manifest, Sample, Split};
pub use scene::{generate_scene, heightfield_to_normals, render_lambertian, Light, SynthProfile, SynthScene};

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn normalize(v: Vec3) -> Vec3 {
    let n = dot(v, v).sqrt();
    if n == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Per-pixel unit normals (camera space, +z toward the viewer) and validity.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Vec3>,
    pub mask: Vec<bool>,
}

impl NormalMap {
    pub fn new(width: usize, height: usize, normals: Vec<Vec3>, mask: Vec<bool>) -> Result<Self> {
        if normals.len() != width * height || mask.len() != width * height {
            return Err(Error::Invalid(format!(
                "normal map {width}x{height} needs {} entries, got {} normals / {} mask",
                width * height,
                normals.len(),
                mask.len()
            )));
        }
        Ok(NormalMap {
            width,
            height,
            normals,
            mask,
        })
    }

    /// Every pixel valid and facing the camera.
    pub fn flat(width: usize, height: usize) -> Self {
        NormalMap {
            width,
            height,
            normals: vec![[0.0, 0.0, 1.0]; width * height],
            mask: vec![true; width * height],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Channel-major `[3, h, w]` values.
    pub fn to_chw<T: Scalar>(&self) -> Vec<T> {
        let n = self.len();
        let mut out = vec![T::zero(); 3 * n];
        for (p, v) in self.normals.iter().enumerate() {
            for c in 0..3 {
                out[c * n + p] = T::c(v[c]);
            }
        }
        out
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(vec![1, 3, self.height, self.width], self.to_chw()).expect("consistent size")
    }

    /// Reads item `index` of a `[b, 3, h, w]` tensor, renormalizing each pixel.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, index: usize, mask: Vec<bool>) -> Result<Self> {
        let s = t.shape();
        if s.len() != 4 || s[1] != 3 || index >= s[0] {
            return Err(Error::shape("normal_map", format!("cannot take item {index} of {s:?}")));
        }
        let (h, w) = (s[2], s[3]);
        let n = h * w;
        let d = &t.data()[index * 3 * n..(index + 1) * 3 * n];
        let normals = (0..n)
            .map(|p| normalize([d[p].f64(), d[n + p].f64(), d[2 * n + p].f64()]))
            .collect();
        NormalMap::new(w, h, normals, mask)
    }
}

/// RGB image with channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Vec3>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    /// `[1, 3, h, w]` tensor with values mapped from `[0, 1]` to `[-1, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let n = self.width * self.height;
        let mut out = vec![T::zero(); 3 * n];
        for (p, v) in self.pixels.iter().enumerate() {
            for c in 0..3 {
                out[c * n + p] = T::c(2.0 * v[c] - 1.0);
            }
        }
        Tensor::new(vec![1, 3, self.height, self.width], out).expect("consistent size")
    }

    /// Quantizes to 8 bits per channel exactly as the PNG writer does.
    pub fn quantized(&self) -> Self {
        let pixels = self.pixels.iter().map(|v| v.map(|c| to_u8(c) as f64 / 255.0)).collect();
        Image { pixels, ..self.clone() }
    }
}

/// `[0, 1]` to 8 bits, rounding half up.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}
