//! Heightfield scenes: an elliptical dome with wave "wrinkles" and ridges,
//! a smooth albedo and a few directional lights.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, normalize, Image, NormalMap, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Light {
    pub dir: Vec3,
    pub intensity: f64,
}

impl Light {
    pub fn new(dir: Vec3, intensity: f64) -> Self {
        Light {
            dir: normalize(dir),
            intensity,
        }
    }
}

/// Scene statistics. Lengths are fractions of the image size so profiles at
/// different resolutions produce the same shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthProfile {
    pub size: usize,
    /// Range of the dome height relative to the horizontal semi-axis, drawn
    /// per scene. Including 0 keeps the silhouette from giving the shape away.
    pub dome_height: (f64, f64),
    /// Detail amplitude as a fraction of the size. Scales both the wave
    /// noise and the ridges; 0 gives a pure dome.
    pub bump_amplitude: f64,
    pub waves: usize,
    /// Wavelength range of the detail noise, fraction of the size.
    pub wavelength: (f64, f64),
    pub ridges: usize,
    pub max_lights: usize,
}

impl SynthProfile {
    pub fn desk() -> Self {
        SynthProfile {
            size: 64,
            dome_height: (0.0, 0.6),
            bump_amplitude: 0.008,
            waves: 6,
            wavelength: (0.08, 0.2),
            ridges: 2,
            max_lights: 3,
        }
    }

    pub fn full() -> Self {
        SynthProfile {
            size: 256,
            ..Self::desk()
        }
    }

    pub fn with_size(size: usize) -> Self {
        SynthProfile { size, ..Self::desk() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub size: usize,
    /// Row-major elevations in pixel units.
    pub heightfield: Vec<f64>,
    pub albedo: Vec<f64>,
    pub mask: Vec<bool>,
    pub lights: Vec<Light>,
    pub tint: Vec3,
    pub seed: u64,
}

fn unit_from_angles(polar: f64, azimuth: f64) -> Vec3 {
    [polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos()]
}

pub fn generate_scene(seed: u64, prof: &SynthProfile) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = prof.size;
    let sz = n as f64;
    let c = (sz - 1.0) / 2.0;
    let cx = c + rng.gen_range(-0.03..0.03) * sz;
    let cy = c + rng.gen_range(-0.03..0.03) * sz;
    let a = rng.gen_range(0.36..0.44) * sz;
    let b = rng.gen_range(0.42..0.48) * sz;
    let height = rng.gen_range(prof.dome_height.0..=prof.dome_height.1) * a;

    let amp = prof.bump_amplitude * sz;
    let waves: Vec<(f64, f64, f64, f64)> = (0..prof.waves)
        .map(|_| {
            let lambda = rng.gen_range(prof.wavelength.0..prof.wavelength.1) * sz;
            let theta = rng.gen_range(0.0..PI);
            let k = 2.0 * PI / lambda;
            (
                k * theta.cos(),
                k * theta.sin(),
                rng.gen_range(0.0..2.0 * PI),
                amp / (prof.waves as f64).sqrt(),
            )
        })
        .collect();
    // Ridge: (point on line, unit normal of the line, height, width).
    let ridges: Vec<(f64, f64, f64, f64, f64, f64)> = (0..prof.ridges)
        .map(|_| {
            let px = cx + rng.gen_range(-0.15..0.15) * sz;
            let py = cy + rng.gen_range(-0.15..0.15) * sz;
            let theta = rng.gen_range(0.0..PI);
            let h = 4.0 * amp * rng.gen_range(0.5..1.0);
            let w = rng.gen_range(0.03..0.06) * sz;
            (px, py, theta.cos(), theta.sin(), h, w)
        })
        .collect();

    let base_albedo = rng.gen_range(0.55..0.85);
    let albedo_wave = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
    let patches: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                cx + rng.gen_range(-0.2..0.2) * sz,
                cy + rng.gen_range(-0.25..0.05) * sz,
                rng.gen_range(0.05..0.1) * sz,
                rng.gen_range(0.4..0.7),
            )
        })
        .collect();

    let mut heightfield = vec![0.0; n * n];
    let mut albedo = vec![0.0; n * n];
    let mut mask = vec![false; n * n];
    for y in 0..n {
        for x in 0..n {
            let (xf, yf) = (x as f64, y as f64);
            let (u, v) = ((xf - cx) / a, (yf - cy) / b);
            let r2 = u * u + v * v;
            let mut h = height * (1.0 - r2);
            for &(kx, ky, phase, wa) in &waves {
                h += wa * (kx * xf + ky * yf + phase).sin();
            }
            for &(px, py, nx, ny, rh, rw) in &ridges {
                let d = (xf - px) * nx + (yf - py) * ny;
                h += rh * (-d * d / (2.0 * rw * rw)).exp();
            }
            let i = y * n + x;
            heightfield[i] = h;
            mask[i] = r2 < 1.0;
            let mut al = base_albedo
                + 0.08 * (2.0 * PI * xf / sz + albedo_wave.0).sin() * (2.0 * PI * yf / sz + albedo_wave.1).cos();
            for &(px, py, pr, depth) in &patches {
                let d2 = ((xf - px).powi(2) + (yf - py).powi(2)) / (pr * pr);
                al *= 1.0 - (1.0 - depth) * (-d2).exp();
            }
            albedo[i] = al.clamp(0.05, 1.0);
        }
    }

    let count = rng.gen_range(1..=prof.max_lights.max(1));
    let mut lights = Vec::with_capacity(count);
    let polar = rng.gen_range(0.0..35f64).to_radians();
    let az = rng.gen_range(0.0..2.0 * PI);
    lights.push(Light::new(unit_from_angles(polar, az), rng.gen_range(0.7..0.95)));
    for _ in 1..count {
        let polar = rng.gen_range(20.0..60f64).to_radians();
        let az = rng.gen_range(0.0..2.0 * PI);
        lights.push(Light::new(unit_from_angles(polar, az), rng.gen_range(0.1..0.3)));
    }
    let tint = [1.0, rng.gen_range(0.85..0.95), rng.gen_range(0.75..0.9)];

    SynthScene {
        size: n,
        heightfield,
        albedo,
        mask,
        lights,
        tint,
        seed,
    }
}

/// `n = normalize(-dh/dx, -dh/dy, 1)`; x runs along columns, y along rows.
/// Central differences inside, one-sided differences on the border.
pub fn heightfield_to_normals(h: &[f64], width: usize, height: usize, mask: Vec<bool>) -> NormalMap {
    assert_eq!(h.len(), width * height);
    let at = |x: usize, y: usize| h[y * width + x];
    let diff = |lo: f64, hi: f64, span: f64| (hi - lo) / span;
    let mut normals = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let dx = if width < 2 {
                0.0
            } else if x == 0 {
                diff(at(0, y), at(1, y), 1.0)
            } else if x == width - 1 {
                diff(at(x - 1, y), at(x, y), 1.0)
            } else {
                diff(at(x - 1, y), at(x + 1, y), 2.0)
            };
            let dy = if height < 2 {
                0.0
            } else if y == 0 {
                diff(at(x, 0), at(x, 1), 1.0)
            } else if y == height - 1 {
                diff(at(x, y - 1), at(x, y), 1.0)
            } else {
                diff(at(x, y - 1), at(x, y + 1), 2.0)
            };
            normals.push(normalize([-dx, -dy, 1.0]));
        }
    }
    NormalMap::new(width, height, normals, mask).expect("consistent size")
}

impl SynthScene {
    pub fn normals(&self) -> NormalMap {
        heightfield_to_normals(&self.heightfield, self.size, self.size, self.mask.clone())
    }
}

/// Unclamped `albedo * sum(intensity * max(0, n.l))`.
pub fn shade(n: Vec3, albedo: f64, lights: &[Light]) -> f64 {
    albedo * lights.iter().map(|l| l.intensity * dot(n, l.dir).max(0.0)).sum::<f64>()
}

/// Lambertian render, tinted per channel and clamped to `[0, 1]`. Pixels
/// outside the mask are black.
pub fn render_lambertian(scene: &SynthScene, normals: &NormalMap) -> Image {
    let mut img = Image::new(normals.width, normals.height);
    for (i, px) in img.pixels.iter_mut().enumerate() {
        if !normals.mask[i] {
            continue;
        }
        let s = shade(normals.normals[i], scene.albedo[i], &scene.lights);
        *px = [0, 1, 2].map(|c| (s * scene.tint[c]).clamp(0.0, 1.0));
    }
    img
}
