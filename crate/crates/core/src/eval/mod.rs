//! Angular-error evaluation, error-map and shading renders.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::codec::save_rgb8_png;
use crate::synth::{dot, Image, NormalMap, Vec3};

pub const THRESHOLDS_DEG: [f64; 3] = [20.0, 25.0, 30.0];

/// Error-map colormap: a two-stop linear ramp over `[0, ERROR_MAP_MAX_DEG]`.
pub const ERROR_MAP_MAX_DEG: f64 = 45.0;
pub const ERROR_MAP_LOW: [u8; 3] = [20, 12, 80];
pub const ERROR_MAP_HIGH: [u8; 3] = [255, 236, 60];

/// Elevation of the cone lights in the shading suite, degrees above the image plane.
pub const CONE_ELEVATION_DEG: f64 = 45.0;
pub const DEFAULT_SHADING_LIGHTS: usize = 7;

/// Per-pixel angular error in degrees. Entries outside `mask` are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    pub width: usize,
    pub height: usize,
    pub degrees: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ErrorMap {
    pub fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.degrees.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(&d, _)| d)
    }
}

pub fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Pixels are compared where both maps are valid.
pub fn angular_error_map(pred: &NormalMap, gt: &NormalMap) -> Result<ErrorMap> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::shape(
            "angular_error_map",
            format!("{}x{} vs {}x{}", pred.width, pred.height, gt.width, gt.height),
        ));
    }
    let mask: Vec<bool> = pred.mask.iter().zip(&gt.mask).map(|(&a, &b)| a && b).collect();
    let degrees = pred
        .normals
        .iter()
        .zip(&gt.normals)
        .zip(&mask)
        .map(|((&a, &b), &m)| if m { angle_deg(a, b) } else { 0.0 })
        .collect();
    Ok(ErrorMap {
        width: gt.width,
        height: gt.height,
        degrees,
        mask,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mean_deg: f64,
    pub std_deg: f64,
    pub pct_lt20: f64,
    pub pct_lt25: f64,
    pub pct_lt30: f64,
    pub n_pixels: usize,
}

/// Pooled statistics over every valid pixel of every map, in map then pixel
/// order. The std is the population std.
pub fn compute_metrics(maps: &[ErrorMap]) -> Result<MetricsReport> {
    let values: Vec<f64> = maps.iter().flat_map(|m| m.valid()).collect();
    metrics_from_values(&values)
}

pub fn metrics_from_values(values: &[f64]) -> Result<MetricsReport> {
    if values.is_empty() {
        return Err(Error::Invalid("no valid pixels to evaluate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let pct = |t: f64| values.iter().filter(|&&v| v < t).count() as f64 / n * 100.0;
    Ok(MetricsReport {
        mean_deg: mean,
        std_deg: var.sqrt(),
        pct_lt20: pct(THRESHOLDS_DEG[0]),
        pct_lt25: pct(THRESHOLDS_DEG[1]),
        pct_lt30: pct(THRESHOLDS_DEG[2]),
        n_pixels: values.len(),
    })
}

impl MetricsReport {
    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("mean_deg", self.mean_deg),
            ("std_deg", self.std_deg),
            ("pct_lt20", self.pct_lt20),
            ("pct_lt25", self.pct_lt25),
            ("pct_lt30", self.pct_lt30),
            ("n_pixels", self.n_pixels as f64),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.rows() {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pixels      {}", self.n_pixels)?;
        writeln!(f, "mean ± std  {:.3}° ± {:.3}", self.mean_deg, self.std_deg)?;
        writeln!(f, "< 20°       {:.2}%", self.pct_lt20)?;
        writeln!(f, "< 25°       {:.2}%", self.pct_lt25)?;
        write!(f, "< 30°       {:.2}%", self.pct_lt30)
    }
}

/// Colormap lookup; NaN maps to the top stop.
pub fn error_color(deg: f64) -> [u8; 3] {
    let t = if deg.is_nan() {
        1.0
    } else {
        (deg / ERROR_MAP_MAX_DEG).clamp(0.0, 1.0)
    };
    [0, 1, 2].map(|c| {
        let (lo, hi) = (ERROR_MAP_LOW[c] as f64, ERROR_MAP_HIGH[c] as f64);
        (lo + t * (hi - lo) + 0.5).floor() as u8
    })
}

/// RGB8 pixels, invalid pixels black.
pub fn render_error_map(errors: &ErrorMap) -> Vec<[u8; 3]> {
    errors
        .degrees
        .iter()
        .zip(&errors.mask)
        .map(|(&d, &m)| if m { error_color(d) } else { [0, 0, 0] })
        .collect()
}

pub fn save_error_map(errors: &ErrorMap, path: &Path) -> Result<()> {
    save_rgb8_png(errors.width, errors.height, &render_error_map(errors), path)
}

/// `k` odd: frontal light plus `k - 1` cone lights at azimuths `360 i / (k - 1)`.
/// `k` even: `k` cone lights at azimuths `360 i / k`.
pub fn light_directions(k: usize) -> Result<Vec<Vec3>> {
    if k == 0 {
        return Err(Error::Invalid("shading suite needs at least one light".into()));
    }
    let mut dirs = Vec::with_capacity(k);
    let cone = if k % 2 == 1 {
        dirs.push([0.0, 0.0, 1.0]);
        k - 1
    } else {
        k
    };
    let el = CONE_ELEVATION_DEG.to_radians();
    for i in 0..cone {
        let az = (360.0 * i as f64 / cone as f64).to_radians();
        dirs.push([el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]);
    }
    Ok(dirs)
}

/// One grayscale image `max(0, n.l)` per light, albedo 1; invalid pixels black.
pub fn render_shading_suite(nm: &NormalMap, k: usize) -> Result<Vec<Image>> {
    let lights = light_directions(k)?;
    Ok(lights
        .iter()
        .map(|&l| {
            let mut img = Image::new(nm.width, nm.height);
            for (i, px) in img.pixels.iter_mut().enumerate() {
                if nm.mask[i] {
                    *px = [dot(nm.normals[i], l).max(0.0); 3];
                }
            }
            img
        })
        .collect())
}
