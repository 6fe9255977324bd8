//! Architecture profiles: resolution and channel widths for every network.

use crate::error::{Error, Result};

/// Length of the style vector produced by the exemplar encoder.
pub const STYLE_DIM: usize = 256;

/// How a modulated skip feature is fused with the decoder feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergeMode {
    Sum,
    /// Channel concat followed by a 1x1 conv back to the decoder width.
    Concat,
}

impl std::str::FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(MergeMode::Sum),
            "concat" => Ok(MergeMode::Concat),
            _ => Err(Error::Invalid(format!(
                "unknown merge mode `{s}` (expected sum or concat)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchProfile {
    pub name: String,
    /// Square input size in pixels.
    pub resolution: usize,
    /// Widths of the six face-encoder / U-Net levels.
    pub widths: [usize; 6],
    /// Widths of the three FPN stages of the exemplar encoder.
    pub fpn_widths: [usize; 3],
    /// Common FPN channel count after the lateral 1x1 convs.
    pub fpn_dim: usize,
    /// The discriminator inserts self-attention at this spatial size.
    pub attention_resolution: usize,
    /// Largest number of positions (h*w) attention may run on.
    pub attention_cap: usize,
    pub merge: MergeMode,
    pub leaky_slope: f64,
    pub demod_eps: f64,
    pub init_std: f64,
}

impl ArchProfile {
    pub fn desk() -> Self {
        ArchProfile {
            name: "desk".into(),
            resolution: 64,
            widths: [16, 32, 64, 128, 256, 256],
            fpn_widths: [32, 64, 128],
            fpn_dim: 32,
            attention_resolution: 32,
            attention_cap: 64 * 64,
            merge: MergeMode::Sum,
            leaky_slope: 0.2,
            demod_eps: 1e-8,
            init_std: 0.02,
        }
    }

    pub fn full() -> Self {
        ArchProfile {
            name: "full".into(),
            resolution: 256,
            widths: [64, 128, 256, 512, 512, 512],
            fpn_widths: [64, 128, 256],
            fpn_dim: 64,
            ..Self::desk()
        }
    }

    /// Small profile for tests: `widths = base * [1, 2, 2, 2, 2, 2]`.
    pub fn tiny(resolution: usize, base: usize) -> Self {
        ArchProfile {
            name: "tiny".into(),
            resolution,
            widths: [base, 2 * base, 2 * base, 2 * base, 2 * base, 2 * base],
            fpn_widths: [base, 2 * base, 2 * base],
            fpn_dim: base,
            attention_resolution: resolution / 2,
            ..Self::desk()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            _ => Err(Error::Invalid(format!(
                "unknown profile `{name}` (expected desk or full)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.resolution % 32 != 0 {
            return Err(Error::Invalid(format!(
                "resolution {} must be a multiple of 32",
                self.resolution
            )));
        }
        if self.widths.iter().chain(&self.fpn_widths).any(|&w| w == 0) || self.fpn_dim == 0 {
            return Err(Error::Invalid("channel widths must be positive".into()));
        }
        if self.demod_eps <= 0.0 {
            return Err(Error::Invalid("demodulation epsilon must be positive".into()));
        }
        Ok(())
    }
}
