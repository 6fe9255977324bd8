//! Coarse-to-fine face normal estimation.
//!
//! A coarse predictor (U-Net generator trained against a self-attention
//! discriminator) produces an exemplar normal map; a refinement network
//! encodes that exemplar into a 256-d style vector and injects it into a
//! structure decoder through modulated/demodulated convolutions.
//!
//! Everything runs on the small reverse-mode engine in [`autodiff`], so the
//! whole pipeline trains on a CPU and every gradient is checkable against
//! finite differences.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nn;
pub mod optim;
pub mod params;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{DType, Scalar, Tensor};
