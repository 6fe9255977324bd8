//! Network building blocks and the three networks assembled from them.

pub mod attention;
pub mod cpnet;
pub mod discriminator;
pub mod encoders;
pub mod layers;
pub mod modconv;
pub mod nrnet;
pub mod profile;

pub use attention::SelfAttention;
pub use cpnet::CpNet;
pub use discriminator::Discriminator;
pub use encoders::{FaceEncoder, NormalEncoder};
pub use modconv::ModConv;
pub use nrnet::NrNet;
pub use profile::{ArchProfile, MergeMode, STYLE_DIM};
