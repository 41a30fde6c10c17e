pub mod augment;
pub mod chess;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod render;
pub mod saliency;
pub mod sample;
pub mod scalar;
pub mod store;
pub mod topdown;

pub use scalar::Real;

pub type SaliencyMapF32 = saliency::SaliencyMap<f32>;
pub type SaliencyMapF64 = saliency::SaliencyMap<f64>;
pub type SampleF32 = sample::Sample<f32>;
pub type SampleF64 = sample::Sample<f64>;
pub type ModelF32 = nn::Model<f32>;
pub type ModelF64 = nn::Model<f64>;
