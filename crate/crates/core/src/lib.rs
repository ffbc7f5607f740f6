//! Text-guided style transfer restricted to a referred object.
//!
//! An instruction such as "Make the sailboat look like fire" is split into a
//! style description and an object phrase, the object is segmented into a soft
//! mask, and a small convolutional network is fitted per image so that its
//! output moves toward the style in embedding space inside the mask while
//! staying close to the content outside it.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod error;
pub mod image;
pub mod instruction;
pub mod losses;
pub mod perception;
pub mod pipeline;
pub mod resample;
pub mod scalar;
pub mod segmentation;
pub mod stylenet;

pub use error::{Error, Result};
pub use image::{Image, Mask};
pub use instruction::{ParsedInstruction, ParserKind, RawInstruction};
pub use losses::{LossBreakdown, StyleConfig};
pub use perception::{BackendDescriptor, BackendKind, Embedding, Encoder};
pub use pipeline::{AppConfig, Engine, RunManifest, RunReport};
pub use scalar::Scalar;
pub use segmentation::{MaskProvider, ShapeSpec};
pub use stylenet::{CompositeMode, OptimState, StyleNetParams};

pub type Image32 = Image<f32>;
pub type Image64 = Image<f64>;
pub type Mask32 = Mask<f32>;
pub type Mask64 = Mask<f64>;
pub type Embedding32 = Embedding<f32>;
pub type Embedding64 = Embedding<f64>;
pub type StyleNet32 = StyleNetParams<f32>;
pub type StyleNet64 = StyleNetParams<f64>;
pub type Engine32 = Engine<f32>;
pub type Engine64 = Engine<f64>;
