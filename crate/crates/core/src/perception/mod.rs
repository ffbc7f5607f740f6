//! Text and image embeddings behind a pluggable encoder, plus the random
//! perspective augmentation applied to patches before they are embedded.

mod augment;
mod linear;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub use augment::{augment_map, augment_patch, solve_homography, Perspective, Point};
pub use linear::{mock_text_vector, LinearEncoder, MOCK_INPUT_SIZE};

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    values: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    /// Normalizes `raw` to unit length. A (numerically) zero vector maps to the
    /// first basis vector so downstream cosines stay defined.
    pub fn normalize(raw: Vec<T>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::invalid("embedding has zero dimension"));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding has non-finite components"));
        }
        let norm = raw.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm.to_f64_lossy() < 1e-12 {
            return Ok(Self::basis(raw.len(), 0));
        }
        Ok(Self {
            values: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut values = vec![T::zero(); dim];
        values[index] = T::one();
        Self { values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum()
    }
}

/// A paired text/image encoder with a shared embedding space.
///
/// `image_vjp` pulls a gradient with respect to the normalized image embedding
/// back to the input pixels, which is what lets the losses drive the network.
pub trait Encoder<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Side length patches are resized to before embedding.
    fn input_size(&self) -> usize;

    fn encode_text(&self, text: &str) -> Result<Embedding<T>>;

    fn encode_image(&self, image: &Image<T>) -> Result<Embedding<T>>;

    fn image_vjp(&self, image: &Image<T>, grad: &[T]) -> Result<Image<T>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Real,
    Mock,
}

/// Which encoder to load and how.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub dim: usize,
    pub weights_path: Option<PathBuf>,
    /// Mock only.
    pub seed: u64,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        Self::mock(0)
    }
}

impl BackendDescriptor {
    pub fn mock(seed: u64) -> Self {
        Self {
            kind: BackendKind::Mock,
            dim: 512,
            weights_path: None,
            seed,
        }
    }

    pub fn real(weights_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Real,
            dim: 512,
            weights_path: Some(weights_path.into()),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("backend dim must be positive".into()));
        }
        if self.kind == BackendKind::Real && self.weights_path.is_none() {
            return Err(Error::Config("real backend requires weights_path".into()));
        }
        Ok(())
    }
}

/// Instantiates the encoder described by `desc`.
pub fn load_backend<T: Scalar>(desc: &BackendDescriptor) -> Result<Arc<dyn Encoder<T>>> {
    desc.validate()?;
    match desc.kind {
        BackendKind::Mock => Ok(Arc::new(LinearEncoder::<T>::mock(desc.dim, desc.seed))),
        BackendKind::Real => {
            let path = desc.weights_path.as_ref().expect("validated above");
            let enc = LinearEncoder::<T>::from_checkpoint(path)?;
            if enc.dim() != desc.dim {
                return Err(Error::Backend(format!(
                    "checkpoint embedding dim {} does not match configured dim {}",
                    enc.dim(),
                    desc.dim
                )));
            }
            Ok(Arc::new(enc))
        }
    }
}
