use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use safetensors::{Dtype, SafeTensors};

use super::{Embedding, Encoder};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::bilinear_resize_map;
use crate::scalar::Scalar;

/// Side of the square grid the mock encoder downsamples images to.
pub const MOCK_INPUT_SIZE: usize = 16;

const RANGE_TOLERANCE: f64 = 1e-4;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

/// Unnormalized mock text vector: each lowercase whitespace token is hashed
/// (FNV-1a over the seed's little-endian bytes followed by the token bytes)
/// into a SplitMix64 stream of `dim` uniforms in `[-1, 1)`; token vectors are summed.
pub fn mock_text_vector(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for tok in tokens(text) {
        let mut state = fnv1a(seed, tok.as_bytes());
        for slot in acc.iter_mut() {
            let bits = splitmix64(&mut state) >> 11;
            *slot += bits as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        }
    }
    acc
}

#[derive(Debug, Clone)]
enum TextTable<T> {
    Hashed { seed: u64 },
    Lookup { vocab: usize, rows: Vec<T> },
}

/// Image encoder that resizes to a fixed square grid and applies a linear
/// projection; text is embedded by hashed token lookup.
///
/// The mock backend uses a seeded standard-normal projection over a 16×16
/// grid. The checkpoint backend loads the same structure from safetensors.
#[derive(Debug, Clone)]
pub struct LinearEncoder<T> {
    dim: usize,
    side: usize,
    /// Row-major `dim × (3·side·side)`, columns in channel-major pixel order.
    projection: Vec<T>,
    text: TextTable<T>,
}

impl<T: Scalar> LinearEncoder<T> {
    pub fn mock(dim: usize, seed: u64) -> Self {
        let side = MOCK_INPUT_SIZE;
        let cols = 3 * side * side;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..dim * cols)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::of(v)
            })
            .collect();
        Self {
            dim,
            side,
            projection,
            text: TextTable::Hashed { seed },
        }
    }

    /// Loads `image_projection` (`[D, 3, R, R]`) and `token_embedding`
    /// (`[V, D]`) f32 tensors from a safetensors file.
    pub fn from_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::Backend(format!("reading {}: {e}", path.display())))?;
        let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Backend(format!("{}: {e}", path.display())))?;
        let load = |name: &str| -> Result<(Vec<usize>, Vec<T>)> {
            let view = st
                .tensor(name)
                .map_err(|e| Error::Backend(format!("tensor {name}: {e}")))?;
            if view.dtype() != Dtype::F32 {
                return Err(Error::Backend(format!("tensor {name} must be f32")));
            }
            let data = view
                .data()
                .chunks_exact(4)
                .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
                .collect();
            Ok((view.shape().to_vec(), data))
        };
        let (pshape, projection) = load("image_projection")?;
        let (tshape, rows) = load("token_embedding")?;
        match (pshape.as_slice(), tshape.as_slice()) {
            ([d, 3, r, r2], [v, d2]) if r == r2 && d == d2 && *d > 0 && *v > 0 && *r > 0 => Ok(Self {
                dim: *d,
                side: *r,
                projection,
                text: TextTable::Lookup { vocab: *v, rows },
            }),
            _ => Err(Error::Backend(format!(
                "unexpected checkpoint shapes: image_projection {pshape:?}, token_embedding {tshape:?}"
            ))),
        }
    }

    fn cols(&self) -> usize {
        3 * self.side * self.side
    }

    fn project(&self, image: &Image<T>) -> Result<Vec<T>> {
        if image.channels() != 3 || image.height() == 0 || image.width() == 0 {
            return Err(Error::invalid(format!(
                "encoder expects a non-empty 3-channel image, got {:?}",
                image.dims()
            )));
        }
        // Resampled patches are convex combinations and may overshoot [0,1] by rounding only.
        let (lo, hi) = (T::of(-RANGE_TOLERANCE), T::of(1.0 + RANGE_TOLERANCE));
        if let Some(v) = image.data().iter().find(|v| !v.is_finite() || **v < lo || **v > hi) {
            return Err(Error::invalid(format!("pixel value {v} outside [0,1]")));
        }
        let map = bilinear_resize_map((image.height(), image.width()), (self.side, self.side));
        let grid = map.apply(image);
        let x = grid.data();
        Ok(self
            .projection
            .chunks_exact(self.cols())
            .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect())
    }
}

impl<T: Scalar> Encoder<T> for LinearEncoder<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn input_size(&self) -> usize {
        self.side
    }

    fn encode_text(&self, text: &str) -> Result<Embedding<T>> {
        if text.trim().is_empty() {
            return Err(Error::invalid("text to encode is empty"));
        }
        let raw = match &self.text {
            TextTable::Hashed { seed } => mock_text_vector(text, self.dim, *seed).into_iter().map(T::of).collect(),
            TextTable::Lookup { vocab, rows } => {
                let mut acc = vec![T::zero(); self.dim];
                for tok in tokens(text) {
                    let r = (fnv1a(0, tok.as_bytes()) % *vocab as u64) as usize;
                    for (a, &v) in acc.iter_mut().zip(&rows[r * self.dim..(r + 1) * self.dim]) {
                        *a += v;
                    }
                }
                acc
            }
        };
        Embedding::normalize(raw)
    }

    fn encode_image(&self, image: &Image<T>) -> Result<Embedding<T>> {
        Embedding::normalize(self.project(image)?)
    }

    fn image_vjp(&self, image: &Image<T>, grad: &[T]) -> Result<Image<T>> {
        if grad.len() != self.dim {
            return Err(Error::invalid("embedding gradient has wrong dimension"));
        }
        let y = self.project(image)?;
        let norm = y.iter().map(|&v| v * v).sum::<T>().sqrt();
        let mut gx = vec![T::zero(); self.cols()];
        if norm.to_f64_lossy() >= 1e-12 {
            // d(y/|y|) = (I - e eᵀ) / |y|
            let e: Vec<T> = y.iter().map(|&v| v / norm).collect();
            let proj: T = e.iter().zip(grad).map(|(&a, &b)| a * b).sum();
            for (row, (&g, &ei)) in self.projection.chunks_exact(self.cols()).zip(grad.iter().zip(&e)) {
                let gy = (g - ei * proj) / norm;
                if gy == T::zero() {
                    continue;
                }
                for (acc, &a) in gx.iter_mut().zip(row) {
                    *acc += gy * a;
                }
            }
        }
        let grid_grad = Image::from_vec(3, self.side, self.side, gx)?;
        let map = bilinear_resize_map((image.height(), image.width()), (self.side, self.side));
        Ok(map.apply_transpose(&grid_grad))
    }
}
