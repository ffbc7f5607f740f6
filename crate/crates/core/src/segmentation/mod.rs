//! Target-object masks: acquisition from a referring-segmentation model, a
//! PNG file or a synthetic shape, plus the small mask utilities the losses use.

mod external;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Scalar;

pub use external::{postprocess_raw_mask, HttpSegmenter, RawMaskGrid, RawMaskKind, ReferringSegmenter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect,
    Ellipse,
}

/// Synthetic mask region in normalized `[0,1]` image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl ShapeSpec {
    pub fn rect(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            shape: Shape::Rect,
            cx,
            cy,
            w,
            h,
        }
    }

    pub fn left_half() -> Self {
        Self::rect(0.25, 0.5, 0.5, 1.0)
    }

    /// Rasterizes at pixel centres: 1 inside the shape, 0 outside.
    pub fn rasterize<T: Scalar>(&self, height: usize, width: usize) -> Mask<T> {
        Mask::from_fn(height, width, |y, x| {
            let u = (x as f64 + 0.5) / width as f64;
            let v = (y as f64 + 0.5) / height as f64;
            let inside = match self.shape {
                Shape::Rect => (u - self.cx).abs() <= self.w / 2.0 && (v - self.cy).abs() <= self.h / 2.0,
                Shape::Ellipse => {
                    let du = (u - self.cx) / (self.w / 2.0);
                    let dv = (v - self.cy) / (self.h / 2.0);
                    du * du + dv * dv <= 1.0
                }
            };
            if inside {
                T::one()
            } else {
                T::zero()
            }
        })
    }
}

/// Where the target mask comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskProvider {
    /// HTTP referring-segmentation service, see [`HttpSegmenter`].
    ExternalModel {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    /// 8-bit grayscale PNG, 255 = target.
    File {
        path: PathBuf,
    },
    Synthetic(ShapeSpec),
}

fn default_timeout() -> u64 {
    120
}

impl MaskProvider {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MaskProvider::ExternalModel { .. } => "external_model",
            MaskProvider::File { .. } => "file",
            MaskProvider::Synthetic(_) => "synthetic",
        }
    }
}

/// Produces a mask with the image's spatial size and values in `[0,1]`.
pub fn get_mask<T: Scalar>(image: &Image<T>, object_text: &str, provider: &MaskProvider) -> Result<Mask<T>> {
    match provider {
        MaskProvider::Synthetic(spec) => Ok(spec.rasterize(image.height(), image.width())),
        MaskProvider::File { path } => {
            let mask = Mask::<T>::load_png(path).map_err(|e| Error::Provider(e.to_string()))?;
            if mask.height() != image.height() || mask.width() != image.width() {
                return Err(Error::Provider(format!(
                    "mask {} is {}x{}, image is {}x{}",
                    path.display(),
                    mask.height(),
                    mask.width(),
                    image.height(),
                    image.width()
                )));
            }
            Ok(mask)
        }
        MaskProvider::ExternalModel { endpoint, timeout_secs } => {
            let segmenter = HttpSegmenter::new(endpoint.clone(), *timeout_secs);
            get_mask_with(image, object_text, &segmenter)
        }
    }
}

/// Runs a referring-segmentation model and post-processes its output.
pub fn get_mask_with<T: Scalar>(
    image: &Image<T>,
    object_text: &str,
    model: &dyn ReferringSegmenter,
) -> Result<Mask<T>> {
    if object_text.trim().is_empty() {
        return Err(Error::invalid("object description is empty"));
    }
    let raw = model.segment(&image.to_f64(), object_text)?;
    postprocess_raw_mask(&raw, image.height(), image.width())
}

pub fn save_mask<T: Scalar>(mask: &Mask<T>, path: impl AsRef<std::path::Path>) -> Result<()> {
    mask.save_png(path)
}

/// Hard threshold: 1 where `value ≥ threshold`, else 0.
pub fn binarize<T: Scalar>(mask: &Mask<T>, threshold: f64) -> Result<Mask<T>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("binarize threshold {threshold} outside (0,1)")));
    }
    let t = T::of(threshold);
    Ok(Mask::from_fn(mask.height(), mask.width(), |y, x| {
        if mask.get(y, x) >= t {
            T::one()
        } else {
            T::zero()
        }
    }))
}

/// Axis-aligned pixel box, top-left corner at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

pub fn patch_mask_mean<T: Scalar>(mask: &Mask<T>, b: PatchBox) -> Result<T> {
    if b.w == 0 || b.h == 0 || b.x + b.w > mask.width() || b.y + b.h > mask.height() {
        return Err(Error::invalid(format!(
            "box {b:?} is outside the {}x{} mask",
            mask.height(),
            mask.width()
        )));
    }
    let mut sum = T::zero();
    for y in b.y..b.y + b.h {
        for x in b.x..b.x + b.w {
            sum += mask.get(y, x);
        }
    }
    Ok(sum / T::of_usize(b.w * b.h))
}
