use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::resample::bilinear_resize_map;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawMaskKind {
    /// Unbounded scores; a sigmoid is applied.
    Logits,
    /// Nominally in `[0,1]`; clamped.
    Probabilities,
}

/// Model output at the model's own resolution, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMaskGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub kind: RawMaskKind,
}

/// A referring-image-segmentation model (CRIS or similar) treated as a black box.
pub trait ReferringSegmenter: Send + Sync {
    fn segment(&self, image: &Image<f64>, object_text: &str) -> Result<RawMaskGrid>;
}

/// Converts raw model output into a mask of the requested size: sigmoid for
/// logits, clamp to `[0,1]`, bilinear resize, clamp again.
pub fn postprocess_raw_mask<T: Scalar>(raw: &RawMaskGrid, height: usize, width: usize) -> Result<Mask<T>> {
    if raw.height == 0 || raw.width == 0 || raw.values.len() != raw.height * raw.width {
        return Err(Error::Provider(format!(
            "model returned {} values for a {}x{} grid",
            raw.values.len(),
            raw.height,
            raw.width
        )));
    }
    let probs: Vec<f64> = raw
        .values
        .iter()
        .map(|&v| {
            let p = match raw.kind {
                RawMaskKind::Logits => 1.0 / (1.0 + (-v).exp()),
                RawMaskKind::Probabilities => v,
            };
            if p.is_nan() {
                0.0
            } else {
                p.clamp(0.0, 1.0)
            }
        })
        .collect();
    let grid = Image::from_vec(1, raw.height, raw.width, probs)?;
    let resized = bilinear_resize_map((raw.height, raw.width), (height, width)).apply(&grid);
    Ok(Mask::from_fn(height, width, |y, x| T::of(resized.get(0, y, x))))
}

/// Client for a segmentation service.
///
/// Request: `POST <endpoint>` with JSON
/// `{"text", "width", "height", "image_png_base64"}`.
/// Response: a [`RawMaskGrid`] as JSON
/// (`{"height", "width", "values": [...row-major...], "kind": "logits"|"probabilities"}`).
#[derive(Debug, Clone)]
pub struct HttpSegmenter {
    endpoint: String,
    timeout: Duration,
}

impl HttpSegmenter {
    pub fn new(endpoint: impl Into<String>, timeout_secs: u64) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(timeout_secs),
        }
    }
}

impl ReferringSegmenter for HttpSegmenter {
    fn segment(&self, image: &Image<f64>, object_text: &str) -> Result<RawMaskGrid> {
        let mut png = Vec::new();
        image
            .to_rgb8()?
            .write_to(&mut Cursor::new(&mut png), ::image::ImageFormat::Png)
            .map_err(|e| Error::Provider(format!("encoding image: {e}")))?;
        let body = json!({
            "text": object_text,
            "width": image.width(),
            "height": image.height(),
            "image_png_base64": base64::engine::general_purpose::STANDARD.encode(&png),
        });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| Error::Provider(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Provider(format!("reading segmentation response: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(Error::Provider(format!(
                "segmentation service returned status {status}: {}",
                text.chars().take(200).collect::<String>()
            )));
        }
        serde_json::from_str(&text).map_err(|e| Error::Provider(format!("malformed mask response: {e}")))
    }
}
