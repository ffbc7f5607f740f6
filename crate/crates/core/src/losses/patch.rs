//! Mask-gated patchwise directional loss.

use rand::Rng;

use super::directional::{difference, directional_with_grad};
use super::StyleConfig;
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::perception::{augment_map, Embedding, Encoder, Perspective};
use crate::scalar::Scalar;
use crate::segmentation::{patch_mask_mean, PatchBox};

/// One randomly drawn patch location with its augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample<T> {
    pub bbox: PatchBox,
    pub perspective: Perspective,
    /// Mean mask value inside the box.
    pub coverage: T,
}

/// Draws `count` square patches of side `size`.
///
/// For every patch the rng yields, in order: the x offset, the y offset (both
/// uniform integers), then the eight perspective uniforms. Draws do not depend
/// on the mask or the threshold, so gating at a higher threshold keeps a
/// subset of the patches kept at a lower one.
pub fn sample_patches<T: Scalar, R: Rng + ?Sized>(
    mask: &Mask<T>,
    size: usize,
    count: usize,
    strength: f64,
    rng: &mut R,
) -> Result<Vec<PatchSample<T>>> {
    let (h, w) = (mask.height(), mask.width());
    if size == 0 || size > h || size > w {
        return Err(Error::invalid(format!(
            "patch size {size} does not fit a {h}x{w} image"
        )));
    }
    (0..count)
        .map(|_| {
            let x = rng.random_range(0..=w - size);
            let y = rng.random_range(0..=h - size);
            let perspective = Perspective::sample(size, size, strength, rng);
            let bbox = PatchBox { x, y, w: size, h: size };
            Ok(PatchSample {
                bbox,
                perspective,
                coverage: patch_mask_mean(mask, bbox)?,
            })
        })
        .collect()
}

/// Indices of samples whose coverage reaches `threshold`.
pub fn gate_patches<T: Scalar>(samples: &[PatchSample<T>], threshold: f64) -> Vec<usize> {
    let t = T::of(threshold);
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.coverage >= t)
        .map(|(i, _)| i)
        .collect()
}

/// Result of one patchwise evaluation.
#[derive(Debug, Clone)]
pub struct PatchLossOutput<T> {
    pub value: T,
    pub patches_used: usize,
    pub grad: Option<Image<T>>,
}

/// Patchwise directional loss over pre-drawn samples.
///
/// Each kept patch of `stylized` and the same-location patch of `content` go
/// through the identical warp+resize, are embedded, and scored with the
/// directional loss against `text_dir`. The mean over kept patches is
/// returned; with `reject_tau` set, patches already below it count as 0.
#[allow(clippy::too_many_arguments)]
pub fn patch_loss_from_samples<T: Scalar>(
    stylized: &Image<T>,
    content: &Image<T>,
    samples: &[PatchSample<T>],
    kept: &[usize],
    text_dir: &[T],
    reject_tau: Option<f64>,
    encoder: &dyn Encoder<T>,
    want_grad: bool,
) -> Result<PatchLossOutput<T>> {
    stylized.ensure_same_shape(content, "patch loss")?;
    let mut grad = want_grad.then(|| stylized.zeros_like());
    if kept.is_empty() {
        return Ok(PatchLossOutput {
            value: T::zero(),
            patches_used: 0,
            grad,
        });
    }
    let inv_n = T::one() / T::of_usize(kept.len());
    let tau = reject_tau.map(T::of);
    let mut sum = T::zero();
    for &i in kept {
        let s = &samples[i];
        let PatchBox { x, y, w, h } = s.bbox;
        let map = augment_map(h, w, &s.perspective, encoder.input_size())?;
        let sty_patch = map.apply(&stylized.crop(y, x, h, w)?);
        let src_patch = map.apply(&content.crop(y, x, h, w)?);
        let e_out = encoder.encode_image(&sty_patch)?;
        let e_src = encoder.encode_image(&src_patch)?;
        let (loss, g_emb) = directional_with_grad(&e_out, &e_src, text_dir, want_grad)?;
        if tau.is_some_and(|tau| loss < tau) {
            continue;
        }
        sum += loss;
        if let (Some(total), Some(g_emb)) = (grad.as_mut(), g_emb) {
            let scaled: Vec<T> = g_emb.into_iter().map(|g| g * inv_n).collect();
            let g_patch = encoder.image_vjp(&sty_patch, &scaled)?;
            total.accumulate_window(y, x, &map.apply_transpose(&g_patch));
        }
    }
    Ok(PatchLossOutput {
        value: sum * inv_n,
        patches_used: kept.len(),
        grad,
    })
}

/// Samples, gates and scores patches in one call. Returns `(loss, patches_used)`.
#[allow(clippy::too_many_arguments)]
pub fn patch_loss<T: Scalar, R: Rng + ?Sized>(
    stylized: &Image<T>,
    content: &Image<T>,
    mask: &Mask<T>,
    e_sty_txt: &Embedding<T>,
    e_src_txt: &Embedding<T>,
    cfg: &StyleConfig,
    encoder: &dyn Encoder<T>,
    rng: &mut R,
) -> Result<(T, usize)> {
    mask.ensure_matches(stylized)?;
    let size = cfg.effective_patch_size(stylized.height(), stylized.width());
    let samples = sample_patches(mask, size, cfg.n_patches, cfg.augment_strength, rng)?;
    let kept = if cfg.gate_patches {
        gate_patches(&samples, cfg.threshold)
    } else {
        (0..samples.len()).collect()
    };
    let text_dir = difference(e_sty_txt, e_src_txt)?;
    let out = patch_loss_from_samples(
        stylized,
        content,
        &samples,
        &kept,
        &text_dir,
        cfg.reject_tau,
        encoder,
        false,
    )?;
    Ok((out.value, out.patches_used))
}
