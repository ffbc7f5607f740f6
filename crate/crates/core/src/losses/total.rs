use rand::Rng;
use serde::{Deserialize, Serialize};

use super::directional::{difference, directional_with_grad};
use super::patch::{gate_patches, patch_loss_from_samples, sample_patches};
use super::pixel::{content_loss_impl, mask_loss, mask_loss_grad, tv_loss, tv_loss_grad, FeatureExtractor};
use super::StyleConfig;
use crate::error::Result;
use crate::image::{Image, Mask};
use crate::instruction::ParsedInstruction;
use crate::perception::{Embedding, Encoder};
use crate::scalar::Scalar;
use crate::segmentation::binarize;

/// Per-term values of one objective evaluation and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub dir: T,
    pub patch: T,
    pub content: T,
    pub tv: T,
    pub mask: T,
    pub total: T,
    pub patches_used: usize,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn to_f64(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            dir: self.dir.to_f64_lossy(),
            patch: self.patch.to_f64_lossy(),
            content: self.content.to_f64_lossy(),
            tv: self.tv.to_f64_lossy(),
            mask: self.mask.to_f64_lossy(),
            total: self.total.to_f64_lossy(),
            patches_used: self.patches_used,
        }
    }

    /// Name of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("dir", self.dir),
            ("patch", self.patch),
            ("content", self.content),
            ("tv", self.tv),
            ("mask", self.mask),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// The five term weights as applied, in term order dir, patch, content, tv, mask.
/// The mask weight already includes the threshold factor.
pub fn term_weights<T: Scalar>(cfg: &StyleConfig) -> [T; 5] {
    [
        T::of(cfg.lambda_d),
        T::of(cfg.lambda_p),
        T::of(cfg.lambda_c),
        T::of(cfg.lambda_tv),
        T::of(cfg.mask_term_factor()) * T::of(cfg.lambda_m),
    ]
}

/// Weighted sum of the terms; each contribution is `weight · term`.
pub fn weighted_total<T: Scalar>(cfg: &StyleConfig, terms: [T; 5]) -> T {
    let w = term_weights::<T>(cfg);
    w[0] * terms[0] + w[1] * terms[1] + w[2] * terms[2] + w[3] * terms[3] + w[4] * terms[4]
}

/// Everything about the objective that stays fixed across optimization steps:
/// the content image, the mask and the text/content embeddings.
pub struct LossContext<'a, T: Scalar> {
    content: &'a Image<T>,
    mask: Mask<T>,
    cfg: &'a StyleConfig,
    encoder: &'a dyn Encoder<T>,
    perceptual: Option<&'a dyn FeatureExtractor<T>>,
    text_dir: Vec<T>,
    content_embedding: Embedding<T>,
    patch_size: usize,
}

impl<'a, T: Scalar> LossContext<'a, T> {
    pub fn new(
        content: &'a Image<T>,
        mask: &Mask<T>,
        parsed: &ParsedInstruction,
        cfg: &'a StyleConfig,
        encoder: &'a dyn Encoder<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        content.validate_rgb()?;
        mask.ensure_matches(content)?;
        let mask = if cfg.mask_binarize {
            binarize(mask, 0.5)?
        } else {
            mask.clone()
        };
        let style = encoder.encode_text(&parsed.stylized_content)?;
        let source = encoder.encode_text(&cfg.source_text)?;
        Ok(Self {
            content,
            mask,
            cfg,
            encoder,
            perceptual: None,
            text_dir: difference(&style, &source)?,
            content_embedding: encoder.encode_image(content)?,
            patch_size: cfg.effective_patch_size(content.height(), content.width()),
        })
    }

    /// Uses a perceptual feature extractor for the content term.
    pub fn with_perceptual(mut self, fx: &'a dyn FeatureExtractor<T>) -> Self {
        self.perceptual = Some(fx);
        self
    }

    pub fn mask(&self) -> &Mask<T> {
        &self.mask
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn evaluate<R: Rng + ?Sized>(&self, stylized: &Image<T>, rng: &mut R) -> Result<LossBreakdown<T>> {
        Ok(self.run(stylized, rng, false)?.0)
    }

    /// Breakdown plus the gradient of `total` with respect to `stylized`.
    pub fn evaluate_with_grad<R: Rng + ?Sized>(
        &self,
        stylized: &Image<T>,
        rng: &mut R,
    ) -> Result<(LossBreakdown<T>, Image<T>)> {
        let (b, g) = self.run(stylized, rng, true)?;
        Ok((b, g.expect("requested")))
    }

    fn composite(&self, stylized: &Image<T>) -> Image<T> {
        let mut out = stylized.clone();
        let plane = stylized.plane_len();
        for c in 0..stylized.channels() {
            let (s, o) = (stylized.plane(c), self.content.plane(c));
            for (i, v) in out.plane_mut(c).iter_mut().enumerate().take(plane) {
                let m = self.mask.data()[i];
                *v = m * s[i] + (T::one() - m) * o[i];
            }
        }
        out
    }

    fn run<R: Rng + ?Sized>(
        &self,
        stylized: &Image<T>,
        rng: &mut R,
        want_grad: bool,
    ) -> Result<(LossBreakdown<T>, Option<Image<T>>)> {
        stylized.ensure_same_shape(self.content, "stylized vs content")?;
        let cfg = self.cfg;
        let w = term_weights::<T>(cfg);
        let mut grad = want_grad.then(|| stylized.zeros_like());
        let needs = |k: usize| want_grad && w[k] != T::zero();

        // Global directional term.
        let global_input = if cfg.dir_on_composite {
            self.composite(stylized)
        } else {
            stylized.clone()
        };
        let e_out = self.encoder.encode_image(&global_input)?;
        let (dir, g_dir) = directional_with_grad(&e_out, &self.content_embedding, &self.text_dir, needs(0))?;
        if let (Some(total), Some(g_emb)) = (grad.as_mut(), g_dir) {
            let mut g_img = self.encoder.image_vjp(&global_input, &g_emb)?;
            if cfg.dir_on_composite {
                for c in 0..g_img.channels() {
                    for (g, &m) in g_img.plane_mut(c).iter_mut().zip(self.mask.data()) {
                        *g *= m;
                    }
                }
            }
            total.add_scaled(&g_img, w[0]);
        }

        // Patchwise term. Sampling always happens so the rng stream does not
        // depend on the weights.
        let samples = sample_patches(&self.mask, self.patch_size, cfg.n_patches, cfg.augment_strength, rng)?;
        let kept = if cfg.gate_patches {
            gate_patches(&samples, cfg.threshold)
        } else {
            (0..samples.len()).collect()
        };
        let patch = patch_loss_from_samples(
            stylized,
            self.content,
            &samples,
            &kept,
            &self.text_dir,
            cfg.reject_tau,
            self.encoder,
            needs(1),
        )?;
        if let (Some(total), Some(g)) = (grad.as_mut(), patch.grad.as_ref()) {
            total.add_scaled(g, w[1]);
        }

        let (content, g_content) = content_loss_impl(stylized, self.content, self.perceptual, needs(2))?;
        if let (Some(total), Some(g)) = (grad.as_mut(), g_content) {
            total.add_scaled(&g, w[2]);
        }

        let tv = if needs(3) {
            let (v, g) = tv_loss_grad(stylized)?;
            grad.as_mut().expect("grad requested").add_scaled(&g, w[3]);
            v
        } else {
            tv_loss(stylized)?
        };

        let mask = if needs(4) {
            let (v, g) = mask_loss_grad(stylized, self.content, &self.mask)?;
            grad.as_mut().expect("grad requested").add_scaled(&g, w[4]);
            v
        } else {
            mask_loss(stylized, self.content, &self.mask)?
        };

        let terms = [dir, patch.value, content, tv, mask];
        let breakdown = LossBreakdown {
            dir,
            patch: patch.value,
            content,
            tv,
            mask,
            total: weighted_total(cfg, terms),
            patches_used: patch.patches_used,
        };
        Ok((breakdown, grad))
    }
}

/// Evaluates the full objective once.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<T: Scalar, R: Rng + ?Sized>(
    stylized: &Image<T>,
    content: &Image<T>,
    mask: &Mask<T>,
    parsed: &ParsedInstruction,
    cfg: &StyleConfig,
    encoder: &dyn Encoder<T>,
    rng: &mut R,
) -> Result<LossBreakdown<T>> {
    LossContext::new(content, mask, parsed, cfg, encoder)?.evaluate(stylized, rng)
}
