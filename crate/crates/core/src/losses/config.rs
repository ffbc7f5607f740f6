use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every knob of the objective and the optimizer.
///
/// The weight defaults follow the usual CLIP-guided stylization recipe; the
/// threshold default is 0.7.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StyleConfig {
    /// Whole-image directional loss weight.
    pub lambda_d: f64,
    /// Patchwise directional loss weight.
    pub lambda_p: f64,
    /// Content loss weight.
    pub lambda_c: f64,
    /// Total-variation weight.
    pub lambda_tv: f64,
    /// Outside-mask preservation weight.
    pub lambda_m: f64,
    /// Stylization threshold `t`: multiplies the mask term and gates patches.
    pub threshold: f64,
    /// Apply `t` as a factor on the mask term.
    pub threshold_weights_mask: bool,
    /// Drop patches whose mean mask value is below `t`.
    pub gate_patches: bool,
    /// Requested patch side; capped at half the shorter image side (min 8).
    pub patch_size: usize,
    pub n_patches: usize,
    pub augment_strength: f64,
    /// Patches whose loss already fell below this contribute nothing.
    pub reject_tau: Option<f64>,
    /// Text describing the unstylized source image.
    pub source_text: String,
    /// Embed a mask composite of stylized and content for the global term.
    pub dir_on_composite: bool,
    /// Hard-threshold the mask at 0.5 before use.
    pub mask_binarize: bool,
    pub iterations: usize,
    pub lr: f64,
    /// Step at which the learning rate is multiplied by `lr_decay_factor`;
    /// `None` means halfway through.
    pub lr_decay_step: Option<usize>,
    pub lr_decay_factor: f64,
    pub seed: u64,
    /// Channel widths of the three encoder stages.
    pub net_widths: [usize; 3],
    pub res_blocks: usize,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            lambda_d: 500.0,
            lambda_p: 9000.0,
            lambda_c: 150.0,
            lambda_tv: 2e-3,
            lambda_m: 1000.0,
            threshold: 0.7,
            threshold_weights_mask: true,
            gate_patches: true,
            patch_size: 128,
            n_patches: 64,
            augment_strength: 0.5,
            reject_tau: None,
            source_text: "a Photo".into(),
            dir_on_composite: false,
            mask_binarize: false,
            iterations: 200,
            lr: 5e-4,
            lr_decay_step: None,
            lr_decay_factor: 0.5,
            seed: 0,
            net_widths: [16, 32, 64],
            res_blocks: 3,
        }
    }
}

impl StyleConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_d", self.lambda_d),
            ("lambda_p", self.lambda_p),
            ("lambda_c", self.lambda_c),
            ("lambda_tv", self.lambda_tv),
            ("lambda_m", self.lambda_m),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {w}")));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0,1]", self.threshold)));
        }
        if self.patch_size < 8 {
            return Err(Error::Config("patch_size must be at least 8".into()));
        }
        if self.n_patches == 0 {
            return Err(Error::Config("n_patches must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.augment_strength) {
            return Err(Error::Config("augment_strength outside [0,1]".into()));
        }
        if self.reject_tau.is_some_and(|t| !t.is_finite()) {
            return Err(Error::Config("reject_tau must be finite".into()));
        }
        if self.source_text.trim().is_empty() {
            return Err(Error::Config("source_text is empty".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(self.lr_decay_factor.is_finite() && self.lr_decay_factor > 0.0) {
            return Err(Error::Config("lr_decay_factor must be positive".into()));
        }
        if self.net_widths.contains(&0) {
            return Err(Error::Config("net_widths must be positive".into()));
        }
        Ok(())
    }

    /// Factor applied to `lambda_m · mask`.
    pub fn mask_term_factor(&self) -> f64 {
        if self.threshold_weights_mask {
            self.threshold
        } else {
            1.0
        }
    }

    /// Patch side actually used on an `height × width` image.
    pub fn effective_patch_size(&self, height: usize, width: usize) -> usize {
        let short = height.min(width);
        self.patch_size.min((short / 2).max(8)).min(short)
    }

    pub fn decay_step(&self) -> usize {
        self.lr_decay_step.unwrap_or(self.iterations / 2)
    }
}
