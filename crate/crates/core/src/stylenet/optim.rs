use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{init_params, StyleNetParams, SIZE_MULTIPLE};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::instruction::ParsedInstruction;
use crate::losses::{LossBreakdown, LossContext, StyleConfig};
use crate::perception::Encoder;
use crate::scalar::Scalar;

/// Adam with the usual `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &StyleNetParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut StyleNetParams<T>, grads: &StyleNetParams<T>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let one = T::one();
        let c1 = T::of(1.0 - self.beta1.powi(self.step));
        let c2 = T::of(1.0 - self.beta2.powi(self.step));
        let (lr, eps) = (T::of(lr), T::of(self.eps));
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Progress of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub step: usize,
    pub lr: f64,
    /// Objective evaluated before each update.
    pub loss_history: Vec<LossBreakdown<T>>,
}

/// Step-decayed learning rate.
pub fn learning_rate(cfg: &StyleConfig, step: usize) -> f64 {
    let decay = cfg.decay_step();
    if decay == 0 {
        return cfg.lr;
    }
    cfg.lr * cfg.lr_decay_factor.powi((step / decay) as i32)
}

/// Optimizes a fresh network so that `f(content)` minimizes the objective.
///
/// The image is reflect-padded to a multiple of 8 for the network and cropped
/// back before the loss. Text and content embeddings are computed once.
pub fn optimize<T: Scalar>(
    content: &Image<T>,
    parsed: &ParsedInstruction,
    mask: &Mask<T>,
    cfg: &StyleConfig,
    encoder: &dyn Encoder<T>,
) -> Result<(Image<T>, OptimState<T>)> {
    let ctx = LossContext::new(content, mask, parsed, cfg, encoder)?;
    let (h, w) = (content.height(), content.width());
    let padded = content.reflect_pad_to_multiple(SIZE_MULTIPLE);
    let mut params = init_params::<T>(cfg.seed, cfg.net_widths, cfg.res_blocks);
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimState {
        step: 0,
        lr: cfg.lr,
        loss_history: Vec::with_capacity(cfg.iterations),
    };
    let log_every = (cfg.iterations / 10).max(1);

    for step in 0..cfg.iterations {
        let (out, cache) = params.forward_cached(&padded)?;
        let stylized = out.crop(0, 0, h, w)?;
        let (breakdown, grad) = ctx.evaluate_with_grad(&stylized, &mut rng)?;
        if let Some(term) = breakdown.first_non_finite() {
            return Err(Error::NonFinite {
                term: term.into(),
                step,
            });
        }
        let mut grad_padded = out.zeros_like();
        grad_padded.accumulate_window(0, 0, &grad);
        let grads = params.backward(&cache, &grad_padded);
        let lr = learning_rate(cfg, step);
        adam.update(&mut params, &grads, lr);
        if !params.is_finite() {
            return Err(Error::NonFinite {
                term: "parameters".into(),
                step,
            });
        }
        if step % log_every == 0 || step + 1 == cfg.iterations {
            log::info!(
                "step {step}: total {:.4} (dir {:.4}, patch {:.4} over {}, content {:.5}, tv {:.5}, mask {:.5})",
                breakdown.total,
                breakdown.dir,
                breakdown.patch,
                breakdown.patches_used,
                breakdown.content,
                breakdown.tv,
                breakdown.mask
            );
        }
        state.loss_history.push(breakdown);
        state.step = step + 1;
        state.lr = lr;
    }

    let stylized = params.forward(&padded)?.crop(0, 0, h, w)?;
    Ok((stylized, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeMode {
    #[default]
    Off,
    Soft,
    Hard,
}

/// Blends `M·stylized + (1 − M)·content`; `hard` binarizes the mask at 0.5 first.
pub fn composite<T: Scalar>(stylized: &Image<T>, content: &Image<T>, mask: &Mask<T>, hard: bool) -> Result<Image<T>> {
    stylized.ensure_same_shape(content, "composite")?;
    mask.ensure_matches(stylized)
        .map_err(|e| Error::invalid(format!("composite: {e}")))?;
    let half = T::of(0.5);
    let mut out = stylized.clone();
    for c in 0..stylized.channels() {
        let (s, o) = (stylized.plane(c), content.plane(c));
        for (i, v) in out.plane_mut(c).iter_mut().enumerate() {
            let m = mask.data()[i];
            let m = if hard {
                if m >= half {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                m
            };
            *v = m * s[i] + (T::one() - m) * o[i];
        }
    }
    Ok(out)
}
