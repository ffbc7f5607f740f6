//! The composite stylization objective and its gradient with respect to the
//! stylized image.
//!
//! `total = λ_d·dir + λ_p·patch + λ_c·content + λ_tv·tv + t·λ_m·mask`

mod config;
mod directional;
mod patch;
mod pixel;
mod total;

pub use config::StyleConfig;
pub use directional::directional_loss;
pub use patch::{gate_patches, patch_loss, patch_loss_from_samples, sample_patches, PatchLossOutput, PatchSample};
pub use pixel::{
    content_grid, content_loss, content_loss_grad, mask_loss, mask_loss_grad, tv_loss, tv_loss_grad, FeatureExtractor,
};
pub use total::{term_weights, total_loss, weighted_total, LossBreakdown, LossContext};

/// Gradient of the directional loss with respect to `e_out`.
pub fn directional_loss_grad<T: crate::Scalar>(
    e_out: &crate::perception::Embedding<T>,
    e_src_img: &crate::perception::Embedding<T>,
    e_sty_txt: &crate::perception::Embedding<T>,
    e_src_txt: &crate::perception::Embedding<T>,
) -> crate::Result<(T, Vec<T>)> {
    let text_dir = directional::difference(e_sty_txt, e_src_txt)?;
    let (v, g) = directional::directional_with_grad(e_out, e_src_img, &text_dir, true)?;
    Ok((v, g.expect("requested")))
}
