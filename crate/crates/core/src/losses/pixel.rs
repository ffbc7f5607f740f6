//! Pixel-space loss terms: content, total variation and outside-mask preservation.

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::resample::adaptive_avg_pool_map;
use crate::scalar::Scalar;

/// Differentiable feature extractor for a perceptual content loss.
pub trait FeatureExtractor<T: Scalar>: Send + Sync {
    /// Feature maps at the configured layers.
    fn features(&self, image: &Image<T>) -> Result<Vec<Image<T>>>;

    /// Pulls per-layer feature gradients back to pixels.
    fn vjp(&self, image: &Image<T>, grads: &[Image<T>]) -> Result<Image<T>>;
}

fn mse_with_grad<T: Scalar>(a: &Image<T>, b: &Image<T>, want_grad: bool) -> (T, Option<Image<T>>) {
    let n = T::of_usize(a.data().len().max(1));
    let mut sum = T::zero();
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        sum += d * d;
    }
    let grad = want_grad.then(|| {
        let two_over_n = T::of(2.0) / n;
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| two_over_n * (x - y))
            .collect();
        Image::from_vec(a.channels(), a.height(), a.width(), data).expect("same shape")
    });
    (sum / n, grad)
}

/// Side lengths of the 4× downsampled grid used by the pixel content loss.
pub fn content_grid(height: usize, width: usize) -> (usize, usize) {
    ((height / 4).max(1), (width / 4).max(1))
}

/// Content loss.
///
/// With an extractor: sum over layers of the per-layer mean squared feature
/// distance. Without: mean squared distance after 4× adaptive average pooling.
pub fn content_loss<T: Scalar>(
    stylized: &Image<T>,
    content: &Image<T>,
    perceptual: Option<&dyn FeatureExtractor<T>>,
) -> Result<T> {
    Ok(content_loss_impl(stylized, content, perceptual, false)?.0)
}

pub fn content_loss_grad<T: Scalar>(
    stylized: &Image<T>,
    content: &Image<T>,
    perceptual: Option<&dyn FeatureExtractor<T>>,
) -> Result<(T, Image<T>)> {
    let (v, g) = content_loss_impl(stylized, content, perceptual, true)?;
    Ok((v, g.expect("requested")))
}

pub(crate) fn content_loss_impl<T: Scalar>(
    stylized: &Image<T>,
    content: &Image<T>,
    perceptual: Option<&dyn FeatureExtractor<T>>,
    want_grad: bool,
) -> Result<(T, Option<Image<T>>)> {
    stylized.ensure_same_shape(content, "content loss")?;
    match perceptual {
        Some(fx) => {
            let fs = fx.features(stylized)?;
            let fc = fx.features(content)?;
            if fs.len() != fc.len() {
                return Err(Error::invalid("feature extractor returned inconsistent layers"));
            }
            let mut total = T::zero();
            let mut grads = Vec::with_capacity(fs.len());
            for (a, b) in fs.iter().zip(&fc) {
                a.ensure_same_shape(b, "feature map")?;
                let (v, g) = mse_with_grad(a, b, want_grad);
                total += v;
                grads.extend(g);
            }
            let grad = if want_grad {
                Some(fx.vjp(stylized, &grads)?)
            } else {
                None
            };
            Ok((total, grad))
        }
        None => {
            let map = adaptive_avg_pool_map(
                (stylized.height(), stylized.width()),
                content_grid(stylized.height(), stylized.width()),
            );
            let (ps, pc) = (map.apply(stylized), map.apply(content));
            let (v, g) = mse_with_grad(&ps, &pc, want_grad);
            Ok((v, g.map(|g| map.apply_transpose(&g))))
        }
    }
}

/// Mean over channels of (mean squared horizontal forward difference + mean
/// squared vertical forward difference). A direction with no neighbouring
/// pairs contributes 0; a single-pixel image is rejected.
pub fn tv_loss<T: Scalar>(image: &Image<T>) -> Result<T> {
    Ok(tv_impl(image, false)?.0)
}

pub fn tv_loss_grad<T: Scalar>(image: &Image<T>) -> Result<(T, Image<T>)> {
    let (v, g) = tv_impl(image, true)?;
    Ok((v, g.expect("requested")))
}

fn tv_impl<T: Scalar>(image: &Image<T>, want_grad: bool) -> Result<(T, Option<Image<T>>)> {
    let (c, h, w) = image.dims();
    if h * w < 2 || c == 0 {
        return Err(Error::invalid(format!("image {h}x{w} too small for total variation")));
    }
    let n_h = h * (w - 1);
    let n_v = (h - 1) * w;
    let inv_c = T::one() / T::of_usize(c);
    let wh = if n_h > 0 { inv_c / T::of_usize(n_h) } else { T::zero() };
    let wv = if n_v > 0 { inv_c / T::of_usize(n_v) } else { T::zero() };
    let two = T::of(2.0);
    let mut total = T::zero();
    let mut grad = want_grad.then(|| image.zeros_like());
    for ch in 0..c {
        let mut sh = T::zero();
        let mut sv = T::zero();
        for y in 0..h {
            for x in 0..w {
                let v = image.get(ch, y, x);
                if x + 1 < w {
                    let d = image.get(ch, y, x + 1) - v;
                    sh += d * d;
                    if let Some(g) = grad.as_mut() {
                        let k = two * wh * d;
                        g.set(ch, y, x + 1, g.get(ch, y, x + 1) + k);
                        g.set(ch, y, x, g.get(ch, y, x) - k);
                    }
                }
                if y + 1 < h {
                    let d = image.get(ch, y + 1, x) - v;
                    sv += d * d;
                    if let Some(g) = grad.as_mut() {
                        let k = two * wv * d;
                        g.set(ch, y + 1, x, g.get(ch, y + 1, x) + k);
                        g.set(ch, y, x, g.get(ch, y, x) - k);
                    }
                }
            }
        }
        total += sh * wh + sv * wv;
    }
    Ok((total, grad))
}

/// Mean over pixels and channels of `(1 − M)·(stylized − content)²`.
pub fn mask_loss<T: Scalar>(stylized: &Image<T>, content: &Image<T>, mask: &Mask<T>) -> Result<T> {
    Ok(mask_impl(stylized, content, mask, false)?.0)
}

pub fn mask_loss_grad<T: Scalar>(stylized: &Image<T>, content: &Image<T>, mask: &Mask<T>) -> Result<(T, Image<T>)> {
    let (v, g) = mask_impl(stylized, content, mask, true)?;
    Ok((v, g.expect("requested")))
}

fn mask_impl<T: Scalar>(
    stylized: &Image<T>,
    content: &Image<T>,
    mask: &Mask<T>,
    want_grad: bool,
) -> Result<(T, Option<Image<T>>)> {
    stylized.ensure_same_shape(content, "mask loss")?;
    mask.ensure_matches(stylized)?;
    let n = T::of_usize(stylized.data().len().max(1));
    let plane = stylized.plane_len();
    let mut sum = T::zero();
    let mut grad = want_grad.then(|| stylized.zeros_like());
    for ch in 0..stylized.channels() {
        let (s, c) = (stylized.plane(ch), content.plane(ch));
        for i in 0..plane {
            let keep = T::one() - mask.data()[i];
            let d = s[i] - c[i];
            sum += keep * d * d;
            if let Some(g) = grad.as_mut() {
                g.plane_mut(ch)[i] = T::of(2.0) * keep * d / n;
            }
        }
    }
    Ok((sum / n, grad))
}
