use crate::error::{Error, Result};
use crate::perception::Embedding;
use crate::scalar::Scalar;

const DEGENERATE_NORM_SQ: f64 = 1e-12;

/// `1 − cos(ΔI, ΔT)` with `ΔI = e_out − e_src_img` and `ΔT = e_sty_txt − e_src_txt`.
///
/// If either difference has norm below 1e-6 the cosine is taken as 0, giving 1.
pub fn directional_loss<T: Scalar>(
    e_out: &Embedding<T>,
    e_src_img: &Embedding<T>,
    e_sty_txt: &Embedding<T>,
    e_src_txt: &Embedding<T>,
) -> Result<T> {
    let text_dir = difference(e_sty_txt, e_src_txt)?;
    Ok(directional_with_grad(e_out, e_src_img, &text_dir, false)?.0)
}

pub(crate) fn difference<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<Vec<T>> {
    if a.dim() != b.dim() {
        return Err(Error::invalid("embedding dimensions differ"));
    }
    let d: Vec<T> = a.values().iter().zip(b.values()).map(|(&x, &y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite embedding"));
    }
    Ok(d)
}

/// Loss and (optionally) its gradient with respect to `e_out`.
pub(crate) fn directional_with_grad<T: Scalar>(
    e_out: &Embedding<T>,
    e_src_img: &Embedding<T>,
    text_dir: &[T],
    want_grad: bool,
) -> Result<(T, Option<Vec<T>>)> {
    let img_dir = difference(e_out, e_src_img)?;
    if img_dir.len() != text_dir.len() {
        return Err(Error::invalid("image and text embedding dimensions differ"));
    }
    let ni2: T = img_dir.iter().map(|&v| v * v).sum();
    let nt2: T = text_dir.iter().map(|&v| v * v).sum();
    let eps = T::of(DEGENERATE_NORM_SQ);
    if ni2 < eps || nt2 < eps {
        return Ok((T::one(), want_grad.then(|| vec![T::zero(); img_dir.len()])));
    }
    let dot: T = img_dir.iter().zip(text_dir).map(|(&a, &b)| a * b).sum();
    let denom = (ni2 * nt2).sqrt();
    let cos = (dot / denom).max(-T::one()).min(T::one());
    let grad = want_grad.then(|| {
        img_dir
            .iter()
            .zip(text_dir)
            .map(|(&i, &t)| -(t / denom - cos * i / ni2))
            .collect()
    });
    Ok((T::one() - cos, grad))
}
