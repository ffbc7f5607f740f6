//! Linear resampling operators over single image planes.
//!
//! Every spatial transform the losses need (bilinear resize, average pooling,
//! perspective warp) is linear in the pixel values once its geometry is fixed,
//! so it is stored as a sparse matrix. The transpose gives the gradient.

use crate::image::Image;
use crate::scalar::Scalar;

/// Sparse `out × in` matrix acting on flattened `H × W` planes (CSR layout).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap {
    in_shape: (usize, usize),
    out_shape: (usize, usize),
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseMap {
    /// Assembles a map from per-output-pixel `(input index, weight)` rows.
    pub fn from_rows(
        in_shape: (usize, usize),
        out_shape: (usize, usize),
        rows: impl IntoIterator<Item = Vec<(usize, f64)>>,
    ) -> Self {
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        for row in rows {
            for (c, w) in row {
                if w != 0.0 {
                    cols.push(c);
                    weights.push(w);
                }
            }
            offsets.push(cols.len());
        }
        debug_assert_eq!(offsets.len(), out_shape.0 * out_shape.1 + 1);
        Self {
            in_shape,
            out_shape,
            offsets,
            cols,
            weights,
        }
    }

    pub fn identity(h: usize, w: usize) -> Self {
        Self::from_rows((h, w), (h, w), (0..h * w).map(|i| vec![(i, 1.0)]))
    }

    pub fn in_shape(&self) -> (usize, usize) {
        self.in_shape
    }

    pub fn out_shape(&self) -> (usize, usize) {
        self.out_shape
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// Matrix product `next ∘ self`.
    pub fn then(&self, next: &SparseMap) -> SparseMap {
        assert_eq!(self.out_shape, next.in_shape, "incompatible sparse maps");
        let n_out = next.out_shape.0 * next.out_shape.1;
        let rows = (0..n_out).map(|r| {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for (mid, w1) in next.row(r) {
                for (src, w0) in self.row(mid) {
                    match acc.iter_mut().find(|(c, _)| *c == src) {
                        Some(slot) => slot.1 += w1 * w0,
                        None => acc.push((src, w1 * w0)),
                    }
                }
            }
            acc.sort_by_key(|(c, _)| *c);
            acc
        });
        SparseMap::from_rows(self.in_shape, next.out_shape, rows.collect::<Vec<_>>())
    }

    /// Applies the map to every channel of `img`.
    pub fn apply<T: Scalar>(&self, img: &Image<T>) -> Image<T> {
        assert_eq!((img.height(), img.width()), self.in_shape);
        let (oh, ow) = self.out_shape;
        let mut out = Image::zeros(img.channels(), oh, ow);
        for c in 0..img.channels() {
            let src = img.plane(c);
            let dst = out.plane_mut(c);
            for (r, d) in dst.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (col, w) in self.row(r) {
                    acc += T::of(w) * src[col];
                }
                *d = acc;
            }
        }
        out
    }

    /// Applies the transpose; maps output-space gradients back to input space.
    pub fn apply_transpose<T: Scalar>(&self, grad: &Image<T>) -> Image<T> {
        assert_eq!((grad.height(), grad.width()), self.out_shape);
        let (ih, iw) = self.in_shape;
        let mut out = Image::zeros(grad.channels(), ih, iw);
        for c in 0..grad.channels() {
            let g = grad.plane(c);
            let dst = out.plane_mut(c);
            for (r, &gv) in g.iter().enumerate() {
                if gv == T::zero() {
                    continue;
                }
                for (col, w) in self.row(r) {
                    dst[col] += T::of(w) * gv;
                }
            }
        }
        out
    }
}

/// Source coordinate and interpolation taps for one output index under
/// half-pixel-centre bilinear resizing.
fn bilinear_taps(dst: usize, in_len: usize, out_len: usize) -> [(usize, f64); 2] {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = if i0 == in_len - 1 { 0.0 } else { src - i0 as f64 };
    [(i0, 1.0 - frac), (i1, frac)]
}

/// Bilinear resize with half-pixel centres and edge clamping, no antialiasing.
pub fn bilinear_resize_map(in_shape: (usize, usize), out_shape: (usize, usize)) -> SparseMap {
    let (ih, iw) = in_shape;
    let (oh, ow) = out_shape;
    let mut rows = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let ty = bilinear_taps(y, ih, oh);
        for x in 0..ow {
            let tx = bilinear_taps(x, iw, ow);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
            for &(sy, wy) in &ty {
                for &(sx, wx) in &tx {
                    let col = sy * iw + sx;
                    let w = wy * wx;
                    match row.iter_mut().find(|(c, _)| *c == col) {
                        Some(slot) => slot.1 += w,
                        None => row.push((col, w)),
                    }
                }
            }
            rows.push(row);
        }
    }
    SparseMap::from_rows(in_shape, out_shape, rows)
}

/// Adaptive average pooling: output cell `i` averages input rows
/// `floor(i·in/out) .. ceil((i+1)·in/out)`, likewise for columns.
pub fn adaptive_avg_pool_map(in_shape: (usize, usize), out_shape: (usize, usize)) -> SparseMap {
    let (ih, iw) = in_shape;
    let (oh, ow) = out_shape;
    let bounds = |i: usize, n_in: usize, n_out: usize| {
        let lo = i * n_in / n_out;
        let hi = ((i + 1) * n_in).div_ceil(n_out);
        lo..hi
    };
    let mut rows = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let ys = bounds(y, ih, oh);
        for x in 0..ow {
            let xs = bounds(x, iw, ow);
            let w = 1.0 / (ys.len() * xs.len()) as f64;
            rows.push(
                ys.clone()
                    .flat_map(|sy| xs.clone().map(move |sx| (sy * iw + sx, w)))
                    .collect(),
            );
        }
    }
    SparseMap::from_rows(in_shape, out_shape, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image<f64> {
        Image::from_fn(1, h, w, |_, y, x| (y * w + x) as f64)
    }

    #[test]
    fn same_size_bilinear_is_identity() {
        let img = ramp(5, 7);
        let out = bilinear_resize_map((5, 7), (5, 7)).apply(&img);
        assert_eq!(out, img);
    }

    #[test]
    fn bilinear_downsample_by_two_averages_pairs() {
        // Half-pixel centres land exactly between source pixels.
        let img = Image::from_vec(1, 1, 4, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let out = bilinear_resize_map((1, 4), (1, 2)).apply(&img);
        assert_eq!(out.data(), &[1.0, 5.0]);
    }

    #[test]
    fn avg_pool_matches_block_means() {
        let img = ramp(4, 4);
        let out = adaptive_avg_pool_map((4, 4), (2, 2)).apply(&img);
        assert_eq!(out.data(), &[2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn transpose_satisfies_adjoint_identity() {
        let map = bilinear_resize_map((6, 5), (4, 9));
        let x = Image::from_fn(2, 6, 5, |c, y, x| ((c + 3 * y + 7 * x) % 5) as f64 - 1.5);
        let g = Image::from_fn(2, 4, 9, |c, y, x| ((2 * c + y + x) % 3) as f64 * 0.3);
        let ax = map.apply(&x);
        let atg = map.apply_transpose(&g);
        let lhs: f64 = ax.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(atg.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn composition_equals_sequential_application() {
        let a = bilinear_resize_map((8, 8), (5, 6));
        let b = adaptive_avg_pool_map((5, 6), (2, 3));
        let x = ramp(8, 8);
        let seq = b.apply(&a.apply(&x));
        let fused = a.then(&b).apply(&x);
        for (p, q) in seq.data().iter().zip(fused.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
