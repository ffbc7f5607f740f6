use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::{bilinear_resize_map, SparseMap};
use crate::scalar::Scalar;

const MIN_PATCH_SIDE: usize = 8;

/// Random perspective distortion: each corner of the patch is pulled inward.
///
/// `offsets[k] = (dx, dy)` for corners in the order top-left, top-right,
/// bottom-right, bottom-left; both components are non-negative magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perspective {
    pub offsets: [(f64, f64); 4],
}

impl Perspective {
    pub fn identity() -> Self {
        Self {
            offsets: [(0.0, 0.0); 4],
        }
    }

    /// Draws corner displacements for a `height × width` patch.
    ///
    /// Consumes exactly eight `f64` uniforms, `dx` then `dy` per corner, so
    /// `|dx| ≤ strength·width/2` and `|dy| ≤ strength·height/2`.
    pub fn sample<R: Rng + ?Sized>(height: usize, width: usize, strength: f64, rng: &mut R) -> Self {
        let max_dx = strength * width as f64 / 2.0;
        let max_dy = strength * height as f64 / 2.0;
        let mut offsets = [(0.0, 0.0); 4];
        for slot in offsets.iter_mut() {
            let dx = rng.random::<f64>() * max_dx;
            let dy = rng.random::<f64>() * max_dy;
            *slot = (dx, dy);
        }
        Self { offsets }
    }

    pub fn is_identity(&self) -> bool {
        self.offsets.iter().all(|&(dx, dy)| dx == 0.0 && dy == 0.0)
    }

    /// Output corner `k` and the displaced source corner it samples from.
    pub fn correspondences(&self, height: usize, width: usize) -> [((f64, f64), (f64, f64)); 4] {
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
        let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let mut out = [((0.0, 0.0), (0.0, 0.0)); 4];
        for k in 0..4 {
            let (cx, cy) = corners[k];
            let (dx, dy) = self.offsets[k];
            out[k] = ((cx, cy), (cx + signs[k].0 * dx, cy + signs[k].1 * dy));
        }
        out
    }

    /// Sparse map of the warp on an `height × width` plane: output pixel `p`
    /// bilinearly samples the source at `H(p)`, with zero fill outside.
    pub fn warp_map(&self, height: usize, width: usize) -> Result<SparseMap> {
        if self.is_identity() {
            return Ok(SparseMap::identity(height, width));
        }
        let hmat = solve_homography(&self.correspondences(height, width))
            .ok_or_else(|| Error::invalid("degenerate perspective corners"))?;
        let mut rows = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (xf, yf) = (x as f64, y as f64);
                let den = hmat[6] * xf + hmat[7] * yf + hmat[8];
                let u = (hmat[0] * xf + hmat[1] * yf + hmat[2]) / den;
                let v = (hmat[3] * xf + hmat[4] * yf + hmat[5]) / den;
                let (x0, y0) = (u.floor(), v.floor());
                let (fx, fy) = (u - x0, v - y0);
                let mut row = Vec::with_capacity(4);
                for (oy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                    for (ox, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                        let (sx, sy) = (x0 + ox, y0 + oy);
                        if sx < 0.0 || sy < 0.0 || sx > (width - 1) as f64 || sy > (height - 1) as f64 {
                            continue;
                        }
                        row.push((sy as usize * width + sx as usize, wy * wx));
                    }
                }
                rows.push(row);
            }
        }
        Ok(SparseMap::from_rows((height, width), (height, width), rows))
    }
}

pub type Point = (f64, f64);

/// Solves for the 3×3 homography (row-major, `h[8] = 1`) sending each first
/// point of a pair onto the second. Returns `None` for singular configurations.
pub fn solve_homography(pairs: &[(Point, Point); 4]) -> Option<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for (k, &((x, y), (u, v))) in pairs.iter().enumerate() {
        a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    // Gaussian elimination with partial pivoting on the augmented system.
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    let pivot_row = a[col];
                    for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                        *dst -= f * src;
                    }
                }
            }
        }
    }
    let mut h = [0.0; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    h[8] = 1.0;
    Some(h)
}

/// Warp followed by bilinear resize to `out_size × out_size`, as one map.
pub fn augment_map(height: usize, width: usize, perspective: &Perspective, out_size: usize) -> Result<SparseMap> {
    let warp = perspective.warp_map(height, width)?;
    let resize = bilinear_resize_map((height, width), (out_size, out_size));
    Ok(warp.then(&resize))
}

/// Random perspective warp of `patch` (corner pull ≤ `strength`·side/2),
/// then resize to `out_size`. Deterministic for a given rng state.
pub fn augment_patch<T: Scalar, R: Rng + ?Sized>(
    patch: &Image<T>,
    strength: f64,
    out_size: usize,
    rng: &mut R,
) -> Result<Image<T>> {
    let (h, w) = (patch.height(), patch.width());
    if h < MIN_PATCH_SIDE || w < MIN_PATCH_SIDE {
        return Err(Error::invalid(format!(
            "patch {h}x{w} is smaller than {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE}"
        )));
    }
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::invalid(format!("augment strength {strength} outside [0,1]")));
    }
    let persp = Perspective::sample(h, w, strength, rng);
    Ok(augment_map(h, w, &persp, out_size)?.apply(patch))
}
