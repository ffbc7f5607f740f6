//! Independent f64 reference implementations used as test oracles.
//!
//! Nothing here calls into the crate's numeric code: resizing, warping,
//! pooling, hashing and every loss term are recomputed directly from their
//! definitions. Only the random draws mirror the crate, since the draw order
//! is part of the contract.
#![allow(dead_code)]

pub mod http;

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Planar CHW image.
#[derive(Debug, Clone, PartialEq)]
pub struct Img {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Img {
    pub fn new(c: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut v = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    v.push(f(ci, y, x));
                }
            }
        }
        Self { c, h, w, v }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.v[(c * self.h + y) * self.w + x]
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Img {
        Img::new(self.c, h, w, |c, y, x| self.at(c, y0 + y, x0 + x))
    }
}

pub fn random_img(seed: u64, c: usize, h: usize, w: usize) -> Img {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(c * h * w);
    for _ in 0..c * h * w {
        v.push(rng.random::<f64>());
    }
    Img { c, h, w, v }
}

// ---------- resampling ----------

/// Half-pixel-centre bilinear sample of one channel at output pixel (oy, ox).
fn resize_px(img: &Img, c: usize, oh: usize, ow: usize, oy: usize, ox: usize) -> f64 {
    let coord = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        if i0 + 1 >= n_in {
            (i0, i0, 0.0)
        } else {
            (i0, i0 + 1, s - i0 as f64)
        }
    };
    let (y0, y1, fy) = coord(oy, img.h, oh);
    let (x0, x1, fx) = coord(ox, img.w, ow);
    (1.0 - fy) * ((1.0 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1))
        + fy * ((1.0 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1))
}

pub fn resize(img: &Img, oh: usize, ow: usize) -> Img {
    Img::new(img.c, oh, ow, |c, y, x| resize_px(img, c, oh, ow, y, x))
}

pub fn avg_pool(img: &Img, oh: usize, ow: usize) -> Img {
    Img::new(img.c, oh, ow, |c, oy, ox| {
        let y0 = oy * img.h / oh;
        let y1 = ((oy + 1) * img.h).div_ceil(oh);
        let x0 = ox * img.w / ow;
        let x1 = ((ox + 1) * img.w).div_ceil(ow);
        let mut s = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                s += img.at(c, y, x);
            }
        }
        s / ((y1 - y0) * (x1 - x0)) as f64
    })
}

// ---------- perspective ----------

/// Corner pulls `(dx, dy)` for TL, TR, BR, BL.
pub fn draw_offsets<R: Rng>(h: usize, w: usize, strength: f64, rng: &mut R) -> [(f64, f64); 4] {
    let mut out = [(0.0, 0.0); 4];
    for o in out.iter_mut() {
        let dx = rng.random::<f64>() * strength * w as f64 / 2.0;
        let dy = rng.random::<f64>() * strength * h as f64 / 2.0;
        *o = (dx, dy);
    }
    out
}

/// Homography taking output corners to inward-pulled source corners, via LU.
pub fn homography(h: usize, w: usize, off: &[(f64, f64); 4]) -> SMatrix<f64, 3, 3> {
    let (wm, hm) = ((w - 1) as f64, (h - 1) as f64);
    let dst = [(0.0, 0.0), (wm, 0.0), (wm, hm), (0.0, hm)];
    let src = [
        (off[0].0, off[0].1),
        (wm - off[1].0, off[1].1),
        (wm - off[2].0, hm - off[2].1),
        (off[3].0, hm - off[3].1),
    ];
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for k in 0..4 {
        let ((x, y), (u, v)) = (dst[k], src[k]);
        let r = 2 * k;
        a.set_row(
            r,
            &nalgebra::RowSVector::<f64, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]),
        );
        a.set_row(
            r + 1,
            &nalgebra::RowSVector::<f64, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]),
        );
        b[r] = u;
        b[r + 1] = v;
    }
    let sol = a.lu().solve(&b).expect("non-singular corner system");
    SMatrix::<f64, 3, 3>::new(sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0)
}

/// Perspective warp with bilinear sampling and zero fill.
pub fn warp(img: &Img, off: &[(f64, f64); 4]) -> Img {
    if off.iter().all(|&(a, b)| a == 0.0 && b == 0.0) {
        return img.clone();
    }
    let hm = homography(img.h, img.w, off);
    Img::new(img.c, img.h, img.w, |c, y, x| {
        let p = hm * SVector::<f64, 3>::new(x as f64, y as f64, 1.0);
        let (u, v) = (p[0] / p[2], p[1] / p[2]);
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        let get = |xx: f64, yy: f64| {
            if xx < 0.0 || yy < 0.0 || xx > (img.w - 1) as f64 || yy > (img.h - 1) as f64 {
                0.0
            } else {
                img.at(c, yy as usize, xx as usize)
            }
        };
        (1.0 - fy) * ((1.0 - fx) * get(x0, y0) + fx * get(x0 + 1.0, y0))
            + fy * ((1.0 - fx) * get(x0, y0 + 1.0) + fx * get(x0 + 1.0, y0 + 1.0))
    })
}

// ---------- mock encoder ----------

pub const GRID: usize = 16;

pub struct MockEncoder {
    pub dim: usize,
    pub seed: u64,
    /// Row-major dim × 768.
    pub a: Vec<f64>,
}

impl MockEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (0..dim * 3 * GRID * GRID)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self { dim, seed, a }
    }

    pub fn raw_text(&self, text: &str) -> Vec<f64> {
        text_vector(text, self.dim, self.seed)
    }

    pub fn text(&self, text: &str) -> Vec<f64> {
        unit(self.raw_text(text))
    }

    pub fn image(&self, img: &Img) -> Vec<f64> {
        let g = resize(img, GRID, GRID);
        let n = g.v.len();
        let y = (0..self.dim)
            .map(|r| (0..n).map(|k| self.a[r * n + k] * g.v[k]).sum())
            .collect();
        unit(y)
    }
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        return e;
    }
    v.into_iter().map(|x| x / n).collect()
}

fn fnv(seed: u64, tok: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in seed.to_le_bytes().into_iter().chain(tok.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn text_vector(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for tok in text.split_whitespace() {
        let mut s = fnv(seed, &tok.to_lowercase());
        for o in out.iter_mut() {
            s = s.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            *o += (z >> 11) as f64 * 2f64.powi(-53) * 2.0 - 1.0;
        }
    }
    out
}

// ---------- losses ----------

pub fn directional(e_out: &[f64], e_src: &[f64], t_sty: &[f64], t_src: &[f64]) -> f64 {
    let di: Vec<f64> = e_out.iter().zip(e_src).map(|(a, b)| a - b).collect();
    let dt: Vec<f64> = t_sty.iter().zip(t_src).map(|(a, b)| a - b).collect();
    let ni = di.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nt = dt.iter().map(|x| x * x).sum::<f64>().sqrt();
    if ni < 1e-6 || nt < 1e-6 {
        return 1.0;
    }
    let dot: f64 = di.iter().zip(&dt).map(|(a, b)| a * b).sum();
    1.0 - (dot / (ni * nt)).clamp(-1.0, 1.0)
}

pub fn content(s: &Img, c: &Img) -> f64 {
    let (oh, ow) = ((s.h / 4).max(1), (s.w / 4).max(1));
    let (ps, pc) = (avg_pool(s, oh, ow), avg_pool(c, oh, ow));
    ps.v.iter().zip(&pc.v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ps.v.len() as f64
}

pub fn tv(img: &Img) -> f64 {
    let mut total = 0.0;
    for c in 0..img.c {
        let mut h = 0.0;
        for y in 0..img.h {
            for x in 0..img.w - 1 {
                h += (img.at(c, y, x + 1) - img.at(c, y, x)).powi(2);
            }
        }
        let mut v = 0.0;
        for y in 0..img.h - 1 {
            for x in 0..img.w {
                v += (img.at(c, y + 1, x) - img.at(c, y, x)).powi(2);
            }
        }
        let nh = img.h * (img.w - 1);
        let nv = (img.h - 1) * img.w;
        total += if nh > 0 { h / nh as f64 } else { 0.0 } + if nv > 0 { v / nv as f64 } else { 0.0 };
    }
    total / img.c as f64
}

/// `mask` is row-major H × W.
pub fn mask_term(s: &Img, c: &Img, mask: &[f64]) -> f64 {
    let mut sum = 0.0;
    for ch in 0..s.c {
        for y in 0..s.h {
            for x in 0..s.w {
                sum += (1.0 - mask[y * s.w + x]) * (s.at(ch, y, x) - c.at(ch, y, x)).powi(2);
            }
        }
    }
    sum / s.v.len() as f64
}

pub struct OraclePatch {
    pub x: usize,
    pub y: usize,
    pub offsets: [(f64, f64); 4],
    pub coverage: f64,
}

pub fn draw_patches<R: Rng>(
    mask: &[f64],
    h: usize,
    w: usize,
    size: usize,
    n: usize,
    strength: f64,
    rng: &mut R,
) -> Vec<OraclePatch> {
    (0..n)
        .map(|_| {
            let x = rng.random_range(0..=w - size);
            let y = rng.random_range(0..=h - size);
            let offsets = draw_offsets(size, size, strength, rng);
            let mut s = 0.0;
            for yy in y..y + size {
                for xx in x..x + size {
                    s += mask[yy * w + xx];
                }
            }
            OraclePatch {
                x,
                y,
                offsets,
                coverage: s / (size * size) as f64,
            }
        })
        .collect()
}

pub struct OracleCfg {
    pub lambdas: [f64; 5],
    pub t: f64,
    pub patch_size: usize,
    pub n_patches: usize,
    pub strength: f64,
    pub source_text: String,
}

impl Default for OracleCfg {
    fn default() -> Self {
        Self {
            lambdas: [500.0, 9000.0, 150.0, 2e-3, 1000.0],
            t: 0.7,
            patch_size: 128,
            n_patches: 64,
            strength: 0.5,
            source_text: "a Photo".into(),
        }
    }
}

/// Terms `[dir, patch, content, tv, mask]`, total, and patches kept.
pub fn total(
    s: &Img,
    c: &Img,
    mask: &[f64],
    style: &str,
    cfg: &OracleCfg,
    enc: &MockEncoder,
    seed: u64,
) -> ([f64; 5], f64, usize) {
    let t_sty = enc.text(style);
    let t_src = enc.text(&cfg.source_text);
    let dir = directional(&enc.image(s), &enc.image(c), &t_sty, &t_src);

    let short = s.h.min(s.w);
    let size = cfg.patch_size.min((short / 2).max(8)).min(short);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patches = draw_patches(mask, s.h, s.w, size, cfg.n_patches, cfg.strength, &mut rng);
    let mut psum = 0.0;
    let mut kept = 0;
    for p in patches.iter().filter(|p| p.coverage >= cfg.t) {
        let prep = |img: &Img| resize(&warp(&img.crop(p.y, p.x, size, size), &p.offsets), GRID, GRID);
        psum += directional(&enc.image(&prep(s)), &enc.image(&prep(c)), &t_sty, &t_src);
        kept += 1;
    }
    let patch = if kept == 0 { 0.0 } else { psum / kept as f64 };

    let terms = [dir, patch, content(s, c), tv(s), mask_term(s, c, mask)];
    let l = cfg.lambdas;
    let total = l[0] * terms[0] + l[1] * terms[1] + l[2] * terms[2] + l[3] * terms[3] + cfg.t * l[4] * terms[4];
    (terms, total, kept)
}

// ---------- finite differences ----------

/// Fraction of coordinates where analytic and central-difference gradients
/// agree to relative error `tol`; relative error uses `max(|a|, |n|, 1e-8)`.
pub fn gradient_agreement(
    analytic: &[f64],
    f: impl Fn(usize, f64) -> f64,
    base: &[f64],
    step: f64,
    tol: f64,
) -> (f64, f64) {
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let n = (f(i, base[i] + step) - f(i, base[i] - step)) / (2.0 * step);
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        worst = worst.max(rel);
        if rel < tol {
            ok += 1;
        }
    }
    (ok as f64 / analytic.len() as f64, worst)
}
