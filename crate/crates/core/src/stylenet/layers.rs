//! 3×3 convolution, ReLU and nearest-neighbour upsampling with explicit
//! backward passes.

use rayon::prelude::*;

use crate::image::Image;
use crate::scalar::Scalar;

/// 3×3 convolution with zero padding 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    /// `out_ch × in_ch × 3 × 3`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Output indices `o` for which `o·stride + k − 1` lands inside `0..in_len`.
#[inline]
fn valid_range(k: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = if k == 0 { 1usize.div_ceil(stride) } else { 0 };
    let hi = if in_len >= k {
        ((in_len - k) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub fn conv_out_len(in_len: usize, stride: usize) -> usize {
    (in_len - 1) / stride + 1
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, stride: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            stride,
            weight: vec![T::zero(); out_ch * in_ch * 9],
            bias: vec![T::zero(); out_ch],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_ch, self.out_ch, self.stride)
    }

    #[inline]
    fn w(&self, co: usize, ci: usize, ky: usize, kx: usize) -> T {
        self.weight[((co * self.in_ch + ci) * 3 + ky) * 3 + kx]
    }

    pub fn forward(&self, x: &Image<T>) -> Image<T> {
        let (c, h, w) = x.dims();
        assert_eq!(c, self.in_ch, "conv input channels");
        let s = self.stride;
        let (oh, ow) = (conv_out_len(h, s), conv_out_len(w, s));
        let mut out = vec![T::zero(); self.out_ch * oh * ow];
        out.par_chunks_mut(oh * ow).enumerate().for_each(|(co, plane)| {
            plane.fill(self.bias[co]);
            for ci in 0..self.in_ch {
                let src = x.plane(ci);
                for ky in 0..3 {
                    let (oy0, oy1) = valid_range(ky, s, h, oh);
                    for kx in 0..3 {
                        let wv = self.w(co, ci, ky, kx);
                        if wv == T::zero() {
                            continue;
                        }
                        let (ox0, ox1) = valid_range(kx, s, w, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - 1;
                            let row = &src[iy * w..(iy + 1) * w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let shifted = &row[ox0 + kx - 1..ox1 + kx - 1];
                                for (o, &i) in orow[ox0..ox1].iter_mut().zip(shifted) {
                                    *o += wv * i;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    orow[ox] += wv * row[ox * s + kx - 1];
                                }
                            }
                        }
                    }
                }
            }
        });
        Image::from_vec(self.out_ch, oh, ow, out).expect("conv output shape")
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        x: &Image<T>,
        gy: &Image<T>,
        grad: &mut Conv2d<T>,
        need_input_grad: bool,
    ) -> Option<Image<T>> {
        let (_, h, w) = x.dims();
        let (_, oh, ow) = gy.dims();
        let s = self.stride;
        let in_ch = self.in_ch;

        grad.weight
            .par_chunks_mut(in_ch * 9)
            .zip(grad.bias.par_iter_mut())
            .enumerate()
            .for_each(|(co, (gw, gb))| {
                let g = gy.plane(co);
                *gb += g.iter().copied().sum::<T>();
                for ci in 0..in_ch {
                    let src = x.plane(ci);
                    for ky in 0..3 {
                        let (oy0, oy1) = valid_range(ky, s, h, oh);
                        for kx in 0..3 {
                            let (ox0, ox1) = valid_range(kx, s, w, ow);
                            let mut acc = T::zero();
                            for oy in oy0..oy1 {
                                let iy = oy * s + ky - 1;
                                let row = &src[iy * w..(iy + 1) * w];
                                let grow = &g[oy * ow..(oy + 1) * ow];
                                if s == 1 {
                                    let shifted = &row[ox0 + kx - 1..ox1 + kx - 1];
                                    for (&a, &b) in grow[ox0..ox1].iter().zip(shifted) {
                                        acc += a * b;
                                    }
                                } else {
                                    for ox in ox0..ox1 {
                                        acc += grow[ox] * row[ox * s + kx - 1];
                                    }
                                }
                            }
                            gw[(ci * 3 + ky) * 3 + kx] += acc;
                        }
                    }
                }
            });

        if !need_input_grad {
            return None;
        }
        let mut gx = vec![T::zero(); in_ch * h * w];
        gx.par_chunks_mut(h * w).enumerate().for_each(|(ci, plane)| {
            for co in 0..self.out_ch {
                let g = gy.plane(co);
                for ky in 0..3 {
                    let (oy0, oy1) = valid_range(ky, s, h, oh);
                    for kx in 0..3 {
                        let wv = self.w(co, ci, ky, kx);
                        if wv == T::zero() {
                            continue;
                        }
                        let (ox0, ox1) = valid_range(kx, s, w, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - 1;
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            let irow = &mut plane[iy * w..(iy + 1) * w];
                            if s == 1 {
                                let shifted = &mut irow[ox0 + kx - 1..ox1 + kx - 1];
                                for (i, &gv) in shifted.iter_mut().zip(&grow[ox0..ox1]) {
                                    *i += wv * gv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    irow[ox * s + kx - 1] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        });
        Some(Image::from_vec(in_ch, h, w, gx).expect("conv input grad shape"))
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut Image<T>) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_inplace<T: Scalar>(out: &Image<T>, grad: &mut Image<T>) {
    for (g, &o) in grad.data_mut().iter_mut().zip(out.data()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn upsample2<T: Scalar>(x: &Image<T>) -> Image<T> {
    let (c, h, w) = x.dims();
    Image::from_fn(c, 2 * h, 2 * w, |ch, y, xx| x.get(ch, y / 2, xx / 2))
}

pub fn upsample2_backward<T: Scalar>(g: &Image<T>) -> Image<T> {
    let (c, h, w) = g.dims();
    let mut out = Image::zeros(c, h / 2, w / 2);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = out.get(ch, y / 2, x / 2) + g.get(ch, y, x);
                out.set(ch, y / 2, x / 2, v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(conv: &Conv2d<f64>, x: &Image<f64>) -> Image<f64> {
        let (_, h, w) = x.dims();
        let s = conv.stride;
        let (oh, ow) = (conv_out_len(h, s), conv_out_len(w, s));
        Image::from_fn(conv.out_ch, oh, ow, |co, oy, ox| {
            let mut acc = conv.bias[co];
            for ci in 0..conv.in_ch {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let iy = (oy * s + ky) as isize - 1;
                        let ix = (ox * s + kx) as isize - 1;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            acc += conv.w(co, ci, ky, kx) * x.get(ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    fn sample_conv(in_ch: usize, out_ch: usize, stride: usize) -> Conv2d<f64> {
        let mut conv = Conv2d::zeros(in_ch, out_ch, stride);
        for (i, w) in conv.weight.iter_mut().enumerate() {
            *w = ((i * 37 % 17) as f64 - 8.0) / 10.0;
        }
        for (i, b) in conv.bias.iter_mut().enumerate() {
            *b = i as f64 * 0.1;
        }
        conv
    }

    #[test]
    fn forward_matches_naive() {
        for stride in [1, 2] {
            let conv = sample_conv(2, 3, stride);
            let x = Image::from_fn(2, 6, 5, |c, y, xx| ((c * 5 + y * 3 + xx) % 7) as f64 / 7.0);
            let fast = conv.forward(&x);
            let slow = naive_conv(&conv, &x);
            assert_eq!(fast.dims(), slow.dims());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for stride in [1, 2] {
            let conv = sample_conv(2, 2, stride);
            let x = Image::from_fn(2, 5, 6, |c, y, xx| ((c * 3 + y * 5 + xx * 2) % 9) as f64 / 9.0);
            let gy_probe = |o: &Image<f64>| {
                Image::from_fn(o.channels(), o.height(), o.width(), |c, y, xx| {
                    ((c + 2 * y + 3 * xx) % 5) as f64 - 2.0
                })
            };
            let objective = |conv: &Conv2d<f64>, x: &Image<f64>| {
                let o = conv.forward(x);
                let g = gy_probe(&o);
                o.data().iter().zip(g.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let out = conv.forward(&x);
            let gy = gy_probe(&out);
            let mut grad = conv.zeros_like();
            let gx = conv.backward(&x, &gy, &mut grad, true).unwrap();
            let h = 1e-6;
            for i in [0, 5, 17, 30] {
                let mut p = conv.clone();
                p.weight[i] += h;
                let mut m = conv.clone();
                m.weight[i] -= h;
                let fd = (objective(&p, &x) - objective(&m, &x)) / (2.0 * h);
                assert!((fd - grad.weight[i]).abs() < 1e-6, "weight {i}");
            }
            for i in [0, 7, 33, 59] {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let fd = (objective(&conv, &xp) - objective(&conv, &xm)) / (2.0 * h);
                assert!((fd - gx.data()[i]).abs() < 1e-6, "input {i}");
            }
            let bias_fd: f64 = gy.plane(1).iter().sum();
            assert!((bias_fd - grad.bias[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_round_trip_sums() {
        let x = Image::<f64>::from_fn(1, 2, 2, |_, y, xx| (y * 2 + xx) as f64);
        let up = upsample2(&x);
        assert_eq!(up.dims(), (1, 4, 4));
        assert_eq!(up.get(0, 3, 2), 3.0);
        let back = upsample2_backward(&up);
        assert_eq!(back.data(), &[0.0, 4.0, 8.0, 12.0]);
    }
}
