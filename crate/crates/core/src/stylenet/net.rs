use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{relu_backward_inplace, relu_inplace, upsample2, upsample2_backward, Conv2d};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Spatial sides must be multiples of this (three stride-2 stages).
pub const SIZE_MULTIPLE: usize = 8;

/// Parameters of the encoder-decoder `f`.
///
/// Three stride-2 conv stages, residual blocks at the bottleneck, three
/// upsample+conv stages, and a 3-channel head. The head output is added to the
/// input image and clamped to `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleNetParams<T> {
    pub down: Vec<Conv2d<T>>,
    pub res: Vec<[Conv2d<T>; 2]>,
    pub up: Vec<Conv2d<T>>,
    pub head: Conv2d<T>,
}

fn he_conv<T: Scalar>(in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Conv2d<T> {
    let std = (2.0 / (in_ch * 9) as f64).sqrt();
    let mut conv = Conv2d::zeros(in_ch, out_ch, stride);
    for w in conv.weight.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *w = T::of(z * std);
    }
    conv
}

/// Seeded fan-in-scaled normal init; the head is zero so `f(I) = I` at step 0.
pub fn init_params<T: Scalar>(seed: u64, widths: [usize; 3], res_blocks: usize) -> StyleNetParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [w1, w2, w3] = widths;
    let down = vec![
        he_conv(3, w1, 2, &mut rng),
        he_conv(w1, w2, 2, &mut rng),
        he_conv(w2, w3, 2, &mut rng),
    ];
    let res = (0..res_blocks)
        .map(|_| [he_conv(w3, w3, 1, &mut rng), he_conv(w3, w3, 1, &mut rng)])
        .collect();
    let up = vec![
        he_conv(w3, w2, 1, &mut rng),
        he_conv(w2, w1, 1, &mut rng),
        he_conv(w1, w1, 1, &mut rng),
    ];
    StyleNetParams {
        down,
        res,
        up,
        head: Conv2d::zeros(w1, 3, 1),
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Image<T>,
    down: Vec<Image<T>>,
    /// Block input and post-ReLU hidden activation.
    res: Vec<(Image<T>, Image<T>)>,
    /// Upsampled input and post-ReLU output.
    up: Vec<(Image<T>, Image<T>)>,
    pre_clamp: Image<T>,
}

impl<T: Scalar> StyleNetParams<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            down: self.down.iter().map(Conv2d::zeros_like).collect(),
            res: self.res.iter().map(|[a, b]| [a.zeros_like(), b.zeros_like()]).collect(),
            up: self.up.iter().map(Conv2d::zeros_like).collect(),
            head: self.head.zeros_like(),
        }
    }

    fn convs(&self) -> impl Iterator<Item = &Conv2d<T>> {
        self.down
            .iter()
            .chain(self.res.iter().flatten())
            .chain(self.up.iter())
            .chain(std::iter::once(&self.head))
    }

    fn convs_mut(&mut self) -> impl Iterator<Item = &mut Conv2d<T>> {
        self.down
            .iter_mut()
            .chain(self.res.iter_mut().flatten())
            .chain(self.up.iter_mut())
            .chain(std::iter::once(&mut self.head))
    }

    /// All parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.convs()
            .flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.convs_mut()
            .flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Runs `f` on an image whose sides are multiples of 8.
    pub fn forward(&self, image: &Image<T>) -> Result<Image<T>> {
        Ok(self.forward_cached(image)?.0)
    }

    pub fn forward_cached(&self, image: &Image<T>) -> Result<(Image<T>, ForwardCache<T>)> {
        let (c, h, w) = image.dims();
        if c != 3 {
            return Err(Error::invalid(format!("network expects 3 channels, got {c}")));
        }
        if h == 0 || w == 0 || h % SIZE_MULTIPLE != 0 || w % SIZE_MULTIPLE != 0 {
            return Err(Error::invalid(format!(
                "network input {h}x{w} is not a multiple of {SIZE_MULTIPLE}"
            )));
        }
        let mut down = Vec::with_capacity(self.down.len());
        let mut x = image.clone();
        for conv in &self.down {
            let mut y = conv.forward(&x);
            relu_inplace(&mut y);
            down.push(y.clone());
            x = y;
        }
        let mut res = Vec::with_capacity(self.res.len());
        for [c1, c2] in &self.res {
            let mut hidden = c1.forward(&x);
            relu_inplace(&mut hidden);
            let mut out = c2.forward(&hidden);
            out.add_assign(&x);
            res.push((x, hidden));
            x = out;
        }
        let mut up = Vec::with_capacity(self.up.len());
        for conv in &self.up {
            let u = upsample2(&x);
            let mut y = conv.forward(&u);
            relu_inplace(&mut y);
            up.push((u, y.clone()));
            x = y;
        }
        let mut pre_clamp = self.head.forward(&x);
        pre_clamp.add_assign(image);
        let output = pre_clamp.map(|v| v.max(T::zero()).min(T::one()));
        Ok((
            output,
            ForwardCache {
                input: image.clone(),
                down,
                res,
                up,
                pre_clamp,
            },
        ))
    }

    /// Parameter gradients for an upstream gradient on the network output.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Image<T>) -> StyleNetParams<T> {
        let mut grads = self.zeros_like();
        // Clamp passes gradient on the closed interval so saturated inputs can recover.
        let mut g = grad_out.clone();
        for (gv, &p) in g.data_mut().iter_mut().zip(cache.pre_clamp.data()) {
            if p < T::zero() || p > T::one() {
                *gv = T::zero();
            }
        }

        let last = cache.up.last().map(|(_, y)| y).expect("network has upsampling stages");
        let mut g = self
            .head
            .backward(last, &g, &mut grads.head, true)
            .expect("input grad requested");

        for (i, conv) in self.up.iter().enumerate().rev() {
            let (u, y) = &cache.up[i];
            relu_backward_inplace(y, &mut g);
            let gu = conv
                .backward(u, &g, &mut grads.up[i], true)
                .expect("input grad requested");
            g = upsample2_backward(&gu);
        }

        for (i, [c1, c2]) in self.res.iter().enumerate().rev() {
            let (block_in, hidden) = &cache.res[i];
            let [g1, g2] = &mut grads.res[i];
            let mut gh = c2.backward(hidden, &g, g2, true).expect("input grad requested");
            relu_backward_inplace(hidden, &mut gh);
            let gin = c1.backward(block_in, &gh, g1, true).expect("input grad requested");
            g.add_assign(&gin);
        }

        for (i, conv) in self.down.iter().enumerate().rev() {
            relu_backward_inplace(&cache.down[i], &mut g);
            let input = if i == 0 { &cache.input } else { &cache.down[i - 1] };
            match conv.backward(input, &g, &mut grads.down[i], i > 0) {
                Some(gi) => g = gi,
                None => break,
            }
        }
        grads
    }
}
