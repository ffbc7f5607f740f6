//! Planar image and mask buffers plus PNG I/O.
//!
//! Images are stored channel-major (`C × H × W`). RGB images are the unit every
//! loss and the network operate on; the same type holds the network's
//! intermediate feature maps, which simply carry more channels.

use std::path::Path;

use image::{GrayImage, ImageBuffer as PixelBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channel-major `C × H × W` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "buffer of {} values does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds an image by evaluating `f(c, y, x)` for every element.
    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.channels, self.height, self.width)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shape {:?} does not match {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    /// Checks that the buffer is a valid 3-channel image with values in `[0,1]`.
    pub fn validate_rgb(&self) -> Result<()> {
        if self.channels != 3 {
            return Err(Error::invalid(format!("expected 3 channels, found {}", self.channels)));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("image has zero area"));
        }
        if let Some(v) = self
            .data
            .iter()
            .find(|v| !v.is_finite() || **v < T::zero() || **v > T::one())
        {
            return Err(Error::invalid(format!("pixel value {v} outside [0,1]")));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
    }

    /// In-place `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        debug_assert!(self.same_shape(other));
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += scale * b);
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.data.iter().copied().sum::<T>() / T::of_usize(self.data.len())
    }

    /// Copies the `size_h × size_w` window whose top-left corner is `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, size_h: usize, size_w: usize) -> Result<Self> {
        if y + size_h > self.height || x + size_w > self.width {
            return Err(Error::invalid(format!(
                "crop {size_h}x{size_w} at ({y},{x}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(self.channels, size_h, size_w, |c, yy, xx| {
            self.get(c, y + yy, x + xx)
        }))
    }

    /// Adds `patch` into the window at `(y, x)`; the adjoint of [`Image::crop`].
    pub fn accumulate_window(&mut self, y: usize, x: usize, patch: &Self) {
        for c in 0..self.channels {
            for yy in 0..patch.height {
                for xx in 0..patch.width {
                    let v = self.get(c, y + yy, x + xx) + patch.get(c, yy, xx);
                    self.set(c, y + yy, x + xx, v);
                }
            }
        }
    }

    /// Reflect-pads bottom and right so both sides become multiples of `multiple`.
    pub fn reflect_pad_to_multiple(&self, multiple: usize) -> Self {
        let ph = self.height.div_ceil(multiple) * multiple;
        let pw = self.width.div_ceil(multiple) * multiple;
        if ph == self.height && pw == self.width {
            return self.clone();
        }
        Self::from_fn(self.channels, ph, pw, |c, y, x| {
            self.get(c, reflect(y, self.height), reflect(x, self.width))
        })
    }

    pub fn to_f64(&self) -> Image<f64> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    /// Loads an 8-bit image as RGB in `[0,1]`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rgb = image::open(path).map_err(|e| Error::io(path, e))?.to_rgb8();
        Ok(Self::from_rgb8(&rgb))
    }

    pub fn from_rgb8(rgb: &RgbImage) -> Self {
        let (w, h) = rgb.dimensions();
        let scale = T::of(1.0 / 255.0);
        Self::from_fn(3, h as usize, w as usize, |c, y, x| {
            T::of_usize(rgb.get_pixel(x as u32, y as u32)[c] as usize) * scale
        })
    }

    /// Quantizes to 8-bit RGB; values are clamped to `[0,1]` first.
    pub fn to_rgb8(&self) -> Result<RgbImage> {
        if self.channels != 3 {
            return Err(Error::invalid("only 3-channel images can be saved as RGB"));
        }
        Ok(PixelBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c| quantize(self.get(c, y as usize, x as usize));
            Rgb([px(0), px(1), px(2)])
        }))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8()?
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::io(path, e))
    }
}

#[inline]
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

#[inline]
fn quantize<T: Scalar>(v: T) -> u8 {
    let v = v.to_f64_lossy();
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round() as u8
}

/// Single-channel `H × W` map in `[0,1]` marking the target region.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mask<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Validating constructor: values must be finite and in `[0,1]`.
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "mask of {} values does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(v) = data
            .iter()
            .find(|v| !v.is_finite() || **v < T::zero() || **v > T::one())
        {
            return Err(Error::invalid(format!("mask value {v} outside [0,1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Builds a mask from `f(y, x)`, clamping results into `[0,1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let v = f(y, x);
                let v = if v.is_nan() { T::zero() } else { v };
                data.push(v.max(T::zero()).min(T::one()));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Errors unless the mask matches the image's spatial size.
    pub fn ensure_matches(&self, image: &Image<T>) -> Result<()> {
        if self.height == image.height() && self.width == image.width() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "mask {}x{} does not match image {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )))
        }
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.data.iter().copied().sum::<T>() / T::of_usize(self.data.len())
    }

    pub fn cast<U: Scalar>(&self) -> Mask<U> {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let gray = image::open(path).map_err(|e| Error::io(path, e))?.to_luma8();
        let (w, h) = gray.dimensions();
        let scale = T::of(1.0 / 255.0);
        Ok(Self {
            height: h as usize,
            width: w as usize,
            data: gray.pixels().map(|p| T::of_usize(p[0] as usize) * scale).collect(),
        })
    }

    /// Writes an 8-bit grayscale PNG, 255 = target.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let gray: GrayImage = PixelBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([quantize(self.get(y as usize, x as usize))])
        });
        gray.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::io(path, e))
    }
}
