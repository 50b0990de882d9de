//! Planar multi-channel raster, luminance conversion and synthetic noise.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A real-valued image stored channel-planar: sample `(c, y, x)` lives at
/// `data[c * width * height + y * width + x]`.
///
/// Samples are nominally in `[0, 1]` but nothing forces it; noisy
/// observations are allowed to leave the range.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("width and height must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage("channel count must be 1 or 3"));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage("sample count does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Build a single-channel image from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    /// Stack single-channel planes into one image.
    pub fn from_planes(planes: &[Image]) -> Result<Self> {
        let first = planes.first().ok_or(Error::InvalidImage("no planes given"))?;
        let mut data = Vec::with_capacity(first.len() * planes.len());
        for p in planes {
            if p.channels != 1 || p.width != first.width || p.height != first.height {
                return Err(Error::DimensionMismatch {
                    expected: (first.width, first.height, 1),
                    found: p.dims(),
                });
            }
            data.extend_from_slice(&p.data);
        }
        Self::new(first.width, first.height, planes.len(), data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Pixels per channel.
    #[inline]
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Total sample count over all channels.
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copy one channel out as a single-channel image.
    pub fn channel_image(&self, c: usize) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.channel(c).to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.pixels() + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        let n = self.pixels();
        self.data[c * n + y * self.width + x] = v;
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }
}

/// Convert to a single-channel luminance image. Grayscale input is returned
/// unchanged; RGB uses the BT.601 weights.
pub fn to_luminance(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
        .collect();
    Image {
        width: img.width(),
        height: img.height(),
        channels: 1,
        data,
    }
}

/// Additive white Gaussian noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_eta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_eta: f64, seed: u64) -> Result<Self> {
        if !(sigma_eta >= 0.0) || !sigma_eta.is_finite() {
            return Err(Error::InvalidParameter("noise sigma must be finite and nonnegative"));
        }
        Ok(Self { sigma_eta, seed })
    }
}

/// `img + eta` with `eta ~ N(0, sigma^2)` i.i.d. per sample. The result is
/// not clamped. The generator is private to the call and seeded from
/// `spec.seed`, so equal inputs give bit-identical outputs.
pub fn add_gaussian_noise(img: &Image, spec: NoiseSpec) -> Image {
    if spec.sigma_eta == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    img.map(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        v + spec.sigma_eta * z
    })
}
