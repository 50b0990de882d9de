//! Discrete differential operators and Gaussian smoothing.
//!
//! Forward differences with a Neumann far edge for the solver, backward
//! differences for its negative adjoint, and a Sobel stencil for the
//! parameter estimator. Convolution and Sobel use half-sample symmetric
//! extension at the borders.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::Image;
use crate::math::{exp, reflect};
use crate::{Error, Result};

/// Per-pixel horizontal and vertical derivatives of a single channel.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }

    pub fn dot(&self, other: &GradientField) -> f64 {
        let a: f64 = self.gx.iter().zip(&other.gx).map(|(a, b)| a * b).sum();
        let b: f64 = self.gy.iter().zip(&other.gy).map(|(a, b)| a * b).sum();
        a + b
    }
}

/// Forward differences; `gx` is zero on the last column and `gy` on the
/// last row.
pub fn grad_forward(channel: &Image) -> GradientField {
    let (w, h) = (channel.width(), channel.height());
    let mut g = GradientField::zeros(w, h);
    grad_forward_into(channel.channel(0), w, h, &mut g.gx, &mut g.gy);
    g
}

pub(crate) fn grad_forward_into(f: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        let row = &f[y * w..(y + 1) * w];
        let gxr = &mut gx[y * w..(y + 1) * w];
        for x in 0..w - 1 {
            gxr[x] = row[x + 1] - row[x];
        }
        gxr[w - 1] = 0.0;
        if y + 1 < h {
            let next = &f[(y + 1) * w..(y + 2) * w];
            for x in 0..w {
                gy[y * w + x] = next[x] - row[x];
            }
        } else {
            gy[y * w..(y + 1) * w].fill(0.0);
        }
    }
}

/// Backward-difference divergence, the negative adjoint of
/// [`grad_forward`]: `<grad u, p> = -<u, div p>` for every `u` and `p`.
pub fn div_backward(p: &GradientField) -> Image {
    let mut out = vec![0.0; p.width * p.height];
    div_backward_into(&p.gx, &p.gy, p.width, p.height, &mut out);
    Image::new(p.width, p.height, 1, out).expect("gradient field dimensions are valid")
}

pub(crate) fn div_backward_into(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let dx = if w == 1 {
                0.0
            } else if x == 0 {
                px[i]
            } else if x == w - 1 {
                -px[i - 1]
            } else {
                px[i] - px[i - 1]
            };
            let dy = if h == 1 {
                0.0
            } else if y == 0 {
                py[i]
            } else if y == h - 1 {
                -py[i - w]
            } else {
                py[i] - py[i - w]
            };
            out[i] = dx + dy;
        }
    }
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Unnormalized 3x3 Sobel responses (correlation, symmetric extension).
pub fn sobel_grad(channel: &Image) -> Result<GradientField> {
    let (w, h) = (channel.width(), channel.height());
    if w < 3 || h < 3 {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let f = channel.channel(0);
    let mut g = GradientField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mut sx, mut sy) = (0.0, 0.0);
            for (r, dy) in (-1isize..=1).enumerate() {
                let yy = reflect(y as isize + dy, h);
                for (c, dx) in (-1isize..=1).enumerate() {
                    let v = f[yy * w + reflect(x as isize + dx, w)];
                    sx += SOBEL_X[r][c] * v;
                    sy += SOBEL_Y[r][c] * v;
                }
            }
            g.gx[y * w + x] = sx;
            g.gy[y * w + x] = sy;
        }
    }
    Ok(g)
}

/// Square, normalized 2-D kernel of side `2 * radius + 1`.
///
/// Weights are stored row-major; the tap at offset `(dx, dy)` is
/// `weights[(dy + radius) * side + (dx + radius)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    radius: usize,
    weights: Vec<f64>,
}

impl Kernel {
    /// Single tap of weight 1.
    pub fn delta() -> Self {
        Self {
            radius: 0,
            weights: vec![1.0],
        }
    }

    /// Normalize arbitrary nonnegative weights on an odd square support.
    pub fn from_weights(support: usize, weights: Vec<f64>) -> Result<Self> {
        if support % 2 == 0 {
            return Err(Error::InvalidKernel("support must be odd"));
        }
        if weights.len() != support * support {
            return Err(Error::InvalidKernel("weight count must be support squared"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidKernel("weights must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidKernel("weights sum to zero"));
        }
        Ok(Self {
            radius: support / 2,
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    #[inline]
    pub fn support(&self) -> usize {
        2 * self.radius + 1
    }

    /// Number of taps `L`.
    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        let s = self.support();
        self.weights[(dy + r) as usize * s + (dx + r) as usize]
    }

    /// Taps `(dx, dy, weight)` in row-major order; this order defines the
    /// tap index `l` of the patch-based Jacobian.
    pub fn taps(&self) -> impl Iterator<Item = (isize, isize, f64)> + '_ {
        let r = self.radius as isize;
        let s = self.support();
        self.weights
            .iter()
            .enumerate()
            .map(move |(k, &w)| ((k % s) as isize - r, (k / s) as isize - r, w))
    }
}

/// Gaussian of standard deviation `sigma` sampled on a `support x support`
/// grid and normalized to unit sum.
pub fn gaussian_kernel(sigma: f64, support: usize) -> Result<Kernel> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidKernel("sigma must be positive"));
    }
    if support == 0 || support % 2 == 0 {
        return Err(Error::InvalidKernel("support must be odd and positive"));
    }
    let r = (support / 2) as isize;
    let mut weights = Vec::with_capacity(support * support);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            weights.push(exp(-d2 / (2.0 * sigma * sigma)));
        }
    }
    Kernel::from_weights(support, weights)
}

/// Per-channel 2-D correlation with symmetric boundary extension.
pub fn convolve(img: &Image, k: &Kernel) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for c in 0..img.channels() {
        convolve_plane(img.channel(c), w, h, k, out.channel_mut(c));
    }
    out
}

pub(crate) fn convolve_plane(src: &[f64], w: usize, h: usize, k: &Kernel, dst: &mut [f64]) {
    let r = k.radius() as isize;
    let xs: Vec<Vec<usize>> = (-r..=r)
        .map(|d| (0..w).map(|x| reflect(x as isize + d, w)).collect())
        .collect();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dx, dy, wt) in k.taps() {
                let yy = reflect(y as isize + dy, h);
                acc += wt * src[yy * w + xs[(dx + r) as usize][x]];
            }
            dst[y * w + x] = acc;
        }
    }
}
