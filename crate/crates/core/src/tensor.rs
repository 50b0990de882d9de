//! Patch-based Jacobians, structure tensors and Schatten norms.
//!
//! The patch-based Jacobian maps an image with `C` channels to a per-pixel
//! `(L * C) x 2` matrix whose row `s = c * L + l` is the gradient of channel
//! `c` taken at `x_i - p_l` and weighted by `sqrt(K[p_l])`. Its Gram matrix
//! is the structure tensor, so its singular values are the rooted
//! eigenvalues of the tensor. The directional variant first maps every
//! gradient through `diag(alpha_plus, alpha_minus[j]) * R(-theta[j])` at
//! its own source location `j`.

use alloc::vec;
use alloc::vec::Vec;

use crate::diff::{convolve_plane, div_backward_into, grad_forward_into, GradientField, Kernel};
use crate::image::Image;
use crate::math::{atan2, fold_angle, hypot, reflect, sin_cos, sqrt};
use crate::{Error, Result};

/// Below this largest eigenvalue a pixel counts as flat.
pub const COHERENCE_EPS: f64 = 1e-12;

/// Orientation field `theta` and anisotropy field `alpha_minus`, shared by
/// every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalParams {
    width: usize,
    height: usize,
    alpha_plus: f64,
    alpha_minus: Vec<f64>,
    theta: Vec<f64>,
}

impl DirectionalParams {
    pub fn new(
        width: usize,
        height: usize,
        alpha_plus: f64,
        alpha_minus: Vec<f64>,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let n = width * height;
        if alpha_minus.len() != n || theta.len() != n {
            return Err(Error::InvalidParameter("direction fields must cover every pixel"));
        }
        if !(alpha_plus >= 1.0) || !alpha_plus.is_finite() {
            return Err(Error::InvalidParameter("alpha_plus must be >= 1"));
        }
        if alpha_minus.iter().any(|&a| !(a >= 1.0 && a <= alpha_plus)) {
            return Err(Error::InvalidParameter("alpha_minus must lie in [1, alpha_plus]"));
        }
        if theta
            .iter()
            .any(|&t| !(t >= 0.0 && t < core::f64::consts::PI))
        {
            return Err(Error::InvalidParameter("theta must lie in [0, pi)"));
        }
        Ok(Self {
            width,
            height,
            alpha_plus,
            alpha_minus,
            theta,
        })
    }

    /// `alpha_plus = alpha_minus = 1`, `theta = 0`: the undirected operator.
    pub fn identity(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            alpha_plus: 1.0,
            alpha_minus: vec![1.0; n],
            theta: vec![0.0; n],
        }
    }

    /// Spatially constant parameters.
    pub fn constant(width: usize, height: usize, alpha_plus: f64, alpha_minus: f64, theta: f64) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, alpha_plus, vec![alpha_minus; n], vec![theta; n])
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
    pub fn alpha_plus(&self) -> f64 {
        self.alpha_plus
    }

    pub fn alpha_minus(&self) -> &[f64] {
        &self.alpha_minus
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Replace the orientation field, keeping the anisotropy.
    pub fn with_theta(self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, self.alpha_plus, self.alpha_minus, theta)
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected: (width, height, 1),
                found: (self.width, self.height, 1),
            });
        }
        Ok(())
    }

    /// Row-major `diag(alpha_plus, alpha_minus[i]) * R(-theta[i])` per pixel.
    pub(crate) fn matrices(&self) -> Vec<[f64; 4]> {
        self.alpha_minus
            .iter()
            .zip(&self.theta)
            .map(|(&am, &th)| direction_matrix(self.alpha_plus, am, th))
            .collect()
    }
}

#[inline]
fn direction_matrix(ap: f64, am: f64, th: f64) -> [f64; 4] {
    let (s, c) = sin_cos(th);
    // R(-th) = [[c, s], [-s, c]]
    [ap * c, ap * s, -am * s, am * c]
}

/// `diag(ap, am) * R(-th) * g` with `R(t) = [[cos t, -sin t], [sin t, cos t]]`.
pub fn apply_direction(g: [f64; 2], ap: f64, am: f64, th: f64) -> [f64; 2] {
    let m = direction_matrix(ap, am, th);
    [m[0] * g[0] + m[1] * g[1], m[2] * g[0] + m[3] * g[1]]
}

/// Per-pixel `(L * C) x 2` matrices, pixel-major: entry `(i, s, k)` is at
/// `data[(i * rows + s) * 2 + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchJacobianField {
    width: usize,
    height: usize,
    channels: usize,
    kernel: Kernel,
    data: Vec<f64>,
}

impl PatchJacobianField {
    pub fn zeros(width: usize, height: usize, channels: usize, kernel: &Kernel) -> Self {
        let len = width * height * kernel.len() * channels * 2;
        Self {
            width,
            height,
            channels,
            kernel: kernel.clone(),
            data: vec![0.0; len],
        }
    }

    /// Wrap raw entries laid out as described on the type.
    pub fn from_data(width: usize, height: usize, channels: usize, kernel: &Kernel, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * kernel.len() * channels * 2 {
            return Err(Error::InvalidParameter("field length does not match its shape"));
        }
        Ok(Self {
            width,
            height,
            channels,
            kernel: kernel.clone(),
            data,
        })
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

    #[inline]
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Rows per pixel, `L * C`.
    #[inline]
    pub fn rows(&self) -> usize {
        self.kernel.len() * self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The `rows x 2` block of pixel `i`, row-major.
    pub fn pixel(&self, i: usize) -> &[f64] {
        let b = self.rows() * 2;
        &self.data[i * b..(i + 1) * b]
    }

    pub fn pixel_mut(&mut self, i: usize) -> &mut [f64] {
        let b = self.rows() * 2;
        &mut self.data[i * b..(i + 1) * b]
    }

    pub fn dot(&self, other: &PatchJacobianField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// The (directional) patch-based Jacobian as a reusable linear operator with
/// precomputed shift tables.
#[derive(Debug, Clone)]
pub struct JacobianOp {
    width: usize,
    height: usize,
    channels: usize,
    kernel: Kernel,
    // (dx, dy, sqrt(weight)) per tap
    taps: Vec<(isize, isize, f64)>,
    // xsrc[dx + r][x] = reflect(x - dx)
    xsrc: Vec<Vec<usize>>,
    ysrc: Vec<Vec<usize>>,
    directions: Option<Vec<[f64; 4]>>,
}

impl JacobianOp {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        kernel: &Kernel,
        dp: Option<&DirectionalParams>,
    ) -> Result<Self> {
        if let Some(dp) = dp {
            dp.check(width, height)?;
        }
        let r = kernel.radius() as isize;
        let xsrc = (-r..=r)
            .map(|d| (0..width).map(|x| reflect(x as isize - d, width)).collect())
            .collect();
        let ysrc = (-r..=r)
            .map(|d| (0..height).map(|y| reflect(y as isize - d, height)).collect())
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            kernel: kernel.clone(),
            taps: kernel.taps().map(|(dx, dy, w)| (dx, dy, sqrt(w))).collect(),
            xsrc,
            ysrc,
            directions: dp.map(DirectionalParams::matrices),
        })
    }

    /// Operator matching an image's shape.
    pub fn for_image(img: &Image, kernel: &Kernel, dp: Option<&DirectionalParams>) -> Result<Self> {
        Self::new(img.width(), img.height(), img.channels(), kernel, dp)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.taps.len() * self.channels
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn zero_field(&self) -> PatchJacobianField {
        PatchJacobianField::zeros(self.width, self.height, self.channels, &self.kernel)
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        let dims = (self.width, self.height, self.channels);
        if img.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: img.dims(),
            });
        }
        Ok(())
    }

    fn check_field(&self, f: &PatchJacobianField) -> Result<()> {
        let dims = (self.width, self.height, self.channels);
        if (f.width, f.height, f.channels) != dims || f.kernel != self.kernel {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: (f.width, f.height, f.channels),
            });
        }
        Ok(())
    }

    pub fn apply(&self, u: &Image) -> Result<PatchJacobianField> {
        let mut out = self.zero_field();
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, u: &Image, out: &mut PatchJacobianField) -> Result<()> {
        self.check_image(u)?;
        self.check_field(out)?;
        let (w, h) = (self.width, self.height);
        let n = w * h;
        let big_l = self.taps.len();
        let rows = self.rows();
        let r = self.kernel.radius() as isize;
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        for c in 0..self.channels {
            grad_forward_into(u.channel(c), w, h, &mut gx, &mut gy);
            if let Some(dirs) = &self.directions {
                for ((a, b), m) in gx.iter_mut().zip(gy.iter_mut()).zip(dirs) {
                    let (x0, y0) = (*a, *b);
                    *a = m[0] * x0 + m[1] * y0;
                    *b = m[2] * x0 + m[3] * y0;
                }
            }
            for y in 0..h {
                for (l, &(dx, dy, sw)) in self.taps.iter().enumerate() {
                    let row_base = self.ysrc[(dy + r) as usize][y] * w;
                    let xs = &self.xsrc[(dx + r) as usize];
                    let s = c * big_l + l;
                    for x in 0..w {
                        let j = row_base + xs[x];
                        let k = ((y * w + x) * rows + s) * 2;
                        out.data[k] = sw * gx[j];
                        out.data[k + 1] = sw * gy[j];
                    }
                }
            }
        }
        Ok(())
    }

    pub fn adjoint(&self, psi: &PatchJacobianField) -> Result<Image> {
        let mut out = Image::zeros(self.width, self.height, self.channels)?;
        self.adjoint_into(psi, &mut out)?;
        Ok(out)
    }

    /// Exact adjoint of [`JacobianOp::apply`]: scatter the rows back to their
    /// source pixels, apply the transposed direction map, then take the
    /// negative backward divergence.
    pub fn adjoint_into(&self, psi: &PatchJacobianField, out: &mut Image) -> Result<()> {
        self.check_field(psi)?;
        self.check_image(out)?;
        let (w, h) = (self.width, self.height);
        let n = w * h;
        let big_l = self.taps.len();
        let rows = self.rows();
        let r = self.kernel.radius() as isize;
        let mut px = vec![0.0; n];
        let mut py = vec![0.0; n];
        let mut div = vec![0.0; n];
        for c in 0..self.channels {
            px.fill(0.0);
            py.fill(0.0);
            for y in 0..h {
                for (l, &(dx, dy, sw)) in self.taps.iter().enumerate() {
                    let row_base = self.ysrc[(dy + r) as usize][y] * w;
                    let xs = &self.xsrc[(dx + r) as usize];
                    let s = c * big_l + l;
                    for x in 0..w {
                        let j = row_base + xs[x];
                        let k = ((y * w + x) * rows + s) * 2;
                        px[j] += sw * psi.data[k];
                        py[j] += sw * psi.data[k + 1];
                    }
                }
            }
            if let Some(dirs) = &self.directions {
                for ((a, b), m) in px.iter_mut().zip(py.iter_mut()).zip(dirs) {
                    let (x0, y0) = (*a, *b);
                    *a = m[0] * x0 + m[2] * y0;
                    *b = m[1] * x0 + m[3] * y0;
                }
            }
            div_backward_into(&px, &py, w, h, &mut div);
            for (o, d) in out.channel_mut(c).iter_mut().zip(&div) {
                *o = -d;
            }
        }
        Ok(())
    }
}

/// Patch-based Jacobian with forward-difference gradients.
pub fn patch_jacobian(f: &Image, k: &Kernel) -> PatchJacobianField {
    JacobianOp::for_image(f, k, None)
        .and_then(|op| op.apply(f))
        .expect("operator built from the image's own shape")
}

/// Adjoint of [`patch_jacobian`] for the field's own shape and kernel.
pub fn patch_jacobian_adjoint(psi: &PatchJacobianField) -> Image {
    JacobianOp::new(psi.width, psi.height, psi.channels, &psi.kernel, None)
        .and_then(|op| op.adjoint(psi))
        .expect("operator built from the field's own shape")
}

/// Directional patch-based Jacobian; gradients are transformed at their
/// source location before being shifted and weighted.
pub fn directional_patch_jacobian(f: &Image, k: &Kernel, dp: &DirectionalParams) -> Result<PatchJacobianField> {
    JacobianOp::for_image(f, k, Some(dp))?.apply(f)
}

/// Adjoint of [`directional_patch_jacobian`].
pub fn directional_adjoint(psi: &PatchJacobianField, dp: &DirectionalParams) -> Result<Image> {
    JacobianOp::new(psi.width, psi.height, psi.channels, &psi.kernel, Some(dp))?.adjoint(psi)
}

/// Closed-form eigensystem of a symmetric 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
}

/// Eigen-decomposition of `[[sxx, sxy], [sxy, syy]]`, `lambda_plus >=
/// lambda_minus`. Eigenvectors are unit length with their first nonzero
/// component nonnegative; the isotropic case returns the coordinate axes.
pub fn eig2x2(sxx: f64, sxy: f64, syy: f64) -> Eigen2 {
    let half_trace = 0.5 * (sxx + syy);
    let half_diff = 0.5 * (sxx - syy);
    let radius = hypot(half_diff, sxy);
    let phi = 0.5 * atan2(2.0 * sxy, sxx - syy);
    let (s, c) = sin_cos(phi);
    Eigen2 {
        lambda_plus: half_trace + radius,
        lambda_minus: half_trace - radius,
        v_plus: canonical_sign([c, s]),
        v_minus: canonical_sign([-s, c]),
    }
}

#[inline]
fn canonical_sign(v: [f64; 2]) -> [f64; 2] {
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

impl Eigen2 {
    /// Angle of `v_minus` folded into `[0, pi)`.
    pub fn minor_angle(&self) -> f64 {
        fold_angle(atan2(self.v_minus[1], self.v_minus[0]))
    }
}

/// `(lambda_plus - lambda_minus) / lambda_plus`, or 0 on flat pixels.
pub fn coherence(lambda_plus: f64, lambda_minus: f64) -> f64 {
    if lambda_plus <= COHERENCE_EPS {
        return 0.0;
    }
    ((lambda_plus - lambda_minus) / lambda_plus).clamp(0.0, 1.0)
}

/// Smoothed gradient outer products and their eigensystems.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTensorField {
    pub width: usize,
    pub height: usize,
    pub sxx: Vec<f64>,
    pub sxy: Vec<f64>,
    pub syy: Vec<f64>,
    pub eigen: Vec<Eigen2>,
}

/// Structure tensor of an image: channel-summed outer products of
/// forward-difference gradients, smoothed by `k`.
pub fn structure_tensor(f: &Image, k: &Kernel) -> StructureTensorField {
    let grads: Vec<GradientField> = (0..f.channels())
        .map(|c| crate::diff::grad_forward(&f.channel_image(c)))
        .collect();
    structure_tensor_from_gradients(&grads, k)
}

/// Structure tensor from precomputed per-channel gradients.
pub fn structure_tensor_from_gradients(grads: &[GradientField], k: &Kernel) -> StructureTensorField {
    let (w, h) = (grads[0].width, grads[0].height);
    let n = w * h;
    let mut xx = vec![0.0; n];
    let mut xy = vec![0.0; n];
    let mut yy = vec![0.0; n];
    for g in grads {
        for i in 0..n {
            xx[i] += g.gx[i] * g.gx[i];
            xy[i] += g.gx[i] * g.gy[i];
            yy[i] += g.gy[i] * g.gy[i];
        }
    }
    let mut sxx = vec![0.0; n];
    let mut sxy = vec![0.0; n];
    let mut syy = vec![0.0; n];
    convolve_plane(&xx, w, h, k, &mut sxx);
    convolve_plane(&xy, w, h, k, &mut sxy);
    convolve_plane(&yy, w, h, k, &mut syy);
    let eigen = (0..n).map(|i| eig2x2(sxx[i], sxy[i], syy[i])).collect();
    StructureTensorField {
        width: w,
        height: h,
        sxx,
        sxy,
        syy,
        eigen,
    }
}

/// Schatten norm orders used by the regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchattenOrder {
    /// q = 1, sum of singular values.
    Nuclear,
    /// q = 2.
    Frobenius,
}

/// Dual ball used by the projection step: `1/q + 1/p = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualOrder {
    /// p = 2.
    Frobenius,
    /// p = infinity, spectral norm.
    Spectral,
}

impl SchattenOrder {
    pub fn from_q(q: f64) -> Result<Self> {
        if q == 1.0 {
            Ok(Self::Nuclear)
        } else if q == 2.0 {
            Ok(Self::Frobenius)
        } else {
            Err(Error::UnsupportedOrder(q))
        }
    }

    pub fn q(self) -> f64 {
        match self {
            Self::Nuclear => 1.0,
            Self::Frobenius => 2.0,
        }
    }

    pub fn dual(self) -> DualOrder {
        match self {
            Self::Nuclear => DualOrder::Spectral,
            Self::Frobenius => DualOrder::Frobenius,
        }
    }
}

impl DualOrder {
    pub fn from_p(p: f64) -> Result<Self> {
        if p == 2.0 {
            Ok(Self::Frobenius)
        } else if p == f64::INFINITY {
            Ok(Self::Spectral)
        } else {
            Err(Error::UnsupportedOrder(p))
        }
    }
}

/// Gram matrix `M^T M` of a row-major `rows x 2` matrix as `(a, b, c)` for
/// `[[a, b], [b, c]]`.
#[inline]
pub fn gram(m: &[f64]) -> (f64, f64, f64) {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for row in m.chunks_exact(2) {
        a += row[0] * row[0];
        b += row[0] * row[1];
        c += row[1] * row[1];
    }
    (a, b, c)
}

/// Singular values `(s1 >= s2)` of a `rows x 2` matrix via its Gram matrix.
pub fn singular_values(m: &[f64]) -> (f64, f64) {
    let (a, b, c) = gram(m);
    let e = eig2x2(a, b, c);
    (sqrt(e.lambda_plus.max(0.0)), sqrt(e.lambda_minus.max(0.0)))
}

pub fn schatten_norm(m: &[f64], q: SchattenOrder) -> f64 {
    match q {
        SchattenOrder::Nuclear => {
            let (s1, s2) = singular_values(m);
            s1 + s2
        }
        SchattenOrder::Frobenius => {
            let (a, _, c) = gram(m);
            sqrt(a + c)
        }
    }
}

/// Sum over pixels of the Schatten norm of the (directional) patch-based
/// Jacobian.
pub fn regularizer_value(f: &Image, k: &Kernel, dp: Option<&DirectionalParams>, q: SchattenOrder) -> Result<f64> {
    let field = JacobianOp::for_image(f, k, dp)?.apply(f)?;
    Ok(field_norm(&field, q))
}

/// Mixed `l1 / S_q` norm of a field.
pub fn field_norm(field: &PatchJacobianField, q: SchattenOrder) -> f64 {
    (0..field.pixels()).map(|i| schatten_norm(field.pixel(i), q)).sum()
}
