//! Directional parameter estimation: multi-scale coherence analysis that
//! produces the orientation field `theta` and the anisotropy field
//! `alpha_minus`, plus the simpler edge-adaptive angle estimator.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::diff::{convolve, gaussian_kernel, sobel_grad, Kernel};
use crate::image::{to_luminance, Image};
use crate::math::{atan2, fold_angle, hypot, pow, sqrt};
use crate::solver::{tv_denoise, Constraint};
use crate::tensor::{coherence, structure_tensor_from_gradients, DirectionalParams};
use crate::{Error, Result};

/// Single-channel real field over the image grid.
pub type ScalarField = Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpeConfig {
    pub alpha_plus: f64,
    /// Number of scales `K`, 2 or 3.
    pub num_scales: usize,
    /// Structure-tensor kernel support, also used as its variance.
    pub st_support: usize,
    pub theta_tv_tau: f64,
    pub coherence_tv_weight: f64,
}

impl DpeConfig {
    pub fn new(alpha_plus: f64, num_scales: usize, st_support: usize) -> Result<Self> {
        let cfg = Self {
            alpha_plus,
            num_scales,
            st_support,
            theta_tv_tau: 0.02,
            coherence_tv_weight: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `K = 2` below noise level 0.2, `K = 3` from there on.
    pub fn scales_for_noise(sigma_eta: f64) -> usize {
        if sigma_eta < 0.2 {
            2
        } else {
            3
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_plus > 1.0) || !self.alpha_plus.is_finite() {
            return Err(Error::InvalidParameter("alpha_plus must be finite and greater than 1"));
        }
        if !(2..=3).contains(&self.num_scales) {
            return Err(Error::InvalidParameter("number of scales must be 2 or 3"));
        }
        if self.st_support < 3 || self.st_support % 2 == 0 {
            return Err(Error::InvalidParameter("structure-tensor support must be odd and at least 3"));
        }
        if !(self.theta_tv_tau >= 0.0) || !(self.coherence_tv_weight >= 0.0) {
            return Err(Error::InvalidParameter("regularization weights must be nonnegative"));
        }
        Ok(())
    }
}

/// Fidelity convention of the ROF problems inside the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// `||c - k||^2 + w TV(k)`
    Full,
    /// `1/2 ||c - k||^2 + w TV(k)`
    Half,
}

fn require_scalar(field: &Image) -> Result<()> {
    if field.channels() != 1 {
        return Err(Error::InvalidImage("expected a single-channel field"));
    }
    Ok(())
}

/// Pre-smoothing kernel of scale `k`: std `sqrt(2k - 1)`, support `2k - 1`.
fn scale_kernel(k: usize) -> Result<Kernel> {
    if k == 1 {
        return Ok(Kernel::delta());
    }
    let s = 2 * k - 1;
    gaussian_kernel(sqrt(s as f64), s)
}

/// Coherence and minor-eigenvector angle of one scale.
fn scale_analysis(gl: &Image, k: usize, st_support: usize) -> Result<(ScalarField, ScalarField)> {
    require_scalar(gl)?;
    if k == 0 {
        return Err(Error::InvalidParameter("scale index starts at 1"));
    }
    let smoothed = if k == 1 { gl.clone() } else { convolve(gl, &scale_kernel(k)?) };
    let grads = sobel_grad(&smoothed)?;
    let st_kernel = gaussian_kernel(sqrt(st_support as f64), st_support)?;
    let st = structure_tensor_from_gradients(core::slice::from_ref(&grads), &st_kernel);
    let coh = st.eigen.iter().map(|e| coherence(e.lambda_plus, e.lambda_minus)).collect();
    let ang = st.eigen.iter().map(|e| e.minor_angle()).collect();
    let (w, h) = (gl.width(), gl.height());
    Ok((Image::new(w, h, 1, coh)?, Image::new(w, h, 1, ang)?))
}

/// Raw coherence `c` of the luminance at scale `k_index` (1-based).
pub fn coherence_at_scale(gl: &Image, k_index: usize, cfg: &DpeConfig) -> Result<ScalarField> {
    if k_index > cfg.num_scales {
        return Err(Error::InvalidParameter("scale index exceeds the number of scales"));
    }
    Ok(scale_analysis(gl, k_index, cfg.st_support)?.0)
}

/// ROF smoothing of a scalar field over the box `[lo, hi]`.
pub fn tv_regularize_field(field: &ScalarField, fidelity: Fidelity, tau: f64, lo: f64, hi: f64) -> Result<ScalarField> {
    require_scalar(field)?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter("tau must be nonnegative"));
    }
    let effective = match fidelity {
        Fidelity::Full => 0.5 * tau,
        Fidelity::Half => tau,
    };
    tv_denoise(field, effective, Constraint::Box { lo, hi })
}

/// Keep `prev` where `new <= prev`, otherwise average the two.
pub fn fuse_scales(prev: &ScalarField, new: &ScalarField) -> Result<ScalarField> {
    prev.same_shape(new)?;
    let mut out = prev.clone();
    for (o, &n) in out.data_mut().iter_mut().zip(new.data()) {
        if n > *o {
            *o = 0.5 * (*o + n);
        }
    }
    Ok(out)
}

/// Biased sample skewness `m3 / m2^1.5`; zero for a constant field.
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    // rounding noise of a constant field
    if m2 <= 1e-24 * (1.0 + mean * mean) {
        return 0.0;
    }
    m3 / pow(m2, 1.5)
}

/// Skewness-driven contrast enhancement. Right-skewed fields square values
/// below the mean; left-skewed fields take the fourth root and square the
/// results above the mean.
pub fn skew_enhance(field: &ScalarField) -> ScalarField {
    let data = field.data();
    let gamma = skewness(data);
    let mu = data.iter().sum::<f64>() / data.len() as f64;
    enhance_with(field, gamma, mu)
}

fn enhance_with(field: &ScalarField, gamma: f64, mu: f64) -> ScalarField {
    if gamma > 1.0 {
        field.map(|k| if k < mu { k * k } else { k })
    } else if gamma < -1.0 {
        field.map(|k| {
            let x = sqrt(sqrt(k.max(0.0)));
            if x > mu {
                x * x
            } else {
                x
            }
        })
    } else {
        field.clone()
    }
}

/// Per-scale intermediates of the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleStage {
    pub coherence: ScalarField,
    pub regularized: ScalarField,
    pub fused: ScalarField,
    pub enhanced: ScalarField,
    pub angle: ScalarField,
}

/// Everything the estimator computes before `alpha_plus` enters.
#[derive(Debug, Clone, PartialEq)]
pub struct DpeFields {
    /// `(max phi - phi) / (max phi - min phi)`, or 1 when `phi` is constant.
    pub weight: ScalarField,
    /// Regularized orientation in `[0, pi)`.
    pub theta: ScalarField,
    pub stages: Vec<ScaleStage>,
}

impl DpeFields {
    /// `alpha_minus = (alpha_plus - 1) weight + 1`.
    pub fn alpha_minus(&self, alpha_plus: f64) -> Vec<f64> {
        self.weight
            .data()
            .iter()
            .map(|w| ((alpha_plus - 1.0) * w + 1.0).clamp(1.0, alpha_plus))
            .collect()
    }

    pub fn params(&self, alpha_plus: f64) -> Result<DirectionalParams> {
        DirectionalParams::new(
            self.theta.width(),
            self.theta.height(),
            alpha_plus,
            self.alpha_minus(alpha_plus),
            self.theta.data().to_vec(),
        )
    }
}

/// Run the full estimator and keep its intermediates.
pub fn analyze(g: &Image, cfg: &DpeConfig) -> Result<DpeFields> {
    cfg.validate()?;
    let gl = to_luminance(g);
    let mut stages: Vec<ScaleStage> = Vec::with_capacity(cfg.num_scales);
    for k in 1..=cfg.num_scales {
        let (coh, angle) = scale_analysis(&gl, k, cfg.st_support)?;
        let regularized = tv_regularize_field(&coh, Fidelity::Full, cfg.coherence_tv_weight, 0.0, 1.0)?;
        let fused = match stages.last() {
            None => regularized.clone(),
            Some(prev) => fuse_scales(&prev.fused, &regularized)?,
        };
        let enhanced = skew_enhance(&fused);
        stages.push(ScaleStage {
            coherence: coh,
            regularized,
            fused,
            enhanced,
            angle,
        });
    }

    let phi = &stages[stages.len() - 1].enhanced;
    let (lo, hi) = phi
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let weight = if hi > lo {
        phi.map(|v| ((hi - v) / (hi - lo)).clamp(0.0, 1.0))
    } else {
        phi.map(|_| 1.0)
    };

    // orientation from the most coherent scale, first one on ties
    let n = gl.pixels();
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0;
        for (s, stage) in stages.iter().enumerate().skip(1) {
            if stage.regularized.data()[i] > stages[best].regularized.data()[i] {
                best = s;
            }
        }
        raw.push(stages[best].angle.data()[i]);
    }
    let raw = Image::new(gl.width(), gl.height(), 1, raw)?;
    let mut theta = tv_regularize_field(&raw, Fidelity::Half, cfg.theta_tv_tau, 0.0, PI)?;
    theta.data_mut().iter_mut().for_each(|t| {
        if *t >= PI {
            *t = PI.next_down();
        }
    });

    Ok(DpeFields { weight, theta, stages })
}

/// Estimate the direction parameters `(alpha_plus, alpha_minus, theta)`.
pub fn estimate(g: &Image, cfg: &DpeConfig) -> Result<DirectionalParams> {
    analyze(g, cfg)?.params(cfg.alpha_plus)
}

/// Edge-adaptive angles: the direction perpendicular to the gradient of the
/// Gaussian-smoothed luminance, in `[0, pi)`. Flat pixels get 0.
pub fn eadtv_angles(g: &Image, smooth_sigma: f64) -> Result<ScalarField> {
    if !(smooth_sigma > 0.0) || !smooth_sigma.is_finite() {
        return Err(Error::InvalidParameter("smoothing sigma must be positive"));
    }
    let gl = to_luminance(g);
    let support = 2 * libm::ceil(3.0 * smooth_sigma) as usize + 1;
    let smoothed = convolve(&gl, &gaussian_kernel(smooth_sigma, support)?);
    let grads = sobel_grad(&smoothed)?;
    let data = grads
        .gx
        .iter()
        .zip(&grads.gy)
        .map(|(&gx, &gy)| {
            if hypot(gx, gy) <= 1e-10 {
                0.0
            } else {
                fold_angle(atan2(gx, -gy))
            }
        })
        .collect();
    Image::new(gl.width(), gl.height(), 1, data)
}

/// Direction parameters of the edge-adaptive model: `alpha_minus = 1`
/// everywhere, `theta` from [`eadtv_angles`].
pub fn eadtv_params(g: &Image, alpha: f64, smooth_sigma: f64) -> Result<DirectionalParams> {
    let theta = eadtv_angles(g, smooth_sigma)?;
    DirectionalParams::new(
        theta.width(),
        theta.height(),
        alpha,
        alloc::vec![1.0; theta.len()],
        theta.into_data(),
    )
}
