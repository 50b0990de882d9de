//! Denoising pipelines shared by the CLI and the benchmark harness.

use std::fmt;
use std::str::FromStr;

use adstv_core::diff::{gaussian_kernel, Kernel};
use adstv_core::dpe::{analyze, eadtv_angles, DpeConfig, DpeFields};
use adstv_core::solver::{project_box, solve, Constraint, DualProblem, SolverConfig};
use adstv_core::tensor::{DirectionalParams, SchattenOrder};
use adstv_core::Image;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regularizer {
    Tv,
    Eadtv,
    Stv,
    Adstv,
}

impl Regularizer {
    pub const ALL: [Regularizer; 4] = [Regularizer::Tv, Regularizer::Eadtv, Regularizer::Stv, Regularizer::Adstv];

    pub fn as_str(self) -> &'static str {
        match self {
            Regularizer::Tv => "tv",
            Regularizer::Eadtv => "eadtv",
            Regularizer::Stv => "stv",
            Regularizer::Adstv => "adstv",
        }
    }

    /// Whether `alpha_plus` is a free parameter.
    pub fn uses_alpha(self) -> bool {
        matches!(self, Regularizer::Eadtv | Regularizer::Adstv)
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tv" => Ok(Regularizer::Tv),
            "eadtv" => Ok(Regularizer::Eadtv),
            "stv" => Ok(Regularizer::Stv),
            "adstv" => Ok(Regularizer::Adstv),
            other => Err(Error::Invalid(format!("unknown regularizer {other:?}"))),
        }
    }
}

/// Structure-tensor support by image size: 7 up to 256 pixels per side,
/// 15 for square images beyond that, 11 otherwise (BSD-sized).
pub fn default_st_support(width: usize, height: usize) -> usize {
    if width.max(height) <= 256 {
        7
    } else if width == height {
        15
    } else {
        11
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub regularizer: Regularizer,
    pub kernel_sigma: f64,
    pub kernel_support: usize,
    pub q: SchattenOrder,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub constraint: Constraint,
    pub monotone: bool,
    /// Number of DPE scales; derived from `noise_sigma` when unset.
    pub scales: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub st_support: Option<usize>,
    pub eadtv_sigma: f64,
    /// Constant orientation replacing the estimated field.
    pub theta: Option<f64>,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            regularizer: Regularizer::Adstv,
            kernel_sigma: 0.5,
            kernel_support: 3,
            q: SchattenOrder::Nuclear,
            max_iters: 100,
            rel_tol: 1e-5,
            constraint: Constraint::UNIT_BOX,
            monotone: false,
            scales: None,
            noise_sigma: None,
            st_support: None,
            eadtv_sigma: 1.5,
            theta: None,
        }
    }
}

/// Direction data computed once per noisy image.
#[derive(Debug, Clone)]
pub enum Prepared {
    Undirected,
    Dpe { fields: Option<DpeFields>, width: usize, height: usize },
    Angles(Image),
}

impl Prepared {
    pub fn dpe_fields(&self) -> Option<&DpeFields> {
        match self {
            Prepared::Dpe { fields, .. } => fields.as_ref(),
            _ => None,
        }
    }
}

/// Primal energies of one solve under its own regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    /// Infinite when the noisy input lies outside the constraint set.
    pub input: f64,
    /// The input projected onto the constraint set.
    pub projected_input: f64,
    pub output: f64,
}

impl Energies {
    pub fn descended(&self) -> bool {
        self.output <= self.input && self.output <= self.projected_input
    }
}

/// Result of one solve.
#[derive(Debug, Clone)]
pub struct Run {
    pub image: Image,
    pub iterations: usize,
    pub converged: bool,
    /// `None` for the `tau = 0` passthrough.
    pub energies: Option<Energies>,
}

impl Pipeline {
    pub fn kernel(&self) -> Result<Kernel> {
        match self.regularizer {
            Regularizer::Tv | Regularizer::Eadtv => Ok(Kernel::delta()),
            _ => Ok(gaussian_kernel(self.kernel_sigma, self.kernel_support)?),
        }
    }

    pub fn num_scales(&self) -> usize {
        self.scales
            .unwrap_or_else(|| self.noise_sigma.map_or(2, DpeConfig::scales_for_noise))
    }

    pub fn dpe_config(&self, img: &Image, alpha_plus: f64) -> Result<DpeConfig> {
        let st = self
            .st_support
            .unwrap_or_else(|| default_st_support(img.width(), img.height()));
        Ok(DpeConfig::new(alpha_plus, self.num_scales(), st)?)
    }

    pub fn solver_config(&self, tau: f64) -> Result<SolverConfig> {
        let q = match self.regularizer {
            Regularizer::Tv => SchattenOrder::Frobenius,
            _ => self.q,
        };
        let cfg = SolverConfig {
            tau,
            q,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            constraint: self.constraint,
            kernel: self.kernel()?,
            monotone: self.monotone,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Run whatever direction estimation the regularizer needs.
    pub fn prepare(&self, noisy: &Image) -> Result<Prepared> {
        let (w, h) = (noisy.width(), noisy.height());
        match self.regularizer {
            Regularizer::Tv | Regularizer::Stv => Ok(Prepared::Undirected),
            Regularizer::Eadtv => match self.theta {
                Some(t) => Ok(Prepared::Angles(Image::constant(w, h, 1, t)?)),
                None => Ok(Prepared::Angles(eadtv_angles(noisy, self.eadtv_sigma)?)),
            },
            Regularizer::Adstv => {
                // the estimate itself does not depend on alpha_plus
                let cfg = self.dpe_config(noisy, 2.0)?;
                Ok(Prepared::Dpe {
                    fields: Some(analyze(noisy, &cfg)?),
                    width: w,
                    height: h,
                })
            }
        }
    }

    /// Like [`prepare`](Self::prepare) but skips the estimator when a
    /// constant orientation is given and no anisotropy field is needed.
    pub fn prepare_for_alpha(&self, noisy: &Image, alpha_plus: f64) -> Result<Prepared> {
        if self.regularizer == Regularizer::Adstv && self.theta.is_some() && alpha_plus == 1.0 {
            return Ok(Prepared::Dpe {
                fields: None,
                width: noisy.width(),
                height: noisy.height(),
            });
        }
        self.prepare(noisy)
    }

    pub fn params(&self, prepared: &Prepared, alpha_plus: f64) -> Result<Option<DirectionalParams>> {
        if !(alpha_plus >= 1.0) || !alpha_plus.is_finite() {
            return Err(Error::Invalid("alpha_plus must be >= 1".into()));
        }
        match prepared {
            Prepared::Undirected => Ok(None),
            Prepared::Angles(theta) => Ok(Some(DirectionalParams::new(
                theta.width(),
                theta.height(),
                alpha_plus,
                vec![1.0; theta.len()],
                theta.data().to_vec(),
            )?)),
            Prepared::Dpe { fields, width, height } => {
                let n = width * height;
                let alpha_minus = match fields {
                    _ if alpha_plus == 1.0 => vec![1.0; n],
                    Some(f) => f.alpha_minus(alpha_plus),
                    None => return Err(Error::Invalid("direction estimate missing".into())),
                };
                let theta = match (self.theta, fields) {
                    (Some(t), _) => vec![t; n],
                    (None, Some(f)) => f.theta.data().to_vec(),
                    (None, None) => return Err(Error::Invalid("direction estimate missing".into())),
                };
                Ok(Some(DirectionalParams::new(*width, *height, alpha_plus, alpha_minus, theta)?))
            }
        }
    }

    pub fn run(&self, noisy: &Image, prepared: &Prepared, tau: f64, alpha_plus: f64) -> Result<Run> {
        if tau == 0.0 {
            return Ok(Run {
                image: project_box(noisy, self.constraint),
                iterations: 0,
                converged: true,
                energies: None,
            });
        }
        if !(tau > 0.0) {
            return Err(Error::Invalid("tau must be nonnegative".into()));
        }
        let dp = self.params(prepared, alpha_plus)?;
        let cfg = self.solver_config(tau)?;
        let sol = solve(noisy, dp.as_ref(), &cfg)?;
        let problem = DualProblem::new(noisy, dp.as_ref(), &cfg)?;
        let energies = Energies {
            input: problem.primal_energy(noisy)?,
            projected_input: problem.primal_energy(&project_box(noisy, self.constraint))?,
            output: problem.primal_energy(&sol.image)?,
        };
        Ok(Run {
            image: sol.image,
            iterations: sol.iterations,
            converged: sol.converged,
            energies: Some(energies),
        })
    }
}
