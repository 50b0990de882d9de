//! Dual fast gradient projection for
//! `argmin_{f in C} 1/2 ||g - f||^2 + tau * sum_i ||(J f)[i]||_{S_q}`
//! where `J` is the (directional) patch-based Jacobian.
//!
//! The dual variable `psi` holds one `(L * C) x 2` block per pixel and is
//! kept inside the unit `S_p` ball. Every iteration forms the primal
//! estimate `z = P_C(g - tau J* psi)`, takes an ascent step of size
//! `1 / L[i]` per pixel along `J z`, projects, and extrapolates with the
//! FISTA momentum sequence. TV is the single-tap, unit-alpha, `q = 2`
//! special case.

use alloc::vec::Vec;

use crate::diff::{gaussian_kernel, Kernel};
use crate::image::Image;
use crate::math::sqrt;
use crate::tensor::{
    eig2x2, field_norm, gram, DirectionalParams, DualOrder, JacobianOp, PatchJacobianField, SchattenOrder,
};
use crate::{Error, Result};

/// Feasible set for the primal variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    Box { lo: f64, hi: f64 },
    Unconstrained,
}

impl Constraint {
    pub const UNIT_BOX: Constraint = Constraint::Box { lo: 0.0, hi: 1.0 };

    #[inline]
    pub fn project_value(&self, v: f64) -> f64 {
        match *self {
            Constraint::Box { lo, hi } => v.clamp(lo, hi),
            Constraint::Unconstrained => v,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Constraint::Box { lo, hi } => (lo..=hi).contains(&v),
            Constraint::Unconstrained => !v.is_nan(),
        }
    }

    pub fn project_in_place(&self, data: &mut [f64]) {
        if let Constraint::Box { lo, hi } = *self {
            data.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
    }
}

impl Default for Constraint {
    fn default() -> Self {
        Self::UNIT_BOX
    }
}

/// Orthogonal projection onto the constraint set.
pub fn project_box(img: &Image, constraint: Constraint) -> Image {
    let mut out = img.clone();
    constraint.project_in_place(out.data_mut());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub q: SchattenOrder,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub constraint: Constraint,
    pub kernel: Kernel,
    /// Only accept ascent steps that do not lower the dual objective
    /// (costs one extra adjoint per iteration). Off by default.
    pub monotone: bool,
}

impl SolverConfig {
    /// Nuclear norm, 100 iterations, relative tolerance `1e-5`, unit box and
    /// a 3x3 Gaussian kernel with sigma 0.5.
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            q: SchattenOrder::Nuclear,
            max_iters: 100,
            rel_tol: 1e-5,
            constraint: Constraint::UNIT_BOX,
            kernel: gaussian_kernel(0.5, 3).expect("valid default kernel"),
            monotone: false,
        }
    }

    /// Configuration of the plain isotropic TV special case.
    pub fn tv(tau: f64, constraint: Constraint) -> Self {
        Self {
            q: SchattenOrder::Frobenius,
            constraint,
            kernel: Kernel::delta(),
            ..Self::new(tau)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter("tau must be positive and finite"));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be positive"));
        }
        if let Constraint::Box { lo, hi } = self.constraint {
            if !(lo <= hi) {
                return Err(Error::InvalidParameter("box bounds must satisfy lo <= hi"));
            }
        }
        Ok(())
    }
}

/// Per-pixel step bound `8 sqrt(2) tau (alpha_plus^2 + alpha_minus[i]^2)`.
///
/// Paired with an ascent step along `J z` (no extra `tau`), this is the
/// `tau^2` bound on the Lipschitz constant of the dual gradient.
pub fn lipschitz_field(dp: &DirectionalParams, tau: f64) -> Vec<f64> {
    let ap2 = dp.alpha_plus() * dp.alpha_plus();
    dp.alpha_minus()
        .iter()
        .map(|am| 8.0 * core::f64::consts::SQRT_2 * tau * (ap2 + am * am))
        .collect()
}

/// Project a row-major `rows x 2` matrix onto the unit ball of the dual
/// Schatten norm, in place.
///
/// For the spectral ball the result is `M V diag(min(1, s_k) / s_k) V^T`
/// with `V` from the 2x2 Gram matrix, so no left singular vectors are
/// needed. Matrices already inside the ball are left bit-identical.
pub fn project_schatten_in_place(m: &mut [f64], p: DualOrder) {
    let (a, b, c) = gram(m);
    match p {
        DualOrder::Frobenius => {
            let norm = sqrt(a + c);
            if norm > 1.0 {
                m.iter_mut().for_each(|v| *v /= norm);
            }
        }
        DualOrder::Spectral => {
            let e = eig2x2(a, b, c);
            let s1 = sqrt(e.lambda_plus.max(0.0));
            if s1 <= 1.0 {
                return;
            }
            let s2 = sqrt(e.lambda_minus.max(0.0));
            let d1 = 1.0 / s1;
            let d2 = if s2 > 1.0 { 1.0 / s2 } else { 1.0 };
            let (u, v) = (e.v_plus, e.v_minus);
            let w00 = d1 * u[0] * u[0] + d2 * v[0] * v[0];
            let w01 = d1 * u[0] * u[1] + d2 * v[0] * v[1];
            let w11 = d1 * u[1] * u[1] + d2 * v[1] * v[1];
            for row in m.chunks_exact_mut(2) {
                let (x, y) = (row[0], row[1]);
                row[0] = x * w00 + y * w01;
                row[1] = x * w01 + y * w11;
            }
        }
    }
}

/// Copying variant of [`project_schatten_in_place`].
pub fn project_schatten(m: &[f64], p: DualOrder) -> Vec<f64> {
    let mut out = m.to_vec();
    project_schatten_in_place(&mut out, p);
    out
}

/// The dual problem for one observation: operator, step sizes and data.
#[derive(Debug, Clone)]
pub struct DualProblem {
    g: Image,
    op: JacobianOp,
    cfg: SolverConfig,
    inv_lipschitz: Vec<f64>,
}

impl DualProblem {
    pub fn new(g: &Image, dp: Option<&DirectionalParams>, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let op = JacobianOp::for_image(g, &cfg.kernel, dp)?;
        let lip = match dp {
            Some(dp) => lipschitz_field(dp, cfg.tau),
            None => lipschitz_field(&DirectionalParams::identity(g.width(), g.height()), cfg.tau),
        };
        Ok(Self {
            g: g.clone(),
            op,
            cfg: cfg.clone(),
            inv_lipschitz: lip.into_iter().map(|l| 1.0 / l).collect(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn operator(&self) -> &JacobianOp {
        &self.op
    }

    pub fn observation(&self) -> &Image {
        &self.g
    }

    fn check(&self, psi: &PatchJacobianField) -> Result<()> {
        let dims = self.g.dims();
        if (psi.width(), psi.height(), psi.channels()) != dims || psi.kernel() != &self.cfg.kernel {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: (psi.width(), psi.height(), psi.channels()),
            });
        }
        Ok(())
    }

    /// `w = g - tau J* psi`.
    fn w_into(&self, psi: &PatchJacobianField, out: &mut Image) -> Result<()> {
        self.op.adjoint_into(psi, out)?;
        let tau = self.cfg.tau;
        for (o, g) in out.data_mut().iter_mut().zip(self.g.data()) {
            *o = g - tau * *o;
        }
        Ok(())
    }

    /// Primal point associated with a dual point, `P_C(g - tau J* psi)`.
    pub fn primal(&self, psi: &PatchJacobianField) -> Result<Image> {
        self.check(psi)?;
        let mut w = self.g.clone();
        self.w_into(psi, &mut w)?;
        self.cfg.constraint.project_in_place(w.data_mut());
        Ok(w)
    }

    /// `d(psi) = 1/2 ||w - P_C(w)||^2 + 1/2 (||g||^2 - ||w||^2)`.
    pub fn objective(&self, psi: &PatchJacobianField) -> Result<f64> {
        self.check(psi)?;
        let mut w = self.g.clone();
        self.w_into(psi, &mut w)?;
        Ok(self.objective_of_w(&w))
    }

    fn distance_to_set(&self, w: &[f64]) -> f64 {
        let c = self.cfg.constraint;
        w.iter()
            .map(|&v| {
                let d = v - c.project_value(v);
                d * d
            })
            .sum()
    }

    fn objective_of_w(&self, w: &Image) -> f64 {
        0.5 * self.distance_to_set(w.data()) + 0.5 * (self.g.squared_norm() - w.squared_norm())
    }

    /// `grad d(psi) = tau J P_C(g - tau J* psi)`.
    pub fn gradient(&self, psi: &PatchJacobianField) -> Result<PatchJacobianField> {
        let z = self.primal(psi)?;
        let mut out = self.op.apply(&z)?;
        let tau = self.cfg.tau;
        out.data_mut().iter_mut().for_each(|v| *v *= tau);
        Ok(out)
    }

    /// `1/2 ||g - f||^2 + tau R(f)`, infinite when `f` leaves the
    /// constraint set.
    pub fn primal_energy(&self, f: &Image) -> Result<f64> {
        self.g.same_shape(f)?;
        if !f.data().iter().all(|&v| self.cfg.constraint.contains(v)) {
            return Ok(f64::INFINITY);
        }
        let fidelity: f64 = self.g.data().iter().zip(f.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let reg = field_norm(&self.op.apply(f)?, self.cfg.q);
        Ok(0.5 * fidelity + self.cfg.tau * reg)
    }
}

/// Iteration state of the accelerated dual ascent.
#[derive(Debug, Clone)]
pub struct DualState {
    psi: PatchJacobianField,
    psi_prev: PatchJacobianField,
    // point at which the next gradient is evaluated
    search: PatchJacobianField,
    // projected ascent step; only kept apart from psi in monotone mode
    candidate: PatchJacobianField,
    objective: f64,
    t: f64,
    iteration: usize,
    z: Image,
    z_prev: Option<Image>,
    w: Image,
    ascent: PatchJacobianField,
    lipschitz: Vec<f64>,
}

/// Outcome of a single iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    /// `||z_k - z_{k-1}|| / ||z_k||`; infinite on the first iteration.
    pub rel_change: f64,
    /// False when monotone mode kept the previous iterate.
    pub accepted: bool,
}

impl DualState {
    /// `psi = 0`, `t = 1`.
    pub fn new(problem: &DualProblem) -> Self {
        let zero = problem.op.zero_field();
        Self {
            psi_prev: zero.clone(),
            search: zero.clone(),
            ascent: zero.clone(),
            candidate: zero.clone(),
            psi: zero,
            objective: problem.objective_of_w(&problem.g),
            t: 1.0,
            iteration: 0,
            z: problem.g.clone(),
            z_prev: None,
            w: problem.g.clone(),
            lipschitz: problem.inv_lipschitz.iter().map(|v| 1.0 / v).collect(),
        }
    }

    /// Latest accepted dual iterate.
    pub fn psi(&self) -> &PatchJacobianField {
        &self.psi
    }

    pub fn psi_prev(&self) -> &PatchJacobianField {
        &self.psi_prev
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Per-pixel step bounds `L[i]`.
    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    /// Primal estimate formed in the latest iteration.
    pub fn z(&self) -> &Image {
        &self.z
    }

    pub fn step(&mut self, problem: &DualProblem) -> Result<StepReport> {
        self.iteration += 1;
        let cfg = &problem.cfg;

        if let Some(prev) = self.z_prev.as_mut() {
            prev.data_mut().copy_from_slice(self.z.data());
        } else {
            self.z_prev = Some(self.z.clone());
        }
        problem.w_into(&self.search, &mut self.z)?;
        cfg.constraint.project_in_place(self.z.data_mut());
        if self.z.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: self.iteration,
            });
        }

        problem.op.apply_into(&self.z, &mut self.ascent)?;
        let block = problem.op.rows() * 2;
        let p = cfg.q.dual();
        for (i, step) in problem.inv_lipschitz.iter().enumerate() {
            let range = i * block..(i + 1) * block;
            let out = &mut self.candidate.data_mut()[range.clone()];
            for ((o, s), a) in out
                .iter_mut()
                .zip(&self.search.data()[range.clone()])
                .zip(&self.ascent.data()[range])
            {
                *o = s + step * a;
            }
            project_schatten_in_place(out, p);
        }

        let t_next = 0.5 * (1.0 + sqrt(1.0 + 4.0 * self.t * self.t));
        let momentum = (self.t - 1.0) / t_next;
        let accepted = if cfg.monotone {
            problem.w_into(&self.candidate, &mut self.w)?;
            let d = problem.objective_of_w(&self.w);
            self.psi_prev.data_mut().copy_from_slice(self.psi.data());
            let accepted = d >= self.objective;
            if accepted {
                self.psi.data_mut().copy_from_slice(self.candidate.data());
                self.objective = d;
            }
            // r = x_k + t/t_next (u - x_k) + (t - 1)/t_next (x_k - x_{k-1})
            let pull = self.t / t_next;
            for (((s, cur), prev), cand) in self
                .search
                .data_mut()
                .iter_mut()
                .zip(self.psi.data())
                .zip(self.psi_prev.data())
                .zip(self.candidate.data())
            {
                *s = cur + pull * (cand - cur) + momentum * (cur - prev);
            }
            accepted
        } else {
            core::mem::swap(&mut self.psi_prev, &mut self.psi);
            core::mem::swap(&mut self.psi, &mut self.candidate);
            for ((s, cur), prev) in self
                .search
                .data_mut()
                .iter_mut()
                .zip(self.psi.data())
                .zip(self.psi_prev.data())
            {
                *s = cur + momentum * (cur - prev);
            }
            true
        };
        self.t = t_next;

        let rel_change = match &self.z_prev {
            Some(prev) if self.iteration > 1 => {
                let diff: f64 = self
                    .z
                    .data()
                    .iter()
                    .zip(prev.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let norm = self.z.squared_norm();
                if norm > 0.0 {
                    sqrt(diff / norm)
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            _ => f64::INFINITY,
        };
        Ok(StepReport {
            iteration: self.iteration,
            rel_change,
            accepted,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub image: Image,
    pub dual: PatchJacobianField,
    pub iterations: usize,
    pub converged: bool,
    pub rel_change: f64,
}

/// Run the accelerated dual ascent until the relative change of the primal
/// estimate drops to `rel_tol` or `max_iters` is reached. `dp = None` is
/// the undirected (STV) operator.
pub fn solve(g: &Image, dp: Option<&DirectionalParams>, cfg: &SolverConfig) -> Result<Solution> {
    let problem = DualProblem::new(g, dp, cfg)?;
    let mut state = DualState::new(&problem);
    let mut converged = false;
    let mut rel_change = f64::INFINITY;
    while state.iteration() < cfg.max_iters {
        let report = state.step(&problem)?;
        rel_change = report.rel_change;
        if rel_change <= cfg.rel_tol {
            converged = true;
            break;
        }
    }
    let image = problem.primal(&state.psi)?;
    if image.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            iteration: state.iteration(),
        });
    }
    Ok(Solution {
        image,
        iterations: state.iteration(),
        dual: state.psi,
        converged,
        rel_change,
    })
}

/// ADSTV denoising with the given direction parameters.
pub fn denoise_adstv(g: &Image, dp: &DirectionalParams, cfg: &SolverConfig) -> Result<Image> {
    Ok(solve(g, Some(dp), cfg)?.image)
}

/// STV denoising (no direction guidance).
pub fn denoise_stv(g: &Image, cfg: &SolverConfig) -> Result<Image> {
    Ok(solve(g, None, cfg)?.image)
}

/// Isotropic TV (ROF) denoising over `constraint` with the default
/// iteration budget. `tau = 0` returns `P_C(g)`.
pub fn tv_denoise(g: &Image, tau: f64, constraint: Constraint) -> Result<Image> {
    if tau == 0.0 {
        return Ok(project_box(g, constraint));
    }
    denoise_stv(g, &SolverConfig::tv(tau, constraint))
}

pub fn dual_gradient(
    psi: &PatchJacobianField,
    g: &Image,
    dp: Option<&DirectionalParams>,
    cfg: &SolverConfig,
) -> Result<PatchJacobianField> {
    DualProblem::new(g, dp, cfg)?.gradient(psi)
}

pub fn dual_objective(psi: &PatchJacobianField, g: &Image, dp: Option<&DirectionalParams>, cfg: &SolverConfig) -> Result<f64> {
    DualProblem::new(g, dp, cfg)?.objective(psi)
}

pub fn primal_energy(f: &Image, g: &Image, dp: Option<&DirectionalParams>, cfg: &SolverConfig) -> Result<f64> {
    DualProblem::new(g, dp, cfg)?.primal_energy(f)
}
