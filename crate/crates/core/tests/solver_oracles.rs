use std::f64::consts::PI;

use adstv_core::diff::{gaussian_kernel, Kernel};
use adstv_core::solver::{
    dual_gradient, dual_objective, primal_energy, project_schatten, solve, tv_denoise, Constraint, DualProblem,
    DualState, SolverConfig,
};
use adstv_core::tensor::{singular_values, DirectionalParams, DualOrder, JacobianOp, PatchJacobianField, SchattenOrder};
use adstv_core::Image;
use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

fn random_image(w: usize, h: usize, c: usize, rng: &mut ChaCha8Rng) -> Image {
    let u = Uniform::new(0.0, 1.0).unwrap();
    Image::new(w, h, c, (0..w * h * c).map(|_| u.sample(rng)).collect()).unwrap()
}

fn random_params(w: usize, h: usize, rng: &mut ChaCha8Rng) -> DirectionalParams {
    let ap = Uniform::new(1.0, 5.0).unwrap().sample(rng);
    let am = Uniform::new_inclusive(1.0, ap).unwrap();
    let th = Uniform::new(0.0, PI).unwrap();
    DirectionalParams::new(
        w,
        h,
        ap,
        (0..w * h).map(|_| am.sample(rng)).collect(),
        (0..w * h).map(|_| th.sample(rng)).collect(),
    )
    .unwrap()
}

fn random_field(w: usize, h: usize, c: usize, k: &Kernel, scale: f64, rng: &mut ChaCha8Rng) -> PatchJacobianField {
    let u = Uniform::new(-scale, scale).unwrap();
    let mut f = PatchJacobianField::zeros(w, h, c, k);
    f.data_mut().iter_mut().for_each(|v| *v = u.sample(rng));
    f
}

fn axpy(a: &PatchJacobianField, s: f64, d: &PatchJacobianField) -> PatchJacobianField {
    let mut out = a.clone();
    out.data_mut().iter_mut().zip(d.data()).for_each(|(o, v)| *o += s * v);
    out
}

#[test]
fn dual_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for (c, constraint) in [(1, Constraint::Unconstrained), (3, Constraint::Unconstrained), (1, Constraint::UNIT_BOX)] {
        let g = random_image(4, 4, c, &mut rng);
        let dp = random_params(4, 4, &mut rng);
        let cfg = SolverConfig {
            constraint,
            ..SolverConfig::new(0.3)
        };
        let psi = random_field(4, 4, c, &cfg.kernel, 1.0, &mut rng);
        let grad = dual_gradient(&psi, &g, Some(&dp), &cfg).unwrap();
        for _ in 0..5 {
            let d = random_field(4, 4, c, &cfg.kernel, 1.0, &mut rng);
            let h = 1e-5;
            let fp = dual_objective(&axpy(&psi, h, &d), &g, Some(&dp), &cfg).unwrap();
            let fm = dual_objective(&axpy(&psi, -h, &d), &g, Some(&dp), &cfg).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let an = grad.dot(&d);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "fd {fd} analytic {an}");
        }
    }
}

fn svd_oracle(m: &[f64], rows: usize) -> Vec<f64> {
    let a = DMatrix::from_row_slice(rows, 2, m);
    let svd = a.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let s = DMatrix::from_diagonal(&svd.singular_values.map(|v| v.min(1.0)));
    let r = u * s * vt;
    let mut out = Vec::with_capacity(rows * 2);
    for i in 0..rows {
        out.push(r[(i, 0)]);
        out.push(r[(i, 1)]);
    }
    out
}

#[test]
fn spectral_projection_matches_full_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let u = Uniform::new(-2.0, 2.0).unwrap();
    for rows in [1, 2, 3, 9, 27] {
        for _ in 0..50 {
            let m: Vec<f64> = (0..rows * 2).map(|_| u.sample(&mut rng)).collect();
            let p = project_schatten(&m, DualOrder::Spectral);
            let o = svd_oracle(&m, rows);
            for (a, b) in p.iter().zip(&o) {
                assert!((a - b).abs() < 1e-10, "rows {rows}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn projection_is_nearest_ball_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let u = Uniform::new(-2.0, 2.0).unwrap();
    for p in [DualOrder::Spectral, DualOrder::Frobenius] {
        let m: Vec<f64> = (0..18).map(|_| u.sample(&mut rng)).collect();
        let proj = project_schatten(&m, p);
        let dist = |b: &[f64]| m.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let best = dist(&proj);
        for _ in 0..10_000 {
            // random member of the ball: project a random matrix and shrink it
            let r: Vec<f64> = (0..18).map(|_| u.sample(&mut rng)).collect();
            let shrink = Uniform::new(0.0, 1.0).unwrap().sample(&mut rng);
            let b: Vec<f64> = project_schatten(&r, p).iter().map(|v| v * shrink).collect();
            assert!(dist(&b) >= best - 1e-12);
        }
    }
}

#[test]
fn projection_is_rotation_equivariant() {
    // P(M Q) = P(M) Q for orthogonal Q, so the eigenvector sign convention
    // cannot leak into the result.
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let u = Uniform::new(-2.0, 2.0).unwrap();
    for _ in 0..100 {
        let m: Vec<f64> = (0..10).map(|_| u.sample(&mut rng)).collect();
        let t = Uniform::new(0.0, 2.0 * PI).unwrap().sample(&mut rng);
        let flip = if u.sample(&mut rng) > 0.0 { 1.0 } else { -1.0 };
        let q = [t.cos(), -t.sin() * flip, t.sin(), t.cos() * flip];
        let mul = |a: &[f64]| -> Vec<f64> {
            a.chunks(2)
                .flat_map(|r| [r[0] * q[0] + r[1] * q[2], r[0] * q[1] + r[1] * q[3]])
                .collect()
        };
        let lhs = project_schatten(&mul(&m), DualOrder::Spectral);
        let rhs = mul(&project_schatten(&m, DualOrder::Spectral));
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn tv_reduction_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let g = random_image(16, 12, 1, &mut rng);
    let tau = 0.1;
    let tv = tv_denoise(&g, tau, Constraint::UNIT_BOX).unwrap();
    let cfg = SolverConfig {
        q: SchattenOrder::Frobenius,
        kernel: Kernel::delta(),
        ..SolverConfig::new(tau)
    };
    let dp = DirectionalParams::identity(16, 12);
    let via_adstv = solve(&g, Some(&dp), &cfg).unwrap().image;
    for (a, b) in tv.data().iter().zip(via_adstv.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn constant_direction_reduces_to_stv() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for c in [1, 3] {
        let g = random_image(14, 10, c, &mut rng);
        let cfg = SolverConfig::new(0.08);
        let stv = solve(&g, None, &cfg).unwrap().image;
        for theta in [0.0, 0.7, 2.5] {
            let dp = DirectionalParams::constant(14, 10, 1.0, 1.0, theta).unwrap();
            let out = solve(&g, Some(&dp), &cfg).unwrap().image;
            for (a, b) in stv.data().iter().zip(out.data()) {
                assert!((a - b).abs() < 1e-6, "theta {theta}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn single_tap_kernel_ignores_theta_without_anisotropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let g = random_image(10, 10, 1, &mut rng);
    let cfg = SolverConfig::tv(0.1, Constraint::UNIT_BOX);
    let th = Uniform::new(0.0, PI).unwrap();
    let dp = DirectionalParams::new(10, 10, 1.0, vec![1.0; 100], (0..100).map(|_| th.sample(&mut rng)).collect())
        .unwrap();
    let a = solve(&g, None, &cfg).unwrap().image;
    let b = solve(&g, Some(&dp), &cfg).unwrap().image;
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn long_tv_solve_closes_duality_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let g = random_image(4, 4, 1, &mut rng);
    let cfg = SolverConfig {
        max_iters: 10_000,
        rel_tol: f64::MIN_POSITIVE,
        ..SolverConfig::tv(0.1, Constraint::UNIT_BOX)
    };
    let sol = solve(&g, None, &cfg).unwrap();
    let primal = primal_energy(&sol.image, &g, None, &cfg).unwrap();
    let dual = dual_objective(&sol.dual, &g, None, &cfg).unwrap();
    assert!(primal - dual >= -1e-12);
    assert!(primal - dual < 1e-4, "gap {}", primal - dual);

    // the default budget lands close to the reference solution
    let out = tv_denoise(&g, 0.1, Constraint::UNIT_BOX).unwrap();
    for (a, b) in out.data().iter().zip(sol.image.data()) {
        assert!((a - b).abs() < 1e-3);
    }
}

#[test]
fn dual_objective_trace_is_nondecreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for trial in 0..10 {
        let c = if trial % 2 == 0 { 1 } else { 3 };
        let g = random_image(8, 8, c, &mut rng);
        let dp = random_params(8, 8, &mut rng);
        let q = if trial % 3 == 0 { SchattenOrder::Frobenius } else { SchattenOrder::Nuclear };
        let cfg = SolverConfig {
            q,
            monotone: true,
            ..SolverConfig::new(0.05 + 0.02 * trial as f64)
        };
        let problem = DualProblem::new(&g, Some(&dp), &cfg).unwrap();
        let mut state = DualState::new(&problem);
        let mut last = problem.objective(state.psi()).unwrap();
        for _ in 0..100 {
            state.step(&problem).unwrap();
            let d = problem.objective(state.psi()).unwrap();
            assert!(d >= last - 1e-12, "trial {trial} iteration {}: {d} < {last}", state.iteration());
            last = d;
        }
    }
}

#[test]
fn plain_and_monotone_modes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let g = random_image(16, 16, 1, &mut rng);
    let dp = random_params(16, 16, &mut rng);
    let plain = SolverConfig {
        max_iters: 400,
        rel_tol: 1e-9,
        ..SolverConfig::new(0.1)
    };
    let mono = SolverConfig {
        monotone: true,
        ..plain.clone()
    };
    let problem = DualProblem::new(&g, Some(&dp), &plain).unwrap();
    let mut state = DualState::new(&problem);
    for _ in 0..20 {
        assert!(state.step(&problem).unwrap().accepted);
    }
    let a = solve(&g, Some(&dp), &plain).unwrap().image;
    let b = solve(&g, Some(&dp), &mono).unwrap().image;
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-4);
    }
}

#[test]
fn solve_improves_energy_and_stays_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    for c in [1, 3] {
        let g = random_image(12, 12, c, &mut rng);
        let dp = random_params(12, 12, &mut rng);
        let cfg = SolverConfig {
            kernel: gaussian_kernel(1.0, 5).unwrap(),
            ..SolverConfig::new(0.1)
        };
        let sol = solve(&g, Some(&dp), &cfg).unwrap();
        assert!(sol.iterations >= 1 && sol.iterations <= 100);
        let e_out = primal_energy(&sol.image, &g, Some(&dp), &cfg).unwrap();
        let e_in = primal_energy(&g, &g, Some(&dp), &cfg).unwrap();
        assert!(e_out <= e_in);
        for i in 0..144 {
            assert!(singular_values(sol.dual.pixel(i)).0 <= 1.0 + 1e-9);
        }
        assert!(sol.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn primal_energy_matches_two_term_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let g = random_image(7, 6, 3, &mut rng);
    let f = random_image(7, 6, 3, &mut rng);
    let dp = random_params(7, 6, &mut rng);
    let cfg = SolverConfig::new(0.25);
    let field = JacobianOp::for_image(&f, &cfg.kernel, Some(&dp)).unwrap().apply(&f).unwrap();
    let reg: f64 = (0..42)
        .map(|i| {
            let m = DMatrix::from_row_slice(field.rows(), 2, field.pixel(i));
            m.singular_values().sum()
        })
        .sum();
    let fid: f64 = g.data().iter().zip(f.data()).map(|(a, b)| (a - b).powi(2)).sum();
    let e = primal_energy(&f, &g, Some(&dp), &cfg).unwrap();
    assert!((e - (0.5 * fid + 0.25 * reg)).abs() < 1e-9 * e);
}

#[test]
fn solver_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let g = random_image(20, 16, 3, &mut rng);
    let dp = random_params(20, 16, &mut rng);
    let cfg = SolverConfig::new(0.1);
    let a = solve(&g, Some(&dp), &cfg).unwrap();
    let b = solve(&g, Some(&dp), &cfg).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.iterations, b.iterations);
}
