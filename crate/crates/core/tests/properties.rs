use std::f64::consts::PI;

use adstv_core::diff::{div_backward, grad_forward, gaussian_kernel, GradientField};
use adstv_core::dpe::{analyze, fuse_scales, skew_enhance, skewness, DpeConfig};
use adstv_core::image::add_gaussian_noise;
use adstv_core::metrics::{psnr, ssim};
use adstv_core::solver::{project_box, project_schatten, solve, Constraint, SolverConfig};
use adstv_core::tensor::{
    eig2x2, regularizer_value, singular_values, DirectionalParams, DualOrder, JacobianOp, PatchJacobianField,
    SchattenOrder,
};
use adstv_core::{Image, NoiseSpec};
use proptest::prelude::*;

fn image(max_side: usize, channels: usize) -> impl Strategy<Value = Image> {
    (2..=max_side, 2..=max_side).prop_flat_map(move |(w, h)| {
        prop::collection::vec(0.0f64..1.0, w * h * channels)
            .prop_map(move |d| Image::new(w, h, channels, d).unwrap())
    })
}

fn image_with_params(max_side: usize) -> impl Strategy<Value = (Image, DirectionalParams)> {
    (3..=max_side, 3..=max_side, prop_oneof![Just(1usize), Just(3usize)], 1.0f64..6.0).prop_flat_map(
        |(w, h, c, ap)| {
            let n = w * h;
            (
                prop::collection::vec(0.0f64..1.0, n * c),
                prop::collection::vec(1.0f64..=ap, n),
                prop::collection::vec(0.0f64..PI, n),
            )
                .prop_map(move |(d, am, th)| {
                    (Image::new(w, h, c, d).unwrap(), DirectionalParams::new(w, h, ap, am, th).unwrap())
                })
        },
    )
}

fn matrix(rows: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_divergence_adjoint(f in image(12, 1), seed in any::<u64>()) {
        let (w, h) = (f.width(), f.height());
        let mut p = GradientField::zeros(w, h);
        let mut s = seed;
        for v in p.gx.iter_mut().chain(p.gy.iter_mut()) {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        let lhs = grad_forward(&f).dot(&p);
        let rhs = -f.dot(&div_backward(&p));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn directional_jacobian_adjoint((f, dp) in image_with_params(9), support in prop_oneof![Just(1usize), Just(3), Just(5)]) {
        let k = gaussian_kernel(1.0, support).unwrap();
        let op = JacobianOp::for_image(&f, &k, Some(&dp)).unwrap();
        let mut psi = op.zero_field();
        for (i, v) in psi.data_mut().iter_mut().enumerate() {
            *v = ((i * 7919) % 101) as f64 / 50.0 - 1.0;
        }
        let lhs = op.apply(&f).unwrap().dot(&psi);
        let rhs = f.dot(&op.adjoint(&psi).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn regularizer_is_nonnegative_and_homogeneous((f, dp) in image_with_params(8), s in -3.0f64..3.0) {
        let k = gaussian_kernel(0.5, 3).unwrap();
        for q in [SchattenOrder::Nuclear, SchattenOrder::Frobenius] {
            let r = regularizer_value(&f, &k, Some(&dp), q).unwrap();
            prop_assert!(r >= 0.0);
            let rs = regularizer_value(&f.map(|v| s * v), &k, Some(&dp), q).unwrap();
            prop_assert!((rs - s.abs() * r).abs() <= 1e-9 * (1.0 + r));
            let shifted = regularizer_value(&f.map(|v| v + 0.25), &k, Some(&dp), q).unwrap();
            prop_assert!((shifted - r).abs() <= 1e-9 * (1.0 + r));
        }
    }

    #[test]
    fn eig2x2_reconstructs(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let e = eig2x2(a, b, c);
        prop_assert!(e.lambda_plus >= e.lambda_minus);
        let (u, v) = (e.v_plus, e.v_minus);
        let r = |i: usize, j: usize| e.lambda_plus * u[i] * u[j] + e.lambda_minus * v[i] * v[j];
        let scale = 1.0 + a.abs() + b.abs() + c.abs();
        prop_assert!((r(0, 0) - a).abs() < 1e-12 * scale);
        prop_assert!((r(0, 1) - b).abs() < 1e-12 * scale);
        prop_assert!((r(1, 1) - c).abs() < 1e-12 * scale);
        prop_assert!((u[0] * v[0] + u[1] * v[1]).abs() < 1e-12);
        prop_assert!(u[0] > 0.0 || (u[0] == 0.0 && u[1] >= 0.0));
        prop_assert!(v[0] > 0.0 || (v[0] == 0.0 && v[1] >= 0.0));
    }

    #[test]
    fn schatten_projection_properties(m in (1usize..12).prop_flat_map(matrix)) {
        for p in [DualOrder::Spectral, DualOrder::Frobenius] {
            let once = project_schatten(&m, p);
            let twice = project_schatten(&once, p);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let (s1, s2) = singular_values(&m);
            let (t1, t2) = singular_values(&once);
            // the small singular value comes from a Gram eigenvalue, so compare squares
            prop_assert!(t1 <= s1 + 1e-12);
            prop_assert!(t2 * t2 <= s2 * s2 + 1e-12 * (1.0 + s1 * s1));
            prop_assert!(t1 <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn box_projection_idempotent(f in image(8, 3).prop_map(|i| i.map(|v| 3.0 * v - 1.0))) {
        let p = project_box(&f, Constraint::UNIT_BOX);
        prop_assert_eq!(project_box(&p, Constraint::UNIT_BOX), p.clone());
        prop_assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn noise_is_reproducible(f in image(10, 1), sigma in 0.0f64..0.5, seed in any::<u64>()) {
        let spec = NoiseSpec::new(sigma, seed).unwrap();
        prop_assert_eq!(add_gaussian_noise(&f, spec), add_gaussian_noise(&f, spec));
    }

    #[test]
    fn fusion_is_bounded(prev in prop::collection::vec(0.0f64..1.0, 16), new in prop::collection::vec(0.0f64..1.0, 16)) {
        let p = Image::new(4, 4, 1, prev).unwrap();
        let n = Image::new(4, 4, 1, new).unwrap();
        let out = fuse_scales(&p, &n).unwrap();
        for ((o, a), b) in out.data().iter().zip(p.data()).zip(n.data()) {
            prop_assert!(*o >= *a && *o <= a.max(*b));
        }
    }

    #[test]
    fn skew_enhancement_direction(v in prop::collection::vec(0.0f64..1.0, 25)) {
        let f = Image::new(5, 5, 1, v).unwrap();
        let g = skewness(f.data());
        let out = skew_enhance(&f);
        for (o, a) in out.data().iter().zip(f.data()) {
            prop_assert!((0.0..=1.0).contains(o));
            if g > 1.0 {
                prop_assert!(o <= a);
            } else if g < -1.0 {
                prop_assert!(o >= a);
            } else {
                prop_assert_eq!(o, a);
            }
        }
    }

    #[test]
    fn metric_symmetry(a in image(16, 1), shift in 0.0f64..0.2) {
        let b = a.map(|v| v + shift);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        if a.width() >= 11 && a.height() >= 11 {
            let s = ssim(&a, &b).unwrap();
            prop_assert!(s <= 1.0 + 1e-12);
            prop_assert_eq!(s, ssim(&b, &a).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solver_output_feasible_and_energy_decreasing((g, dp) in image_with_params(10), tau in 0.01f64..0.3, nuclear in any::<bool>()) {
        let q = if nuclear { SchattenOrder::Nuclear } else { SchattenOrder::Frobenius };
        let cfg = SolverConfig { q, max_iters: 40, ..SolverConfig::new(tau) };
        let sol = solve(&g, Some(&dp), &cfg).unwrap();
        prop_assert!(sol.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..g.pixels() {
            let m = sol.dual.pixel(i);
            let norm = match q {
                SchattenOrder::Nuclear => singular_values(m).0,
                SchattenOrder::Frobenius => m.iter().map(|v| v * v).sum::<f64>().sqrt(),
            };
            prop_assert!(norm <= 1.0 + 1e-9);
        }
        let k = &cfg.kernel;
        let energy = |f: &Image| {
            let fid: f64 = g.data().iter().zip(f.data()).map(|(a, b)| (a - b).powi(2)).sum();
            0.5 * fid + tau * regularizer_value(f, k, Some(&dp), q).unwrap()
        };
        prop_assert!(energy(&sol.image) <= energy(&g) + 1e-12);
        let again = solve(&g, Some(&dp), &cfg).unwrap();
        prop_assert_eq!(again.image, sol.image);
    }

    #[test]
    fn dpe_field_ranges(g in (12usize..20, 12usize..20, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(w, h, c)| {
        prop::collection::vec(0.0f64..1.0, w * h * c).prop_map(move |d| Image::new(w, h, c, d).unwrap())
    }), ap in 1.5f64..20.0, k in 2usize..=3) {
        let cfg = DpeConfig::new(ap, k, 5).unwrap();
        let fields = analyze(&g, &cfg).unwrap();
        for s in &fields.stages {
            for f in [&s.coherence, &s.regularized, &s.fused, &s.enhanced] {
                prop_assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
            prop_assert!(s.angle.data().iter().all(|t| (0.0..PI).contains(t)));
        }
        let p = fields.params(ap).unwrap();
        prop_assert!(p.theta().iter().all(|t| (0.0..PI).contains(t)));
        prop_assert!(p.alpha_minus().iter().all(|a| (1.0..=ap).contains(a)));
        let lo = p.alpha_minus().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.alpha_minus().iter().cloned().fold(0.0, f64::max);
        prop_assert!(lo == 1.0 || hi == lo);
        prop_assert!((hi - ap).abs() < 1e-12);
        prop_assert_eq!(analyze(&g, &cfg).unwrap(), fields);
    }
}

#[test]
fn zero_field_adjoint_is_zero() {
    let k = gaussian_kernel(0.5, 3).unwrap();
    let psi = PatchJacobianField::zeros(5, 4, 3, &k);
    let op = JacobianOp::new(5, 4, 3, &k, None).unwrap();
    assert!(op.adjoint(&psi).unwrap().data().iter().all(|&v| v == 0.0));
}
