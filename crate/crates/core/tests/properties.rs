use std::f64::consts::PI;

use meyers_core::analysis::*;
use meyers_core::coeff::*;
use meyers_core::fem::{assemble_stiffness, solve_problem, FemSolution, SolveOptions};
use meyers_core::mesh::{build_disk_mesh, refine};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk_params() -> impl Strategy<Value = (usize, usize, f64)> {
    (2usize..6, 2usize..8, 1.0f64..3.0).prop_map(|(k, s, g)| (k, 4 * s, g))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refined_disk_meshes_stay_valid((k, s, g) in disk_params()) {
        let m0 = build_disk_mesh(k, s, g).unwrap();
        let m1 = refine(&m0);
        let m2 = refine(&m1);
        for m in [&m0, &m1, &m2] {
            prop_assert!(m.validate().is_ok());
            for t in &m.triangles {
                let c = m.corners(t);
                prop_assert!(c.iter().all(|p| p[0] >= 0.0) || c.iter().all(|p| p[0] <= 0.0));
            }
        }
        prop_assert_eq!(m2.n_triangles(), 16 * m0.n_triangles());
        // polygon area grows toward pi under refinement
        let (a0, a1, a2) = (m0.total_area(), m1.total_area(), m2.total_area());
        prop_assert!(a0 <= a1 && a1 <= a2 && a2 < PI);
        prop_assert!((PI - a2) < 0.3 * (PI - a0));
    }

    #[test]
    fn example_quadratic_form_is_euclidean(mu in 0.01f64..0.99, x in -1.0f64..1.0, y in -1.0f64..1.0,
                                           a in -10.0f64..10.0, b in -10.0f64..10.0) {
        prop_assume!(x != 0.0 || y != 0.0);
        let f = CoefficientField::example(mu).unwrap();
        let m = f.eval_matrix(x, y).unwrap();
        let q = a * (m[0][0] * a + m[0][1] * b) + b * (m[1][0] * a + m[1][1] * b);
        prop_assert!((q - (a * a + b * b)).abs() <= 1e-13 * (a * a + b * b).max(1.0));
    }

    #[test]
    fn drift_is_odd_in_y(mu in 0.01f64..0.99, x in -1.0f64..1.0, y in 1e-6f64..1.0) {
        let d1 = eval_example_d(x, y, mu).unwrap();
        let d2 = eval_example_d(x, -y, mu).unwrap();
        prop_assert_eq!(d1, -d2);
        prop_assert!(d1.abs() <= example_sup_norm(mu));
    }

    #[test]
    fn bmo_homogeneity_and_shift(alpha in -5.0f64..5.0, c in -5.0f64..5.0, mu in 0.1f64..0.9) {
        let (centers, radii) = default_bmo_sampling(5, 3);
        let d = move |x: f64, y: f64| eval_example_d(x, y, mu).ok();
        let base = bmo_seminorm(&d, &centers, &radii, 64).unwrap().value;
        let scaled = bmo_seminorm(&|x: f64, y: f64| d(x, y).map(|v| alpha * v), &centers, &radii, 64).unwrap().value;
        let shifted = bmo_seminorm(&|x: f64, y: f64| d(x, y).map(|v| v + c), &centers, &radii, 64).unwrap().value;
        prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-12 * base.max(1.0) * alpha.abs().max(1.0));
        prop_assert!((shifted - base).abs() <= 1e-12 * base.max(1.0) * c.abs().max(1.0));
        prop_assert!(base <= 2.0 * example_sup_norm(mu));
    }

    #[test]
    fn skew_quadratic_form_vanishes(seed in any::<u64>(), (k, s, g) in disk_params(), mu in 0.05f64..0.95) {
        let mesh = build_disk_mesh(k, s, g).unwrap();
        let field = CoefficientField::example(mu).unwrap();
        let st = assemble_stiffness(&mesh, &field, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zz: f64 = z.iter().map(|v| v * v).sum();
        prop_assert!(st.skew.quadratic_form(&z).abs() <= 1e-12 * zz * st.skew.max_abs());
    }

    #[test]
    fn pure_power_fits(s in -3.0f64..3.0, c in 0.01f64..100.0) {
        let radii = dyadic_radii(1, 9);
        let v: Vec<f64> = radii.iter().map(|r| c * r.powf(s)).collect();
        let fit = fit_exponent(&radii, &v).unwrap();
        prop_assert!((fit.slope - s).abs() < 1e-10);
        prop_assert!(fit.r2 >= 1.0 - 1e-12 && fit.r2 <= 1.0);
    }

    #[test]
    fn lp_threshold_for_random_mu(mu in 0.05f64..0.85) {
        let o = OracleSolution::new(mu).unwrap();
        let target = 2.0 / (1.0 - mu);
        let step = 0.25;
        let grid = linear_grid(2.0, target + 2.0, step);
        let scan = integrability_threshold(GradSource::Oracle(o), &grid, &dyadic_radii(2, 10), 3).unwrap();
        prop_assert!((scan.p_star - target).abs() <= step + 0.15, "{} vs {}", scan.p_star, target);
        let h = holder_exponent(ValueSource::Oracle(o), &dyadic_radii(2, 10), 64).unwrap();
        prop_assert!((h.alpha - mu).abs() < 1e-10);
    }

    #[test]
    fn reverse_holder_is_zero_homogeneous(c in 0.01f64..100.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = BallSamples::default();
        let mut t = BallSamples::default();
        for _ in 0..2000 {
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (w, g, f) = (rng.gen_range(0.1..1.0), rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0));
            s.push(p, w, g, f);
            t.push(p, w, c * g, c * f);
        }
        let grid = linear_grid(2.0, 6.0, 1.0);
        let a = reverse_holder_scan(&s, &[[0.0, 0.0], [0.2, 0.1]], &[0.4, 0.2], &grid).unwrap();
        let b = reverse_holder_scan(&t, &[[0.0, 0.0], [0.2, 0.1]], &[0.4, 0.2], &grid).unwrap();
        for (ra, rb) in a.ratios.iter().flatten().zip(b.ratios.iter().flatten()) {
            prop_assert!((ra - rb).abs() <= 1e-12 * ra.max(1.0));
        }
    }

    #[test]
    fn gradient_norm_scales_and_is_monotone(c in 0.1f64..10.0, r1 in 0.05f64..0.3, dr in 0.01f64..0.3) {
        let mesh = build_disk_mesh(4, 16, 1.5).unwrap();
        let id = CoefficientField::identity();
        let base: Vec<f64> = mesh.vertices.iter().map(|v| v.x * v.y + v.x).collect();
        let u = FemSolution::new(&mesh, &id, base.clone()).unwrap();
        let cu = FemSolution::new(&mesh, &id, base.iter().map(|v| c * v).collect()).unwrap();
        let small = Region::Ball { center: [0.1, 0.0], radius: r1 };
        let big = Region::Ball { center: [0.1, 0.0], radius: r1 + dr };
        let a = lp_norm_gradient(GradSource::Fem(&u), &small, 3.0, 3).unwrap();
        let b = lp_norm_gradient(GradSource::Fem(&u), &big, 3.0, 3).unwrap();
        let ca = lp_norm_gradient(GradSource::Fem(&cu), &small, 3.0, 3).unwrap();
        prop_assert!(a <= b);
        prop_assert!((ca - c * a).abs() <= 1e-12 * ca.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn galerkin_consistency(mu in 0.1f64..0.9, seed in any::<u64>()) {
        // F = A grad v for a P1 function v with v = g on the boundary gives back v
        let mesh = build_disk_mesh(3, 16, 1.0).unwrap();
        let field = CoefficientField::example(mu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vh = FemSolution::new(&mesh, &field, v.clone()).unwrap();
        let locate = |x: f64, y: f64| {
            mesh.triangles.iter().position(|t| {
                let c = mesh.corners(t);
                let s = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
                s(c[0], c[1]) >= 0.0 && s(c[1], c[2]) >= 0.0 && s(c[2], c[0]) >= 0.0
            })
        };
        let f = |x: f64, y: f64| {
            let t = locate(x, y)?;
            field.apply(x, y, vh.element_gradient(t)).ok()
        };
        let boundary: Vec<Option<f64>> = mesh.vertices.iter().zip(&v).map(|(p, &x)| p.on_boundary.then_some(x)).collect();
        let g = |x: f64, y: f64| {
            mesh.vertices.iter().position(|p| p.x == x && p.y == y).and_then(|i| boundary[i]).unwrap_or(0.0)
        };
        // the load integrates A element by element with the same rule as the
        // stiffness, so both sides agree to solver tolerance
        let (sol, rep) = solve_problem(&mesh, &field, &f, &g, &SolveOptions::with_tol(1e-12)).unwrap();
        prop_assert!(rep.converged);
        for (a, b) in sol.coeffs.iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }
    }
}
