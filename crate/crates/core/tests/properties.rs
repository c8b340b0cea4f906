use axisym_core::biot_savart::{check_divergence, stream_operator, StreamSolver};
use axisym_core::evolution::{lp_functional, r_weights, Evolver, Scheme, TimeStepPlan};
use axisym_core::grid::gradient;
use axisym_core::inequality::{
    ap_product_weight, member_from_unit, member_ratio, nash_ratio, Ball3D, BoxQuadrature, Suite, SuiteSpec, FAMILY_DIM,
};
use axisym_core::interp::Sampler;
use axisym_core::lagrangian::builtin_betas;
use axisym_core::{AxisParity, FieldRole, HalfPlaneGrid, ScalarField};
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = HalfPlaneGrid> {
    (4usize..20, 4usize..20, 0.5f64..4.0, -3.0f64..0.0, 0.5f64..3.0)
        .prop_map(|(nr, nz, r_max, z0, len)| HalfPlaneGrid::new(nr, nz, r_max, z0, z0 + len).unwrap())
}

fn field(g: HalfPlaneGrid, seed: u64) -> ScalarField {
    // cheap deterministic pseudo-random values
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let values = (0..g.len())
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect();
    ScalarField::from_values(g, FieldRole::Passive, values).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stream_operator_is_symmetric(g in grid(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = stream_operator(&g);
        let (x, y) = (field(g, s1).values, field(g, s2).values);
        let mut ax = vec![0.0; g.len()];
        let mut ay = vec![0.0; g.len()];
        a.apply(&x, &mut ax);
        a.apply(&y, &mut ay);
        let (l, r) = (dot(&y, &ax), dot(&x, &ay));
        prop_assert!((l - r).abs() <= 1e-10 * (l.abs() + r.abs() + 1.0));
        // and positive definite
        prop_assert!(dot(&x, &ax) > 0.0);
    }

    #[test]
    fn stream_solve_is_linear(g in grid(), s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0) {
        let mut solver = StreamSolver::new(g).with_tolerance(1e-12);
        let (x, y) = (field(g, s1), field(g, s2));
        let combo = ScalarField::from_values(
            g, FieldRole::Vorticity, x.values.iter().zip(&y.values).map(|(p, q)| a * p + q).collect()).unwrap();
        let px = solver.solve(&x).unwrap().0.psi;
        let py = solver.solve(&y).unwrap().0.psi;
        let pc = solver.solve(&combo).unwrap().0.psi;
        let scale = pc.max_abs() + px.max_abs() + py.max_abs();
        for k in 0..g.len() {
            prop_assert!((pc.values[k] - a * px.values[k] - py.values[k]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn discrete_velocity_is_divergence_free(g in grid(), s in any::<u64>()) {
        let mut solver = StreamSolver::new(g);
        let (psi, _) = solver.solve(&field(g, s)).unwrap();
        let u = axisym_core::biot_savart::velocity_from_stream(&psi);
        let (a, b) = u.max_abs();
        prop_assert!(check_divergence(&u) <= 1e-10 * (1.0 + a.max(b) / g.hr.min(g.hz)));
    }

    #[test]
    fn gradient_is_linear(g in grid(), s1 in any::<u64>(), s2 in any::<u64>(), a in -2.0f64..2.0) {
        let (x, y) = (field(g, s1), field(g, s2));
        let combo = ScalarField::from_values(
            g, FieldRole::Passive, x.values.iter().zip(&y.values).map(|(p, q)| a * p + q).collect()).unwrap();
        let (xr, xz) = gradient(&x, AxisParity::Even);
        let (yr, yz) = gradient(&y, AxisParity::Even);
        let (cr, cz) = gradient(&combo, AxisParity::Even);
        for k in 0..g.len() {
            prop_assert!((cr.values[k] - a * xr.values[k] - yr.values[k]).abs() <= 1e-9 * (1.0 + cr.values[k].abs()));
            prop_assert!((cz.values[k] - a * xz.values[k] - yz.values[k]).abs() <= 1e-9 * (1.0 + cz.values[k].abs()));
        }
    }

    #[test]
    fn xi_omega_round_trip(g in grid(), s in any::<u64>()) {
        let xi = field(g, s);
        let back = ScalarField::xi_from_omega(&ScalarField::omega_from_xi(&xi));
        for k in 0..g.len() {
            prop_assert!((back.values[k] - xi.values[k]).abs() <= 1e-14);
        }
    }

    #[test]
    fn box_quadrature_is_linear(a in -3.0f64..3.0, c in 0.1f64..4.0, r1 in 0.2f64..3.0, z1 in 0.2f64..3.0) {
        let q = BoxQuadrature::default();
        let bx = (0.0, r1, -z1, z1);
        let f = |r: f64, z: f64| (c * r).sin() * z * z;
        let g = |r: f64, z: f64| (r - z).exp();
        let lhs = q.integrate(bx, |r, z| a * f(r, z) + g(r, z));
        let rhs = a * q.integrate(bx, f) + q.integrate(bx, g);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        // and exact on low-degree polynomials
        let poly = q.integrate(bx, |r, z| r * r * z * z + r);
        let exact = r1.powi(3) / 3.0 * 2.0 * z1.powi(3) / 3.0 + r1 * r1 / 2.0 * 2.0 * z1;
        prop_assert!((poly - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn constant_weight_gives_unit_ap_product(d in 0.0f64..20.0, x3 in -5.0f64..5.0, rad in 0.01f64..10.0, p in 1.05f64..1.95) {
        let b = Ball3D::new(d, x3, rad).unwrap();
        prop_assert!((ap_product_weight(p, 0.0, &b).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ap_product_is_at_least_one(d in 0.0f64..20.0, rad in 0.01f64..10.0, p in 1.1f64..1.9) {
        // Hölder gives ⨍w · (⨍w^{-1/(p-1)})^{p-1} ≥ 1
        let b = Ball3D::new(d, 0.0, rad).unwrap();
        prop_assert!(ap_product_weight(p, p, &b).unwrap() >= 1.0 - 1e-8);
    }

    #[test]
    fn sampler_reproduces_nodes(g in grid(), s in any::<u64>(), i in 0usize..4, j in 0usize..4) {
        let f = field(g, s);
        let sampler = Sampler::new(g, &f.values, AxisParity::Even);
        let v = sampler.bicubic(g.r(i), g.z(j));
        prop_assert!((v - f.at(i, j)).abs() <= 1e-12);
        prop_assert!((sampler.bilinear(g.r(i), g.z(j)) - f.at(i, j)).abs() <= 1e-12);
    }

    #[test]
    fn renorm_functions_vanish_near_zero_and_stay_bounded(s in -200.0f64..200.0, scale in 0.1f64..50.0) {
        for b in builtin_betas(scale) {
            let v = b.eval(s);
            if s.abs() <= b.delta {
                prop_assert_eq!(v, 0.0);
            }
            prop_assert!(v.abs() <= b.cap + 1e-12);
            if b.odd {
                prop_assert_eq!(b.eval(-s), -v);
            } else {
                prop_assert_eq!(b.eval(-s), v);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn suite_ratios_are_dilation_invariant(kind in 0u8..3, unit in prop::array::uniform9(0.0f64..1.0), lam in 0.3f64..3.0) {
        prop_assume!(FAMILY_DIM == 9);
        let q = BoxQuadrature::default();
        let m = member_from_unit(kind, unit);
        let a = nash_ratio(&m.f, &q);
        let b = nash_ratio(&m.f.dilated(lam), &q);
        prop_assert!((a - b).abs() <= 1e-8 * a.abs());
        let spec = SuiteSpec { suite: Suite::Sobolev, p: 2.0, samples: 1, seed: 0 };
        let r = member_ratio(&spec, &m, &q).unwrap();
        prop_assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn semi_lagrangian_step_does_not_raise_lp_norms(
        r0 in 0.6f64..1.4, z0 in -0.5f64..0.5, sigma in 0.15f64..0.4, amp in -10.0f64..10.0, nu in 0.0f64..0.01,
    ) {
        let g = HalfPlaneGrid::new(24, 48, 3.0, -3.0, 3.0).unwrap();
        let xi = g.sample(FieldRole::RelativeVorticity, |r, z| {
            amp * (-((r - r0).powi(2) + (z - z0).powi(2)) / (2.0 * sigma * sigma)).exp()
        });
        let ps = vec![1.0, 1.5, 2.0, 3.0];
        let mut ev = Evolver::biot_savart(g, ps.clone()).unwrap();
        let mut state = ev.initial_state(xi, nu, 0.0).unwrap();
        let w = r_weights(&g);
        for _ in 0..3 {
            let plan = TimeStepPlan::new(0.05, 0.9).unwrap();
            let (next, _) = ev.step(Scheme::XiSemiLagrangian, &state, &plan).unwrap();
            for &p in &ps {
                let before = lp_functional(&state.xi.values, &w, p);
                let after = lp_functional(&next.xi.values, &w, p);
                prop_assert!(after <= before * (1.0 + 1e-12) + 1e-300, "p={} {} -> {}", p, before, after);
            }
            state = next;
        }
    }
}
