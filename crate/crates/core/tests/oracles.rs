//! Checks against closed forms and independent computations.

use std::f64::consts::PI;

use axisym_core::biot_savart::{apply_stream_operator, ring_stream, ring_velocity, StreamBoundary, StreamSolver};
use axisym_core::diagnostics::{impulse, lp_norm};
use axisym_core::grid::{gradient, integrate_weighted};
use axisym_core::inequality::{ap_product_weight, hardy_ratio, nash_ratio, Ball3D, BoxQuadrature, TestFunctionSpec};
use axisym_core::initial::{make_initial_condition, HillVortex, InitialCondition};
use axisym_core::lagrangian::{
    builtin_betas, duality_check, renorm_residual, solve_backward_transport, test_function_library, trace_flow,
    transport_forward, VelocitySeries,
};
use axisym_core::special::ellip_ke;
use axisym_core::{AxisParity, FieldRole, HalfPlaneGrid, ScalarField, VelocityField};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn elliptic_integrals_match_tabulated_values() {
    let cases = [
        (0.0, PI / 2.0, PI / 2.0),
        (0.5, 1.854_074_677_301_372, 1.350_643_881_047_675),
        (0.9, 2.578_092_113_348_173, 1.104_774_732_704_073),
    ];
    for (m, k, e) in cases {
        let (kk, ee) = ellip_ke(m);
        assert!(rel(kk, k) < 1e-13, "K({m}) = {kk}");
        assert!(rel(ee, e) < 1e-13, "E({m}) = {ee}");
    }
}

#[test]
fn ring_velocity_is_the_curl_of_ring_stream() {
    let h = 1e-5;
    for &(r, z) in &[(0.4, 0.3), (1.3, -0.2), (2.5, 1.7), (0.9, 0.05)] {
        let (ur, uz) = ring_velocity(r, z, 1.0, 0.0);
        let dpsi_dr = (ring_stream(r + h, z, 1.0, 0.0) - ring_stream(r - h, z, 1.0, 0.0)) / (2.0 * h);
        let dpsi_dz = (ring_stream(r, z + h, 1.0, 0.0) - ring_stream(r, z - h, 1.0, 0.0)) / (2.0 * h);
        assert!((uz - dpsi_dr / r).abs() < 1e-6 * (1.0 + uz.abs()), "uz at ({r},{z})");
        assert!((ur + dpsi_dz / r).abs() < 1e-6 * (1.0 + ur.abs()), "ur at ({r},{z})");
    }
}

#[test]
fn ring_flux_through_a_distant_loop_matches_a_dipole() {
    // far away the ring looks like a point dipole of moment π rs²
    let (r, z): (f64, f64) = (30.0, 40.0);
    let rho = (r * r + z * z).sqrt();
    let dipole = 0.25 * r * r / rho.powi(3);
    assert!(rel(ring_stream(r, z, 1.0, 0.0), dipole) < 1e-2);
}

#[test]
fn gradient_is_exact_on_quadratics() {
    let g = HalfPlaneGrid::new(7, 9, 1.4, -1.0, 2.0).unwrap();
    let f = g.sample(FieldRole::Passive, |r, z| 2.0 * r * r + 3.0 * z - 0.5 * z * z + 1.0);
    let (dr, dz) = gradient(&f, AxisParity::Even);
    for i in 0..g.nr {
        for j in 0..g.nz {
            let (r, z) = (g.r(i), g.z(j));
            assert!((dr.at(i, j) - 4.0 * r).abs() < 1e-12);
            assert!((dz.at(i, j) - (3.0 - z)).abs() < 1e-12);
        }
    }
}

#[test]
fn weighted_integral_of_constant_is_exact_for_linear_weight() {
    let g = HalfPlaneGrid::new(13, 8, 3.0, -2.0, 2.0).unwrap();
    let one = g.sample(FieldRole::Passive, |_, _| 1.0);
    let v = integrate_weighted(&one, 1.0, 2.0).unwrap();
    assert!(rel(v, 0.5 * 9.0 * 4.0) < 1e-13);
}

#[test]
fn nash_ratio_of_a_centred_gaussian_matches_closed_form() {
    // exp(−|x|²/w²) in R³: ‖·‖₁ = π^{3/2} w³, ‖·‖₂² = (π/2)^{3/2} w³,
    // ‖∇·‖₂² = 3 (π/2)^{3/2} w
    let w: f64 = 0.7;
    let c = (PI / 2.0).powf(1.5);
    let expected = (c * w.powi(3)).sqrt() / ((PI.powf(1.5) * w.powi(3)).powf(0.4) * (3.0 * c * w).powf(0.3));
    let f = TestFunctionSpec::Gaussian {
        rc: 0.0,
        zc: 0.3,
        wr: w,
        wz: w,
        amplitude: 2.5,
        cutoff: 12.0,
    };
    let got = nash_ratio(&f, &BoxQuadrature::new(10, 24));
    assert!(rel(got, expected) < 1e-6, "{got} vs {expected}");
}

fn midpoint_box(bx: (f64, f64, f64, f64), n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let (r0, r1, z0, z1) = bx;
    if !(r1 > r0 && z1 > z0) {
        return 0.0;
    }
    let (hr, hz) = ((r1 - r0) / n as f64, (z1 - z0) / n as f64);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += f(r0 + (i as f64 + 0.5) * hr, z0 + (j as f64 + 0.5) * hz);
        }
    }
    s * hr * hz
}

#[test]
fn hardy_ratio_agrees_with_brute_force_quadrature() {
    let f = TestFunctionSpec::RingBump {
        rc: 1.6,
        zc: 0.2,
        radius: 0.5,
        width: 0.3,
        amplitude: 1.3,
    };
    let strip = 1.0;
    let got = hardy_ratio(&f, 0.0, strip, &BoxQuadrature::default()).unwrap();
    let num = midpoint_box((strip, 2.0 * strip, -1.0, 1.5), 1200, |r, z| {
        (f.eval(r, z).0 - f.eval(2.0 * r, z).0).abs()
    });
    let den = midpoint_box((strip, 4.0 * strip, -1.0, 1.5), 1200, |r, z| {
        let (_, a, b) = f.eval(r, z);
        (a * a + b * b).sqrt() * r
    });
    assert!(rel(got, num / den) < 2e-3, "{got} vs {}", num / den);
}

#[test]
fn test_function_gradients_match_finite_differences() {
    let fs = [
        TestFunctionSpec::Gaussian {
            rc: 1.0,
            zc: 0.0,
            wr: 0.4,
            wz: 0.6,
            amplitude: 1.0,
            cutoff: 4.0,
        },
        TestFunctionSpec::RingBump {
            rc: 1.5,
            zc: -0.3,
            radius: 0.4,
            width: 0.2,
            amplitude: 2.0,
        },
        TestFunctionSpec::PolyBump {
            rc: 1.1,
            zc: 0.4,
            wr: 0.5,
            wz: 0.7,
            coeffs: [1.0, -0.3, 0.5, 0.8],
        },
    ];
    let h = 1e-6;
    for f in fs {
        for &(r, z) in &[(1.05, 0.1), (1.2, -0.2), (0.9, 0.35), (1.6, 0.0)] {
            let (_, fr, fz) = f.eval(r, z);
            let nr = (f.eval(r + h, z).0 - f.eval(r - h, z).0) / (2.0 * h);
            let nz = (f.eval(r, z + h).0 - f.eval(r, z - h).0) / (2.0 * h);
            assert!((fr - nr).abs() < 1e-6 * (1.0 + fr.abs()), "{f:?} ∂r at ({r},{z})");
            assert!((fz - nz).abs() < 1e-6 * (1.0 + fz.abs()), "{f:?} ∂z at ({r},{z})");
        }
    }
}

#[test]
fn constant_weight_control_gives_one() {
    for b in [
        Ball3D::new(0.0, 0.0, 1.0).unwrap(),
        Ball3D::new(0.3, 1.0, 2.0).unwrap(),
        Ball3D::new(10.0, 0.0, 0.5).unwrap(),
    ] {
        assert!((ap_product_weight(1.5, 0.0, &b).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn hill_vortex_stream_solve_is_second_order_away_from_the_jump() {
    let hill = HillVortex { a: 1.0, amplitude: 1.0 };
    let mut errs = Vec::new();
    for n in [32, 64] {
        let g = HalfPlaneGrid::new(n, 2 * n, 2.0, -2.0, 2.0).unwrap();
        // cell averages keep the jump at ρ = a from polluting the far field
        let omega = g.sample_cell_average(
            FieldRole::Vorticity,
            16,
            |r, z| if r * r + z * z <= 1.0 { r } else { 0.0 },
        );
        let mut solver = StreamSolver::new(g).with_boundary(StreamBoundary::KernelCorrected);
        let (psi, report) = solver.solve(&omega).unwrap();
        assert!(report.iterations <= 2);
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..g.nr {
            for j in 0..g.nz {
                let (r, z) = (g.r(i), g.z(j));
                let exact = hill.stream(r, z);
                scale = scale.max(exact.abs());
                if ((r * r + z * z).sqrt() - 1.0).abs() > 0.2 {
                    err = err.max((psi.psi.at(i, j) - exact).abs());
                }
            }
        }
        errs.push(err / scale);
    }
    assert!(errs[1] < 5e-3, "{errs:?}");
    assert!(errs[0] / errs[1] > 2.5, "{errs:?}");
}

#[test]
fn discrete_stream_solve_inverts_the_operator() {
    let g = HalfPlaneGrid::new(24, 40, 2.0, -2.0, 2.0).unwrap();
    let omega = g.sample(FieldRole::Vorticity, |r, z| {
        r * (-(r - 1.0).powi(2) * 8.0 - z * z * 4.0).exp()
    });
    let (psi, _) = StreamSolver::new(g).solve(&omega).unwrap();
    let back = apply_stream_operator(&psi.psi);
    let err = back
        .values
        .iter()
        .zip(&omega.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10 * omega.max_abs(), "{err}");
}

#[test]
fn hill_streamlines_keep_their_stream_value() {
    let hill = HillVortex { a: 1.0, amplitude: 7.5 };
    let g = HalfPlaneGrid::new(96, 192, 2.0, -2.0, 2.0).unwrap();
    let u = VelocityField::sample(g, |r, z| hill.comoving_velocity(r, z));
    let comoving = |r: f64, z: f64| hill.stream(r, z) - 0.5 * hill.speed() * r * r;
    let seeds = vec![(0.5, 0.2), (0.3, -0.4), (0.7, 0.0), (0.6, 0.5)];
    let map = trace_flow(&VelocitySeries::constant(u), seeds.clone(), 1.0).unwrap();
    let last = map.positions.last().unwrap();
    for (s, &(r, z)) in last.iter().enumerate() {
        let (r0, z0) = seeds[s];
        assert!(map.is_active(s, map.times.len() - 1));
        let drift = (comoving(r, z) - comoving(r0, z0)).abs();
        assert!(drift < 2e-3 * hill.speed(), "seed {s}: drift {drift}");
        assert!((r - r0).abs() + (z - z0).abs() > 1e-2, "seed {s} did not move");
    }
}

#[test]
fn duality_holds_exactly_without_flow() {
    let g = HalfPlaneGrid::new(16, 24, 2.0, -1.5, 1.5).unwrap();
    let theta0 = g.sample(FieldRole::Passive, |r, z| {
        (-(r - 0.8).powi(2) * 10.0 - z * z * 6.0).exp()
    });
    let chi0 = g.sample(FieldRole::Passive, |r, z| {
        (-(r - 1.0).powi(2) * 8.0 - (z - 0.2).powi(2) * 8.0).exp()
    });
    let series = VelocitySeries::constant(VelocityField::zeros(g));
    let steps = 10;
    let theta = transport_forward(&series, &theta0, 1.0, steps).unwrap();
    let f = solve_backward_transport(&series, |_| chi0.clone(), 0.0, 1.0, steps).unwrap();
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let chi = vec![chi0; steps + 1];
    let rep = duality_check(&theta, &f, &chi, &times).unwrap();
    assert!(rep.defect < 1e-12, "{rep:?}");
}

#[test]
fn renormalized_residual_detects_a_non_transported_field() {
    let g = HalfPlaneGrid::new(32, 48, 2.0, -1.5, 1.5).unwrap();
    let xi0 = g.sample(FieldRole::RelativeVorticity, |r, z| {
        10.0 * (-(r - 1.0).powi(2) * 8.0 - z * z * 8.0).exp()
    });
    let tests = test_function_library(0.6, 1.4, -0.6, 0.6, 1.0, 16).unwrap();
    let beta = &builtin_betas(10.0)[0];
    let n = 200;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let u = vec![VelocityField::zeros(g); n + 1];
    let steady = vec![xi0.clone(); n + 1];
    let growing: Vec<ScalarField> = times.iter().map(|t| xi0.scaled(1.0 + t)).collect();
    let ok = renorm_residual(&times, &steady, &u, beta, &tests).unwrap();
    let bad = renorm_residual(&times, &growing, &u, beta, &tests).unwrap();
    assert!(ok < 1e-3, "steady residual {ok}");
    assert!(bad > 0.05, "growing residual {bad}");
}

#[test]
fn gaussian_ring_norms_match_closed_forms() {
    // ξ = A exp(−((r−r₀)² + z²)/(2σ²)) with r₀ ≫ σ: ∫ξ r³ ≈ 2πσ² A (r₀³ + 3r₀σ²)
    let (r0, sigma, a): (f64, f64, f64) = (2.0, 0.15, 3.0);
    let g = HalfPlaneGrid::new(256, 256, 4.0, -2.0, 2.0).unwrap();
    let xi = make_initial_condition(
        &InitialCondition::GaussianRing {
            r0,
            z0: 0.0,
            sigma,
            amplitude: a,
        },
        &g,
    )
    .unwrap();
    let expected = 2.0 * PI * sigma * sigma * a * (r0.powi(3) + 3.0 * r0 * sigma * sigma);
    assert!(rel(impulse(&xi), expected) < 1e-6);
    // ‖ξ‖₁ over R³ = 2π ∫ξ r = 2π · 2πσ² A r₀
    let l1 = 2.0 * PI * 2.0 * PI * sigma * sigma * a * r0;
    assert!(rel(lp_norm(&xi, 1.0), l1) < 1e-6);
}
