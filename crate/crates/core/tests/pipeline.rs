use std::f64::consts::PI;

use aubry::lagrangian::{integrate_orbit, Lagrangian, TorusPoint, Vec2};
use aubry::loopmin::{MinimizeOptions, WindingClass};
use aubry::mather::{alpha_conjugate, beta_at, beta_scan, corner_scan, primitive_directions, BetaGrid, NodeRule, RationalClass};
use aubry::weakkam::{solve_weak_kam, Grid2, SolverParams};
use proptest::prelude::*;

fn grid() -> BetaGrid {
    BetaGrid {
        nodes: NodeRule::PerUnit(48),
        k_max: 1,
        loop_opts: MinimizeOptions {
            n_restarts: 4,
            ..MinimizeOptions::default()
        },
        rest_res: 64,
    }
}

/// Rotational pendulum orbits: for energy `E > ε`, `h₁ = 1/T(E)` and
/// `β = h₁∫√(2(E + f)) dx − E`, by trapezoid quadrature on the circle.
fn pendulum_beta_oracle(eps: f64, h1: f64) -> f64 {
    let n = 4000;
    let quad = |g: &dyn Fn(f64) -> f64| (0..n).map(|k| g(k as f64 / n as f64)).sum::<f64>() / n as f64;
    let f = |x: f64| eps * (2.0 * PI * x).cos();
    let period = |e: f64| quad(&|x| 1.0 / (2.0 * (e + f(x))).sqrt());
    let (mut lo, mut hi) = (eps * (1.0 + 1e-9), 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 / period(mid) < h1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e = 0.5 * (lo + hi);
    h1 * quad(&|x| (2.0 * (e + f(x))).sqrt()) - e
}

#[test]
fn rotational_pendulum_beta_matches_quadrature() {
    let spec = Lagrangian::pendulum(0.1);
    for h1 in [0.75, 1.0, 1.5] {
        let class = RationalClass::new(WindingClass::new(1, 0), h1).unwrap();
        let got = beta_at(&spec, &class, &grid()).unwrap().value;
        let want = pendulum_beta_oracle(0.1, h1);
        assert!((got - want).abs() < 1e-4, "h₁ = {h1}: {got} vs {want}");
    }
}

#[test]
fn pendulum_is_separable_along_the_vertical() {
    let spec = Lagrangian::pendulum(0.3);
    let table = beta_scan(&spec, &[WindingClass::new(0, 1)], &[0.25, 0.5, 1.0], true, &grid()).unwrap();
    for s in &table.samples {
        let h2 = s.h()[1];
        assert!((s.value - (-0.3 + 0.5 * h2 * h2)).abs() < 1e-8, "{h2}: {}", s.value);
    }
}

#[test]
fn constant_field_table_weak_kam_and_corners_agree() {
    let x = Vec2::new(0.3, 0.2);
    let spec = Lagrangian::constant_vector_field(x);
    let radii: Vec<f64> = (1..=8).map(|k| 0.25 * k as f64).collect();
    let table = beta_scan(&spec, &primitive_directions(2), &radii, true, &grid()).unwrap();
    for s in &table.samples {
        assert!((s.value - 0.5 * (s.h() - x).norm_squared()).abs() < 1e-8);
    }
    let params = SolverParams::default();
    for c in [Vec2::new(0.0, 0.0), Vec2::new(0.4, -0.2)] {
        let exact = 0.5 * c.norm_squared() + c.dot(&x);
        let wk = solve_weak_kam(&spec, c, Grid2::new(32).unwrap(), &params).unwrap();
        assert!((wk.alpha_estimate - exact).abs() < 5e-2, "{c}: {}", wk.alpha_estimate);
        let tab = alpha_conjugate(&table, c).unwrap().value;
        assert!((tab - exact).abs() < 2e-2, "{c}: {tab}");
    }
    let classes: Vec<RationalClass> = primitive_directions(1)
        .into_iter()
        .map(|d| RationalClass::new(d, 0.5).unwrap())
        .collect();
    for e in corner_scan(&spec, &classes, &grid(), 4).unwrap() {
        assert!(e.corner_gap.abs() < 1e-8, "{:?}", e.h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn short_pendulum_orbits_conserve_energy(
        x1 in 0.0..1.0f64, x2 in 0.0..1.0f64, v1 in -2.0..2.0f64, v2 in -2.0..2.0f64, eps in 0.0..0.5f64,
    ) {
        let orbit = integrate_orbit(&Lagrangian::pendulum(eps), TorusPoint::new(x1, x2), Vec2::new(v1, v2), 1e-3, 1000).unwrap();
        prop_assert!(orbit.energy_drift < 1e-8);
        // x₂ is cyclic, so its velocity is conserved
        let last = orbit.states.last().unwrap().1;
        prop_assert!((last[1] - v2).abs() < 1e-12);
    }
}
