use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coarse() -> BetaGrid {
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

fn class(p: i64, q: i64, s: f64) -> RationalClass {
    RationalClass::new(WindingClass::new(p, q), s).unwrap()
}

fn four_directions() -> Vec<WindingClass> {
    vec![
        WindingClass::new(1, 0),
        WindingClass::new(0, 1),
        WindingClass::new(1, 1),
        WindingClass::new(1, -1),
    ]
}

/// `c* = ∫₀¹ √(2(ε + ε cos 2πx)) dx` by the composite midpoint rule.
fn separatrix_action(eps: f64) -> f64 {
    let n = 200_000;
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            (2.0 * eps * (1.0 + (std::f64::consts::TAU * x).cos())).sqrt()
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn rational_class_normalizes() {
    let c = class(2, 4, 0.5);
    assert_eq!(c.direction, WindingClass::new(1, 2));
    assert_eq!(c.scale, 1.0);
    assert!(RationalClass::new(WindingClass::new(1, 0), -1.0).is_err());
    assert!(class(0, 0, 3.0).is_zero());
}

#[test]
fn rationalize_examples() {
    let c = rationalize(Vec2::new(-0.25, 1.0), 64).unwrap();
    assert_eq!(c.direction, WindingClass::new(-1, 4));
    assert!((c.scale - 0.25).abs() < 1e-15);
    assert!(rationalize(Vec2::new(1.0, std::f64::consts::SQRT_2), 64).is_none());
    assert!(rationalize(Vec2::zeros(), 1).unwrap().is_zero());
    let c = rationalize(Vec2::new(0.0, -0.3), 1).unwrap();
    assert_eq!(c.direction, WindingClass::new(0, -1));
}

proptest! {
    #[test]
    fn rationalize_roundtrip(p in -20i64..=20, q in -20i64..=20, s in 0.01f64..10.0) {
        prop_assume!(p != 0 || q != 0);
        let c = class(p, q, s);
        let back = rationalize(c.h(), 64).unwrap();
        prop_assert_eq!(back.direction, c.direction);
        prop_assert!((back.scale - c.scale).abs() < 1e-12 * c.scale);
    }
}

#[test]
fn node_rule_scales_with_period() {
    assert_eq!(NodeRule::Fixed(128).nodes(&class(1, 0, 0.25), 2), 256);
    assert_eq!(NodeRule::PerUnit(64).nodes(&class(1, 0, 0.25), 1), 256);
    assert_eq!(NodeRule::PerUnit(64).nodes(&class(3, 4, 1.0), 1), 320);
    assert_eq!(NodeRule::PerUnit(4).nodes(&class(1, 0, 1.0), 1), crate::loopmin::MIN_NODES);
}

#[test]
fn beta_at_examples() {
    let grid = coarse();
    let flat = Lagrangian::flat();
    let b = beta_at(&flat, &class(1, 0, 1.0), &grid).unwrap();
    assert!((b.value - 0.5).abs() < 1e-12 && b.converged);
    let b = beta_at(&flat, &class(2, 1, 1.0), &grid).unwrap();
    assert!((b.value - 2.5).abs() < 1e-12);

    let pend = Lagrangian::pendulum(0.1);
    let b = beta_at(&pend, &RationalClass::ZERO, &grid).unwrap();
    assert!((b.value + 0.1).abs() < 1e-12);
    assert!((b.rest_point.unwrap()[0] - 0.5).abs() < 1e-6);

    // separable reduction: vertical loops at a fixed height x₁ cost ½ + f(x₁)
    let oracle = (0..4096)
        .map(|i| 0.5 + 0.1 * (std::f64::consts::TAU * i as f64 / 4096.0).cos())
        .fold(f64::INFINITY, f64::min);
    let b = beta_at(&pend, &class(0, 1, 1.0), &grid).unwrap();
    assert!((b.value - oracle).abs() < 1e-5, "{}", b.value);
}

#[test]
fn beta_at_rejects_bad_grid() {
    let grid = BetaGrid {
        k_max: 0,
        ..coarse()
    };
    assert!(matches!(
        beta_at(&Lagrangian::flat(), &class(1, 0, 1.0), &grid),
        Err(MatherError::InvalidInput(_))
    ));
}

#[test]
fn multiple_windings_cannot_beat_the_flat_straight_loop() {
    let grid = BetaGrid {
        k_max: 3,
        ..coarse()
    };
    let b = beta_at(&Lagrangian::flat(), &class(1, 1, 0.5), &grid).unwrap();
    assert!((b.value - 0.25).abs() < 1e-12);
    assert_eq!(b.winding, WindingClass::new(1, 1), "ties keep the shortest winding");
}

#[test]
fn flat_table_is_exact_and_convex() {
    let table = beta_scan(
        &Lagrangian::flat(),
        &primitive_directions(1),
        &[0.25, 0.5, 1.0, 1.5],
        true,
        &coarse(),
    )
    .unwrap();
    assert_eq!(table.len(), 8 * 4 + 1);
    for (s, e) in table.samples.iter().zip(&table.env) {
        let exact = 0.5 * s.h().norm_squared();
        assert!((s.value - exact).abs() < 1e-9);
        assert!((e - s.value).abs() < 1e-6, "envelope moved a convex sample");
    }
    assert!(table.superseded.iter().all(|s| !s));
    assert!(table.convexity_violations(1e-9).is_empty());
    assert!(table.superlinearity_violations(1e-9).is_empty());

    let a = alpha_conjugate(&table, Vec2::new(1.0, 0.0)).unwrap();
    assert!((a.value - 0.5).abs() < 1e-9);
    assert!(!a.radius_too_small);
    assert!(alpha_conjugate(&table, Vec2::zeros()).unwrap().value.abs() < 1e-12);
    assert!(alpha_conjugate(&table, Vec2::new(3.0, 0.0)).unwrap().radius_too_small);

    let gap = |c: Vec2, h: Vec2| fenchel_gap(&table, c, h).unwrap();
    assert!(gap(Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0)).abs() < 1e-9);
    assert!((gap(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)) - 1.0).abs() < 1e-6);
    assert!(matches!(
        table.env_at(Vec2::new(5.0, 0.0)),
        Err(MatherError::InsufficientResolution(_))
    ));

    let csv = table.to_csv();
    assert!(csv.starts_with("h1,h2,beta_raw,beta_env,winding_p,winding_q,T,converged\n"));
    assert_eq!(csv.lines().count(), table.len() + 1);
}

#[test]
fn pendulum_table_invariants() {
    let spec = Lagrangian::pendulum(0.1);
    let table = beta_scan(&spec, &four_directions(), &[0.25, 0.5, 1.0], true, &coarse()).unwrap();
    assert!(table.all_converged());
    assert!(table.convexity_violations(1e-6).is_empty());
    assert!(table.superlinearity_violations(1e-9).is_empty());
    for (s, e) in table.samples.iter().zip(&table.env) {
        assert!(*e <= s.value + 1e-12);
        assert!(*e >= -0.1 - 1e-9, "below the global bound min f");
    }
    // random convex combinations through the interpolated envelope
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = table.points();
    for _ in 0..200 {
        let a = pts[rng.gen_range(0..pts.len())] * 0.9;
        let b = pts[rng.gen_range(0..pts.len())] * 0.9;
        let lam: f64 = rng.gen();
        let (Ok(fa), Ok(fb), Ok(fm)) = (
            table.env_at(a),
            table.env_at(b),
            table.env_at(a * lam + b * (1.0 - lam)),
        ) else {
            continue;
        };
        assert!(fm <= lam * fa + (1.0 - lam) * fb + 1e-6 * (1.0 + fm.abs()));
    }
    let a = alpha_conjugate(&table, Vec2::zeros()).unwrap();
    assert!((a.value - 0.1).abs() < 1e-12);
    assert!(a.argmax.norm() == 0.0);
    assert!(fenchel_gap(&table, Vec2::zeros(), Vec2::zeros()).unwrap().abs() < 1e-6);
    // Fenchel–Young on every sample for a few cohomology classes
    for c in [Vec2::new(0.3, -0.2), Vec2::new(0.0, 0.7), Vec2::new(-1.0, 1.0)] {
        for h in &pts {
            assert!(fenchel_gap(&table, c, *h).unwrap() >= -1e-6);
        }
    }
}

#[test]
fn pendulum_is_symmetric_under_h_to_minus_h() {
    let spec = Lagrangian::pendulum(0.3);
    let grid = coarse();
    for (p, q, s) in [(1, 0, 0.5), (1, 1, 0.25), (2, -1, 0.5), (0, 1, 1.0)] {
        let plus = beta_at(&spec, &class(p, q, s), &grid).unwrap().value;
        let minus = beta_at(&spec, &class(-p, -q, s), &grid).unwrap().value;
        assert!((plus - minus).abs() < 1e-6, "({p},{q}): {plus} vs {minus}");
    }
}

#[test]
fn alpha_extension_moves_off_the_outer_ring() {
    let spec = Lagrangian::flat();
    let grid = coarse();
    let mut table = beta_scan(&spec, &four_directions(), &[0.5, 1.0], true, &grid).unwrap();
    let c = Vec2::new(1.5, 1.5);
    assert!(alpha_conjugate(&table, c).unwrap().radius_too_small);
    let est = alpha_with_extension(&spec, &mut table, c, &grid, 3).unwrap();
    assert!(!est.radius_too_small);
    assert!((est.value - 2.25).abs() < 1e-9, "{}", est.value);
    assert_eq!(table.outer_radius(), 2.0);
}

#[test]
fn flat_subdifferential_is_the_gradient() {
    let spec = Lagrangian::flat();
    let src = DirectBeta::new(&spec, coarse());
    let h = Vec2::new(1.0, 0.0);
    let across = subdiff_onesided(&src, h, Vec2::new(0.0, 1.0), 0.25).unwrap();
    assert!(across.corner_gap.abs() < 5e-4);
    let along = subdiff_onesided(&src, h, Vec2::new(1.0, 0.0), 0.25).unwrap();
    assert!((along.d_plus - 1.0).abs() < 5e-4 && (along.d_minus - 1.0).abs() < 5e-4);
    assert!(matches!(
        subdiff_onesided(&src, h, Vec2::new(1.0, std::f64::consts::SQRT_2), 0.25),
        Err(MatherError::InsufficientResolution(_))
    ));
}

#[test]
fn table_subdifferential_is_convex() {
    let table = beta_scan(&Lagrangian::pendulum(0.1), &four_directions(), &[0.5, 1.0], true, &coarse())
        .unwrap();
    let est = subdiff_onesided(&table, Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0), 0.25).unwrap();
    assert!(est.corner_gap >= -1e-9);
}

#[test]
fn pendulum_corner_across_the_vertical_ray() {
    let eps = 0.3;
    let spec = Lagrangian::pendulum(eps);
    let grid = coarse();
    let classes = [class(0, 1, 1.0), class(1, 0, 1.0)];
    let est = corner_scan(&spec, &classes, &grid, 4).unwrap();
    // β = β₁(h₁) + ½h₂² with β₁(h₁) = −ε + c*|h₁| + o(h₁) near 0
    let c_star = separatrix_action(eps);
    assert!((c_star - 4.0 * eps.sqrt() / std::f64::consts::PI).abs() < 1e-6);
    assert!((est[0].corner_gap - 2.0 * c_star).abs() < 1e-2, "{:?}", est[0]);
    assert!(est[1].corner_gap.abs() < 5e-4, "{:?}", est[1]);
    let noise = corner_scan(&Lagrangian::flat(), &classes, &grid, 4).unwrap();
    assert!(noise.iter().all(|e| e.corner_gap.abs() < 1e-6));
}

#[test]
fn radial_flats() {
    let ladder = [0.5, 0.75, 1.0, 1.25, 1.5];
    let flat_spec = Lagrangian::flat();
    let flat = DirectBeta::new(&flat_spec, coarse());
    let rf = radial_flat(&flat, Vec2::new(1.0, 1.0), &ladder, 1e-4).unwrap();
    assert!(rf.is_trivial());
    assert!((rf.second_differences[2] - 2.0).abs() < 1e-6);

    let pend_spec = Lagrangian::pendulum(0.1);
    let pend = DirectBeta::new(&pend_spec, coarse());
    let rf = radial_flat(&pend, Vec2::new(0.0, 1.0), &ladder, 1e-4).unwrap();
    assert!(rf.is_trivial());
    // separable oracle: β(t(0,1)) = −ε + ½t²
    for (t, v) in rf.ladder.iter().zip(&rf.values) {
        assert!((v - (-0.1 + 0.5 * t * t)).abs() < 1e-5);
    }
    // an affine function of t is a full flat
    struct Affine;
    impl BetaSource for Affine {
        fn beta(&self, h: HomologyClass) -> Result<f64, MatherError> {
            Ok(2.0 * h[0] - 1.0)
        }
    }
    let rf = radial_flat(&Affine, Vec2::new(1.0, 0.0), &ladder, 1e-9).unwrap();
    assert_eq!((rf.t_min, rf.t_max), (0.5, 1.5));
    assert!(radial_flat(&Affine, Vec2::new(1.0, 0.0), &[0.5, 0.9], 1e-9).is_err());
}

#[test]
fn radial_derivative_matches_energy_identity() {
    // d/dt β(th) = (E + β(th))/t along a minimizing family
    let spec = Lagrangian::pendulum(0.3);
    let grid = coarse();
    for c in [class(1, 0, 0.5), class(1, 1, 0.5), class(0, 1, 1.0)] {
        let d = radial_derivative(&spec, &c, 1.0, 0.02, &grid).unwrap();
        assert!(d.converged);
        assert!(d.mismatch < 5e-4 * (1.0 + d.beta.abs()), "{d:?}");
        let identity = d.energy + d.beta;
        assert!((d.d_plus - identity).abs() < 1e-3, "{d:?} vs {identity}");
    }
    assert!(radial_derivative(&spec, &class(1, 0, 1.0), 0.01, 0.02, &grid).is_err());
}

#[test]
fn primitive_direction_counts() {
    assert_eq!(primitive_directions(1).len(), 8);
    assert_eq!(primitive_directions(2).len(), 16);
    assert!(primitive_directions(2).iter().all(|d| d.is_primitive()));
}
