use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgg_core::constants::{beta1, beta2, c_constant};
use rgg_core::geometry::{
    ball_intersection_fraction, cap_fraction, cone_cover, reg_inc_beta, unit_ball_volume, ConvexBody,
};

proptest! {
    #[test]
    fn complementary_caps(r in 0.1f64..5.0, frac in -1.0f64..1.0, d in 1usize..8) {
        let a = frac * r;
        let sum = cap_fraction(r, a, d).unwrap() + cap_fraction(r, -a, d).unwrap();
        prop_assert!((sum - r.powi(d as i32)).abs() <= 1e-10 * r.powi(d as i32));
    }

    #[test]
    fn cap_in_range(r in 0.1f64..5.0, frac in -1.0f64..1.0, d in 1usize..8) {
        let c = cap_fraction(r, frac * r, d).unwrap();
        prop_assert!(c >= 0.0 && c <= r.powi(d as i32) * (1.0 + 1e-12));
    }

    #[test]
    fn intersection_symmetric_and_monotone(
        x in 0.0f64..4.0, dx in 0.0f64..0.5, r1 in 0.1f64..2.0, r2 in 0.1f64..2.0, d in 1usize..6
    ) {
        let a = ball_intersection_fraction(x, r1, r2, d).unwrap();
        let b = ball_intersection_fraction(x, r2, r1, d).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
        let further = ball_intersection_fraction(x + dx, r1, r2, d).unwrap();
        prop_assert!(further <= a + 1e-12);
    }

    #[test]
    fn symmetric_beta_reflection(x in 0.0f64..=1.0, a in 0.5f64..20.0) {
        let s = reg_inc_beta(x, a, a).unwrap() + reg_inc_beta(1.0 - x, a, a).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-11);
    }

    #[test]
    fn general_beta_reflection(x in 0.0f64..=1.0, a in 0.5f64..20.0, b in 0.5f64..20.0) {
        let s = reg_inc_beta(x, a, b).unwrap() + reg_inc_beta(1.0 - x, b, a).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-11);
    }

    #[test]
    fn scaling_multiplies_volume(t in 0.1f64..10.0, d in 1usize..5, ball in any::<bool>()) {
        let body = if ball {
            ConvexBody::ball(vec![0.5; d], 1.3).unwrap()
        } else {
            ConvexBody::cuboid(vec![-0.2; d], vec![0.7; d]).unwrap()
        };
        let scaled = body.scale(t).unwrap();
        let want = body.volume() * t.powi(d as i32);
        prop_assert!((scaled.volume() - want).abs() <= 1e-12 * want);
    }
}

/// Fraction of `n` uniform points of `[-1,1]²` in the region, times the
/// box area, divided by π; returns (estimate, standard error).
fn rejection_volume(n: usize, seed: u64, inside: impl Fn(f64, f64) -> bool) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..n)
        .filter(|_| {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            inside(x, y)
        })
        .count();
    let p = hits as f64 / n as f64;
    let scale = 4.0 / PI;
    (p * scale, scale * (p * (1.0 - p) / n as f64).sqrt())
}

#[test]
fn cap_against_rejection_sampling() {
    let (est, se) = rejection_volume(10_000_000, 3, |x, y| x * x + y * y <= 1.0 && x >= 0.5);
    let got = cap_fraction(1.0, 0.5, 2).unwrap();
    assert!((got - est).abs() <= 3.0 * se, "cap {got} vs {est} ± {se}");
}

#[test]
fn lens_against_rejection_sampling() {
    // B(0,1) ∩ B(e_1,1) lies in x ∈ [0,1]; sample the box [-1,1]² shifted by ½
    let (est, se) = rejection_volume(10_000_000, 4, |x, y| {
        let x = x + 0.5;
        x * x + y * y <= 1.0 && (x - 1.0) * (x - 1.0) + y * y <= 1.0
    });
    let got = ball_intersection_fraction(1.0, 1.0, 1.0, 2).unwrap();
    assert!((got - est).abs() <= 3.0 * se, "lens {got} vs {est} ± {se}");
}

#[test]
fn hand_values() {
    assert!((cap_fraction(1.0, 0.0, 2).unwrap() - 0.5).abs() < 1e-14);
    assert!(cap_fraction(1.0, 1.0, 3).unwrap().abs() < 1e-14);
    assert_eq!(ball_intersection_fraction(3.0, 1.0, 1.0, 2).unwrap(), 0.0);
    assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-12);
}

/// Fibonacci-lattice directions on the unit sphere.
fn sphere_directions(n: usize) -> Vec<Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            vec![r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

#[test]
fn cone_cover_d2_grid() {
    let cover = cone_cover(2).unwrap();
    for k in 0..10_000 {
        let th = 2.0 * PI * k as f64 / 10_000.0;
        assert!(cover.min_angle(&[th.cos(), th.sin()]) <= PI / 12.0 + 1e-9);
    }
}

#[test]
fn cone_cover_d3_dense_directions() {
    let cover = cone_cover(3).unwrap();
    let worst = sphere_directions(100_000)
        .iter()
        .map(|v| cover.min_angle(v))
        .fold(0.0, f64::max);
    assert!(worst <= PI / 12.0 + 1e-9, "worst angle {worst}");
    // widened cones share the axes
    assert_eq!(cover.widened().len(), cover.len());
    for (c, w) in cover.cones().iter().zip(cover.widened()) {
        assert_eq!(c.axis, w.axis);
    }
}

#[test]
fn cone_cover_d4_random_directions() {
    let cover = cone_cover(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20_000 {
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(cover.min_angle(&v) <= PI / 12.0 + 1e-9);
    }
    assert!(cone_cover(5).is_err());
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn beta2_against_quadrature_of_incomplete_beta() {
    let p = 5.5;
    let density = |t: f64| t.powf(p - 1.0) * (1.0 - t).powf(p - 1.0);
    let total = simpson(density, 0.0, 1.0, 200_000);
    let partial = simpson(density, 0.0, 0.32, 200_000);
    let want = PI / 2.0 * (partial / total + 2f64.powi(9) * 0.36f64.powi(10));
    assert!((beta2(10).unwrap() - want).abs() < 1e-9);
}

#[test]
fn lower_bound_chain_is_consistent() {
    for d in 3..=9 {
        let c = c_constant(d, 1e-6).unwrap();
        assert!(PI / 4.0 - beta1(d).unwrap() <= c.value + c.abs_error_estimate, "d={d}");
    }
    for d in 1..=10 {
        let c = c_constant(d, 1e-6).unwrap();
        assert!(c.value - c.abs_error_estimate > PI / 2.0 - 1.0, "d={d}");
    }
    for d in 1..=2 {
        let c = c_constant(d, 1e-6).unwrap().value;
        assert!(d as f64 * (1.0 - PI / 2.0 + c) > 0.0);
    }
}
