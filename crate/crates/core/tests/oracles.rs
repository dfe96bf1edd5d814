//! Independent oracles for the analytic kernels: Monte-Carlo sampling and
//! numerical quadrature of chord overlaps.

use circle_fusion::geometry::{ciou, circle_area, circle_intersection_area, Circle};
use circle_fusion::synth::{mc_ciou_oracle, mc_intersection_area};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(x: f64, y: f64, r: f64) -> Circle {
    Circle::new(x, y, r).unwrap()
}

/// Intersection area by composite Simpson integration of the overlap of
/// the two discs' vertical chords.
fn quadrature_intersection(a: &Circle, b: &Circle, panels: usize) -> f64 {
    let lo = (a.cx() - a.r()).max(b.cx() - b.r());
    let hi = (a.cx() + a.r()).min(b.cx() + b.r());
    if hi <= lo {
        return 0.0;
    }
    let chord = |c: &Circle, x: f64| {
        let h = (c.r() * c.r() - (x - c.cx()).powi(2)).max(0.0).sqrt();
        (c.cy() - h, c.cy() + h)
    };
    let overlap = |x: f64| {
        let (a0, a1) = chord(a, x);
        let (b0, b1) = chord(b, x);
        (a1.min(b1) - a0.max(b0)).max(0.0)
    };
    let n = panels * 2;
    let h = (hi - lo) / n as f64;
    let mut sum = overlap(lo) + overlap(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * overlap(lo + i as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn unit_lens_values_match_monte_carlo() {
    let a = c(0.0, 0.0, 1.0);
    let b = c(1.0, 0.0, 1.0);

    let (mc_area, area_se) = mc_intersection_area(&a, &b, 10_000_000, 20);
    let est = mc_ciou_oracle(&a, &b, 10_000_000, 21);
    println!("mc intersection {mc_area:.6} ± {area_se:.2e}, mc ciou {:.6} ± {:.2e}", est.ciou, est.std_err);

    // frozen from the estimates above, refined by the quadrature oracle below
    let area = 1.228370;
    let iou = 0.243014;
    assert!((mc_area - area).abs() <= 3.0 * area_se);
    assert!((est.ciou - iou).abs() <= 3.0 * est.std_err);

    assert!((circle_intersection_area(&a, &b) - area).abs() <= 1e-5);
    assert!((ciou(&a, &b) - iou).abs() <= 2e-3);
    assert!((est.ciou - 0.2430).abs() <= 3.0 * est.std_err + 5e-5);
}

#[test]
fn quadrature_agrees_with_closed_form_to_high_precision() {
    let a = c(0.0, 0.0, 1.0);
    let b = c(1.0, 0.0, 1.0);
    let q = quadrature_intersection(&a, &b, 200_000);
    assert!((q - 1.228370).abs() < 1e-6, "{q}");
    assert!((circle_intersection_area(&a, &b) - q).abs() < 1e-7);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let a = c(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.5..4.0));
        let b = c(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.5..4.0));
        let q = quadrature_intersection(&a, &b, 20_000);
        let exact = circle_intersection_area(&a, &b);
        // chord overlap has square-root endpoints, which limits Simpson's order
        assert!((exact - q).abs() < 1e-5 * circle_area(&a).max(1.0), "{a:?} {b:?}: {exact} vs {q}");
    }
}

#[test]
fn closed_form_examples() {
    assert_eq!(ciou(&c(2.0, 2.0, 3.0), &c(2.0, 2.0, 3.0)), 1.0);
    assert_eq!(ciou(&c(0.0, 0.0, 1.0), &c(0.0, 0.0, 2.0)), 0.25);
    assert_eq!(circle_intersection_area(&c(0.0, 0.0, 1.0), &c(3.0, 0.0, 1.0)), 0.0);
    assert_eq!(circle_intersection_area(&c(0.0, 0.0, 1.0), &c(0.0, 0.0, 1.0)), std::f64::consts::PI);
}

#[test]
fn analytic_area_within_three_sigma_of_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut outside = 0;
    for i in 0..40 {
        let a = c(0.0, 0.0, rng.random_range(1.0..3.0));
        let b = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(1.0..3.0));
        let (est, se) = mc_intersection_area(&a, &b, 400_000, 1000 + i);
        let exact = circle_intersection_area(&a, &b);
        if (est - exact).abs() > 3.0 * se && !(se == 0.0 && exact == 0.0) {
            outside += 1;
        }
    }
    // 3-sigma misses occur with probability ~0.3% each
    assert!(outside <= 1, "{outside} of 40 estimates beyond 3 sigma");
}
