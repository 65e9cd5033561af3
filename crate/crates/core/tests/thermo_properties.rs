mod common;

use common::{random_p, random_system, RandomSystem};
use holderlab::{pressure, IfSystem, PressureCurve, ProbVector};
use proptest::prelude::*;

fn setup(seed: u64, m: usize) -> (RandomSystem, ProbVector, PressureCurve) {
    let rs = random_system(seed, m);
    let p = random_p(seed, m);
    let curve = PressureCurve::new(&rs.system, &p).unwrap();
    (rs, p, curve)
}

/// Root of `Σ a_i^{−t} = 1` by plain bisection.
fn moran(slopes: &[f64]) -> f64 {
    let f = |t: f64| slopes.iter().map(|a| a.powf(-t)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn direct_pressure(sys: &IfSystem, p: &ProbVector, t: f64, beta: f64) -> f64 {
    sys.slopes().unwrap().iter().zip(p.full()).map(|(a, q)| q.powf(beta) * a.powf(-t)).sum::<f64>().ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pressure_decreases(seed in 0u64..10_000, m in 2usize..=4, t in -3.0f64..3.0, beta in -3.0f64..3.0, dt in 0.01f64..1.0) {
        let (rs, p, _) = setup(seed, m);
        let sys = &rs.system;
        let base = pressure(sys, &p, t, beta, 10).unwrap().mid();
        prop_assert!(pressure(sys, &p, t + dt, beta, 10).unwrap().mid() < base);
        prop_assert!(pressure(sys, &p, t, beta + dt, 10).unwrap().mid() < base);
        prop_assert!((base - direct_pressure(sys, &p, t, beta)).abs() <= 1e-13 * (1.0 + base.abs()));
    }

    #[test]
    fn curve_anchors(seed in 0u64..10_000, m in 2usize..=4) {
        let (rs, _, curve) = setup(seed, m);
        prop_assert!(curve.t(1.0).unwrap().abs() < 1e-13);
        prop_assert!((curve.t(0.0).unwrap() - moran(&rs.slopes)).abs() < 1e-12);
    }

    #[test]
    fn curve_is_convex_and_decreasing(seed in 0u64..10_000, m in 2usize..=4, b in -20.0f64..20.0, h in 0.05f64..2.0) {
        let (_, _, curve) = setup(seed, m);
        let (l, c, r) = (curve.t(b - h).unwrap(), curve.t(b).unwrap(), curve.t(b + h).unwrap());
        prop_assert!(l + r - 2.0 * c >= -1e-11);
        prop_assert!(l > r);
        let pt = curve.point(b).unwrap();
        prop_assert!(pt.t_second >= 0.0 && pt.t_prime < 0.0);
    }

    #[test]
    fn derivative_matches_difference(seed in 0u64..10_000, m in 2usize..=3, b in -5.0f64..5.0) {
        let (_, _, curve) = setup(seed, m);
        let h = 1e-5;
        let fd = (curve.t(b + h).unwrap() - curve.t(b - h).unwrap()) / (2.0 * h);
        let pt = curve.point(b).unwrap();
        prop_assert!((fd - pt.t_prime).abs() < 1e-6 * (1.0 + pt.t_prime.abs()));
        let fd2 = (curve.point(b + h).unwrap().t_prime - curve.point(b - h).unwrap().t_prime) / (2.0 * h);
        prop_assert!((fd2 - pt.t_second).abs() < 1e-5 * (1.0 + pt.t_second.abs()));
    }

    #[test]
    fn exponent_ordering(seed in 0u64..10_000, m in 2usize..=4) {
        let (_, _, curve) = setup(seed, m);
        let e = curve.endpoints().unwrap();
        let at_one = -curve.point(1.0).unwrap().t_prime;
        let eps = 1e-12;
        prop_assert!(e.alpha_minus <= at_one + eps);
        prop_assert!(at_one <= e.delta + eps);
        prop_assert!(e.delta <= e.alpha_zero + eps);
        prop_assert!(e.alpha_zero <= e.alpha_plus + eps);
        prop_assert!(e.delta <= 1.0 + eps);
        // −t' is nonincreasing, so the surrogates approach the endpoints from inside
        prop_assert!(e.alpha_minus - eps <= e.surrogate_minus.1 && e.surrogate_minus.1 <= e.surrogate_minus.0 + eps);
        prop_assert!(e.surrogate_plus.0 <= e.surrogate_plus.1 + eps && e.surrogate_plus.1 <= e.alpha_plus + eps);
    }

    #[test]
    fn legendre_duality(seed in 0u64..10_000, m in 2usize..=3, b in -8.0f64..8.0) {
        let (_, _, curve) = setup(seed, m);
        let ends = curve.endpoints().unwrap();
        prop_assume!(!ends.is_rigid(1e-9));
        let pt = curve.point(b).unwrap();
        let alpha = -pt.t_prime;
        let sp = curve.spectrum_point(alpha, &ends, 1e-12).unwrap();
        prop_assert!((sp.g - (pt.t + b * alpha)).abs() < 1e-9, "{:?} vs {}", sp, pt.t + b * alpha);
        for probe in [-30.0, -3.0, -0.5, 0.0, 0.7, 4.0, 30.0] {
            prop_assert!(sp.g <= curve.t(probe).unwrap() + probe * alpha + 1e-10);
        }
    }

    #[test]
    fn spectrum_is_concave_and_bounded(seed in 0u64..10_000, m in 2usize..=3) {
        let (_, _, curve) = setup(seed, m);
        let ends = curve.endpoints().unwrap();
        prop_assume!(ends.alpha_plus - ends.alpha_minus > 1e-3);
        let k = 40;
        let alphas: Vec<f64> = (1..k).map(|j| ends.alpha_minus + (ends.alpha_plus - ends.alpha_minus) * j as f64 / k as f64).collect();
        let g: Vec<f64> = alphas.iter().map(|&a| curve.spectrum_point(a, &ends, 1e-12).unwrap().g).collect();
        for w in g.windows(3) {
            prop_assert!(w[0] + w[2] - 2.0 * w[1] <= 1e-9);
        }
        for (a, v) in alphas.iter().zip(&g) {
            prop_assert!(*v >= -1e-9 && *v <= ends.delta + 1e-9 && *v <= a + 1e-9);
        }
        let top = curve.spectrum_point(ends.alpha_zero, &ends, 1e-12).unwrap();
        prop_assert!((top.g - ends.delta).abs() < 1e-9);
    }

    #[test]
    fn gibbs_weights(seed in 0u64..10_000, m in 2usize..=4, b in -10.0f64..10.0) {
        let (rs, p, curve) = setup(seed, m);
        let g = curve.gibbs(b).unwrap();
        let total: f64 = g.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for ((q, pi), a) in g.weights.iter().zip(p.full()).zip(&rs.slopes) {
            prop_assert!((q - pi.powf(b) * a.powf(-g.t)).abs() < 1e-12);
        }
        let el: f64 = g.weights.iter().zip(p.full()).map(|(q, pi)| q * pi.ln()).sum();
        let ea: f64 = g.weights.iter().zip(&rs.slopes).map(|(q, a)| q * a.ln()).sum();
        prop_assert!((g.t_prime - el / ea).abs() < 1e-12);
    }
}
