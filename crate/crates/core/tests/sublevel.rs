use avglemma_core::catalog;
use avglemma_core::sublevel::{measure_bound_check, sup_measure, SweepOptions};
use avglemma_core::PhaseFunction;

/// Length of `{v ∈ [−1, 1] : |s0 + s1 v| ≤ ε}` on a unit direction at angle `t`.
fn line_measure(t: f64, eps: f64) -> f64 {
    let (s0, s1) = (t.cos(), t.sin());
    if s1.abs() < 1e-15 {
        return if s0.abs() <= eps { 2.0 } else { 0.0 };
    }
    let (p, q) = ((-eps - s0) / s1, (eps - s0) / s1);
    let (lo, hi) = (p.min(q).max(-1.0), p.max(q).min(1.0));
    (hi - lo).max(0.0)
}

fn brute_sup(eps: f64) -> f64 {
    let n = 200_000;
    let step = std::f64::consts::PI / n as f64;
    let (mut best, mut at) = (0.0, 0.0);
    for i in 0..n {
        let t = i as f64 * step;
        let m = line_measure(t, eps);
        if m > best {
            best = m;
            at = t;
        }
    }
    let (mut a, mut b) = (at - step, at + step);
    for _ in 0..200 {
        let c = a + (b - a) * 0.381966;
        let d = b - (b - a) * 0.381966;
        if line_measure(c, eps) < line_measure(d, eps) {
            a = c;
        } else {
            b = d;
        }
    }
    best.max(line_measure(0.5 * (a + b), eps))
}

#[test]
fn sup_measure_of_a_line_matches_a_direction_scan() {
    let (a, _) = catalog("polynomial-curve", 1, 1).unwrap();
    for eps in [1e-3, 1e-2, 0.1, 0.3] {
        let got = sup_measure(&a, 1.0, eps, &SweepOptions::default()).unwrap();
        let want = brute_sup(eps);
        assert!((got.value - want).abs() <= 1e-5 * want, "eps {eps}: {} vs {want}", got.value);
        let unit: f64 = got.direction.iter().map(|x| x * x).sum();
        assert!((unit - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cubic_meets_its_measure_bound_with_room() {
    let phi = PhaseFunction::monomial(3, 1.0, (-1.0, 1.0));
    let eps: Vec<f64> = (0..6).map(|i| 10f64.powi(-i)).collect();
    let r = measure_bound_check(&phi, 3, 6.0, (-1.0, 1.0), &eps).unwrap();
    assert!(r.passed);
    // {|u³| ≤ ε} has length 2 ε^{1/3} for ε ≤ 1.
    for (e, m) in r.eps.iter().zip(&r.measures) {
        assert!((m - 2.0 * e.cbrt().min(1.0)).abs() <= 1e-9, "{e}: {m}");
    }
}
