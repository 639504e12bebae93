//! Fixed and adaptive one-dimensional quadrature rules.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

/// Gauss–Kronrod 15-point abscissae on [−1, 1], nonnegative half, descending.
pub const GK15_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// Kronrod weights matching [`GK15_NODES`].
pub const GK15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Embedded 7-point Gauss weights at the odd-indexed Kronrod nodes.
pub const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// Closed 9-point Newton–Cotes weights for eight equal steps, in units of `4h/14175`.
pub const NEWTON_COTES_9: [f64; 9] = [
    989.0, 5888.0, -928.0, 10496.0, -4540.0, 10496.0, -928.0, 5888.0, 989.0,
];

/// Scale factor turning [`NEWTON_COTES_9`] into weights for step `h`.
pub fn newton_cotes_9_scale(h: f64) -> f64 {
    4.0 * h / 14175.0
}

/// Values that can be accumulated by the quadrature rules.
pub trait Integrand: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
    fn is_finite_value(self) -> bool;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite_value(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// The 15 Kronrod nodes mapped to `[a, b]`, in increasing order.
pub fn gk15_points(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut x = [0.0; 15];
    for i in 0..7 {
        x[i] = c - h * GK15_NODES[i];
        x[14 - i] = c + h * GK15_NODES[i];
    }
    x[7] = c;
    x
}

/// Kronrod estimate and Kronrod–Gauss difference from values at [`gk15_points`].
pub fn gk15_combine<T: Integrand>(values: &[T; 15], a: f64, b: f64) -> (T, f64) {
    let h = 0.5 * (b - a);
    let mut k = values[7] * GK15_WEIGHTS[7];
    let mut g = values[7] * G7_WEIGHTS[3];
    for i in 0..7 {
        let pair = values[i] + values[14 - i];
        k = k + pair * GK15_WEIGHTS[i];
        if i % 2 == 1 {
            g = g + pair * G7_WEIGHTS[i / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).magnitude())
}

/// One Gauss–Kronrod panel on `[a, b]`.
pub fn gk15<T: Integrand, F: FnMut(f64) -> T>(mut f: F, a: f64, b: f64) -> (T, f64) {
    let x = gk15_points(a, b);
    let mut v = [T::zero(); 15];
    for i in 0..15 {
        v[i] = f(x[i]);
    }
    gk15_combine(&v, a, b)
}

/// Adaptive Gauss–Kronrod integration by recursive bisection.
///
/// Panels are accepted once the Kronrod–Gauss difference falls below the share of
/// `tol` proportional to their length, or when `max_depth` bisections are reached.
pub fn adaptive<T: Integrand, F: FnMut(f64) -> T>(mut f: F, a: f64, b: f64, tol: f64, max_depth: usize) -> T {
    if a == b {
        return T::zero();
    }
    let total = (b - a).abs();
    let mut acc = T::zero();
    let mut stack = vec![(a, b, 0usize)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        let share = tol * (hi - lo).abs() / total;
        if err <= share.max(f64::EPSILON * val.magnitude()) || depth >= max_depth {
            acc = acc + val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    acc
}

/// Adaptive integral of a real function with default depth.
pub fn integrate_real<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive(f, a, b, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_sum_to_two() {
        let s: f64 = 2.0 * GK15_WEIGHTS[..7].iter().sum::<f64>() + GK15_WEIGHTS[7];
        assert!((s - 2.0).abs() < 1e-15);
        let g: f64 = 2.0 * G7_WEIGHTS[..3].iter().sum::<f64>() + G7_WEIGHTS[3];
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn newton_cotes_integrates_octic_exactly() {
        let h = 0.125;
        let s = newton_cotes_9_scale(h);
        let v: f64 = (0..9).map(|j| NEWTON_COTES_9[j] * (j as f64 * h).powi(8)).sum::<f64>() * s;
        assert!((v - 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn single_panel_is_exact_for_high_degree() {
        let (v, e) = gk15(|x: f64| x.powi(20), -1.0, 1.0);
        assert!((v - 2.0 / 21.0).abs() < 1e-14);
        assert!(e > 0.0);
        let (w, e12) = gk15(|x: f64| x.powi(12), -1.0, 1.0);
        assert!((w - 2.0 / 13.0).abs() < 1e-14);
        assert!(e12 < 1e-13);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = integrate_real(|x| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((v - (0.045 + 0.245)).abs() < 1e-11);
    }

    #[test]
    fn complex_integrand() {
        let v = adaptive(|x| Complex64::new(0.0, 10.0 * x).exp(), 0.0, 1.0, 1e-13, 40);
        let exact = (Complex64::new(0.0, 10.0).exp() - 1.0) / Complex64::new(0.0, 10.0);
        assert!((v - exact).norm() < 1e-12);
    }
}
