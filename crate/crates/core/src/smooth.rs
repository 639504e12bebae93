//! Compactly supported smooth bumps, transitions and velocity test functions.

use serde::{Deserialize, Serialize};

/// `exp(1 − 1/(1 − x²))` on `(−1, 1)`, zero outside; peak value one at the origin.
pub fn bump(x: f64) -> f64 {
    let s = 1.0 - x * x;
    if s <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / s).exp()
    }
}

/// Derivative of [`bump`].
pub fn bump_derivative(x: f64) -> f64 {
    let s = 1.0 - x * x;
    if s <= 0.0 {
        0.0
    } else {
        -2.0 * x / (s * s) * (1.0 - 1.0 / s).exp()
    }
}

fn edge(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

fn edge_derivative(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp() / (t * t)
    }
}

/// Smooth monotone transition from 0 at `t ≤ 0` to 1 at `t ≥ 1`.
pub fn smoothstep(t: f64) -> f64 {
    let (p, q) = (edge(t), edge(1.0 - t));
    p / (p + q)
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let (p, q) = (edge(t), edge(1.0 - t));
    let (dp, dq) = (edge_derivative(t), -edge_derivative(1.0 - t));
    (dp * (p + q) - p * (dp + dq)) / ((p + q) * (p + q))
}

/// Product bump `ψ(v) = Π_i bump(v_i / r)` supported in `[−r, r]^M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub dim: usize,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(dim: usize, radius: f64) -> Self {
        TestFunction { dim, radius }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| bump(x / self.radius)).product()
    }

    /// `∂_{v_axis} ψ(v)`.
    pub fn partial(&self, v: &[f64], axis: usize) -> f64 {
        v.iter()
            .enumerate()
            .map(|(i, x)| {
                if i == axis {
                    bump_derivative(x / self.radius) / self.radius
                } else {
                    bump(x / self.radius)
                }
            })
            .product()
    }

    /// Supremum norm.
    pub fn sup_norm(&self) -> f64 {
        1.0
    }

    /// Upper bound of `‖∂_{v_1} ψ(·, w)‖_{L¹}` over all transverse `w`.
    pub fn axis_variation(&self) -> f64 {
        2.0
    }

    /// Whether the support lies inside `[−a, a]^M`.
    pub fn supported_in(&self, a: f64) -> bool {
        self.radius <= a
    }
}
