//! Deterministic point sets on unit spheres and local cap refinement.

use std::f64::consts::PI;

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dot product.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Returns `x / |x|`, or `None` for the zero vector.
pub fn normalized(x: &[f64]) -> Option<Vec<f64>> {
    let n = norm(x);
    if n == 0.0 || !n.is_finite() {
        None
    } else {
        Some(x.iter().map(|v| v / n).collect())
    }
}

/// Deterministic sampler of the unit sphere in `R^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSampler {
    pub dim: usize,
    pub count: usize,
}

impl SphereSampler {
    pub fn new(dim: usize, count: usize) -> Self {
        SphereSampler { dim, count }
    }

    /// The sample points.
    ///
    /// Circle: equally spaced angles. Two-sphere: Fibonacci spiral. Higher
    /// spheres: the additive recurrence on the generalized golden ratio, pushed
    /// through Box–Muller and normalized.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let n = self.count.max(1);
        match self.dim {
            0 => Vec::new(),
            1 => vec![vec![1.0], vec![-1.0]],
            2 => (0..n)
                .map(|i| {
                    let t = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect(),
            3 => {
                let golden = PI * (3.0 - 5f64.sqrt());
                (0..n)
                    .map(|i| {
                        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                        let r = (1.0 - z * z).max(0.0).sqrt();
                        let t = golden * i as f64;
                        vec![r * t.cos(), r * t.sin(), z]
                    })
                    .collect()
            }
            d => kronecker_sphere(d, n),
        }
    }
}

fn generalized_golden(s: usize) -> f64 {
    let mut x = 2.0f64;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (s as f64 + 1.0));
    }
    x
}

fn kronecker_sphere(d: usize, n: usize) -> Vec<Vec<f64>> {
    let s = 2 * d.div_ceil(2);
    let g = generalized_golden(s);
    let alpha: Vec<f64> = (1..=s).map(|j| (1.0 / g.powi(j as i32)).fract()).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let u: Vec<f64> = alpha
            .iter()
            .map(|a| (0.5 + a * (i as f64 + 1.0)).fract().clamp(1e-12, 1.0 - 1e-12))
            .collect();
        let mut z = Vec::with_capacity(s);
        for pair in u.chunks(2) {
            let r = (-2.0 * pair[0].ln()).sqrt();
            let t = 2.0 * PI * pair[1];
            z.push(r * t.cos());
            z.push(r * t.sin());
        }
        z.truncate(d);
        if let Some(p) = normalized(&z) {
            out.push(p);
        }
    }
    out
}

/// Orthonormal basis of the tangent space at the unit vector `p`.
pub fn tangent_basis(p: &[f64]) -> Vec<Vec<f64>> {
    let d = p.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d.saturating_sub(1));
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&i, &j| p[i].abs().total_cmp(&p[j].abs()));
    for &axis in &axes {
        if basis.len() + 1 == d {
            break;
        }
        let mut e = vec![0.0; d];
        e[axis] = 1.0;
        let c = dot(&e, p);
        for (ei, pi) in e.iter_mut().zip(p) {
            *ei -= c * pi;
        }
        for b in &basis {
            let c = dot(&e, b);
            for (ei, bi) in e.iter_mut().zip(b) {
                *ei -= c * bi;
            }
        }
        if let Some(u) = normalized(&e) {
            if norm(&e) > 1e-6 {
                basis.push(u);
            }
        }
    }
    basis
}

/// Moves `p` by geodesic distance `r` along the unit tangent `t`.
pub fn geodesic_step(p: &[f64], t: &[f64], r: f64) -> Vec<f64> {
    let (s, c) = r.sin_cos();
    let q: Vec<f64> = p.iter().zip(t).map(|(a, b)| c * a + s * b).collect();
    normalized(&q).unwrap_or_else(|| p.to_vec())
}

/// Points on the cap of radius `r` around `p`: steps along each tangent axis and
/// along the pairwise diagonals, in a fixed order.
pub fn cap_stencil(p: &[f64], r: f64) -> Vec<Vec<f64>> {
    let basis = tangent_basis(p);
    let mut out = Vec::new();
    for b in &basis {
        out.push(geodesic_step(p, b, r));
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        out.push(geodesic_step(p, &neg, r));
    }
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let t: Vec<f64> = basis[i]
                    .iter()
                    .zip(&basis[j])
                    .map(|(a, b)| (si * a + sj * b) / 2f64.sqrt())
                    .collect();
                out.push(geodesic_step(p, &t, r));
            }
        }
    }
    out
}

/// Outcome of a cap-shrinking local search.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Cap-shrinking pattern search on the sphere.
///
/// Starting from `start` with cap radius `r0`, evaluates [`cap_stencil`], moves to
/// the best strictly improving point, and halves the radius when no stencil point
/// improves. Stops when the radius drops below `r_min` or after `max_rounds`.
pub fn refine_on_sphere<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    start: &[f64],
    start_value: f64,
    r0: f64,
    r_min: f64,
    max_rounds: usize,
    maximize: bool,
) -> LocalOptimum {
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let mut p = start.to_vec();
    let mut best = start_value;
    let mut r = r0;
    let mut evals = 0;
    let mut rounds = 0;
    while r >= r_min && rounds < max_rounds {
        rounds += 1;
        let mut improved: Option<(Vec<f64>, f64)> = None;
        for q in cap_stencil(&p, r) {
            let v = objective(&q);
            evals += 1;
            let incumbent = improved.as_ref().map(|x| x.1).unwrap_or(best);
            if better(v, incumbent) {
                improved = Some((q, v));
            }
        }
        match improved {
            Some((q, v)) => {
                p = q;
                best = v;
            }
            None => r *= 0.5,
        }
    }
    LocalOptimum { point: p, value: best, evaluations: evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_unit() {
        for d in 1..=6 {
            for p in SphereSampler::new(d, 500).points() {
                assert!((norm(&p) - 1.0).abs() < 1e-12, "dim {d}");
            }
        }
    }

    #[test]
    fn fibonacci_two_sphere_is_balanced() {
        let pts = SphereSampler::new(3, 4096).points();
        let mut mean = [0.0; 3];
        for p in &pts {
            for i in 0..3 {
                mean[i] += p[i] / pts.len() as f64;
            }
        }
        assert!(norm(&mean) < 1e-3);
    }

    #[test]
    fn high_dimensional_covering() {
        let pts = SphereSampler::new(5, 4096).points();
        let probe = [0.0, 0.0, 1.0, 0.0, 0.0];
        let best = pts.iter().map(|p| dot(p, &probe)).fold(f64::MIN, f64::max);
        assert!(best > 0.9);
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let p = normalized(&[0.3, -0.2, 0.9, 0.1]).unwrap();
        let b = tangent_basis(&p);
        assert_eq!(b.len(), 3);
        for i in 0..3 {
            assert!(dot(&b[i], &p).abs() < 1e-12);
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&b[i], &b[j]) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pattern_search_finds_pole() {
        let target = normalized(&[1.0, 2.0, -2.0]).unwrap();
        let start = [1.0, 0.0, 0.0];
        let obj = |q: &[f64]| dot(q, &target);
        let res = refine_on_sphere(obj, &start, obj(&start), 0.5, 1e-8, 500, true);
        assert!(res.value > 1.0 - 1e-12);
    }
}
