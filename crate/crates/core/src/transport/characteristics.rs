//! Change of velocity variables that straightens a smooth force field.
//!
//! `V(t, x; w)` solves `∂_t V + a(V)·∇_x V = F(t, x, V)` with `V(t_0, x; w) = w`.
//! It is computed along characteristics `dX/ds = b(V)`, `dV/ds = F(X, V)` with a
//! fixed number of RK4 steps per trajectory; the foot point of the
//! characteristic reaching `(t, x)` is found by Newton iteration.

use crate::error::{Error, Result};
use crate::fields::{Field, SmoothForce};
use crate::fit::line;
use crate::tolerances::CHARACTERISTICS_RESIDUAL;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsOptions {
    /// RK4 steps per trajectory.
    pub steps: usize,
    /// Step of the fourth-order central differences in the residual.
    pub fd_step: f64,
    /// Smallest patch radius tried before giving up.
    pub min_radius: f64,
    /// Sample points per patch axis.
    pub samples_per_axis: usize,
}

impl Default for CharacteristicsOptions {
    fn default() -> Self {
        CharacteristicsOptions { steps: 64, fd_step: 1e-3, min_radius: 1e-4, samples_per_axis: 3 }
    }
}

/// `V(t, x; w)` on the patch `|t − t_0|, |x − x_0|_∞, |w − w_0|_∞ ≤ radius`.
#[derive(Debug, Clone)]
pub struct CharacteristicsMap {
    a: Field,
    force: SmoothForce,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub w0: Vec<f64>,
    pub radius: f64,
    pub options: CharacteristicsOptions,
}

/// Residual and jacobian on the patch samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsReport {
    pub radius: f64,
    pub steps: usize,
    pub samples: usize,
    pub max_residual: f64,
    pub min_jacobian: f64,
    pub anchor_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CharacteristicsMap {
    /// Builds the map, halving the patch until the jacobian is positive at every sample.
    pub fn new(
        a: Field,
        force: SmoothForce,
        t0: f64,
        x0: Vec<f64>,
        w0: Vec<f64>,
        radius: f64,
        options: CharacteristicsOptions,
    ) -> Result<Self> {
        if x0.len() != a.space_dim() || w0.len() != a.velocity_dim() {
            return Err(Error::InvalidArgument("anchor dimensions must match the field".into()));
        }
        if force.velocity_dim() != a.velocity_dim() || force.space_time_dim() != a.space_dim() + 1 {
            return Err(Error::InvalidArgument("force dimensions must match the field".into()));
        }
        if !(radius > 0.0) || options.steps == 0 || options.samples_per_axis < 2 {
            return Err(Error::InvalidArgument("radius, steps and samples must be positive".into()));
        }
        let mut map = CharacteristicsMap { a, force, t0, x0, w0, radius, options };
        loop {
            let ok = map.samples().iter().all(|p| matches!(map.jacobian(p.0, &p.1, &p.2), Ok(j) if j > 0.0));
            if ok {
                return Ok(map);
            }
            map.radius *= 0.5;
            if map.radius < map.options.min_radius {
                let mut point = vec![map.t0];
                point.extend_from_slice(&map.x0);
                point.extend_from_slice(&map.w0);
                return Err(Error::Singular {
                    point,
                    message: format!("jacobian not positive on any patch of radius ≥ {}", map.options.min_radius),
                });
            }
        }
    }

    fn rhs(&self, z: &[f64], out: &mut [f64]) {
        let n = self.a.space_dim();
        let (xs, v) = z.split_at(n + 1);
        out[0] = 1.0;
        self.a.eval_into(v, &mut out[1..n + 1]);
        self.force.eval_into(xs, v, &mut out[n + 1..]);
    }

    /// `(x(s), V(s))` of the characteristic leaving `(t_0, y)` with velocity `w`.
    fn flow(&self, y: &[f64], w: &[f64], s: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.a.space_dim();
        let dim = 1 + n + w.len();
        let mut z = Vec::with_capacity(dim);
        z.push(self.t0);
        z.extend_from_slice(y);
        z.extend_from_slice(w);
        let h = s / self.options.steps as f64;
        let mut k = vec![vec![0.0; dim]; 4];
        let mut tmp = vec![0.0; dim];
        for _ in 0..self.options.steps {
            self.rhs(&z, &mut k[0]);
            for i in 0..dim {
                tmp[i] = z[i] + 0.5 * h * k[0][i];
            }
            self.rhs(&tmp, &mut k[1]);
            for i in 0..dim {
                tmp[i] = z[i] + 0.5 * h * k[1][i];
            }
            self.rhs(&tmp, &mut k[2]);
            for i in 0..dim {
                tmp[i] = z[i] + h * k[2][i];
            }
            self.rhs(&tmp, &mut k[3]);
            for i in 0..dim {
                z[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
        }
        (z[1..n + 1].to_vec(), z[n + 1..].to_vec())
    }

    /// `V(t, x; w)`.
    pub fn evaluate(&self, t: f64, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let s = t - self.t0;
        if s == 0.0 {
            return Ok(w.to_vec());
        }
        let n = x.len();
        let av = self.a.eval(w);
        let mut y: Vec<f64> = x.iter().zip(&av).map(|(xi, ai)| xi - ai * s).collect();
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..60 {
            let (xs, _) = self.flow(&y, w, s);
            let resid: Vec<f64> = xs.iter().zip(x).map(|(p, q)| p - q).collect();
            let err = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if err <= 4.0 * f64::EPSILON * scale {
                break;
            }
            let eps = 1e-6 * scale;
            let mut jac = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += eps;
                ym[j] -= eps;
                let (xp, _) = self.flow(&yp, w, s);
                let (xm, _) = self.flow(&ym, w, s);
                for i in 0..n {
                    jac[(i, j)] = (xp[i] - xm[i]) / (2.0 * eps);
                }
            }
            let step = jac.lu().solve(&DVector::from_vec(resid)).ok_or_else(|| Error::Singular {
                point: [vec![t], x.to_vec(), w.to_vec()].concat(),
                message: "foot-point jacobian is singular".into(),
            })?;
            let size = step.amax();
            for i in 0..n {
                y[i] -= step[i];
            }
            if size <= f64::EPSILON * scale {
                break;
            }
        }
        let (xs, v) = self.flow(&y, w, s);
        let err = xs.iter().zip(x).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        if err > 1e-11 * scale {
            return Err(Error::Singular {
                point: [vec![t], x.to_vec(), w.to_vec()].concat(),
                message: format!("foot-point iteration stalled at mismatch {err:e}"),
            });
        }
        Ok(v)
    }

    /// `det ∂_w V(t, x; w)` by central differences.
    pub fn jacobian(&self, t: f64, x: &[f64], w: &[f64]) -> Result<f64> {
        let m = w.len();
        let eps = 1e-5 * (1.0 + w.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut wp = w.to_vec();
            let mut wm = w.to_vec();
            wp[j] += eps;
            wm[j] -= eps;
            let vp = self.evaluate(t, x, &wp)?;
            let vm = self.evaluate(t, x, &wm)?;
            for i in 0..m {
                jac[(i, j)] = (vp[i] - vm[i]) / (2.0 * eps);
            }
        }
        Ok(jac.determinant())
    }

    /// `|∂_t V + a(V)·∇_x V − F(t, x, V)|_∞` with fourth-order central differences.
    pub fn residual(&self, t: f64, x: &[f64], w: &[f64]) -> Result<f64> {
        let h = self.options.fd_step;
        let n = x.len();
        let m = w.len();
        let central = |shift: &dyn Fn(f64) -> (f64, Vec<f64>)| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; m];
            for (c, k) in [(1.0, -2.0), (-8.0, -1.0), (8.0, 1.0), (-1.0, 2.0)] {
                let (tt, xx) = shift(k * h);
                let v = self.evaluate(tt, &xx, w)?;
                for i in 0..m {
                    acc[i] += c * v[i];
                }
            }
            Ok(acc.iter().map(|v| v / (12.0 * h)).collect())
        };
        let dt = central(&|d| (t + d, x.to_vec()))?;
        let v = self.evaluate(t, x, w)?;
        let av = self.a.eval(&v);
        let mut lhs = dt;
        for j in 0..n {
            let dx = central(&|d| {
                let mut xx = x.to_vec();
                xx[j] += d;
                (t, xx)
            })?;
            for i in 0..m {
                lhs[i] += av[j] * dx[i];
            }
        }
        let mut xs = vec![t];
        xs.extend_from_slice(x);
        let fv = self.force.eval(&xs, &v);
        Ok(lhs.iter().zip(&fv).fold(0.0f64, |acc, (l, f)| acc.max((l - f).abs())))
    }

    /// Sample points `(t, x, w)` on a tensor grid of the patch.
    pub fn samples(&self) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        let n = self.x0.len();
        let m = self.w0.len();
        let d = 1 + n + m;
        let k = self.options.samples_per_axis;
        let offsets: Vec<f64> = (0..k).map(|i| self.radius * (2.0 * i as f64 / (k - 1) as f64 - 1.0)).collect();
        (0..k.pow(d as u32))
            .map(|idx| {
                let mut rem = idx;
                let mut coords = Vec::with_capacity(d);
                for _ in 0..d {
                    coords.push(offsets[rem % k]);
                    rem /= k;
                }
                let t = self.t0 + coords[0];
                let x = (0..n).map(|j| self.x0[j] + coords[1 + j]).collect();
                let w = (0..m).map(|j| self.w0[j] + coords[1 + n + j]).collect();
                (t, x, w)
            })
            .collect()
    }

    pub fn report(&self) -> Result<CharacteristicsReport> {
        let samples = self.samples();
        let mut max_residual = 0.0f64;
        let mut min_jacobian = f64::INFINITY;
        let mut anchor_error = 0.0f64;
        for (t, x, w) in &samples {
            max_residual = max_residual.max(self.residual(*t, x, w)?);
            min_jacobian = min_jacobian.min(self.jacobian(*t, x, w)?);
            let at_anchor = self.evaluate(self.t0, x, w)?;
            anchor_error = anchor_error.max(at_anchor.iter().zip(w).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())));
        }
        Ok(CharacteristicsReport {
            radius: self.radius,
            steps: self.options.steps,
            samples: samples.len(),
            max_residual,
            min_jacobian,
            anchor_error,
            tolerance: CHARACTERISTICS_RESIDUAL,
            passed: max_residual <= CHARACTERISTICS_RESIDUAL && min_jacobian > 0.0 && anchor_error == 0.0,
        })
    }
}

/// Residuals for several step counts and the observed order of convergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub steps: Vec<usize>,
    pub residuals: Vec<f64>,
    pub observed_order: f64,
    pub reports: Vec<CharacteristicsReport>,
}

/// Builds the map for each step count on a common patch and fits `log residual` against `log steps`.
#[allow(clippy::too_many_arguments)]
pub fn characteristics_convergence(
    a: Field,
    force: SmoothForce,
    t0: f64,
    x0: Vec<f64>,
    w0: Vec<f64>,
    radius: f64,
    steps: &[usize],
    options: CharacteristicsOptions,
) -> Result<ConvergenceReport> {
    if steps.len() < 2 {
        return Err(Error::InvalidArgument("need at least two step counts".into()));
    }
    let finest = *steps.iter().max().expect("nonempty");
    let probe = CharacteristicsMap::new(a.clone(), force.clone(), t0, x0.clone(), w0.clone(), radius, CharacteristicsOptions { steps: finest, ..options })?;
    let radius = probe.radius;
    let mut reports = Vec::with_capacity(steps.len());
    for &s in steps {
        let map = CharacteristicsMap { radius, options: CharacteristicsOptions { steps: s, ..options }, ..probe.clone() };
        reports.push(map.report()?);
    }
    let residuals: Vec<f64> = reports.iter().map(|r| r.max_residual).collect();
    let xs: Vec<f64> = steps.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
    let fit = line(&xs, &ys).ok_or_else(|| Error::InvalidArgument("step counts must differ".into()))?;
    Ok(ConvergenceReport { steps: steps.to_vec(), residuals, observed_order: -fit.slope, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::catalog;

    fn identity() -> Field {
        catalog("identity", 1, 1).unwrap().0
    }

    #[test]
    fn zero_force_keeps_velocity() {
        let f = SmoothForce::new(2, 1, "zero", |_, _, o| o[0] = 0.0);
        let map = CharacteristicsMap::new(identity(), f, 0.0, vec![0.1], vec![0.3], 0.5, CharacteristicsOptions::default()).unwrap();
        assert_eq!(map.evaluate(0.4, &[0.2], &[0.7]).unwrap(), vec![0.7]);
        let r = map.report().unwrap();
        assert!(r.max_residual <= 1e-10 && r.passed);
    }

    #[test]
    fn unit_force_shifts_velocity() {
        let f = SmoothForce::new(2, 1, "one", |_, _, o| o[0] = 1.0);
        let map = CharacteristicsMap::new(identity(), f, 0.0, vec![0.0], vec![0.2], 0.5, CharacteristicsOptions::default()).unwrap();
        let v = map.evaluate(0.3, &[0.1], &[0.4]).unwrap();
        assert!((v[0] - 0.7).abs() < 1e-13);
        let r = map.report().unwrap();
        assert!(r.max_residual <= 1e-10, "{r:?}");
        assert!((r.min_jacobian - 1.0).abs() < 1e-8);
    }
}
