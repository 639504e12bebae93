//! Spectral representation of `b(v)·∇_X f + F·∇_v f = g` on a space-time torus.
//!
//! Space-time `X = (t, x)` lives on a torus of period `2πL` per axis, so its dual
//! variable runs over the lattice `Y = k/L`. Velocities are sampled on a periodic
//! grid of period `P` per axis that strictly contains the support box `[−A, A]^M`.
//! Coefficients are stored per lattice mode as a contiguous velocity block with
//! the first velocity axis varying fastest.

mod characteristics;
mod io;
mod operator;
mod reconstruct;
mod series;

pub use characteristics::{
    characteristics_convergence, CharacteristicsMap, CharacteristicsOptions, CharacteristicsReport, ConvergenceReport,
};
pub use io::{read_field, summarize, write_field, FieldSummary};
pub use operator::{aliasing_fraction, apply_operator, fft_nd};
pub use reconstruct::{
    b_primitive, reconstruct_from_slice, spectral_ode_residual, ResidualReport, RECONSTRUCT_UPSAMPLING,
};
pub use series::{series_truncation_check, SeriesTruncationReport};

use crate::error::{Error, Result};
use crate::fields::{Field, ForceField};
use crate::smooth::TestFunction;
use crate::sphere::norm;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Discretization of the torus in `X` and of the periodic velocity box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    /// Space dimension `N`; space-time has `N + 1` axes.
    pub space_dim: usize,
    /// Velocity dimension `M`.
    pub velocity_dim: usize,
    /// Torus period is `2π · length_scale` per axis.
    pub length_scale: f64,
    /// Points per space-time axis.
    pub n_x: usize,
    /// Points per velocity axis.
    pub n_v: usize,
    /// Velocity period per axis.
    pub v_period: f64,
    /// Half-width of the velocity support box.
    pub amp: f64,
}

impl TorusGrid {
    pub fn new(
        space_dim: usize,
        velocity_dim: usize,
        length_scale: f64,
        n_x: usize,
        n_v: usize,
        v_period: f64,
        amp: f64,
    ) -> Result<Self> {
        if space_dim == 0 || velocity_dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if !n_x.is_power_of_two() || !n_v.is_power_of_two() || n_x < 4 || n_v < 4 {
            return Err(Error::InvalidArgument(format!("n_x = {n_x} and n_v = {n_v} must be powers of two ≥ 4")));
        }
        if !(length_scale > 0.0) || !(v_period > 0.0) || !(amp > 0.0) {
            return Err(Error::InvalidArgument("length scale, velocity period and box must be positive".into()));
        }
        if amp >= 0.5 * v_period {
            return Err(Error::InvalidArgument(format!(
                "support box [−{amp}, {amp}] must lie strictly inside the velocity period {v_period}"
            )));
        }
        Ok(TorusGrid { space_dim, velocity_dim, length_scale, n_x, n_v, v_period, amp })
    }

    pub fn space_time_dim(&self) -> usize {
        self.space_dim + 1
    }

    pub fn dv(&self) -> f64 {
        self.v_period / self.n_v as f64
    }

    /// Velocity node `i` on one axis.
    pub fn v_node(&self, i: usize) -> f64 {
        -0.5 * self.v_period + i as f64 * self.dv()
    }

    /// Number of velocity grid points.
    pub fn velocity_len(&self) -> usize {
        self.n_v.pow(self.velocity_dim as u32)
    }

    /// Number of transverse points `w = (v_2, …, v_M)`.
    pub fn transverse_len(&self) -> usize {
        self.n_v.pow(self.velocity_dim as u32 - 1)
    }

    pub fn velocity_point(&self, idx: usize) -> Vec<f64> {
        let mut rem = idx;
        (0..self.velocity_dim)
            .map(|_| {
                let i = rem % self.n_v;
                rem /= self.n_v;
                self.v_node(i)
            })
            .collect()
    }

    /// Volume element of the velocity grid.
    pub fn velocity_cell(&self) -> f64 {
        self.dv().powi(self.velocity_dim as i32)
    }

    /// Volume element of the dual lattice.
    pub fn lattice_cell(&self) -> f64 {
        self.length_scale.powi(-(self.space_time_dim() as i32))
    }

    /// Largest admissible `|k_j|`; the Nyquist index is excluded.
    pub fn max_index(&self) -> i64 {
        self.n_x as i64 / 2 - 1
    }

    pub fn contains_mode(&self, k: &[i64]) -> bool {
        k.len() == self.space_time_dim() && k.iter().all(|c| c.abs() <= self.max_index())
    }

    /// Dual variable `Y = k / L`.
    pub fn frequency(&self, k: &[i64]) -> Vec<f64> {
        k.iter().map(|&c| c as f64 / self.length_scale).collect()
    }

    /// Every lattice mode, lexicographic with the time index slowest.
    pub fn full_modes(&self) -> Vec<Vec<i64>> {
        let kmax = self.max_index();
        let side = (2 * kmax + 1) as usize;
        let d = self.space_time_dim();
        (0..side.pow(d as u32))
            .map(|idx| {
                let mut rem = idx;
                let mut k = vec![0i64; d];
                for j in (0..d).rev() {
                    k[j] = (rem % side) as i64 - kmax;
                    rem /= side;
                }
                k
            })
            .collect()
    }

    /// Lattice modes with `|Y| ≤ cutoff`.
    pub fn ball_modes(&self, cutoff: f64) -> Vec<Vec<i64>> {
        self.full_modes().into_iter().filter(|k| norm(&self.frequency(k)) <= cutoff * (1.0 + 1e-12)).collect()
    }

    /// Index of the velocity node on the first axis closest to `target`.
    pub fn closest_node(&self, target: f64) -> usize {
        (0..self.n_v)
            .min_by(|&i, &j| (self.v_node(i) - target).abs().total_cmp(&(self.v_node(j) - target).abs()))
            .expect("nonempty grid")
    }
}

/// Whether a spectral field stands for the unknown or for the source term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldRole {
    Density,
    Source,
}

/// Fourier coefficients `f̂(Y, v)` on a list of lattice modes times the velocity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKineticField {
    pub grid: TorusGrid,
    pub modes: Vec<Vec<i64>>,
    pub coeffs: Vec<Complex64>,
    pub role: FieldRole,
}

impl SpectralKineticField {
    pub fn zeros(grid: TorusGrid, modes: Vec<Vec<i64>>, role: FieldRole) -> Result<Self> {
        if let Some(bad) = modes.iter().find(|k| !grid.contains_mode(k)) {
            return Err(Error::InvalidArgument(format!("mode {bad:?} lies outside the lattice")));
        }
        let mut seen = std::collections::HashSet::with_capacity(modes.len());
        if let Some(dup) = modes.iter().find(|k| !seen.insert((*k).clone())) {
            return Err(Error::InvalidArgument(format!("mode {dup:?} is listed twice")));
        }
        let len = modes.len() * grid.velocity_len();
        Ok(SpectralKineticField { grid, modes, coeffs: vec![Complex64::new(0.0, 0.0); len], role })
    }

    /// Field with `f̂(Y, v) = value(Y, v)`.
    pub fn from_fn(
        grid: TorusGrid,
        modes: Vec<Vec<i64>>,
        role: FieldRole,
        value: impl Fn(&[f64], &[f64]) -> Complex64 + Sync,
    ) -> Result<Self> {
        let mut f = Self::zeros(grid, modes, role)?;
        let vl = grid.velocity_len();
        let points: Vec<Vec<f64>> = (0..vl).map(|i| grid.velocity_point(i)).collect();
        let modes = &f.modes;
        f.coeffs.par_chunks_mut(vl).enumerate().for_each(|(mi, line)| {
            let y = grid.frequency(&modes[mi]);
            for (c, v) in line.iter_mut().zip(&points) {
                *c = value(&y, v);
            }
        });
        Ok(f)
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Velocity block of mode `i`.
    pub fn block(&self, i: usize) -> &[Complex64] {
        let vl = self.grid.velocity_len();
        &self.coeffs[i * vl..(i + 1) * vl]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [Complex64] {
        let vl = self.grid.velocity_len();
        &mut self.coeffs[i * vl..(i + 1) * vl]
    }

    pub fn mode_index(&self) -> HashMap<Vec<i64>, usize> {
        self.modes.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect()
    }

    /// `‖f‖²_{L²}` by Parseval on the torus.
    pub fn l2_norm_sq(&self) -> f64 {
        let d = self.grid.space_time_dim() as i32;
        (2.0 * PI * self.grid.length_scale).powi(d) * self.grid.velocity_cell() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `‖self − other‖ / ‖other‖` when both share grid and modes.
    pub fn relative_l2_distance(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let diff: f64 = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm_sqr()).sum();
        let base: f64 = other.coeffs.iter().map(|c| c.norm_sqr()).sum();
        Ok(if base == 0.0 { diff.sqrt() } else { (diff / base).sqrt() })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.modes != other.modes {
            return Err(Error::InvalidArgument("fields must share grid and mode list".into()));
        }
        Ok(())
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: Complex64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.coeffs.iter_mut().zip(&other.coeffs).for_each(|(a, b)| *a += s * b);
        Ok(out)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `h(v_1) = Σ_{Y, w} |f̂(Y, v_1, w)|²` for every node of the first velocity axis.
    pub fn v1_profile(&self) -> Vec<f64> {
        let n_v = self.grid.n_v;
        let mut h = vec![0.0; n_v];
        for (i, c) in self.coeffs.iter().enumerate() {
            h[i % n_v] += c.norm_sqr();
        }
        h
    }

    /// Restriction `f̂(·, v_1 = node i, ·)`.
    pub fn slice(&self, v1_index: usize) -> Result<VelocitySlice> {
        if v1_index >= self.grid.n_v {
            return Err(Error::InvalidArgument(format!("slice index {v1_index} outside the grid")));
        }
        let n_v = self.grid.n_v;
        let values = self.coeffs.iter().skip(v1_index).step_by(n_v).copied().collect();
        Ok(VelocitySlice { v1_index, modes: self.modes.clone(), values })
    }

    /// Whether `f̂(−Y, v) = conj f̂(Y, v)` within `tol`, as for real fields.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let index = self.mode_index();
        self.modes.iter().enumerate().all(|(i, k)| {
            let neg: Vec<i64> = k.iter().map(|c| -c).collect();
            match index.get(&neg) {
                None => false,
                Some(&j) => self.block(i).iter().zip(self.block(j)).all(|(a, b)| (a - b.conj()).norm() <= tol),
            }
        })
    }
}

/// Values `f̂(Y, v_1⁰, w)` on every mode and transverse node.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySlice {
    pub v1_index: usize,
    pub modes: Vec<Vec<i64>>,
    /// `modes.len() × n_v^{M−1}` values, mode-major.
    pub values: Vec<Complex64>,
}

/// Selected slice and the quantities it was compared by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceChoice {
    pub index: usize,
    pub v1: f64,
    pub h_value: f64,
    pub h_mean: f64,
}

/// Grid slice in `(0, 1)` minimizing `h(v_1) = Σ_{Y, w} |f̂(Y, v_1; w)|²`; first minimizer on ties.
pub fn select_v1_slice(f: &SpectralKineticField) -> Result<SliceChoice> {
    let grid = &f.grid;
    let candidates: Vec<usize> = (0..grid.n_v).filter(|&i| grid.v_node(i) > 0.0 && grid.v_node(i) < 1.0).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("velocity grid has no node in (0, 1)".into()));
    }
    let h = f.v1_profile();
    let mut best = candidates[0];
    for &i in &candidates[1..] {
        if h[i] < h[best] {
            best = i;
        }
    }
    let h_mean = candidates.iter().map(|&i| h[i]).sum::<f64>() / candidates.len() as f64;
    Ok(SliceChoice { index: best, v1: grid.v_node(best), h_value: h[best], h_mean })
}

/// Orthogonal `R` with `R F = |F| e_1` and `det R = 1` whenever `M ≥ 2`.
///
/// Built from the Householder reflection taking `F/|F|` to `e_1`, composed with a
/// sign flip of the last axis to restore orientation. For `M = 1` and `F < 0`
/// the only choice is `R = −1`.
pub fn rotate_velocity_frame(force: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = force.len();
    let n = norm(force);
    if m == 0 || n == 0.0 || !n.is_finite() {
        return Err(Error::Unsupported("the frame rotation needs a nonzero force".into()));
    }
    let unit: Vec<f64> = force.iter().map(|x| x / n).collect();
    let identity = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    if m == 1 {
        return Ok(vec![vec![unit[0].signum()]]);
    }
    let mut u = unit.clone();
    u[0] -= 1.0;
    let uu: f64 = u.iter().map(|x| x * x).sum();
    if uu < 1e-30 {
        return Ok((0..m).map(|i| (0..m).map(|j| identity(i, j)).collect()).collect());
    }
    Ok((0..m)
        .map(|i| {
            let flip = if i == m - 1 { -1.0 } else { 1.0 };
            (0..m).map(|j| flip * (identity(i, j) - 2.0 * u[i] * u[j] / uu)).collect()
        })
        .collect())
}

fn check_velocity_dims(f: &SpectralKineticField, a: &Field) -> Result<()> {
    if a.velocity_dim() != f.grid.velocity_dim || a.space_dim() != f.grid.space_dim {
        return Err(Error::InvalidArgument("field dimensions do not match the grid".into()));
    }
    Ok(())
}

/// `ρ̂_ψ(Y) = Σ_v f̂(Y, v) ψ(v) Δv` for a bump supported in the box.
pub fn velocity_average(f: &SpectralKineticField, psi: &TestFunction) -> Result<Vec<Complex64>> {
    if psi.dim != f.grid.velocity_dim {
        return Err(Error::InvalidArgument("test function dimension must equal M".into()));
    }
    if !psi.supported_in(f.grid.amp) {
        return Err(Error::Support(format!(
            "test function radius {} exceeds the box half-width {}",
            psi.radius, f.grid.amp
        )));
    }
    Ok(velocity_average_with(f, |v| psi.eval(v)))
}

/// Velocity average against an arbitrary weight sampled on the grid.
pub fn velocity_average_with(f: &SpectralKineticField, psi: impl Fn(&[f64]) -> f64) -> Vec<Complex64> {
    let grid = &f.grid;
    let weights: Vec<f64> = (0..grid.velocity_len()).map(|i| psi(&grid.velocity_point(i)) * grid.velocity_cell()).collect();
    let vl = grid.velocity_len();
    f.coeffs
        .par_chunks(vl)
        .map(|block| block.iter().zip(&weights).fold(Complex64::new(0.0, 0.0), |acc, (c, w)| acc + c * w))
        .collect()
}

/// Field expressed in velocity coordinates `v' = R v`: `f'(Y, v') = f(Y, Rᵀ v')`.
///
/// Values off the grid come from the periodic trigonometric interpolant in `v`,
/// so the field must vanish near the velocity period boundary.
pub fn rotate_field(f: &SpectralKineticField, rotation: &[Vec<f64>]) -> Result<SpectralKineticField> {
    let grid = f.grid;
    let m = grid.velocity_dim;
    if rotation.len() != m || rotation.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidArgument("rotation must be M × M".into()));
    }
    let vl = grid.velocity_len();
    let targets: Vec<Vec<f64>> = (0..vl)
        .map(|i| {
            let vp = grid.velocity_point(i);
            (0..m).map(|a| (0..m).map(|b| rotation[b][a] * vp[b]).sum()).collect()
        })
        .collect();
    let mut out = SpectralKineticField::zeros(grid, f.modes.clone(), f.role)?;
    let n_v = grid.n_v;
    let omega = 2.0 * PI / grid.v_period;
    let freq = |j: usize| -> f64 {
        if j < n_v / 2 {
            j as f64
        } else {
            j as f64 - n_v as f64
        }
    };
    out.coeffs.par_chunks_mut(vl).enumerate().for_each(|(mi, dst)| {
        let mut spec = f.block(mi).to_vec();
        fft_nd(&mut spec, &vec![n_v; m], false);
        for (d, t) in dst.iter_mut().zip(&targets) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (idx, s) in spec.iter().enumerate() {
                let mut rem = idx;
                let mut weight = Complex64::new(1.0, 0.0);
                for tj in t.iter() {
                    let j = rem % n_v;
                    rem /= n_v;
                    let x = tj + 0.5 * grid.v_period;
                    weight *= if j == n_v / 2 {
                        Complex64::new((omega * (n_v / 2) as f64 * x).cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, omega * freq(j) * x)
                    };
                }
                acc += s * weight;
            }
            *d = acc / vl as f64;
        }
    });
    Ok(out)
}

/// A solution pair of the kinetic equation.
#[derive(Debug, Clone)]
pub struct KineticPair {
    pub f: SpectralKineticField,
    pub g: SpectralKineticField,
    pub v1_index: usize,
}

/// How [`make_pair`] produces its pair.
#[derive(Debug, Clone)]
pub enum PairMode {
    /// A given smooth `f`; `g` follows from the operator.
    Manufactured(SpectralKineticField),
    /// Gaussian slice and source on `|Y| ≤ cutoff`; `f` follows from the reconstruction.
    Random { seed: u64, cutoff: f64 },
}

/// Node of the first velocity axis closest to `1/2`, inside `(0, 1)`.
pub fn default_slice_index(grid: &TorusGrid) -> Result<usize> {
    let i = grid.closest_node(0.5);
    let v = grid.v_node(i);
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidArgument("velocity grid has no node in (0, 1)".into()));
    }
    Ok(i)
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Smooth density on the modes `|k|_∞ ≤ max_index`: a Gaussian of width `width` in each
/// velocity axis whose centre and phase vary with the mode.
pub fn manufactured_density(grid: &TorusGrid, max_index: i64, width: f64) -> Result<SpectralKineticField> {
    if !(width > 0.0) || max_index < 0 || max_index > grid.max_index() {
        return Err(Error::InvalidArgument("profile width must be positive and the modes must fit the grid".into()));
    }
    let modes: Vec<Vec<i64>> = grid.full_modes().into_iter().filter(|k| k.iter().all(|c| c.abs() <= max_index)).collect();
    let scale = grid.length_scale;
    SpectralKineticField::from_fn(*grid, modes, FieldRole::Density, move |y, v| {
        let k2: f64 = y.iter().map(|c| (c * scale) * (c * scale)).sum();
        let shift: f64 = 0.1 * y.iter().enumerate().map(|(j, c)| (c * scale * (j + 1) as f64).sin()).sum::<f64>();
        let phase: f64 = y.iter().enumerate().map(|(j, c)| 0.3 * c * scale * (j as f64 + 0.5)).sum();
        let profile: f64 = v.iter().map(|x| (-(x - shift) * (x - shift) / (2.0 * width * width)).exp()).product();
        Complex64::from_polar((-k2 / 8.0).exp() * profile, phase)
    })
}

/// Produces `(f, g)` with `b(v)·∇_X f + F·∇_v f = g`.
pub fn make_pair(mode: PairMode, a: &Field, force: &ForceField, grid: &TorusGrid) -> Result<KineticPair> {
    match mode {
        PairMode::Manufactured(f) => {
            check_velocity_dims(&f, a)?;
            let g = apply_operator(&f, a, force)?;
            let v1_index = default_slice_index(&f.grid)?;
            Ok(KineticPair { f, g, v1_index })
        }
        PairMode::Random { seed, cutoff } => {
            let fvec = force.nonzero_constant()?;
            let modes = grid.ball_modes(cutoff);
            let mut g = SpectralKineticField::zeros(*grid, modes.clone(), FieldRole::Source)?;
            check_velocity_dims(&g, a)?;
            let v1_index = default_slice_index(grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tl = grid.transverse_len();
            let mut slice = VelocitySlice { v1_index, modes, values: vec![Complex64::new(0.0, 0.0); g.modes.len() * tl] };
            for mi in 0..g.modes.len() {
                for s in slice.values[mi * tl..(mi + 1) * tl].iter_mut() {
                    *s = complex_normal(&mut rng);
                }
                for c in g.block_mut(mi).iter_mut() {
                    *c = complex_normal(&mut rng);
                }
            }
            let f = reconstruct_from_slice(&slice, &g, &**a, fvec)?;
            Ok(KineticPair { f, g, v1_index })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::catalog;

    fn grid() -> TorusGrid {
        TorusGrid::new(1, 1, 1.0, 8, 32, 3.0, 1.1).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(1, 1, 1.0, 6, 32, 3.0, 1.0).is_err());
        assert!(TorusGrid::new(1, 1, 1.0, 8, 32, 3.0, 1.5).is_err());
        let g = grid();
        assert_eq!(g.max_index(), 3);
        assert_eq!(g.full_modes().len(), 49);
        assert_eq!(g.ball_modes(1.0).len(), 5);
        assert_eq!(g.v_node(0), -1.5);
    }

    #[test]
    fn rotations_map_force_to_first_axis() {
        let r = rotate_velocity_frame(&[3.0, 0.0]).unwrap();
        assert_eq!(r, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = rotate_velocity_frame(&[0.0, 2.0]).unwrap();
        let img: Vec<f64> = (0..2).map(|i| r[i][0] * 0.0 + r[i][1] * 2.0).collect();
        assert!((img[0] - 2.0).abs() < 1e-15 && img[1].abs() < 1e-15);
        assert!((r[0][0] * r[1][1] - r[0][1] * r[1][0] - 1.0).abs() < 1e-15);
        let r = rotate_velocity_frame(&[1.0, 1.0]).unwrap();
        let img: Vec<f64> = (0..2).map(|i| r[i][0] + r[i][1]).collect();
        assert!((img[0] - 2f64.sqrt()).abs() < 1e-12 && img[1].abs() < 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                let rrt: f64 = (0..2).map(|k| r[i][k] * r[j][k]).sum();
                assert!((rrt - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(rotate_velocity_frame(&[0.0, 0.0]).is_err());
        assert_eq!(rotate_velocity_frame(&[-2.0]).unwrap(), vec![vec![-1.0]]);
    }

    #[test]
    fn slice_selection() {
        let g = grid();
        let flat = SpectralKineticField::from_fn(g, vec![vec![0, 0]], FieldRole::Density, |_, _| Complex64::new(1.0, 0.0)).unwrap();
        let c = select_v1_slice(&flat).unwrap();
        assert_eq!(c.index, (0..g.n_v).find(|&i| g.v_node(i) > 0.0).unwrap());
        let ramp = SpectralKineticField::from_fn(g, vec![vec![0, 0]], FieldRole::Density, |_, v| Complex64::new(v[0].abs().sqrt(), 0.0)).unwrap();
        let c = select_v1_slice(&ramp).unwrap();
        assert!(c.h_value <= 0.5 && c.h_value <= c.h_mean);
    }

    #[test]
    fn average_of_single_mode() {
        let g = TorusGrid::new(1, 1, 1.0, 8, 256, 3.0, 1.1).unwrap();
        let modes = vec![vec![0, 0], vec![1, 0]];
        let f = SpectralKineticField::from_fn(g, modes, FieldRole::Density, |y, v| {
            if y[0] == 0.0 && y[1] == 0.0 {
                Complex64::new((-v[0] * v[0]).exp(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .unwrap();
        let psi = TestFunction::new(1, 1.0);
        let rho = velocity_average(&f, &psi).unwrap();
        assert_eq!(rho[1], Complex64::new(0.0, 0.0));
        let exact = crate::quadrature::integrate_real(|u| (-u * u).exp() * psi.eval(&[u]), -1.0, 1.0, 1e-14);
        assert!((rho[0].re - exact).abs() < 1e-8, "{}", rho[0].re - exact);
        assert!(velocity_average(&f, &TestFunction::new(1, 1.2)).is_err());
    }

    #[test]
    fn random_pair_is_deterministic() {
        let (a, force) = catalog("polynomial-curve", 1, 1).unwrap();
        let g = grid();
        let p1 = make_pair(PairMode::Random { seed: 7, cutoff: 2.0 }, &a, &force, &g).unwrap();
        let p2 = make_pair(PairMode::Random { seed: 7, cutoff: 2.0 }, &a, &force, &g).unwrap();
        assert_eq!(p1.f, p2.f);
        assert_eq!(p1.g, p2.g);
        assert!(p1.f.l2_norm().is_finite() && p1.g.l2_norm() > 0.0);
    }
}
