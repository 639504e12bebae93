//! The transport operator `f ↦ b(v)·∇_X f + F·∇_v f` in spectral form.

use super::{check_velocity_dims, FieldRole, SpectralKineticField};
use crate::error::{Error, Result};
use crate::fields::{Field, ForceField, SmoothForce};
use crate::tolerances::ALIASING_ENERGY;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// In-place unnormalized FFT over every axis of an array whose first axis varies fastest.
///
/// `inverse = false` computes `Σ x_n e^{−2πi kn/N}`, `inverse = true` the conjugate sum.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total, "array length must match shape");
    let mut planner = FftPlanner::<f64>::new();
    let mut stride = 1;
    for &len in shape {
        let plan = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let block = stride * len;
        for outer in 0..total / block {
            for inner in 0..stride {
                let base = outer * block + inner;
                for (i, l) in line.iter_mut().enumerate() {
                    *l = data[base + i * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (i, l) in line.iter().enumerate() {
                    data[base + i * stride] = *l;
                }
            }
        }
        stride *= len;
    }
}

/// Signed frequency of FFT bin `j` out of `n`.
pub(crate) fn signed_bin(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Share of velocity-spectrum energy held by bins beyond a third of the band on any axis.
pub fn aliasing_fraction(f: &SpectralKineticField) -> f64 {
    let grid = &f.grid;
    let n_v = grid.n_v;
    let m = grid.velocity_dim;
    let shape = vec![n_v; m];
    let cut = n_v as i64 / 3;
    let (high, total) = f
        .coeffs
        .par_chunks(grid.velocity_len())
        .map(|block| {
            let mut spec = block.to_vec();
            fft_nd(&mut spec, &shape, false);
            let mut high = 0.0;
            let mut total = 0.0;
            for (idx, s) in spec.iter().enumerate() {
                let e = s.norm_sqr();
                total += e;
                let mut rem = idx;
                let mut top = false;
                for _ in 0..m {
                    if signed_bin(rem % n_v, n_v).abs() > cut {
                        top = true;
                    }
                    rem /= n_v;
                }
                if top {
                    high += e;
                }
            }
            (high, total)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

/// Spectral velocity gradient of one block: `M` blocks `∂_{v_j} f̂`.
fn velocity_gradient(block: &[Complex64], n_v: usize, m: usize, period: f64) -> Vec<Vec<Complex64>> {
    let shape = vec![n_v; m];
    let mut spec = block.to_vec();
    fft_nd(&mut spec, &shape, false);
    let omega = 2.0 * PI / period;
    let len = spec.len() as f64;
    (0..m)
        .map(|axis| {
            let stride = n_v.pow(axis as u32);
            let mut d: Vec<Complex64> = spec
                .iter()
                .enumerate()
                .map(|(idx, s)| {
                    let j = (idx / stride) % n_v;
                    if j == n_v / 2 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        s * Complex64::new(0.0, omega * signed_bin(j, n_v) as f64)
                    }
                })
                .collect();
            fft_nd(&mut d, &shape, true);
            d.iter_mut().for_each(|x| *x /= len);
            d
        })
        .collect()
}

/// `ĝ(Y, v) = i (b(v)·Y) f̂(Y, v) + (F·∇_v f)^(Y, v)`.
///
/// The velocity derivative is spectral in `v`. A smooth force is applied
/// pseudo-spectrally on the physical `X` grid and the result lives on the full
/// lattice. Fails when the top third of the velocity spectrum of `f` carries
/// more than the pinned energy fraction.
pub fn apply_operator(f: &SpectralKineticField, a: &Field, force: &ForceField) -> Result<SpectralKineticField> {
    check_velocity_dims(f, a)?;
    let grid = f.grid;
    let m = grid.velocity_dim;
    if force.velocity_dim() != m {
        return Err(Error::InvalidArgument("force must live in R^M".into()));
    }
    let fraction = aliasing_fraction(f);
    if fraction > ALIASING_ENERGY {
        return Err(Error::Aliasing { fraction });
    }
    let vl = grid.velocity_len();
    let b: Vec<Vec<f64>> = (0..vl)
        .map(|i| {
            let v = grid.velocity_point(i);
            let mut row = vec![1.0; grid.space_time_dim()];
            a.eval_into(&v, &mut row[1..]);
            row
        })
        .collect();
    match force {
        ForceField::Constant(fv) => {
            let mut g = SpectralKineticField::zeros(grid, f.modes.clone(), FieldRole::Source)?;
            let modes = &f.modes;
            g.coeffs.par_chunks_mut(vl).enumerate().for_each(|(mi, out)| {
                let y = grid.frequency(&modes[mi]);
                let block = f.block(mi);
                let grad = velocity_gradient(block, grid.n_v, m, grid.v_period);
                for i in 0..vl {
                    let by: f64 = b[i].iter().zip(&y).map(|(p, q)| p * q).sum();
                    let mut acc = Complex64::new(0.0, by) * block[i];
                    for j in 0..m {
                        acc += grad[j][i] * fv[j];
                    }
                    out[i] = acc;
                }
            });
            Ok(g)
        }
        ForceField::Smooth(sf) => apply_smooth(f, &b, sf),
    }
}

fn apply_smooth(f: &SpectralKineticField, b: &[Vec<f64>], force: &SmoothForce) -> Result<SpectralKineticField> {
    let grid = f.grid;
    let d = grid.space_time_dim();
    if force.space_time_dim() != d {
        return Err(Error::InvalidArgument("force must depend on N + 1 space-time variables".into()));
    }
    let m = grid.velocity_dim;
    let n_x = grid.n_x;
    let vl = grid.velocity_len();
    let dense_len = n_x.pow(d as u32);
    let shape = vec![n_x; d];
    let dense_index = |k: &[i64]| -> usize {
        k.iter().enumerate().map(|(j, &c)| (c.rem_euclid(n_x as i64) as usize) * n_x.pow(j as u32)).sum()
    };
    let out_modes = grid.full_modes();
    let f_dense: Vec<usize> = f.modes.iter().map(|k| dense_index(k)).collect();
    let out_dense: Vec<usize> = out_modes.iter().map(|k| dense_index(k)).collect();
    // grads[mode][axis][v]
    let grads: Vec<Vec<Vec<Complex64>>> =
        f.coeffs.par_chunks(vl).map(|block| velocity_gradient(block, grid.n_v, m, grid.v_period)).collect();
    let x_points: Vec<Vec<f64>> = (0..dense_len)
        .map(|p| {
            let mut rem = p;
            (0..d)
                .map(|_| {
                    let i = rem % n_x;
                    rem /= n_x;
                    2.0 * PI * grid.length_scale * i as f64 / n_x as f64
                })
                .collect()
        })
        .collect();
    let per_v: Vec<Vec<Complex64>> = (0..vl)
        .into_par_iter()
        .map(|vi| {
            let v = grid.velocity_point(vi);
            let mut acc = vec![Complex64::new(0.0, 0.0); dense_len];
            let mut fv = vec![0.0; m];
            let mut forces = vec![vec![0.0; m]; dense_len];
            for (p, x) in x_points.iter().enumerate() {
                force.eval_into(x, &v, &mut fv);
                forces[p].copy_from_slice(&fv);
            }
            for j in 0..m {
                let mut dense = vec![Complex64::new(0.0, 0.0); dense_len];
                for (mi, &di) in f_dense.iter().enumerate() {
                    dense[di] = grads[mi][j][vi];
                }
                fft_nd(&mut dense, &shape, true);
                for (p, val) in dense.iter().enumerate() {
                    acc[p] += val * forces[p][j];
                }
            }
            fft_nd(&mut acc, &shape, false);
            let scale = 1.0 / dense_len as f64;
            out_dense.iter().map(|&di| acc[di] * scale).collect()
        })
        .collect();
    let mut g = SpectralKineticField::zeros(grid, out_modes, FieldRole::Source)?;
    let index = f.mode_index();
    let modes = g.modes.clone();
    g.coeffs.par_chunks_mut(vl).enumerate().for_each(|(oi, out)| {
        let y = grid.frequency(&modes[oi]);
        let src = index.get(&modes[oi]).map(|&mi| f.block(mi));
        for vi in 0..vl {
            let mut acc = per_v[vi][oi];
            if let Some(block) = src {
                let by: f64 = b[vi].iter().zip(&y).map(|(p, q)| p * q).sum();
                acc += Complex64::new(0.0, by) * block[vi];
            }
            out[vi] = acc;
        }
    });
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::catalog;
    use crate::transport::TorusGrid;

    fn gaussian(v: f64) -> f64 {
        (-v * v / (2.0 * 0.2 * 0.2)).exp()
    }

    #[test]
    fn fft_round_trip() {
        let mut x: Vec<Complex64> = (0..24).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let orig = x.clone();
        fft_nd(&mut x, &[4, 6], false);
        fft_nd(&mut x, &[4, 6], true);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a / 24.0 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_mode_constant_in_v_is_annihilated() {
        let (a, force) = catalog("polynomial-curve", 1, 1).unwrap();
        let grid = TorusGrid::new(1, 1, 1.0, 8, 32, 3.0, 1.1).unwrap();
        let f = SpectralKineticField::from_fn(grid, vec![vec![0, 0]], FieldRole::Density, |_, _| Complex64::new(2.0, 0.0)).unwrap();
        let g = apply_operator(&f, &a, &force).unwrap();
        assert!(g.coeffs.iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn single_mode_identity() {
        let (a, force) = catalog("polynomial-curve", 1, 1).unwrap();
        let grid = TorusGrid::new(1, 1, 1.0, 8, 128, 3.0, 1.1).unwrap();
        let f = SpectralKineticField::from_fn(grid, vec![vec![1, 2]], FieldRole::Density, |_, v| Complex64::new(gaussian(v[0]), 0.0)).unwrap();
        let g = apply_operator(&f, &a, &force).unwrap();
        for i in 0..grid.velocity_len() {
            let v = grid.v_node(i);
            let expected = Complex64::new(0.0, 1.0 + v * 2.0) * gaussian(v) - v / 0.04 * gaussian(v);
            assert!((g.coeffs[i] - expected).norm() < 1e-9, "{i}");
        }
    }

    #[test]
    fn rough_fields_trip_the_guard() {
        let (a, force) = catalog("polynomial-curve", 1, 1).unwrap();
        let grid = TorusGrid::new(1, 1, 1.0, 8, 32, 3.0, 1.1).unwrap();
        let f = SpectralKineticField::from_fn(grid, vec![vec![0, 0]], FieldRole::Density, |_, v| {
            Complex64::new(if v[0] > 0.0 { 1.0 } else { 0.0 }, 0.0)
        })
        .unwrap();
        assert!(matches!(apply_operator(&f, &a, &force), Err(Error::Aliasing { .. })));
    }
}
