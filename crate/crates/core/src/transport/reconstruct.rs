//! Exact solution of the constant-force equation from one velocity slice.
//!
//! With `F = |F| e_1` the equation reduces, for fixed `(Y, w)`, to the ODE
//! `|F| ∂_{v_1} f̂ + i (b(v)·Y) f̂ = ĝ`. Writing `B(v_1; w) = −∫_{v_1⁰}^{v_1} b/|F|`,
//! its solution is `f̂ = e^{iB·Y} (c + |F|⁻¹ ∫_{v_1⁰}^{v_1} ĝ e^{−iB·Y} du)`.

use super::{FieldRole, SpectralKineticField, VelocitySlice};
use crate::error::{Error, Result};
use crate::fields::VelocityField;
use crate::quadrature::{adaptive, gk15, integrate_real, newton_cotes_9_scale, NEWTON_COTES_9};
use crate::tolerances::SPECTRAL_ODE_RESIDUAL;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fine nodes per velocity cell used by the reconstruction quadrature.
pub const RECONSTRUCT_UPSAMPLING: usize = 16;

/// `B(v_1; w) − B(v_1⁰; w) = −∫_{v_1⁰}^{v_1} b(u, w)/|F| du`, componentwise.
pub fn b_primitive(a: &dyn VelocityField, force_norm: f64, v1_0: f64, v1: f64, w: &[f64]) -> Vec<f64> {
    let n = a.space_dim();
    let mut out = vec![0.0; n + 1];
    out[0] = -(v1 - v1_0) / force_norm;
    if v1 == v1_0 {
        return out;
    }
    let point = |u: f64| -> Vec<f64> {
        let mut v = Vec::with_capacity(w.len() + 1);
        v.push(u);
        v.extend_from_slice(w);
        v
    };
    let mut hi = vec![0.0; n];
    let mut lo = vec![0.0; n];
    if a.axis0_primitive(&point(v1), &mut hi) && a.axis0_primitive(&point(v1_0), &mut lo) {
        for j in 0..n {
            out[j + 1] = -(hi[j] - lo[j]) / force_norm;
        }
        return out;
    }
    let mut buf = vec![0.0; n];
    for j in 0..n {
        let integral = integrate_real(
            |u| {
                a.eval_into(&point(u), &mut buf);
                buf[j]
            },
            v1_0,
            v1,
            1e-14 * (1.0 + (v1 - v1_0).abs()),
        );
        out[j + 1] = -integral / force_norm;
    }
    out
}

fn aligned_norm(force: &[f64]) -> Result<f64> {
    let n = crate::sphere::norm(force);
    if n == 0.0 {
        return Err(Error::Unsupported("the slice reconstruction needs a nonzero force".into()));
    }
    if force[0] <= 0.0 || force[1..].iter().any(|x| x.abs() > 1e-12 * n) {
        return Err(Error::Precondition {
            at: 0.0,
            message: format!("force {force:?} must be aligned with +e_1; rotate the velocity frame first"),
        });
    }
    Ok(n)
}

/// Transverse point `w` of index `wi`.
fn transverse_point(grid: &super::TorusGrid, wi: usize) -> Vec<f64> {
    let mut rem = wi;
    (1..grid.velocity_dim)
        .map(|_| {
            let i = rem % grid.n_v;
            rem /= grid.n_v;
            grid.v_node(i)
        })
        .collect()
}

/// `B` relative to node `i0` on the fine nodes `0..=(n_v − 1)U` for one transverse point.
fn fine_primitive(a: &dyn VelocityField, grid: &super::TorusGrid, force_norm: f64, i0: usize, w: &[f64]) -> Vec<Vec<f64>> {
    let u = RECONSTRUCT_UPSAMPLING;
    let n = a.space_dim();
    let last = (grid.n_v - 1) * u;
    let h = grid.dv() / u as f64;
    let node = |q: usize| grid.v_node(0) + q as f64 * h;
    let point = |x: f64| -> Vec<f64> {
        let mut v = Vec::with_capacity(w.len() + 1);
        v.push(x);
        v.extend_from_slice(w);
        v
    };
    let mut probe = vec![0.0; n];
    let anchor = node(i0 * u);
    if a.axis0_primitive(&point(anchor), &mut probe) {
        let base = probe.clone();
        return (0..=last)
            .map(|q| {
                let x = node(q);
                let mut row = vec![-(x - anchor) / force_norm; n + 1];
                a.axis0_primitive(&point(x), &mut probe);
                for j in 0..n {
                    row[j + 1] = -(probe[j] - base[j]) / force_norm;
                }
                row
            })
            .collect();
    }
    let mut cumulative = vec![vec![0.0; n]; last + 1];
    let mut buf = vec![0.0; n];
    for q in 0..last {
        let mut cell = vec![0.0; n];
        for (j, c) in cell.iter_mut().enumerate() {
            *c = gk15(
                |x| {
                    a.eval_into(&point(x), &mut buf);
                    buf[j]
                },
                node(q),
                node(q + 1),
            )
            .0;
        }
        cumulative[q + 1] = cumulative[q].iter().zip(&cell).map(|(p, c)| p + c).collect();
    }
    let base = cumulative[i0 * u].clone();
    (0..=last)
        .map(|q| {
            let mut row = vec![-(node(q) - anchor) / force_norm; n + 1];
            for j in 0..n {
                row[j + 1] = -(cumulative[q][j] - base[j]) / force_norm;
            }
            row
        })
        .collect()
}

/// Weights over the `U + 1` fine nodes of one velocity cell: two 9-point Newton–Cotes panels.
fn cell_weights(h: f64) -> Vec<f64> {
    let u = RECONSTRUCT_UPSAMPLING;
    let mut w = vec![0.0; u + 1];
    let scale = newton_cotes_9_scale(h);
    for panel in 0..u / 8 {
        for (r, c) in NEWTON_COTES_9.iter().enumerate() {
            w[panel * 8 + r] += c * scale;
        }
    }
    w
}

/// Solves the spectral ODE along `v_1` from the slice values for every mode and transverse point.
///
/// The source is interpolated between velocity nodes by its periodic
/// trigonometric interpolant (FFT zero-padding by [`RECONSTRUCT_UPSAMPLING`]) and
/// the Duhamel integral is accumulated cell by cell with Newton–Cotes panels.
pub fn reconstruct_from_slice(
    slice: &VelocitySlice,
    g: &SpectralKineticField,
    a: &dyn VelocityField,
    force: &[f64],
) -> Result<SpectralKineticField> {
    let grid = g.grid;
    if a.velocity_dim() != grid.velocity_dim || a.space_dim() != grid.space_dim || force.len() != grid.velocity_dim {
        return Err(Error::InvalidArgument("field, force and grid dimensions must agree".into()));
    }
    let fnorm = aligned_norm(force)?;
    if slice.modes != g.modes {
        return Err(Error::InvalidArgument("slice and source must share the mode list".into()));
    }
    let tl = grid.transverse_len();
    if slice.values.len() != g.modes.len() * tl || slice.v1_index >= grid.n_v {
        return Err(Error::InvalidArgument("slice has the wrong shape".into()));
    }
    let n_v = grid.n_v;
    let u = RECONSTRUCT_UPSAMPLING;
    let nf = n_v * u;
    let last = (n_v - 1) * u;
    let i0 = slice.v1_index;
    let tables: Vec<Vec<Vec<f64>>> =
        (0..tl).into_par_iter().map(|wi| fine_primitive(a, &grid, fnorm, i0, &transverse_point(&grid, wi))).collect();
    let weights = cell_weights(grid.dv() / u as f64);
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n_v);
    let inverse = planner.plan_fft_inverse(nf);
    let vl = grid.velocity_len();
    let mut out = SpectralKineticField::zeros(grid, g.modes.clone(), FieldRole::Density)?;
    let modes = &g.modes;
    out.coeffs.par_chunks_mut(vl).enumerate().for_each(|(mi, dst)| {
        let y = grid.frequency(&modes[mi]);
        let src = g.block(mi);
        let mut spec = vec![Complex64::new(0.0, 0.0); n_v];
        let mut fine = vec![Complex64::new(0.0, 0.0); nf];
        let mut phase = vec![Complex64::new(0.0, 0.0); last + 1];
        for wi in 0..tl {
            spec.copy_from_slice(&src[wi * n_v..(wi + 1) * n_v]);
            forward.process(&mut spec);
            fine.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            for (j, s) in spec.iter().enumerate() {
                let s = s / n_v as f64;
                if j < n_v / 2 {
                    fine[j] = s;
                } else if j > n_v / 2 {
                    fine[nf - (n_v - j)] = s;
                } else {
                    fine[n_v / 2] = s * 0.5;
                    fine[nf - n_v / 2] = s * 0.5;
                }
            }
            inverse.process(&mut fine);
            let table = &tables[wi];
            for (q, e) in phase.iter_mut().enumerate() {
                let by: f64 = table[q].iter().zip(&y).map(|(p, c)| p * c).sum();
                *e = Complex64::from_polar(1.0, -by);
            }
            let cell = |i: usize| -> Complex64 {
                let base = i * u;
                let mut acc = Complex64::new(0.0, 0.0);
                for (r, w) in weights.iter().enumerate() {
                    acc += fine[base + r] * phase[base + r] * *w;
                }
                acc / fnorm
            };
            let line = &mut dst[wi * n_v..(wi + 1) * n_v];
            let c = slice.values[mi * tl + wi];
            line[i0] = c;
            let mut h = c;
            for i in i0..n_v - 1 {
                h += cell(i);
                line[i + 1] = h * phase[(i + 1) * u].conj();
            }
            let mut h = c;
            for i in (0..i0).rev() {
                h -= cell(i);
                line[i] = h * phase[i * u].conj();
            }
        }
    });
    Ok(out)
}

/// Integrated residual of the spectral ODE on sampled modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub relative: f64,
    pub max_abs: f64,
    pub modes_checked: usize,
    pub cells_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `f̂(v_{i+1}) = e^{iΔB·Y} f̂(v_i) + |F|⁻¹ ∫_{v_i}^{v_{i+1}} ĝ(u) e^{i(B(v_{i+1}) − B(u))·Y} du` per cell.
///
/// The source between nodes is its trigonometric interpolant evaluated by direct
/// sums, `B` comes from [`b_primitive`], and the integral from adaptive
/// Gauss–Kronrod. At most `max_modes` evenly strided modes and 8 transverse
/// points are visited.
pub fn spectral_ode_residual(
    f: &SpectralKineticField,
    g: &SpectralKineticField,
    a: &dyn VelocityField,
    force: &[f64],
    max_modes: usize,
) -> Result<ResidualReport> {
    if f.grid != g.grid || f.modes != g.modes {
        return Err(Error::InvalidArgument("f and g must share grid and modes".into()));
    }
    let fnorm = aligned_norm(force)?;
    let grid = f.grid;
    let n_v = grid.n_v;
    let tl = grid.transverse_len();
    let mode_stride = (f.modes.len() / max_modes.max(1)).max(1);
    let w_stride = (tl / 8).max(1);
    let sampled: Vec<usize> = (0..f.modes.len()).step_by(mode_stride).collect();
    let omega = 2.0 * PI / grid.v_period;
    let x0 = grid.v_node(0);
    let results: Vec<(f64, f64, f64, usize)> = sampled
        .par_iter()
        .map(|&mi| {
            let y = grid.frequency(&f.modes[mi]);
            let (mut num, mut den, mut worst, mut cells) = (0.0, 0.0, 0.0f64, 0usize);
            for wi in (0..tl).step_by(w_stride) {
                let w = transverse_point(&grid, wi);
                let line = &g.block(mi)[wi * n_v..(wi + 1) * n_v];
                let coeffs: Vec<Complex64> = (0..n_v)
                    .map(|j| {
                        line.iter()
                            .enumerate()
                            .map(|(p, x)| x * Complex64::from_polar(1.0, -2.0 * PI * (j * p) as f64 / n_v as f64))
                            .sum::<Complex64>()
                            / n_v as f64
                    })
                    .collect();
                let interp = |x: f64| -> Complex64 {
                    let z = Complex64::from_polar(1.0, omega * (x - x0));
                    let mut power = Complex64::new(1.0, 0.0);
                    let mut acc = coeffs[0];
                    for j in 1..n_v / 2 {
                        power *= z;
                        acc += coeffs[j] * power + coeffs[n_v - j] * power.conj();
                    }
                    power *= z;
                    acc + coeffs[n_v / 2] * power.re
                };
                let scale = line.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
                let fl = &f.block(mi)[wi * n_v..(wi + 1) * n_v];
                for i in 0..n_v - 1 {
                    let (lo, hi) = (grid.v_node(i), grid.v_node(i + 1));
                    let step = b_primitive(a, fnorm, lo, hi, &w);
                    let jump: f64 = step.iter().zip(&y).map(|(p, q)| p * q).sum();
                    let integral = adaptive(
                        |x| {
                            let bu = b_primitive(a, fnorm, x, hi, &w);
                            let ph: f64 = bu.iter().zip(&y).map(|(p, q)| p * q).sum();
                            interp(x) * Complex64::from_polar(1.0, ph)
                        },
                        lo,
                        hi,
                        1e-14 * scale * (hi - lo),
                        24,
                    );
                    let r = fl[i + 1] - Complex64::from_polar(1.0, jump) * fl[i] - integral / fnorm;
                    num += r.norm_sqr();
                    den += fl[i + 1].norm_sqr();
                    worst = worst.max(r.norm());
                    cells += 1;
                }
            }
            (num, den, worst, cells)
        })
        .collect();
    let (num, den, worst, cells) =
        results.iter().fold((0.0, 0.0, 0.0f64, 0usize), |a, r| (a.0 + r.0, a.1 + r.1, a.2.max(r.2), a.3 + r.3));
    let relative = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(ResidualReport {
        relative,
        max_abs: worst,
        modes_checked: sampled.len(),
        cells_checked: cells,
        tolerance: SPECTRAL_ODE_RESIDUAL,
        passed: relative <= SPECTRAL_ODE_RESIDUAL,
    })
}
