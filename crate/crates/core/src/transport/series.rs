//! Truncation behaviour of the lattice series `Σ_{β ≠ 0} |β|^{−(N+2)}` over `Z^{N+1}`.
//!
//! The test-function expansion in space-time weights Fourier modes by
//! `1 + |β|^r` with `r = N/2 + 1`; square-summability of the weighted
//! coefficients reduces to convergence of this series.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTruncationReport {
    pub space_dim: usize,
    pub weight_exponent: f64,
    pub radii: Vec<usize>,
    pub partial_sums: Vec<f64>,
    pub tail_estimates: Vec<f64>,
    pub extrapolated: Vec<f64>,
    pub converged: bool,
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * PI.powf(half) / gamma_half_integer(d)
}

/// `Γ(d/2)` for a positive integer `d`.
fn gamma_half_integer(d: usize) -> f64 {
    let mut g = if d % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x + 0.5 < d as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Partial sums over `0 < |β| ≤ R` with the integral tail `|S^N| / R` and the extrapolated limit.
///
/// The series counts as converged when the extrapolated limits of the two largest
/// radii agree to one percent.
pub fn series_truncation_check(space_dim: usize, radii: &[usize]) -> Result<SeriesTruncationReport> {
    if space_dim == 0 || space_dim > 3 {
        return Err(Error::InvalidArgument("series check supports N in 1..=3".into()));
    }
    if radii.len() < 2 || radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] == 0 {
        return Err(Error::InvalidArgument("radii must be increasing and positive".into()));
    }
    let d = space_dim + 1;
    let rmax = *radii.last().expect("nonempty") as i64;
    if (2 * rmax + 1).pow(d as u32) > 50_000_000 {
        return Err(Error::InvalidArgument("largest radius is too expensive".into()));
    }
    let exponent = (space_dim + 2) as f64;
    let mut sums = vec![0.0; radii.len()];
    let side = (2 * rmax + 1) as usize;
    let mut terms: Vec<(i64, f64)> = Vec::new();
    for idx in 0..side.pow(d as u32) {
        let mut rem = idx;
        let mut r2 = 0i64;
        for _ in 0..d {
            let c = (rem % side) as i64 - rmax;
            rem /= side;
            r2 += c * c;
        }
        if r2 > 0 && r2 <= rmax * rmax {
            terms.push((r2, (r2 as f64).powf(-exponent / 2.0)));
        }
    }
    terms.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut acc = 0.0;
    let mut next = 0;
    for (i, r) in radii.iter().enumerate() {
        let r2 = (*r as i64) * (*r as i64);
        while next < terms.len() && terms[next].0 <= r2 {
            acc += terms[next].1;
            next += 1;
        }
        sums[i] = acc;
    }
    let area = sphere_area(d);
    let tails: Vec<f64> = radii.iter().map(|&r| area / r as f64).collect();
    let extrapolated: Vec<f64> = sums.iter().zip(&tails).map(|(s, t)| s + t).collect();
    let k = extrapolated.len();
    let converged = ((extrapolated[k - 1] - extrapolated[k - 2]) / extrapolated[k - 1]).abs() < 1e-2;
    Ok(SeriesTruncationReport {
        space_dim,
        weight_exponent: space_dim as f64 / 2.0 + 1.0,
        radii: radii.to_vec(),
        partial_sums: sums,
        tail_estimates: tails,
        extrapolated,
        converged,
    })
}
