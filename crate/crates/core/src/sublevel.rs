//! Sublevel-set measures, multiplicities and the derivative non-degeneracy condition.

use crate::error::{Error, Result};
use crate::fields::{derivative_rows, directional_derivative_into, make_phase, Direction, Field, PhaseFunction, VelocityField};
use crate::fit::line;
use crate::oscillatory::check_derivative_lower_bound;
use crate::sphere::{cap_stencil, dot, norm, SphereSampler};
use crate::table::Table;
use crate::tolerances::{FIT_R2_MIN, GAMMA_ND_THRESHOLD, MEASURE_RATIO_SLACK, MULTIPLICITY_REL};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Refinement depth of the interval method: smallest cell is the box length over `2^20`.
const INTERVAL_DEPTH: u32 = 20;

/// Initial cells of the interval method.
const INTERVAL_START_CELLS: usize = 256;

/// Total grid cells of the grid method for `M > 1`; φ is linearized on each cell.
const GRID_LOG2_CELLS: u32 = 18;

/// Samples used for sup bounds of derivatives over a box.
const BOX_SAMPLES: usize = 4097;

/// `{u ∈ [lo, hi] : |φ(u)| ≤ ε}` for a one-dimensional phase.
#[derive(Debug, Clone)]
pub struct SublevelQuery {
    pub phi: PhaseFunction,
    pub epsilon: f64,
    pub lo: f64,
    pub hi: f64,
}

impl SublevelQuery {
    pub fn new(phi: PhaseFunction, epsilon: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument("sublevel ε must be positive".into()));
        }
        if !(lo < hi) {
            return Err(Error::InvalidArgument("sublevel box must be nondegenerate".into()));
        }
        Ok(SublevelQuery { phi, epsilon, lo, hi })
    }
}

/// Inside length of `{|φ| ≤ ε}` on `[x0, x1]` when `|φ|−ε` changes sign at most once per half.
fn resolve_cell(phi: &dyn Fn(f64) -> f64, eps: f64, x0: f64, x1: f64) -> f64 {
    let g = |x: f64| phi(x).abs() - eps;
    let c = 0.5 * (x0 + x1);
    let (g0, gc, g1) = (g(x0), g(c), g(x1));
    let half = |a: f64, ga: f64, b: f64, gb: f64| -> f64 {
        match (ga <= 0.0, gb <= 0.0) {
            (true, true) => b - a,
            (false, false) => 0.0,
            (inside_a, _) => {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..60 {
                    let m = 0.5 * (lo + hi);
                    if (g(m) <= 0.0) == inside_a {
                        lo = m;
                    } else {
                        hi = m;
                    }
                    if hi - lo <= f64::EPSILON * m.abs().max(1.0) {
                        break;
                    }
                }
                let root = 0.5 * (lo + hi);
                if inside_a {
                    root - a
                } else {
                    b - root
                }
            }
        }
    };
    half(x0, g0, c, gc) + half(c, gc, x1, g1)
}

/// Measure of `{|φ| ≤ ε}` on `[lo, hi]` by adaptive cells.
///
/// A cell is discarded or accepted whole when `|φ(center)|` is farther from ε
/// than half the cell times a slope bound built from `|φ′(center)|` and the
/// global curvature bound `k2`. Remaining cells are halved down to the minimum
/// size, where crossings of `|φ| = ε` are located by bisection.
pub fn interval_measure(phi: &dyn Fn(f64) -> f64, dphi: &dyn Fn(f64) -> f64, k2: f64, eps: f64, lo: f64, hi: f64) -> f64 {
    let min_cell = (hi - lo) / 2f64.powi(INTERVAL_DEPTH as i32);
    let mut total = 0.0;
    let mut stack: Vec<(f64, f64)> = (0..INTERVAL_START_CELLS)
        .rev()
        .map(|i| {
            let a = lo + (hi - lo) * i as f64 / INTERVAL_START_CELLS as f64;
            let b = lo + (hi - lo) * (i + 1) as f64 / INTERVAL_START_CELLS as f64;
            (a, b)
        })
        .collect();
    while let Some((a, b)) = stack.pop() {
        let h = b - a;
        let c = 0.5 * (a + b);
        let val = phi(c).abs();
        let reach = 0.5 * h * (dphi(c).abs() + 0.5 * h * k2);
        if val - reach > eps {
            continue;
        }
        if val + reach <= eps {
            total += h;
            continue;
        }
        if h <= min_cell * 1.5 {
            total += resolve_cell(phi, eps, a, b);
            continue;
        }
        stack.push((c, b));
        stack.push((a, c));
    }
    total
}

/// `sup |φ^{(k)}|` over `[lo, hi]`, sampled.
fn sampled_sup(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    (0..BOX_SAMPLES)
        .map(|i| f(lo + (hi - lo) * i as f64 / (BOX_SAMPLES - 1) as f64).abs())
        .fold(0.0, f64::max)
}

/// Lebesgue measure of the sublevel set of a one-dimensional phase.
pub fn measure(q: &SublevelQuery) -> Result<f64> {
    let phi = |u: f64| q.phi.eval(u);
    let dphi = |u: f64| q.phi.deriv_unchecked(u, 1);
    let k2 = if q.phi.smoothness() >= 2 {
        1.5 * sampled_sup(&|u| q.phi.deriv_unchecked(u, 2), q.lo, q.hi) + 1e-12
    } else {
        let h = (q.hi - q.lo) / (BOX_SAMPLES - 1) as f64;
        1.5 * sampled_sup(&|u| (dphi(u + h) - dphi(u)) / h, q.lo, q.hi - h) + 1e-12
    };
    let m = interval_measure(&phi, &dphi, k2, q.epsilon, q.lo, q.hi);
    if !m.is_finite() {
        return Err(Error::NonFinite { context: "sublevel measure".into(), at: q.epsilon });
    }
    Ok(m)
}

/// Precomputed data for measuring `{v ∈ [−A, A]^M : |σ_0 + a(v)·σ̃| ≤ ε}` over many directions.
pub struct SublevelSweep<'a> {
    field: &'a dyn VelocityField,
    amp: f64,
    kind: SweepKind,
}

enum SweepKind {
    Interval { k2: f64 },
    Grid { values: Vec<f64>, jacobians: Vec<f64>, cells: usize, h: f64, cell_volume: f64 },
}

impl<'a> SublevelSweep<'a> {
    pub fn new(field: &'a dyn VelocityField, amp: f64) -> Result<Self> {
        if !(amp > 0.0) {
            return Err(Error::InvalidArgument("box half-width must be positive".into()));
        }
        let m = field.velocity_dim();
        let n = field.space_dim();
        let kind = if m == 1 {
            let curv = |u: f64| -> f64 {
                let mut o = vec![0.0; n];
                match field.deriv_into(&[u], &[2], &mut o) {
                    Ok(()) => norm(&o),
                    Err(_) => f64::INFINITY,
                }
            };
            let k2 = 1.5 * sampled_sup(&curv, -amp, amp) + 1e-12;
            if !k2.is_finite() {
                return Err(Error::Capability { requested: 2, available: field.smoothness() });
            }
            SweepKind::Interval { k2 }
        } else {
            let per_axis = 1usize << (GRID_LOG2_CELLS / m as u32);
            let cells = per_axis.pow(m as u32);
            let h = 2.0 * amp / per_axis as f64;
            let mut values = vec![0.0; cells * n];
            let mut jacobians = vec![0.0; cells * n * m];
            values.par_chunks_mut(n).zip(jacobians.par_chunks_mut(n * m)).enumerate().try_for_each(|(idx, (out, jac))| {
                let mut rem = idx;
                let mut v = vec![0.0; m];
                for vj in v.iter_mut() {
                    *vj = -amp + h * ((rem % per_axis) as f64 + 0.5);
                    rem /= per_axis;
                }
                field.eval_into(&v, out);
                let mut beta = vec![0usize; m];
                for j in 0..m {
                    beta[j] = 1;
                    field.deriv_into(&v, &beta, &mut jac[j * n..(j + 1) * n])?;
                    beta[j] = 0;
                }
                Ok::<(), Error>(())
            })?;
            SweepKind::Grid { values, jacobians, cells, h, cell_volume: h.powi(m as i32) }
        };
        Ok(SublevelSweep { field, amp, kind })
    }

    /// Volume of one grid cell (`None` for the interval method).
    pub fn cell_volume(&self) -> Option<f64> {
        match &self.kind {
            SweepKind::Interval { .. } => None,
            SweepKind::Grid { cell_volume, .. } => Some(*cell_volume),
        }
    }

    /// Measures for every ε in `eps` at the direction `sigma`.
    pub fn measures(&self, sigma: &[f64], eps: &[f64]) -> Vec<f64> {
        let n = self.field.space_dim();
        match &self.kind {
            SweepKind::Interval { k2 } => {
                let tilde = &sigma[1..];
                let phi = |u: f64| {
                    with_buffer(n, |buf| {
                        self.field.eval_into(&[u], buf);
                        sigma[0] + dot(buf, tilde)
                    })
                };
                let dphi = |u: f64| {
                    with_buffer(n, |buf| match self.field.deriv_into(&[u], &[1], buf) {
                        Ok(()) => dot(buf, tilde),
                        Err(_) => f64::INFINITY,
                    })
                };
                let k2 = k2 * norm(tilde);
                let out = eps.iter().map(|&e| interval_measure(&phi, &dphi, k2, e, -self.amp, self.amp)).collect();
                out
            }
            SweepKind::Grid { values, jacobians, cells, h, cell_volume } => {
                let m = self.field.velocity_dim();
                let mut order: Vec<usize> = (0..eps.len()).collect();
                order.sort_by(|&i, &j| eps[i].total_cmp(&eps[j]));
                let sorted: Vec<f64> = order.iter().map(|&i| eps[i]).collect();
                let mut full = vec![0usize; sorted.len() + 1];
                let mut partial = vec![0.0; sorted.len()];
                let tilde = &sigma[1..];
                let mut widths = vec![0.0; m];
                for c in 0..*cells {
                    let centre = sigma[0] + dot(&values[c * n..(c + 1) * n], tilde);
                    let jac = &jacobians[c * n * m..(c + 1) * n * m];
                    for (j, w) in widths.iter_mut().enumerate() {
                        *w = (dot(&jac[j * n..(j + 1) * n], tilde) * h).abs();
                    }
                    let half: f64 = 0.5 * widths.iter().sum::<f64>();
                    let lower = centre.abs() - half;
                    let upper = centre.abs() + half;
                    let first = sorted.partition_point(|&e| e < lower);
                    let last = sorted.partition_point(|&e| e < upper);
                    full[last] += 1;
                    for k in first..last {
                        partial[k] += uniform_sum_cdf(sorted[k] - centre, &widths) - uniform_sum_cdf(-sorted[k] - centre, &widths);
                    }
                }
                let mut out = vec![0.0; eps.len()];
                let mut acc = 0usize;
                for (k, &i) in order.iter().enumerate() {
                    acc += full[k];
                    out[i] = (acc as f64 + partial[k]) * cell_volume;
                }
                out
            }
        }
    }

    pub fn measure(&self, sigma: &[f64], eps: f64) -> f64 {
        self.measures(sigma, &[eps])[0]
    }
}

/// `P(Σ_i U_i ≤ t)` for independent `U_i` uniform on `[−w_i/2, w_i/2]`.
///
/// Widths below `1e-6` of the total are dropped before the inclusion–exclusion sum.
pub fn uniform_sum_cdf(t: f64, widths: &[f64]) -> f64 {
    let total: f64 = widths.iter().sum();
    if t <= -0.5 * total {
        return 0.0;
    }
    if t >= 0.5 * total {
        return 1.0;
    }
    let kept: Vec<f64> = widths.iter().copied().filter(|w| *w > 1e-6 * total).collect();
    let d = kept.len();
    if d == 0 {
        return if t >= 0.0 { 1.0 } else { 0.0 };
    }
    let shifted = t + 0.5 * kept.iter().sum::<f64>();
    let mut acc = 0.0;
    for subset in 0..(1usize << d) {
        let mut offset = 0.0;
        for (i, w) in kept.iter().enumerate() {
            if subset >> i & 1 == 1 {
                offset += w;
            }
        }
        let x = shifted - offset;
        if x > 0.0 {
            let sign = if subset.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * x.powi(d as i32);
        }
    }
    let factorial: f64 = (1..=d).map(|i| i as f64).product();
    (acc / (factorial * kept.iter().product::<f64>())).clamp(0.0, 1.0)
}

fn with_buffer<R>(n: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    if n <= 16 {
        let mut o = [0.0; 16];
        f(&mut o[..n])
    } else {
        f(&mut vec![0.0; n])
    }
}

/// Options for direction sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub sphere_samples: usize,
    pub refine_starts: usize,
    pub max_rounds: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { sphere_samples: 4096, refine_starts: 3, max_rounds: 400 }
    }
}

/// Largest sublevel measure over directions, with its maximizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupMeasure {
    pub epsilon: f64,
    pub value: f64,
    pub direction: Vec<f64>,
}

/// Fitted exponent of condition `meas ≤ C ε^α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub eps_grid: Vec<f64>,
    pub sup_measures: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub alpha: f64,
    pub raw_slope: f64,
    pub c: f64,
    pub r2: f64,
    pub poor_fit: bool,
    pub min_cells_in_set: Option<f64>,
    pub candidates: usize,
}

impl AlphaFit {
    pub fn table(&self) -> Table {
        let mut t = Table::new("alpha_fit", &["epsilon", "sup_measure"]);
        for (e, m) in self.eps_grid.iter().zip(&self.sup_measures) {
            t.push(vec![*e, *m]);
        }
        t
    }
}

fn initial_cap_radius(dim: usize, samples: usize) -> f64 {
    let d = dim.max(2) as f64 - 1.0;
    (4.0 / samples.max(1) as f64).powf(1.0 / d).clamp(1e-3, 0.5)
}

/// Directions annihilating `b, b′, …, b^{(N−1)}` at sample points of `[−A, A]` (M = 1).
fn witness_seeds(a: &dyn VelocityField, amp: f64, count: usize) -> Vec<Vec<f64>> {
    if a.velocity_dim() != 1 {
        return Vec::new();
    }
    (0..count)
        .filter_map(|i| {
            let v = -amp + 2.0 * amp * i as f64 / (count - 1) as f64;
            let rows = derivative_rows(a, &[1.0], &[v], a.space_dim()).ok()?;
            Some(smallest_right_vectors(&rows, 1).remove(0))
        })
        .collect()
}

/// Maximizes the sublevel measure at each ε with continuation from large to small ε.
fn sweep_sup(a: &Field, amp: f64, eps: &[f64], opts: &SweepOptions) -> Result<(Vec<SupMeasure>, usize)> {
    let n = a.space_dim();
    let sweep = SublevelSweep::new(&**a, amp)?;
    let mut candidates = SphereSampler::new(n + 1, opts.sphere_samples).points();
    candidates.extend(witness_seeds(&**a, amp, 33));
    let mut profiles: Vec<Vec<f64>> = candidates.par_iter().map(|s| sweep.measures(s, eps)).collect();
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&i, &j| eps[j].total_cmp(&eps[i]));
    let r0 = initial_cap_radius(n + 1, opts.sphere_samples);
    let mut previous: Option<Vec<f64>> = None;
    for &e in &order {
        let mut ranked: Vec<usize> = (0..candidates.len()).collect();
        ranked.sort_by(|&i, &j| profiles[j][e].total_cmp(&profiles[i][e]).then(i.cmp(&j)));
        let mut starts: Vec<Vec<f64>> = ranked.iter().take(opts.refine_starts).map(|&i| candidates[i].clone()).collect();
        if let Some(p) = &previous {
            starts.push(p.clone());
        }
        let r_min = if sweep.cell_volume().is_some() { 1e-4 } else { (1e-5 * eps[e]).max(1e-13) };
        let refined: Vec<(Vec<f64>, f64)> = starts
            .par_iter()
            .map(|s| {
                let start_value = sweep.measure(s, eps[e]);
                let res = crate::sphere::refine_on_sphere(
                    |q| sweep.measure(q, eps[e]),
                    s,
                    start_value,
                    r0,
                    r_min,
                    opts.max_rounds,
                    true,
                );
                (res.point, res.value)
            })
            .collect();
        let mut best: Option<(Vec<f64>, f64)> = None;
        for (p, v) in refined {
            if best.as_ref().map(|b| v > b.1).unwrap_or(true) {
                best = Some((p, v));
            }
        }
        let (p, _) = best.expect("at least one start");
        let prof = sweep.measures(&p, eps);
        candidates.push(p.clone());
        profiles.push(prof);
        previous = Some(p);
    }
    let sups = (0..eps.len())
        .map(|e| {
            let (mut bi, mut bv) = (0usize, f64::NEG_INFINITY);
            for (i, prof) in profiles.iter().enumerate() {
                if prof[e] > bv {
                    bv = prof[e];
                    bi = i;
                }
            }
            SupMeasure { epsilon: eps[e], value: bv, direction: candidates[bi].clone() }
        })
        .collect();
    Ok((sups, candidates.len()))
}

/// Largest measure of `{v ∈ [−A, A]^M : |σ_0 + a(v)·σ̃| ≤ ε}` over the sphere of directions.
pub fn sup_measure(a: &Field, amp: f64, epsilon: f64, opts: &SweepOptions) -> Result<SupMeasure> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("ε must be positive".into()));
    }
    Ok(sweep_sup(a, amp, &[epsilon], opts)?.0.remove(0))
}

/// Default ε grid: ratio `10^{1/4}` over `[1e-6, 1e-1]` for M = 1 and `[1e-4, 1e-1]` otherwise.
pub fn default_eps_grid(m: usize) -> Vec<f64> {
    let lo = if m == 1 { 1e-6 } else { 1e-4 };
    crate::fit::geometric_grid(lo, 1e-1, 4)
}

/// Least-squares exponent of `log sup_measure` against `log ε`.
pub fn fit_alpha(a: &Field, amp: f64, eps_grid: &[f64], opts: &SweepOptions) -> Result<AlphaFit> {
    if eps_grid.len() < 3 || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("ε grid needs at least three positive values".into()));
    }
    let lo = eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eps_grid.iter().copied().fold(0.0, f64::max);
    if hi / lo < 1e3 * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument("ε range must span at least three decades".into()));
    }
    let (sups, candidates) = sweep_sup(a, amp, eps_grid, opts)?;
    let values: Vec<f64> = sups.iter().map(|s| s.value).collect();
    let x: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = values.iter().map(|m| m.max(f64::MIN_POSITIVE).ln()).collect();
    let f = line(&x, &y).ok_or_else(|| Error::InvalidArgument("degenerate ε grid".into()))?;
    let min_cells = SublevelSweep::new(&**a, amp)?.cell_volume().map(|cv| {
        values.iter().copied().fold(f64::INFINITY, f64::min) / cv
    });
    Ok(AlphaFit {
        eps_grid: eps_grid.to_vec(),
        sup_measures: values,
        directions: sups.into_iter().map(|s| s.direction).collect(),
        alpha: f.slope.clamp(f64::MIN_POSITIVE, 1.0),
        raw_slope: f.slope,
        c: f.intercept.exp(),
        r2: f.r2,
        poor_fit: f.r2 < FIT_R2_MIN,
        min_cells_in_set: min_cells,
        candidates,
    })
}

/// Order of vanishing of a phase at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplicity {
    Finite(usize),
    AtLeast(usize),
}

impl Multiplicity {
    fn key(&self) -> (usize, bool) {
        match self {
            Multiplicity::Finite(k) => (*k, false),
            Multiplicity::AtLeast(k) => (*k, true),
        }
    }
}

impl PartialOrd for Multiplicity {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Multiplicity {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

/// Smallest `k ≤ kmax` with `|φ^{(k)}(v)| > tol·(1 + sup_box |φ^{(k)}|)`.
pub fn multiplicity_at(phi: &PhaseFunction, v: f64, kmax: usize, tol: f64, bx: (f64, f64)) -> Result<Multiplicity> {
    for k in 0..=kmax.min(phi.smoothness()) {
        let d = phi.deriv(v, k)?;
        let scale = 1.0 + sampled_sup(&|u| phi.deriv_unchecked(u, k), bx.0, bx.1);
        if d.abs() > tol * scale {
            return Ok(Multiplicity::Finite(k));
        }
    }
    Ok(Multiplicity::AtLeast(kmax))
}

/// Multiplicity of the witness phase at one sampled point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityPoint {
    pub v: f64,
    pub multiplicity: Multiplicity,
    pub direction: Vec<f64>,
    pub rank_deficient: bool,
}

/// Sup multiplicity over sampled points and their annihilating directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub per_point: Vec<MultiplicityPoint>,
    pub sup: Multiplicity,
    pub witness: f64,
    pub witness_direction: Vec<f64>,
    pub any_rank_deficient: bool,
}

/// Unit vectors spanning the `count` smallest right singular directions of `rows`.
pub fn smallest_right_vectors(rows: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    let cols = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let mut idx: Vec<usize> = (0..cols).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    idx.iter()
        .take(count.min(cols))
        .map(|&i| {
            let col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            canonical_sign(col)
        })
        .collect()
}

fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-14) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

/// Whether `rows` (k × (N+1)) has a null space of dimension above `N + 1 − k`.
fn rank_deficient(rows: &[Vec<f64>]) -> bool {
    let cols = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let s = a.singular_values();
    let max = s.iter().copied().fold(0.0, f64::max);
    s.iter().any(|x| *x <= 1e-10 * max.max(1.0))
}

/// For each sample `v`, the direction orthogonal to `b, b′, …, b^{(N−1)}` and its multiplicity.
pub fn field_multiplicity(a: &Field, amp: f64, samples: usize, kmax: usize) -> Result<MultiplicityReport> {
    if a.velocity_dim() != 1 {
        return Err(Error::InvalidArgument("field multiplicity is defined for M = 1".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two sample points".into()));
    }
    let n = a.space_dim();
    let per_point: Vec<MultiplicityPoint> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<MultiplicityPoint> {
            let v = -amp + 2.0 * amp * i as f64 / (samples - 1) as f64;
            let rows = derivative_rows(&**a, &[1.0], &[v], n)?;
            let sigma = smallest_right_vectors(&rows, 1).remove(0);
            let d = Direction::normalize(&sigma)?;
            let phi = make_phase(a, &d)?;
            let m = multiplicity_at(&phi, v, kmax, MULTIPLICITY_REL, (-amp, amp))?;
            Ok(MultiplicityPoint { v, multiplicity: m, direction: d.components().to_vec(), rank_deficient: rank_deficient(&rows) })
        })
        .collect::<Result<_>>()?;
    let best = per_point.iter().max_by(|x, y| x.multiplicity.cmp(&y.multiplicity)).expect("nonempty");
    Ok(MultiplicityReport {
        sup: best.multiplicity,
        witness: best.v,
        witness_direction: best.direction.clone(),
        any_rank_deficient: per_point.iter().any(|p| p.rank_deficient),
        per_point,
    })
}

/// Sublevel constant: `c̄_1 = 2`, `c̄_{k+1} = 2^{1/(k+1)}(k+1)k^{1/(k+1)−1} c̄_k^{1−1/(k+1)}`.
pub fn cbar_constant(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    let mut c = 2.0f64;
    for j in 1..k {
        let jf = j as f64;
        let e = 1.0 / (jf + 1.0);
        c = 2f64.powf(e) * (jf + 1.0) * jf.powf(e - 1.0) * c.powf(1.0 - e);
    }
    Ok(c)
}

/// Measured sublevel sizes against `c̄_k (ε/δ)^{1/k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureBoundReport {
    pub k: usize,
    pub delta: f64,
    pub cbar: f64,
    pub eps: Vec<f64>,
    pub measures: Vec<f64>,
    pub bounds: Vec<f64>,
    pub ratios: Vec<f64>,
    pub worst_ratio: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl MeasureBoundReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(format!("measure_bound_k{}", self.k), &["epsilon", "measure", "bound", "ratio"]);
        for i in 0..self.eps.len() {
            t.push(vec![self.eps[i], self.measures[i], self.bounds[i], self.ratios[i]]);
        }
        t
    }
}

/// Checks `meas{|φ| ≤ ε} ≤ c̄_k (ε/δ)^{1/k}` on every ε of the grid.
pub fn measure_bound_check(phi: &PhaseFunction, k: usize, delta: f64, interval: (f64, f64), eps_grid: &[f64]) -> Result<MeasureBoundReport> {
    let cbar = cbar_constant(k)?;
    check_derivative_lower_bound(phi, k, delta, interval)?;
    let mut measures = Vec::with_capacity(eps_grid.len());
    for &e in eps_grid {
        measures.push(measure(&SublevelQuery::new(phi.clone(), e, interval.0, interval.1)?)?);
    }
    let bounds: Vec<f64> = eps_grid.iter().map(|e| cbar * (e / delta).powf(1.0 / k as f64)).collect();
    let ratios: Vec<f64> = measures.iter().zip(&bounds).map(|(m, b)| m / b).collect();
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(MeasureBoundReport {
        k,
        delta,
        cbar,
        eps: eps_grid.to_vec(),
        measures,
        bounds,
        ratios,
        worst_ratio,
        tolerance: MEASURE_RATIO_SLACK,
        passed: worst_ratio <= 1.0 + MEASURE_RATIO_SLACK,
    })
}

/// Minimizer of `Σ_k w_k |D^k b(v)·σ|` over `[−A, A]^M × S^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSumSearch {
    pub value: f64,
    pub v: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn velocity_grid(m: usize, amp: f64) -> Vec<Vec<f64>> {
    let per_axis: usize = match m {
        1 => 257,
        2 => 33,
        3 => 11,
        _ => 5,
    };
    let total = per_axis.pow(m as u32);
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            (0..m)
                .map(|_| {
                    let t = -amp + 2.0 * amp * (rem % per_axis) as f64 / (per_axis - 1) as f64;
                    rem /= per_axis;
                    t
                })
                .collect()
        })
        .collect()
}

fn weighted_rows(a: &dyn VelocityField, f: &[f64], weights: &[f64], v: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = a.space_dim();
    weights
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let mut row = vec![0.0; n + 1];
            directional_derivative_into(a, f, v, k, &mut row)?;
            row.iter_mut().for_each(|r| *r *= w);
            Ok(row)
        })
        .collect()
}

fn row_sum(rows: &[Vec<f64>], sigma: &[f64]) -> f64 {
    rows.iter().map(|r| dot(r, sigma).abs()).sum()
}

/// Grid search over `v` and `σ` (sphere lattice plus per-point smallest singular
/// directions), followed by joint cap-shrinking refinement from the best points.
/// `fixed` pins `σ`.
pub fn minimize_derivative_sum(
    a: &Field,
    f: &[f64],
    weights: &[f64],
    amp: f64,
    sphere_samples: usize,
    fixed: Option<&[f64]>,
) -> Result<DerivativeSumSearch> {
    let m = a.velocity_dim();
    let n = a.space_dim();
    if f.len() != m {
        return Err(Error::InvalidArgument("force must live in R^M".into()));
    }
    if weights.is_empty() {
        return Err(Error::InvalidArgument("at least one derivative order is required".into()));
    }
    if let Some(s) = fixed {
        if s.len() != n + 1 {
            return Err(Error::InvalidArgument("direction must live in R^{N+1}".into()));
        }
    }
    let grid = velocity_grid(m, amp);
    let sphere = match fixed {
        Some(s) => vec![s.to_vec()],
        None => SphereSampler::new(n + 1, sphere_samples).points(),
    };
    let seeds_per_point = if fixed.is_some() { 0 } else { 2 };
    let field = &**a;
    let per_v: Vec<(f64, Vec<f64>)> = grid
        .par_iter()
        .map(|v| -> Result<(f64, Vec<f64>)> {
            let rows = weighted_rows(field, f, weights, v)?;
            let mut best = (f64::INFINITY, sphere[0].clone());
            let seeds = if seeds_per_point > 0 { smallest_right_vectors(&rows, seeds_per_point) } else { Vec::new() };
            for s in seeds.iter().chain(sphere.iter()) {
                let val = row_sum(&rows, s);
                if val < best.0 {
                    best = (val, s.clone());
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut ranked: Vec<usize> = (0..grid.len()).collect();
    ranked.sort_by(|&i, &j| per_v[i].0.total_cmp(&per_v[j].0).then(i.cmp(&j)));
    let starts: Vec<usize> = ranked.into_iter().take(8).collect();
    let h0 = 2.0 * amp / (velocity_grid_spacing(m) as f64);
    let refined: Vec<DerivativeSumSearch> = starts
        .par_iter()
        .map(|&i| refine_joint(field, f, weights, amp, &grid[i], &per_v[i].1, per_v[i].0, h0, fixed.is_some()))
        .collect::<Result<_>>()?;
    let best = refined
        .into_iter()
        .min_by(|x, y| x.value.total_cmp(&y.value))
        .expect("at least one start");
    Ok(best)
}

fn velocity_grid_spacing(m: usize) -> usize {
    match m {
        1 => 256,
        2 => 32,
        3 => 10,
        _ => 4,
    }
}

#[allow(clippy::too_many_arguments)]
fn refine_joint(
    a: &dyn VelocityField,
    f: &[f64],
    weights: &[f64],
    amp: f64,
    v0: &[f64],
    s0: &[f64],
    value0: f64,
    h0: f64,
    sigma_fixed: bool,
) -> Result<DerivativeSumSearch> {
    let mut v = v0.to_vec();
    let mut s = s0.to_vec();
    let mut best = value0;
    let mut r = 0.05f64;
    let mut h = h0;
    let mut rounds = 0;
    while (r > 1e-9 || h > 1e-12 * amp) && rounds < 400 {
        rounds += 1;
        let rows = weighted_rows(a, f, weights, &v)?;
        let mut candidates: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        if !sigma_fixed {
            for q in cap_stencil(&s, r) {
                candidates.push((v.clone(), q));
            }
        }
        for axis in 0..v.len() {
            for sign in [-1.0, 1.0] {
                let mut w = v.clone();
                w[axis] = (w[axis] + sign * h).clamp(-amp, amp);
                if w[axis] == v[axis] {
                    continue;
                }
                candidates.push((w.clone(), s.clone()));
                if !sigma_fixed {
                    let wr = weighted_rows(a, f, weights, &w)?;
                    candidates.push((w, smallest_right_vectors(&wr, 1).remove(0)));
                }
            }
        }
        let mut improved: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        for (w, q) in candidates {
            let val = if w == v { row_sum(&rows, &q) } else { row_sum(&weighted_rows(a, f, weights, &w)?, &q) };
            let incumbent = improved.as_ref().map(|x| x.2).unwrap_or(best);
            if val < incumbent {
                improved = Some((w, q, val));
            }
        }
        match improved {
            Some((w, q, val)) => {
                v = w;
                s = q;
                best = val;
            }
            None => {
                r *= 0.5;
                h *= 0.5;
            }
        }
    }
    Ok(DerivativeSumSearch { value: best, v, sigma: s })
}

/// Outcome of the derivative non-degeneracy check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaNdReport {
    pub gamma: usize,
    pub holds: bool,
    pub min_value: f64,
    pub threshold: f64,
    pub witness_v: Vec<f64>,
    pub witness_direction: Vec<f64>,
}

/// Whether `Σ_{k=0}^{γ−1} |D^k b(v)·σ|` stays above the threshold on `[−A, A]^M × S^N`.
pub fn check_gamma_nd(a: &Field, f: &[f64], gamma: usize, amp: f64, sphere_samples: usize) -> Result<GammaNdReport> {
    if gamma < 1 {
        return Err(Error::InvalidArgument("γ must be at least 1".into()));
    }
    if gamma - 1 > a.smoothness() {
        return Err(Error::Capability { requested: gamma - 1, available: a.smoothness() });
    }
    let weights = vec![1.0; gamma];
    let s = minimize_derivative_sum(a, f, &weights, amp, sphere_samples, None)?;
    Ok(GammaNdReport {
        gamma,
        holds: s.value > GAMMA_ND_THRESHOLD,
        min_value: s.value,
        threshold: GAMMA_ND_THRESHOLD,
        witness_v: s.v,
        witness_direction: s.sigma,
    })
}

/// Search result for the smallest admissible γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaOptReport {
    pub gamma_opt: Option<usize>,
    pub gamma_max: usize,
    pub checks: Vec<GammaNdReport>,
}

/// Smallest `γ ≤ gamma_max` for which the non-degeneracy check holds.
pub fn gamma_opt(a: &Field, f: &[f64], amp: f64, gamma_max: usize, sphere_samples: usize) -> Result<GammaOptReport> {
    if gamma_max < a.space_dim() + 1 {
        return Err(Error::InvalidArgument(format!("γ_max = {gamma_max} must be at least N + 1 = {}", a.space_dim() + 1)));
    }
    let mut checks = Vec::new();
    for g in 1..=gamma_max {
        if g - 1 > a.smoothness() {
            break;
        }
        let r = check_gamma_nd(a, f, g, amp, sphere_samples)?;
        let holds = r.holds;
        checks.push(r);
        if holds {
            return Ok(GammaOptReport { gamma_opt: Some(g), gamma_max, checks });
        }
    }
    Ok(GammaOptReport { gamma_opt: None, gamma_max, checks })
}

/// Ordering of the regularity exponents given by the two non-degeneracy conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentVerdict {
    /// `1/γ_opt > α_opt/2`: the derivative condition yields more regularity.
    DerivativeConditionStronger,
    /// `α_opt/2 > 1/γ_opt`: the measure condition yields more regularity.
    MeasureConditionStronger,
    Tie,
    Unknown,
}

/// Optimal exponents for a pair of dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentComparison {
    pub n: usize,
    pub m: usize,
    pub half_alpha_opt: Option<f64>,
    pub inv_gamma_opt: f64,
    pub verdict: ExponentVerdict,
}

/// `α_opt/2` and `1/γ_opt` where known (`M = 1` or `N = M`) and their ordering.
pub fn compare_exponents(n: usize, m: usize) -> Result<ExponentComparison> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    let inv_gamma_opt = 1.0 / (n as f64 + 1.0);
    let alpha_opt = if m == 1 {
        Some(1.0 / n as f64)
    } else if n == m {
        Some(1.0)
    } else {
        None
    };
    let half_alpha_opt = alpha_opt.map(|a| a / 2.0);
    let verdict = match half_alpha_opt {
        None => ExponentVerdict::Unknown,
        Some(h) if (h - inv_gamma_opt).abs() < 1e-15 => ExponentVerdict::Tie,
        Some(h) if inv_gamma_opt > h => ExponentVerdict::DerivativeConditionStronger,
        Some(_) => ExponentVerdict::MeasureConditionStronger,
    };
    Ok(ExponentComparison { n, m, half_alpha_opt, inv_gamma_opt, verdict })
}
