//! Shell spectra, Sobolev exponents, the averaging-gain certificate and the cutoff multiplier.

use crate::error::{Error, Result};
use crate::fit::weighted_line;
use crate::smooth::TestFunction;
use crate::sublevel::GammaNdReport;
use crate::table::Table;
use crate::tolerances::{MIN_SHELLS, MULTIPLIER_FINITE_CAP, MULTIPLIER_GRID_CHANGE, SHELL_POPULATED};
use crate::transport::{velocity_average, ResidualReport, SpectralKineticField, VelocitySlice};
use crate::fields::Field;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Dyadic shell energies `E_j = Σ_{2^j ≤ |Y| < 2^{j+1}} |ρ̂(Y)|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellSpectrum {
    pub shell_edges: Vec<f64>,
    pub energies: Vec<f64>,
    pub counts: Vec<usize>,
    /// Energy of the modes with `|Y| < 1`.
    pub core: f64,
    pub total: f64,
}

impl ShellSpectrum {
    pub fn new(radii: &[f64], values: &[Complex64]) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::InvalidArgument("radii and values must have equal length".into()));
        }
        let top = radii.iter().copied().fold(0.0, f64::max);
        let shells = if top >= 1.0 { top.log2().floor() as usize + 1 } else { 0 };
        let mut energies = vec![0.0; shells];
        let mut counts = vec![0usize; shells];
        let mut core = 0.0;
        let mut total = 0.0;
        for (r, v) in radii.iter().zip(values) {
            let e = v.norm_sqr();
            total += e;
            if *r < 1.0 {
                core += e;
            } else {
                let j = (r.log2().floor() as usize).min(shells - 1);
                energies[j] += e;
                counts[j] += 1;
            }
        }
        let shell_edges = (0..shells).map(|j| 2f64.powi(j as i32)).collect();
        Ok(ShellSpectrum { shell_edges, energies, counts, core, total })
    }

    /// Mean energy per mode of each shell.
    pub fn mean_energies(&self) -> Vec<f64> {
        self.energies.iter().zip(&self.counts).map(|(e, &c)| if c > 0 { e / c as f64 } else { 0.0 }).collect()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new("shells", &["shell_lower", "modes", "energy", "mean_energy"]);
        for (j, m) in self.mean_energies().iter().enumerate() {
            t.push(vec![self.shell_edges[j], self.counts[j] as f64, self.energies[j], *m]);
        }
        t
    }

    /// Plot pairs `(log₂ radius, log₁₀ mean energy)` for populated shells.
    pub fn plot_points(&self) -> Vec<(f64, f64)> {
        self.mean_energies()
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(j, m)| (j as f64, m.log10()))
            .collect()
    }
}

/// `Σ_Y max(1, |Y|^{2s}) |ρ̂(Y)|²` times the lattice cell volume.
pub fn weighted_energy(radii: &[f64], values: &[Complex64], s: f64, cell_volume: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument("Sobolev exponent must be nonnegative".into()));
    }
    if radii.len() != values.len() {
        return Err(Error::InvalidArgument("radii and values must have equal length".into()));
    }
    Ok(radii.iter().zip(values).map(|(r, v)| r.powf(2.0 * s).max(1.0) * v.norm_sqr()).sum::<f64>() * cell_volume)
}

/// Fitted regularity exponent of a lattice spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevEstimate {
    pub s_star: Option<f64>,
    pub fit_range: Option<(usize, usize)>,
    pub shells_used: usize,
    pub r2: Option<f64>,
    pub saturated: bool,
    pub spectrum: ShellSpectrum,
}

/// Fits the mean energy per mode of each dyadic shell to `C · 2^{−2 s j}`.
///
/// Shells are weighted by their mode counts; empty shells and shells whose mean
/// energy is negligible against the largest one are skipped. Fewer than
/// [`MIN_SHELLS`] usable shells mark the spectrum as saturated.
pub fn estimate_exponent(radii: &[f64], values: &[Complex64]) -> Result<SobolevEstimate> {
    let spectrum = ShellSpectrum::new(radii, values)?;
    let means = spectrum.mean_energies();
    let peak = means.iter().copied().fold(0.0, f64::max);
    let used: Vec<usize> =
        (0..means.len()).filter(|&j| spectrum.counts[j] > 0 && means[j] > 0.0 && means[j] > SHELL_POPULATED * peak).collect();
    if used.len() < MIN_SHELLS {
        return Ok(SobolevEstimate { s_star: None, fit_range: None, shells_used: used.len(), r2: None, saturated: true, spectrum });
    }
    let x: Vec<f64> = used.iter().map(|&j| j as f64).collect();
    let y: Vec<f64> = used.iter().map(|&j| means[j].log2()).collect();
    let w: Vec<f64> = used.iter().map(|&j| spectrum.counts[j] as f64).collect();
    let fit = weighted_line(&x, &y, &w).ok_or_else(|| Error::InvalidArgument("degenerate shell fit".into()))?;
    Ok(SobolevEstimate {
        s_star: Some(-fit.slope / 2.0),
        fit_range: Some((used[0], *used.last().expect("nonempty"))),
        shells_used: used.len(),
        r2: Some(fit.r2),
        saturated: false,
        spectrum,
    })
}

/// Radii `|Y|` of the modes of a field.
pub fn mode_radii(f: &SpectralKineticField) -> Vec<f64> {
    f.modes.iter().map(|k| crate::sphere::norm(&f.grid.frequency(k))).collect()
}

/// Pointwise weighted bound on the velocity average of a solution pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub gamma: usize,
    pub d_gamma: f64,
    pub support_half_width: f64,
    pub force_norm: f64,
    pub modes: usize,
    pub worst_ratio: f64,
    pub worst_mode: Vec<i64>,
    pub passed: bool,
    pub rho_estimate: SobolevEstimate,
}

/// Inputs to [`gain_certificate`].
#[derive(Debug, Clone, Copy)]
pub struct GainInputs<'a> {
    pub f: &'a SpectralKineticField,
    pub g: &'a SpectralKineticField,
    pub slice: &'a VelocitySlice,
    pub psi: TestFunction,
    pub gamma: usize,
    pub d_gamma: f64,
    pub force_norm: f64,
    pub residual: &'a ResidualReport,
    pub gamma_nd: &'a GammaNdReport,
}

/// Checks `max(1, |Y|^{2/γ}) |ρ̂(Y)|² ≤ 2[(2A)^{M−1} L² S_f(Y) + (2A)^M L² |F|⁻² S_g(Y)]` on every mode,
/// with `S_f(Y) = Σ_w |f̂(Y, v_1⁰, w)|² Δw` and `S_g(Y) = Σ_v |ĝ(Y, v)|² Δv`.
pub fn gain_certificate(inp: GainInputs<'_>) -> Result<GainCertificate> {
    if !inp.residual.passed {
        return Err(Error::Precondition {
            at: inp.residual.relative,
            message: "the pair does not satisfy the equation to the pinned residual".into(),
        });
    }
    if !inp.gamma_nd.holds || inp.gamma_nd.gamma != inp.gamma {
        return Err(Error::Precondition { at: inp.gamma_nd.min_value, message: "the derivative non-degeneracy check did not hold".into() });
    }
    if inp.gamma == 0 || !(inp.d_gamma > 0.0) || !(inp.force_norm > 0.0) {
        return Err(Error::InvalidArgument("γ, the constant and |F| must be positive".into()));
    }
    let grid = inp.f.grid;
    if inp.g.modes != inp.f.modes || inp.slice.modes != inp.f.modes {
        return Err(Error::InvalidArgument("f, g and the slice must share modes".into()));
    }
    let rho = velocity_average(inp.f, &inp.psi)?;
    let m = grid.velocity_dim as i32;
    let a2 = 2.0 * inp.psi.radius;
    let l2 = inp.d_gamma * inp.d_gamma;
    let tl = grid.transverse_len();
    let dw = grid.dv().powi(m - 1);
    let radii = mode_radii(inp.f);
    let ratios: Vec<f64> = (0..inp.f.modes.len())
        .into_par_iter()
        .map(|mi| {
            let sf: f64 = inp.slice.values[mi * tl..(mi + 1) * tl].iter().map(|c| c.norm_sqr()).sum::<f64>() * dw;
            let sg: f64 = inp.g.block(mi).iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.velocity_cell();
            let rhs = 2.0 * (a2.powi(m - 1) * l2 * sf + a2.powi(m) * l2 * sg / (inp.force_norm * inp.force_norm));
            let lhs = radii[mi].powf(2.0 / inp.gamma as f64).max(1.0) * rho[mi].norm_sqr();
            if lhs == 0.0 {
                0.0
            } else {
                lhs / rhs
            }
        })
        .collect();
    let (mut worst, mut worst_i) = (0.0f64, 0usize);
    for (i, r) in ratios.iter().enumerate() {
        if *r > worst {
            worst = *r;
            worst_i = i;
        }
    }
    Ok(GainCertificate {
        gamma: inp.gamma,
        d_gamma: inp.d_gamma,
        support_half_width: inp.psi.radius,
        force_norm: inp.force_norm,
        modes: ratios.len(),
        worst_ratio: worst,
        worst_mode: inp.f.modes.get(worst_i).cloned().unwrap_or_default(),
        passed: worst <= 1.0,
        rho_estimate: estimate_exponent(&radii, &rho)?,
    })
}

/// Cutoff `χ(y) = exp(−y²/(1 − y²))` for `|y| < 1`, zero otherwise.
pub fn chi(y: f64) -> f64 {
    let t = y * y;
    if t >= 1.0 {
        0.0
    } else {
        (-t / (1.0 - t)).exp()
    }
}

/// `−χ″(0)/(2i)`, the value `m_0` must take at the origin.
pub fn m0_expected_limit() -> Complex64 {
    let chi2 = 2.0 * chi_coefficients(2)[1];
    Complex64::new(-chi2, 0.0) / Complex64::new(0.0, 2.0)
}

/// Below this `|y|` the multiplier is summed from its power series.
pub const M0_SERIES_RADIUS: f64 = 1e-4;

/// Power-series terms kept for `|y| ≤ 1/2`.
const M0_SERIES_TERMS: usize = 90;

/// Taylor coefficients `a_n` of `χ` in `t = y²`: `a_0 = 1`, `n a_n = −Σ_{m=1}^{n} m a_{n−m}`.
pub fn chi_coefficients(count: usize) -> Vec<f64> {
    let mut a = vec![0.0; count];
    a[0] = 1.0;
    for n in 1..count {
        let s: f64 = (1..=n).map(|m| m as f64 * a[n - m]).sum();
        a[n] = -s / n as f64;
    }
    a
}

/// Coefficients `e_p` with `m_0(y) = −i Σ_p e_p y^{2p}`.
fn m0_series_coefficients() -> &'static [f64] {
    use std::sync::OnceLock;
    static COEFFS: OnceLock<Vec<f64>> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let a = chi_coefficients(M0_SERIES_TERMS + 1);
        (0..M0_SERIES_TERMS).map(|p| -((2 * p + 1) as f64) * a[p + 1]).collect()
    })
}

/// `m_0(y) = (−y χ′(y) − 1 + χ(y)) / (i y²)`.
pub fn m0_eval(y: f64) -> Complex64 {
    let t = y * y;
    if t >= 1.0 {
        return Complex64::new(0.0, 1.0 / t);
    }
    if y.abs() < M0_SERIES_RADIUS {
        return m0_derivative_series(y.abs(), 0);
    }
    let u = t / (1.0 - t);
    let chi = (-u).exp();
    // −yχ′ = 2tχ/(1−t)², and χ − 1 = expm1(−u).
    let num = 2.0 * t * chi / ((1.0 - t) * (1.0 - t)) + (-u).exp_m1();
    Complex64::new(0.0, -num / t)
}

fn m0_derivative_series(z: f64, k: usize) -> Complex64 {
    let e = m0_series_coefficients();
    let mut acc = 0.0;
    for (p, c) in e.iter().enumerate() {
        let power = 2 * p;
        if power < k {
            continue;
        }
        let falling: f64 = (0..k).map(|i| (power - i) as f64).product();
        acc += c * falling * z.powi((power - k) as i32);
    }
    Complex64::new(0.0, -acc)
}

/// Truncated Taylor jet at a point.
#[derive(Debug, Clone)]
struct Jet(Vec<f64>);

impl Jet {
    fn variable(x: f64, order: usize) -> Jet {
        let mut c = vec![0.0; order + 1];
        c[0] = x;
        if order > 0 {
            c[1] = 1.0;
        }
        Jet(c)
    }
    fn constant(x: f64, order: usize) -> Jet {
        let mut c = vec![0.0; order + 1];
        c[0] = x;
        Jet(c)
    }
    fn mul(&self, o: &Jet) -> Jet {
        let n = self.0.len();
        Jet((0..n).map(|k| (0..=k).map(|i| self.0[i] * o.0[k - i]).sum()).collect())
    }
    fn div(&self, o: &Jet) -> Jet {
        let n = self.0.len();
        let mut q = vec![0.0; n];
        for k in 0..n {
            let s: f64 = (0..k).map(|i| q[i] * o.0[k - i]).sum();
            q[k] = (self.0[k] - s) / o.0[0];
        }
        Jet(q)
    }
    fn add(&self, o: &Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }
    fn sub(&self, o: &Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a - b).collect())
    }
    fn scale(&self, s: f64) -> Jet {
        Jet(self.0.iter().map(|a| a * s).collect())
    }
    fn exp(&self) -> Jet {
        let n = self.0.len();
        let mut e = vec![0.0; n];
        e[0] = self.0[0].exp();
        for k in 1..n {
            let s: f64 = (1..=k).map(|i| i as f64 * self.0[i] * e[k - i]).sum();
            e[k] = s / k as f64;
        }
        Jet(e)
    }
    fn derivative(&self) -> Jet {
        let n = self.0.len();
        Jet((0..n).map(|k| if k + 1 < n { (k + 1) as f64 * self.0[k + 1] } else { 0.0 }).collect())
    }
}

fn m0_derivative_jet(z: f64, k: usize) -> Complex64 {
    let order = k + 1;
    let y = Jet::variable(z, order);
    let t = y.mul(&y);
    let one = Jet::constant(1.0, order);
    let u = t.div(&one.sub(&t));
    let neg_u = u.scale(-1.0);
    if (neg_u.0[0]).exp() == 0.0 {
        return m0_tail_derivative(z, k);
    }
    let chi = neg_u.exp();
    let dchi = chi.derivative();
    let num = y.mul(&dchi).scale(-1.0).sub(&one).add(&chi);
    let q = num.div(&t);
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    Complex64::new(0.0, -q.0[k] * factorial)
}

/// `d^k/dz^k (i/z²) = i (−1)^k (k+1)! z^{−k−2}`.
fn m0_tail_derivative(z: f64, k: usize) -> Complex64 {
    let factorial: f64 = (1..=k + 1).map(|i| i as f64).product();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Complex64::new(0.0, sign * factorial * z.powi(-(k as i32) - 2))
}

/// `m_0^{(k)}(z)`: power series for `|z| ≤ 1/2`, Taylor jets up to `|z| < 1`, closed form beyond.
pub fn m0_derivative(z: f64, k: usize) -> Complex64 {
    if k == 0 {
        return m0_eval(z);
    }
    let a = z.abs();
    let sign = if z < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
    let v = if a >= 1.0 {
        m0_tail_derivative(a, k)
    } else if a <= 0.5 {
        m0_derivative_series(a, k)
    } else {
        m0_derivative_jet(a, k)
    };
    v * sign
}

/// Options for [`multiplier_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierOptions {
    pub y_min: f64,
    pub y_max: f64,
    pub per_decade: usize,
    pub v_per_axis: usize,
}

impl Default for MultiplierOptions {
    fn default() -> Self {
        MultiplierOptions { y_min: 1e-6, y_max: 1e6, per_decade: 256, v_per_axis: 33 }
    }
}

/// Supremum of `|∂^k_y m_j| |y|^k` for one velocity axis and order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierEntry {
    pub axis: usize,
    pub k: usize,
    pub sup: f64,
    pub sup_refined: f64,
    pub relative_change: f64,
    pub finite: bool,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierReport {
    pub entries: Vec<MultiplierEntry>,
    /// `max |z m_0^{(k)}(z) + k m_0^{(k−1)}(z)| · |z|^{k+1} / k!` over `|z| ≥ 1`; one for the pure tail `i/z²`.
    pub bracket_tail_ratio: f64,
    /// Whether the bracket vanishes identically for `|z| ≥ 1`.
    pub bracket_vanishes: bool,
    pub limit_at_zero: Complex64,
    pub passed: bool,
}

fn box_grid(m: usize, amp: f64, per_axis: usize) -> Vec<Vec<f64>> {
    (0..per_axis.pow(m as u32))
        .map(|idx| {
            let mut rem = idx;
            (0..m)
                .map(|_| {
                    let i = rem % per_axis;
                    rem /= per_axis;
                    -amp + 2.0 * amp * i as f64 / (per_axis - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// `|z|^k |z m_0^{(k)}(z) + k m_0^{(k−1)}(z)|`, the profile of `|∂^k_y m_j| |y|^k` in `z = |b| y`.
fn multiplier_profile(z: f64, k: usize) -> f64 {
    let mut d = m0_derivative(z, k) * z;
    if k > 0 {
        d += m0_derivative(z, k - 1) * k as f64;
    }
    d.norm() * z.abs().powi(k as i32)
}

/// Profile samples on a log grid joined with a uniform band on `[0.3, 1)`, where the cutoff
/// flattens and the profile has narrow peaks; local maxima above half the largest sample are
/// refined by golden-section search and appended.
fn profile_table(k: usize, per_decade: usize, range: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let band = 32 * per_decade;
    let mut zs = crate::fit::geometric_grid(range.0, range.1, per_decade);
    zs.extend((0..band).map(|i| 0.3 + 0.7 * i as f64 / band as f64).filter(|z| *z >= range.0 && *z <= range.1));
    zs.sort_by(f64::total_cmp);
    zs.dedup();
    let eval = |z: f64| multiplier_profile(z, k).max(multiplier_profile(-z, k));
    let mut profile: Vec<f64> = zs.par_iter().map(|&z| eval(z)).collect();
    let top = profile.iter().copied().fold(0.0, f64::max);
    let mut extra = Vec::new();
    for i in 1..zs.len().saturating_sub(1) {
        if profile[i] >= profile[i - 1] && profile[i] >= profile[i + 1] && profile[i] > 0.5 * top {
            let (z, p) = golden_max(&eval, zs[i - 1], zs[i + 1]);
            extra.push((z, p.max(profile[i])));
        }
    }
    for (z, p) in extra {
        zs.push(z);
        profile.push(p);
    }
    (zs, profile)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if (b - a) <= 1e-14 * b.abs() {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `sup_{y, v} |∂^k_y m_j(y)| |y|^k` with `m_j(y) = m_0(|b(v)| y) (a·∂_{v_j} a / |b|) y`.
///
/// With `z = |b(v)| y` the quantity is `|a·∂_{v_j} a| / |b|² · P_k(z)`, so the profile `P_k` is
/// tabulated once and each velocity reads its window `|z| ∈ [|b| y_min, |b| y_max]`.
fn multiplier_sup(a: &Field, axis: usize, k: usize, per_decade: usize, y_range: (f64, f64), vs: &[Vec<f64>]) -> Result<f64> {
    let n = a.space_dim();
    let weights: Vec<(f64, f64)> = vs
        .par_iter()
        .map(|v| -> Result<(f64, f64)> {
            let av = a.eval(v);
            let mut beta = vec![0usize; v.len()];
            beta[axis] = 1;
            let da = a.deriv(v, &beta)?;
            let bnorm = (1.0 + av.iter().map(|x| x * x).sum::<f64>()).sqrt();
            let c = (0..n).map(|i| av[i] * da[i]).sum::<f64>() / bnorm;
            Ok((c.abs() / bnorm, bnorm))
        })
        .collect::<Result<_>>()?;
    let bmax = weights.iter().map(|w| w.1).fold(1.0, f64::max);
    let (zs, profile) = profile_table(k, per_decade, (y_range.0, y_range.1 * bmax));
    let mut best = 0.0f64;
    for (w, b) in weights {
        if w == 0.0 {
            continue;
        }
        let (lo, hi) = (y_range.0 * b, y_range.1 * b);
        let p = zs.iter().zip(&profile).filter(|(z, _)| **z >= lo && **z <= hi).map(|(_, p)| *p).fold(0.0, f64::max);
        best = best.max(w * p);
    }
    Ok(best)
}

/// Suprema of the multiplier derivatives on a log grid in `|y|` and a tensor grid of `[−A, A]^M`,
/// repeated on grids refined twofold.
pub fn multiplier_bound_check(a: &Field, amp: f64, k_max: usize, opts: &MultiplierOptions) -> Result<MultiplierReport> {
    if !(amp > 0.0) || opts.per_decade == 0 || opts.v_per_axis < 2 || !(opts.y_min > 0.0 && opts.y_max > opts.y_min) {
        return Err(Error::InvalidArgument("multiplier grids must be nonempty".into()));
    }
    let m = a.velocity_dim();
    let vs = box_grid(m, amp, opts.v_per_axis);
    let vs_fine = box_grid(m, amp, 2 * opts.v_per_axis - 1);
    let mut entries = Vec::new();
    for axis in 0..m {
        for k in 0..=k_max {
            let sup = multiplier_sup(a, axis, k, opts.per_decade, (opts.y_min, opts.y_max), &vs)?;
            let sup_refined = multiplier_sup(a, axis, k, 2 * opts.per_decade, (opts.y_min, opts.y_max), &vs_fine)?;
            let relative_change = if sup_refined == 0.0 { (sup - sup_refined).abs() } else { (sup_refined - sup).abs() / sup_refined };
            let finite = sup.is_finite() && sup_refined.is_finite() && sup_refined < MULTIPLIER_FINITE_CAP;
            entries.push(MultiplierEntry {
                axis,
                k,
                sup,
                sup_refined,
                relative_change,
                finite,
                stable: relative_change <= MULTIPLIER_GRID_CHANGE,
            });
        }
    }
    let mut bracket_tail_ratio = 0.0f64;
    let mut bracket_max = 0.0f64;
    for &z in crate::fit::geometric_grid(1.0, 1e6, 8).iter() {
        for k in 1..=k_max.max(1) {
            let bracket = m0_derivative(z, k) * z + m0_derivative(z, k - 1) * k as f64;
            let factorial: f64 = (1..=k).map(|i| i as f64).product();
            bracket_max = bracket_max.max(bracket.norm());
            bracket_tail_ratio = bracket_tail_ratio.max(bracket.norm() * z.powi(k as i32 + 1) / factorial);
        }
    }
    let passed = entries.iter().all(|e| e.finite && e.stable);
    Ok(MultiplierReport { entries, bracket_tail_ratio, bracket_vanishes: bracket_max == 0.0, limit_at_zero: m0_eval(0.0), passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::catalog;

    #[test]
    fn shell_bookkeeping() {
        let radii = [0.0, 1.0, 1.5, 2.0, 5.0];
        let vals: Vec<Complex64> = [1.0, 2.0, 1.0, 3.0, 1.0].iter().map(|x| Complex64::new(*x, 0.0)).collect();
        let s = ShellSpectrum::new(&radii, &vals).unwrap();
        assert_eq!(s.counts, vec![2, 1, 1]);
        assert_eq!(s.energies, vec![5.0, 9.0, 1.0]);
        assert_eq!(s.core, 1.0);
        assert!((s.energies.iter().sum::<f64>() - (s.total - s.core)).abs() < 1e-12);
    }

    #[test]
    fn weighted_energy_examples() {
        let one = [Complex64::new(1.0, 0.0)];
        assert_eq!(weighted_energy(&[2.0], &one, 0.5, 0.25).unwrap(), 0.5);
        assert_eq!(weighted_energy(&[0.5], &one, 3.0, 1.0).unwrap(), 1.0);
        assert_eq!(weighted_energy(&[7.0], &one, 0.0, 1.0).unwrap(), 1.0);
        assert!(weighted_energy(&[7.0], &one, -0.1, 1.0).is_err());
    }

    #[test]
    fn band_limited_spectrum_is_saturated() {
        let radii: Vec<f64> = (0..40).map(|i| 1.0 + i as f64 * 0.1).collect();
        let vals = vec![Complex64::new(1.0, 0.0); 40];
        assert!(estimate_exponent(&radii, &vals).unwrap().saturated);
    }

    #[test]
    fn m0_reference_values() {
        assert!((m0_eval(0.0) - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert_eq!(m0_expected_limit(), Complex64::new(0.0, -1.0));
        assert!((m0_eval(0.5).im + 1.413792124335296558771231).abs() < 1e-13);
        assert!((m0_eval(0.25).im + 1.096909877555609500211306).abs() < 1e-13);
        assert!((m0_eval(0.9).im - 0.437255742070400969106226).abs() < 1e-12);
        assert!((m0_eval(0.99).im - 1.020304050607080908051234).abs() < 1e-12);
        assert!((m0_eval(1e-3).im + 1.000001500000833333041665).abs() < 1e-13);
        assert_eq!(m0_eval(2.0), Complex64::new(0.0, 0.25));
        assert_eq!(m0_eval(-2.0), Complex64::new(0.0, 0.25));
    }

    #[test]
    fn m0_series_and_direct_agree() {
        for &y in &[1.1e-4, 1e-3, 5e-3, 9.9e-3] {
            let s = m0_derivative_series(y, 0);
            assert!((s - m0_eval(y)).norm() < 1e-12, "{y}");
        }
    }

    #[test]
    fn m0_derivatives_are_consistent() {
        let reference = [
            (0.3, [-0.982733253120855507121, -3.754819628914760939141, -3.442279419367722198808]),
            (0.55, [-1.765321746918943827404, 0.2723206597609453486899, 75.53686524245593781172]),
            (0.7, [0.2859592871856363456373, 39.98195049700043564829, 620.712449913259652743]),
            (0.95, [0.921278731663497625351, -371.5604997019439005426, 23241.57163101988643043]),
        ];
        for (z, row) in reference {
            for (i, want) in row.iter().enumerate() {
                let d = m0_derivative(z, i + 1);
                assert!(d.re == 0.0 && (d.im - want).abs() < 1e-10 * (1.0 + want.abs()), "z = {z}, k = {}: {d}", i + 1);
                let m = m0_derivative(-z, i + 1);
                let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                assert_eq!(m.im, sign * d.im);
            }
        }
        let h = 1e-5;
        let fd = (m0_derivative(1.5 + h, 1) - m0_derivative(1.5 - h, 1)) / (2.0 * h);
        assert!((fd - m0_derivative(1.5, 2)).norm() < 1e-6);
        for k in 0..=3 {
            let lo = m0_derivative(0.5 - 1e-12, k);
            let hi = m0_derivative(0.5 + 1e-12, k);
            assert!((lo - hi).norm() < 1e-8 * (1.0 + lo.norm()));
        }
    }

    #[test]
    fn identity_field_multiplier_suprema() {
        let a = catalog("identity", 2, 2).unwrap().0;
        let opts = MultiplierOptions { per_decade: 64, v_per_axis: 9, ..Default::default() };
        let r = multiplier_bound_check(&a, 1.0, 3, &opts).unwrap();
        let want = [9.281836235113011644, 225.3669291890727214, 9943.333577604237489];
        for e in r.entries.iter().filter(|e| e.k > 0) {
            assert!((e.sup - want[e.k - 1]).abs() < 1e-9 * want[e.k - 1], "{e:?}");
        }
        assert!(r.passed);
    }

    #[test]
    fn constant_field_has_zero_multiplier() {
        let a = catalog("constant", 2, 1).unwrap().0;
        let opts = MultiplierOptions { per_decade: 4, v_per_axis: 5, ..Default::default() };
        let r = multiplier_bound_check(&a, 1.0, 2, &opts).unwrap();
        assert!(r.entries.iter().all(|e| e.sup == 0.0 && e.stable));
        assert!(!r.bracket_vanishes);
        assert!((r.bracket_tail_ratio - 1.0).abs() < 1e-12);
    }
}
