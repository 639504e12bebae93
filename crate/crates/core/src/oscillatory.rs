//! Oscillatory integrals `∫ ψ(u) e^{iλφ(u)} du` and their explicit decay bounds.

use crate::error::{Error, Result};
use crate::fields::{directional_derivative_into, Direction, Field, PhaseFunction, RotatedField, VelocityField};
use crate::fit::line;
use crate::quadrature::{gk15_combine, gk15_points, integrate_real};
use crate::smooth::TestFunction;
use crate::sphere::{dot, norm, SphereSampler};
use crate::sublevel::{minimize_derivative_sum, DerivativeSumSearch};
use crate::table::Table;
use crate::tolerances::{DECAY_FIT_MIN_LAMBDA, DECAY_RATIO_SLACK, OSC_ABS_FLOOR, OSC_REL};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Number of independent chunks the integration interval is cut into.
const CHUNKS: usize = 64;

/// Samples used for sup norms and grid precondition checks.
const GRID_SAMPLES: usize = 4097;

type RealFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Real amplitude `ψ` with its derivative.
#[derive(Clone)]
pub enum Amplitude {
    Constant(f64),
    General { value: Arc<RealFn>, derivative: Arc<RealFn>, label: String },
}

impl fmt::Debug for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Amplitude::Constant(c) => write!(f, "Amplitude::Constant({c})"),
            Amplitude::General { label, .. } => write!(f, "Amplitude::General({label})"),
        }
    }
}

impl Amplitude {
    pub fn constant(c: f64) -> Self {
        Amplitude::Constant(c)
    }

    pub fn new(
        label: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Amplitude::General { value: Arc::new(value), derivative: Arc::new(derivative), label: label.into() }
    }

    /// `c0 + c1·u`.
    pub fn linear(c0: f64, c1: f64) -> Self {
        Amplitude::new(format!("{c0} + {c1}·u"), move |u| c0 + c1 * u, move |_| c1)
    }

    /// One-dimensional slice of a product bump test function.
    pub fn from_test_function(psi: TestFunction) -> Self {
        let label = format!("bump(radius={})", psi.radius);
        Amplitude::new(label, move |u| psi.eval(&[u]), move |u| psi.partial(&[u], 0))
    }

    pub fn value(&self, u: f64) -> f64 {
        match self {
            Amplitude::Constant(c) => *c,
            Amplitude::General { value, .. } => value(u),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            Amplitude::Constant(_) => 0.0,
            Amplitude::General { derivative, .. } => derivative(u),
        }
    }

    /// `‖ψ‖_∞` on `[a, b]`, sampled.
    pub fn sup_norm(&self, a: f64, b: f64) -> f64 {
        match self {
            Amplitude::Constant(c) => c.abs(),
            Amplitude::General { value, .. } => (0..GRID_SAMPLES)
                .map(|i| value(a + (b - a) * i as f64 / (GRID_SAMPLES - 1) as f64).abs())
                .fold(0.0, f64::max),
        }
    }

    /// `‖ψ′‖_{L¹}` on `[a, b]`.
    pub fn derivative_l1(&self, a: f64, b: f64) -> f64 {
        match self {
            Amplitude::Constant(_) => 0.0,
            Amplitude::General { derivative, .. } => {
                let pieces = 64;
                (0..pieces)
                    .map(|i| {
                        let lo = a + (b - a) * i as f64 / pieces as f64;
                        let hi = a + (b - a) * (i + 1) as f64 / pieces as f64;
                        integrate_real(|u| derivative(u).abs(), lo, hi, 1e-13)
                    })
                    .sum()
            }
        }
    }

    /// `∫|ψ|` on `[a, b]`.
    pub fn l1(&self, a: f64, b: f64) -> f64 {
        match self {
            Amplitude::Constant(c) => c.abs() * (b - a),
            Amplitude::General { value, .. } => integrate_real(|u| value(u).abs(), a, b, 1e-13),
        }
    }
}

/// An oscillatory integral `∫_α^β ψ(u) e^{iλφ(u)} du`.
#[derive(Debug, Clone)]
pub struct OscillatorySpec {
    pub psi: Amplitude,
    pub phi: PhaseFunction,
    pub interval: (f64, f64),
    pub lambda: f64,
    psi_sup: f64,
}

impl OscillatorySpec {
    pub fn new(psi: Amplitude, phi: PhaseFunction, interval: (f64, f64), lambda: f64) -> Result<Self> {
        let (a, b) = interval;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("interval [{a}, {b}] must be nonempty and finite")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidArgument("frequency must be finite".into()));
        }
        let psi_sup = psi.sup_norm(a, b);
        Ok(OscillatorySpec { psi, phi, interval, lambda, psi_sup })
    }

    /// Same amplitude, phase and interval at another frequency.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        OscillatorySpec { lambda, ..self.clone() }
    }

    /// Target absolute accuracy `max(1e-10, 1e-8·(β−α)·‖ψ‖_∞)`.
    pub fn tolerance(&self) -> f64 {
        OSC_ABS_FLOOR.max(OSC_REL * (self.interval.1 - self.interval.0) * self.psi_sup)
    }

    pub fn psi_sup(&self) -> f64 {
        self.psi_sup
    }
}

fn panel_cap(lambda: f64, slope: f64) -> f64 {
    PI / (1.0 + lambda.abs() * slope)
}

struct PanelIntegrator<'a> {
    spec: &'a OscillatorySpec,
    per_length_tol: f64,
}

impl PanelIntegrator<'_> {
    fn integrand_values(&self, a: f64, b: f64) -> Result<[Complex64; 15]> {
        let x = gk15_points(a, b);
        let mut v = [Complex64::new(0.0, 0.0); 15];
        for i in 0..15 {
            let phase = self.spec.lambda * self.spec.phi.eval(x[i]);
            let amp = self.spec.psi.value(x[i]);
            if !phase.is_finite() || !amp.is_finite() {
                return Err(Error::NonFinite { context: "oscillatory integrand".into(), at: x[i] });
            }
            let (s, c) = phase.sin_cos();
            v[i] = Complex64::new(amp * c, amp * s);
        }
        Ok(v)
    }

    fn panel(&self, a: f64, b: f64, depth: usize) -> Result<Complex64> {
        let v = self.integrand_values(a, b)?;
        let (val, err) = gk15_combine(&v, a, b);
        if err <= self.per_length_tol * (b - a) || depth >= 30 {
            return Ok(val);
        }
        let m = 0.5 * (a + b);
        Ok(self.panel(a, m, depth + 1)? + self.panel(m, b, depth + 1)?)
    }

    fn slope(&self, u: f64) -> Result<f64> {
        let s = self.spec.phi.deriv_unchecked(u, 1);
        if !s.is_finite() {
            return Err(Error::NonFinite { context: "phase derivative".into(), at: u });
        }
        Ok(s.abs())
    }

    /// Integrates over `[a, b]` with panels capped by the local oscillation rate.
    fn chunk(&self, a: f64, b: f64) -> Result<Complex64> {
        let lambda = self.spec.lambda;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut x = a;
        while x < b {
            let mut slope = self.slope(x)?;
            let mut h = panel_cap(lambda, slope).min(b - x);
            for _ in 0..3 {
                let probe = self.slope(x + h)?.max(self.slope(x + 0.5 * h)?);
                if probe <= slope {
                    break;
                }
                slope = probe;
                h = panel_cap(lambda, slope).min(b - x);
            }
            let end = if b - (x + h) < 1e-3 * h { b } else { x + h };
            acc += self.panel(x, end, 0)?;
            x = end;
        }
        Ok(acc)
    }
}

/// `I(λ) = ∫_α^β ψ(u) e^{iλφ(u)} du`.
///
/// The interval is cut into a fixed number of chunks; inside each chunk panels
/// are capped at `π/(1 + λ·max|φ′|)` and integrated by Gauss–Kronrod with
/// error-driven bisection. Chunk results are summed in index order.
pub fn integrate(spec: &OscillatorySpec) -> Result<Complex64> {
    let (a, b) = spec.interval;
    let tol = spec.tolerance();
    let integrator = PanelIntegrator { spec, per_length_tol: 0.1 * tol / (b - a) };
    let parts: Vec<Result<Complex64>> = (0..CHUNKS)
        .into_par_iter()
        .map(|i| {
            let lo = a + (b - a) * i as f64 / CHUNKS as f64;
            let hi = if i + 1 == CHUNKS { b } else { a + (b - a) * (i + 1) as f64 / CHUNKS as f64 };
            integrator.chunk(lo, hi)
        })
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// The van der Corput constant `c_k = 5·2^{k−1} − 2`.
pub fn vdc_constant(k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument("van der Corput order must be at least 1".into()));
    }
    Ok(5.0 * 2f64.powi(k as i32 - 1) - 2.0)
}

/// Verifies `|φ^{(k)}| ≥ δ` on a fine grid of the interval.
pub fn check_derivative_lower_bound(phi: &PhaseFunction, k: usize, delta: f64, interval: (f64, f64)) -> Result<()> {
    if delta <= 0.0 {
        return Err(Error::InvalidArgument("derivative lower bound must be positive".into()));
    }
    let (a, b) = interval;
    for i in 0..GRID_SAMPLES {
        let u = a + (b - a) * i as f64 / (GRID_SAMPLES - 1) as f64;
        let d = phi.deriv(u, k)?;
        if !(d.abs() >= delta * (1.0 - 1e-12)) {
            return Err(Error::Precondition {
                at: u,
                message: format!("|φ^({k})| = {:e} is below δ = {delta:e}", d.abs()),
            });
        }
    }
    Ok(())
}

fn tilde_constant(k: usize, delta: f64, interval: (f64, f64), phi: &PhaseFunction) -> Result<f64> {
    if k == 1 {
        phi.deriv(interval.0, 2)?;
        let curvature = integrate_real(|u| phi.deriv_unchecked(u, 2).abs(), interval.0, interval.1, 1e-12);
        Ok(2.0 + curvature / delta)
    } else {
        vdc_constant(k)
    }
}

/// Decay bound `max(|β−α|, c̃_k)·max(1, δ^{−1/k})·min(1, |λ|^{−1/k})` for a unit amplitude.
pub fn corollary_bound(k: usize, delta: f64, interval: (f64, f64), lambda: f64, phi: &PhaseFunction) -> Result<f64> {
    vdc_constant(k)?;
    check_derivative_lower_bound(phi, k, delta, interval)?;
    let ct = tilde_constant(k, delta, interval, phi)?;
    let kf = k as f64;
    let len = interval.1 - interval.0;
    Ok(len.max(ct) * 1f64.max(delta.powf(-1.0 / kf)) * 1f64.min(lambda.abs().powf(-1.0 / kf)))
}

/// Decay bound with amplitude: the corollary constant times `‖ψ‖_∞ + ‖ψ′‖_{L¹}`.
pub fn amplitude_bound(
    k: usize,
    delta: f64,
    interval: (f64, f64),
    lambda: f64,
    phi: &PhaseFunction,
    psi: &Amplitude,
) -> Result<f64> {
    vdc_constant(k)?;
    check_derivative_lower_bound(phi, k, delta, interval)?;
    let ct = tilde_constant(k, delta, interval, phi)?;
    let kf = k as f64;
    let len = interval.1 - interval.0;
    let norms = psi.sup_norm(interval.0, interval.1) + psi.derivative_l1(interval.0, interval.1);
    Ok(len.max(ct) / (1f64.min(delta.powf(1.0 / kf)) * 1f64.max(lambda.abs().powf(1.0 / kf))) * norms)
}

/// A run of consecutive cells sharing one derivative label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRun {
    pub order: usize,
    pub start: f64,
    pub end: f64,
    pub transitions: usize,
    pub curvature: f64,
}

/// Description of the partition of unity at the extremal parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDescription {
    pub runs: Vec<LabelRun>,
    pub direction: Vec<f64>,
    pub transverse: Vec<f64>,
    pub transition_fraction: f64,
}

/// Certified constant for `|∫ψ e^{iλφ}| ≤ d_γ·min(1, |λ|^{−1/γ})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedBound {
    pub d_gamma: f64,
    pub delta: f64,
    pub gamma: usize,
    pub min_derivative_sum: f64,
    pub minimizer_v: Vec<f64>,
    pub minimizer_direction: Vec<f64>,
    pub psi_norms: f64,
    pub parameters_sampled: usize,
    pub partition: PartitionDescription,
}

/// Options for [`partitioned_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionOptions {
    pub sphere_samples: usize,
    pub cells: usize,
    pub transverse_points: usize,
    pub transition_fraction: f64,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions { sphere_samples: 4096, cells: 2048, transverse_points: 9, transition_fraction: 0.1 }
    }
}

/// Rows `D^j b(v)/|F|^{j+1}`, `j = 0..=gamma`, at each grid point of a line.
struct LineRows {
    u: Vec<f64>,
    rows: Vec<Vec<Vec<f64>>>,
}

fn line_rows(a: &dyn VelocityField, f: &[f64], w: &[f64], axis: &[f64], amp: f64, cells: usize, gamma: usize) -> Result<LineRows> {
    let n = a.space_dim();
    let fnorm = norm(f);
    let mut u = Vec::with_capacity(cells + 1);
    let mut rows = Vec::with_capacity(cells + 1);
    let mut v = vec![0.0; w.len()];
    for i in 0..=cells {
        let t = -amp + 2.0 * amp * i as f64 / cells as f64;
        for (j, vj) in v.iter_mut().enumerate() {
            *vj = w[j] + t * axis[j];
        }
        let mut per = Vec::with_capacity(gamma + 1);
        for j in 0..=gamma {
            let mut row = vec![0.0; n + 1];
            directional_derivative_into(a, f, &v, j, &mut row)?;
            let s = fnorm.powi(j as i32 + 1);
            row.iter_mut().for_each(|r| *r /= s);
            per.push(row);
        }
        u.push(t);
        rows.push(per);
    }
    Ok(LineRows { u, rows })
}

/// Per-parameter accounting of the partition bound.
struct ParameterBound {
    value: f64,
    runs: Vec<LabelRun>,
}

fn bound_for_parameter(
    lr: &LineRows,
    sigma: &[f64],
    gamma: usize,
    delta: f64,
    amp: f64,
    psi_sup: f64,
    psi_var: f64,
    frac: f64,
) -> Option<ParameterBound> {
    let cells = lr.u.len() - 1;
    let h = lr.u[1] - lr.u[0];
    // g[k][i] = |∂_u^k φ| at node i, k = 1..=gamma+1.
    let g: Vec<Vec<f64>> = (0..=gamma)
        .map(|j| lr.rows.iter().map(|r| dot(&r[j], sigma).abs()).collect())
        .collect();
    let reach = 0.5 * h * (1.0 + frac);
    let valid = |k: usize, i: usize| -> bool {
        let lip = g[k][i].max(g[k][i + 1]);
        let lo = g[k - 1][i].min(g[k - 1][i + 1]);
        lo - 2.0 * reach * lip > delta
    };
    let mut runs: Vec<LabelRun> = Vec::new();
    let mut i = 0;
    while i < cells {
        let mut best: Option<(usize, usize)> = None;
        for k in 1..=gamma {
            let mut j = i;
            while j < cells && valid(k, j) {
                j += 1;
            }
            if j > i && best.map(|b| j > b.1).unwrap_or(true) {
                best = Some((k, j));
            }
        }
        let (k, j) = best?;
        let curvature = if k == 1 {
            (i..j).map(|c| h * g[1][c].max(g[1][c + 1])).sum::<f64>() * (1.0 + frac)
        } else {
            0.0
        };
        runs.push(LabelRun { order: k, start: lr.u[i], end: lr.u[j], transitions: 0, curvature });
        i = j;
    }
    let count = runs.len();
    for (r, run) in runs.iter_mut().enumerate() {
        run.transitions = usize::from(r > 0) + usize::from(r + 1 < count);
    }
    let value = runs
        .iter()
        .map(|run| {
            let kf = run.order as f64;
            let ct = if run.order == 1 { 2.0 + run.curvature / delta } else { 5.0 * 2f64.powi(run.order as i32 - 1) - 2.0 };
            let norms = psi_sup + psi_var + psi_sup * run.transitions as f64;
            (2.0 * amp).max(ct) / delta.powf(1.0 / kf) * norms
        })
        .sum();
    Some(ParameterBound { value, runs })
}

/// Constant `d_γ` of the partitioned decay bound for the phase `u ↦ B(u)·σ`.
///
/// `B` is the primitive of `−b/|F|` along the force direction. δ is half the
/// minimum over `[−A, A]^M × S^N` of `(1/γ)Σ_{k=1}^{γ}|∂_u^k φ|`, capped at one. For
/// every sampled parameter the line `[−A, A]` is cut into cells, each cell is
/// labelled with an order `k` such that `|∂_u^k φ| > δ` on the cell widened by the
/// transition zone, runs of equal labels are merged, and the amplitude bound is
/// summed over runs with the smooth-step transitions counted in `‖ρ_k′‖_{L¹}`.
/// `direction` restricts the parameter set to a single `σ`.
pub fn partitioned_bound(
    a: &Field,
    force: &[f64],
    direction: Option<&Direction>,
    psi: &TestFunction,
    gamma: usize,
    amp: f64,
    opts: &PartitionOptions,
) -> Result<PartitionedBound> {
    let m = a.velocity_dim();
    let n = a.space_dim();
    if gamma < 1 {
        return Err(Error::InvalidArgument("γ must be at least 1".into()));
    }
    if force.len() != m || norm(force) == 0.0 {
        return Err(Error::Unsupported("partitioned bound needs a nonzero constant force in R^M".into()));
    }
    if !psi.supported_in(amp) {
        return Err(Error::Support(format!("test function radius {} exceeds A = {amp}", psi.radius)));
    }
    if a.smoothness() < gamma {
        return Err(Error::Capability { requested: gamma, available: a.smoothness() });
    }
    let fnorm = norm(force);
    let weights: Vec<f64> = (0..gamma).map(|j| fnorm.powi(-(j as i32 + 1))).collect();
    let search: DerivativeSumSearch =
        minimize_derivative_sum(a, force, &weights, amp, opts.sphere_samples, direction.map(|d| d.components()))?;
    if search.value <= crate::tolerances::GAMMA_ND_THRESHOLD {
        return Err(Error::NonDegeneracy { minimum: search.value, v: search.v, direction: search.sigma });
    }
    let delta = (search.value / (2.0 * gamma as f64)).min(1.0);
    let psi_sup = psi.sup_norm();
    let psi_var = psi.axis_variation();

    let axis: Vec<f64> = force.iter().map(|x| x / fnorm).collect();
    let transverse = transverse_points(&axis, amp, if m == 1 { 1 } else { opts.transverse_points });
    let sigmas: Vec<Vec<f64>> = match direction {
        Some(d) => vec![d.components().to_vec()],
        None => {
            let mut s = SphereSampler::new(n + 1, opts.sphere_samples).points();
            s.push(search.sigma.clone());
            s
        }
    };
    let mut best: Option<(f64, Vec<LabelRun>, Vec<f64>, Vec<f64>)> = None;
    for w in &transverse {
        let lr = line_rows(&**a, force, w, &axis, amp, opts.cells, gamma)?;
        let per: Vec<Option<ParameterBound>> = sigmas
            .par_iter()
            .map(|s| bound_for_parameter(&lr, s, gamma, delta, amp, psi_sup, psi_var, opts.transition_fraction))
            .collect();
        for (s, pb) in sigmas.iter().zip(per) {
            let pb = pb.ok_or_else(|| Error::NonDegeneracy {
                minimum: delta,
                v: w.clone(),
                direction: s.clone(),
            })?;
            if best.as_ref().map(|b| pb.value > b.0).unwrap_or(true) {
                best = Some((pb.value, pb.runs, s.clone(), w.clone()));
            }
        }
    }
    let (d_gamma, runs, sigma, w) = best.expect("at least one parameter sampled");
    Ok(PartitionedBound {
        d_gamma,
        delta,
        gamma,
        min_derivative_sum: search.value,
        minimizer_v: search.v,
        minimizer_direction: search.sigma,
        psi_norms: psi_sup + psi_var,
        parameters_sampled: sigmas.len() * transverse.len(),
        partition: PartitionDescription {
            runs,
            direction: sigma,
            transverse: w,
            transition_fraction: opts.transition_fraction,
        },
    })
}

/// Base points of the lines parallel to `axis` through a transverse grid of `[−A, A]^M`.
fn transverse_points(axis: &[f64], amp: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let m = axis.len();
    if m == 1 {
        return vec![vec![0.0]];
    }
    let basis = crate::sphere::tangent_basis(axis);
    let reach = amp * (m as f64).sqrt();
    let k = per_axis.max(2);
    let mut out = Vec::new();
    let total = k.pow(basis.len() as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = vec![0.0; m];
        for b in &basis {
            let t = -reach + 2.0 * reach * (rem % k) as f64 / (k - 1) as f64;
            rem /= k;
            for (pi, bi) in p.iter_mut().zip(b) {
                *pi += t * bi;
            }
        }
        out.push(p);
    }
    out
}

/// The phase `u ↦ B(u)·σ` with `B(u) = −∫_0^u b/|F|`, for a one-dimensional velocity.
pub fn force_line_phase(a: &Field, force: f64, sigma: &Direction) -> Result<PhaseFunction> {
    if a.velocity_dim() != 1 {
        return Err(Error::InvalidArgument("force-line phase is defined for M = 1".into()));
    }
    if force == 0.0 {
        return Err(Error::Unsupported("force must be nonzero".into()));
    }
    let field: Field = if force > 0.0 {
        a.clone()
    } else {
        Arc::new(RotatedField::new(a.clone(), vec![vec![-1.0]])?)
    };
    let n = field.space_dim();
    if sigma.dim() != n + 1 {
        return Err(Error::InvalidArgument("direction dimension must be N + 1".into()));
    }
    let fabs = force.abs();
    let s = sigma.components().to_vec();
    let label = format!("B·σ for {}", field.label());
    Ok(PhaseFunction::new((f64::NEG_INFINITY, f64::INFINITY), field.smoothness().saturating_add(1), label, move |u, k| {
        if k == 0 {
            let mut p = vec![0.0; n];
            if !field.axis0_primitive(&[u], &mut p) {
                for (j, pj) in p.iter_mut().enumerate() {
                    *pj = integrate_real(|t| field.eval(&[t])[j], 0.0, u, 1e-13);
                }
            }
            -(s[0] * u + dot(&p, &s[1..])) / fabs
        } else {
            let mut row = vec![0.0; n + 1];
            match directional_derivative_into(&*field, &[1.0], &[u], k - 1, &mut row) {
                Ok(()) => -dot(&row, &s) / fabs,
                Err(_) => f64::NAN,
            }
        }
    }))
}

/// Where the per-frequency bound of a decay check comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundSource {
    /// `c_k·min(1, λ^{−1/k})`, requiring `|φ^{(k)}| ≥ 1` (and `φ′` monotone when `k = 1`).
    VanDerCorput { k: usize },
    /// [`corollary_bound`] times `‖ψ‖_∞`.
    Corollary { k: usize, delta: f64 },
    /// [`amplitude_bound`].
    Amplitude { k: usize, delta: f64 },
    /// `d_γ·min(1, λ^{−1/γ})`.
    Partitioned { d_gamma: f64, gamma: usize },
}

impl BoundSource {
    pub fn order(&self) -> usize {
        match self {
            BoundSource::VanDerCorput { k } | BoundSource::Corollary { k, .. } | BoundSource::Amplitude { k, .. } => *k,
            BoundSource::Partitioned { gamma, .. } => *gamma,
        }
    }
}

/// Measured magnitudes against a theoretical bound over a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub lambdas: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub bounds: Vec<f64>,
    pub ratios: Vec<f64>,
    pub worst_ratio: f64,
    pub order: usize,
    pub measured_constant: f64,
    pub decay_exponent: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl DecayReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new("decay", &["lambda", "magnitude", "bound", "ratio"]);
        for i in 0..self.lambdas.len() {
            t.push(vec![self.lambdas[i], self.magnitudes[i], self.bounds[i], self.ratios[i]]);
        }
        t
    }
}

/// Least-squares decay exponent of the running upper envelope `max_{μ ≥ λ}|I(μ)|`.
pub fn envelope_exponent(lambdas: &[f64], magnitudes: &[f64]) -> Option<f64> {
    let mut env = magnitudes.to_vec();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (l, e) in lambdas.iter().zip(&env) {
        if *l >= DECAY_FIT_MIN_LAMBDA && *e > 0.0 {
            x.push(l.ln());
            y.push(e.ln());
        }
    }
    if x.len() < 3 {
        x.clear();
        y.clear();
        for (l, e) in lambdas.iter().zip(&env) {
            if *l > 0.0 && *e > 0.0 {
                x.push(l.ln());
                y.push(e.ln());
            }
        }
    }
    line(&x, &y).map(|f| -f.slope)
}

fn check_monotone_slope(phi: &PhaseFunction, interval: (f64, f64)) -> Result<()> {
    let (a, b) = interval;
    let mut sign = 0.0;
    for i in 0..GRID_SAMPLES {
        let u = a + (b - a) * i as f64 / (GRID_SAMPLES - 1) as f64;
        let c = phi.deriv(u, 2)?;
        if c.abs() > 1e-14 {
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return Err(Error::Precondition { at: u, message: "φ′ is not monotone".into() });
            }
        }
    }
    Ok(())
}

/// Evaluates `|I(λ)|` on the grid and compares against the chosen bound.
pub fn decay_check(spec: &OscillatorySpec, lambdas: &[f64], source: &BoundSource) -> Result<DecayReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("frequency grid is empty".into()));
    }
    let interval = spec.interval;
    let weight = |lambda: f64, order: usize| 1f64.min(lambda.abs().powf(-1.0 / order as f64));
    let bound_at: Box<dyn Fn(f64) -> Result<f64> + Sync> = match source {
        BoundSource::VanDerCorput { k } => {
            let ck = vdc_constant(*k)?;
            check_derivative_lower_bound(&spec.phi, *k, 1.0, interval)?;
            if *k == 1 {
                check_monotone_slope(&spec.phi, interval)?;
            }
            let amp = spec.psi.sup_norm(interval.0, interval.1);
            let k = *k;
            Box::new(move |l| Ok(ck * amp * weight(l, k)))
        }
        BoundSource::Corollary { k, delta } => {
            let base = corollary_bound(*k, *delta, interval, 1.0, &spec.phi)?;
            let amp = spec.psi.sup_norm(interval.0, interval.1);
            let k = *k;
            Box::new(move |l| Ok(base * amp * weight(l, k)))
        }
        BoundSource::Amplitude { k, delta } => {
            let base = amplitude_bound(*k, *delta, interval, 1.0, &spec.phi, &spec.psi)?;
            let k = *k;
            Box::new(move |l| Ok(base * weight(l, k)))
        }
        BoundSource::Partitioned { d_gamma, gamma } => {
            let (d, g) = (*d_gamma, *gamma);
            Box::new(move |l| Ok(d * weight(l, g)))
        }
    };
    let order = source.order();
    let mut magnitudes = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        magnitudes.push(integrate(&spec.with_lambda(l))?.norm());
    }
    let bounds: Vec<f64> = lambdas.iter().map(|&l| bound_at(l)).collect::<Result<_>>()?;
    let ratios: Vec<f64> = magnitudes.iter().zip(&bounds).map(|(m, b)| m / b).collect();
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let measured_constant = lambdas
        .iter()
        .zip(&magnitudes)
        .map(|(l, m)| m / weight(*l, order))
        .fold(0.0, f64::max);
    let decay_exponent = envelope_exponent(lambdas, &magnitudes);
    Ok(DecayReport {
        lambdas: lambdas.to_vec(),
        magnitudes,
        bounds,
        ratios,
        worst_ratio,
        order,
        measured_constant,
        decay_exponent,
        tolerance: DECAY_RATIO_SLACK,
        passed: worst_ratio <= 1.0 + DECAY_RATIO_SLACK,
    })
}
