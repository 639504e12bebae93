//! Velocity fields, force fields, directions and phase functions.

use crate::error::{Error, Result};
use crate::sphere::{dot, norm};
use crate::tolerances::DIRECTION_NORM;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Stack buffer length used for per-point evaluations; larger dimensions fall back to the heap.
const STACK_DIM: usize = 32;

/// A smooth map `a: R^M -> R^N` with derivative access.
pub trait VelocityField: Send + Sync + fmt::Debug {
    /// Velocity dimension `M`.
    fn velocity_dim(&self) -> usize;
    /// Space dimension `N`.
    fn space_dim(&self) -> usize;
    /// Highest derivative order available.
    fn smoothness(&self) -> usize;
    /// Short human-readable label.
    fn label(&self) -> String;
    /// Writes `a(v)` into `out` (length `N`).
    fn eval_into(&self, v: &[f64], out: &mut [f64]);
    /// Writes the partial derivative `∂^beta a(v)` into `out`.
    fn deriv_into(&self, v: &[f64], beta: &[usize], out: &mut [f64]) -> Result<()>;

    /// Writes `∫_0^{v_1} a(u, v_2, …) du` when an exact primitive along the first axis is known.
    fn axis0_primitive(&self, _v: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn eval(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space_dim()];
        self.eval_into(v, &mut out);
        out
    }

    fn deriv(&self, v: &[f64], beta: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.space_dim()];
        self.deriv_into(v, beta, &mut out)?;
        Ok(out)
    }
}

/// Shared handle to a velocity field.
pub type Field = Arc<dyn VelocityField>;

fn check_order(beta: &[usize], available: usize) -> Result<()> {
    let k: usize = beta.iter().sum();
    if k > available {
        Err(Error::Capability { requested: k, available })
    } else {
        Ok(())
    }
}

/// One monomial `coef · Π v_i^{powers_i}` contributing to one output component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub component: usize,
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Multivariate polynomial field with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialField {
    n: usize,
    m: usize,
    terms: Vec<Monomial>,
    label: String,
}

fn falling(p: u32, k: usize) -> f64 {
    (0..k).map(|j| (p as f64) - j as f64).product()
}

impl PolynomialField {
    pub fn new(n: usize, m: usize, terms: Vec<Monomial>, label: impl Into<String>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        for t in &terms {
            if t.component >= n {
                return Err(Error::InvalidArgument(format!(
                    "monomial component {} outside 0..{}",
                    t.component, n
                )));
            }
            if t.powers.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "monomial has {} exponents, expected {}",
                    t.powers.len(),
                    m
                )));
            }
            if !t.coef.is_finite() {
                return Err(Error::InvalidArgument("monomial coefficient is not finite".into()));
            }
        }
        Ok(PolynomialField { n, m, terms, label: label.into() })
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// Total degree of the polynomial.
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.powers.iter().sum::<u32>() as usize).max().unwrap_or(0)
    }
}

impl VelocityField for PolynomialField {
    fn velocity_dim(&self) -> usize {
        self.m
    }
    fn space_dim(&self) -> usize {
        self.n
    }
    fn smoothness(&self) -> usize {
        usize::MAX
    }
    fn label(&self) -> String {
        self.label.clone()
    }

    fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            let mut p = t.coef;
            for (x, &e) in v.iter().zip(&t.powers) {
                p *= x.powi(e as i32);
            }
            out[t.component] += p;
        }
    }

    fn deriv_into(&self, v: &[f64], beta: &[usize], out: &mut [f64]) -> Result<()> {
        if beta.len() != self.m {
            return Err(Error::InvalidArgument("multi-index length differs from M".into()));
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        'terms: for t in &self.terms {
            let mut p = t.coef;
            for ((x, &e), &b) in v.iter().zip(&t.powers).zip(beta) {
                if (e as usize) < b {
                    continue 'terms;
                }
                p *= falling(e, b) * x.powi(e as i32 - b as i32);
            }
            out[t.component] += p;
        }
        Ok(())
    }

    fn axis0_primitive(&self, v: &[f64], out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            let e0 = t.powers[0] as i32 + 1;
            let mut p = t.coef * v[0].powi(e0) / e0 as f64;
            for (x, &e) in v.iter().zip(&t.powers).skip(1) {
                p *= x.powi(e as i32);
            }
            out[t.component] += p;
        }
        true
    }
}

/// The unit circle curve `(cos v_1, sin v_1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleField {
    m: usize,
}

impl CircleField {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("velocity dimension must be positive".into()));
        }
        Ok(CircleField { m })
    }
}

fn cos_deriv(x: f64, k: usize) -> f64 {
    match k % 4 {
        0 => x.cos(),
        1 => -x.sin(),
        2 => -x.cos(),
        _ => x.sin(),
    }
}

impl VelocityField for CircleField {
    fn velocity_dim(&self) -> usize {
        self.m
    }
    fn space_dim(&self) -> usize {
        2
    }
    fn smoothness(&self) -> usize {
        usize::MAX
    }
    fn label(&self) -> String {
        "circle".into()
    }
    fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        out[0] = v[0].cos();
        out[1] = v[0].sin();
    }
    fn deriv_into(&self, v: &[f64], beta: &[usize], out: &mut [f64]) -> Result<()> {
        if beta.len() != self.m {
            return Err(Error::InvalidArgument("multi-index length differs from M".into()));
        }
        if beta[1..].iter().any(|&b| b > 0) {
            out[0] = 0.0;
            out[1] = 0.0;
            return Ok(());
        }
        let k = beta[0];
        out[0] = cos_deriv(v[0], k);
        out[1] = if k == 0 { v[0].sin() } else { cos_deriv(v[0], k - 1) };
        Ok(())
    }
    fn axis0_primitive(&self, v: &[f64], out: &mut [f64]) -> bool {
        out[0] = v[0].sin();
        out[1] = 1.0 - v[0].cos();
        true
    }
}

/// A black-box field whose derivatives come from Richardson-extrapolated central differences.
#[derive(Clone)]
pub struct SampledField {
    n: usize,
    m: usize,
    smoothness: usize,
    map: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    label: String,
}

impl fmt::Debug for SampledField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledField")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("smoothness", &self.smoothness)
            .field("label", &self.label)
            .finish()
    }
}

impl SampledField {
    pub fn new(
        n: usize,
        m: usize,
        smoothness: usize,
        label: impl Into<String>,
        map: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        SampledField { n, m, smoothness, map: Arc::new(map), label: label.into() }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Central-difference tensor stencil for `∂^beta` with step `h`, second order.
fn central_difference(
    map: &dyn Fn(&[f64], &mut [f64]),
    v: &[f64],
    beta: &[usize],
    h: f64,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut counters = vec![0usize; beta.len()];
    let mut point = v.to_vec();
    let mut val = vec![0.0; out.len()];
    let k: usize = beta.iter().sum();
    let scale = h.powi(k as i32);
    loop {
        let mut w = 1.0;
        for (i, (&b, &j)) in beta.iter().zip(&counters).enumerate() {
            point[i] = v[i] + (b as f64 / 2.0 - j as f64) * h;
            w *= if j % 2 == 0 { 1.0 } else { -1.0 } * binomial(b, j);
        }
        map(&point, &mut val);
        for (o, x) in out.iter_mut().zip(&val) {
            *o += w * x;
        }
        let mut axis = 0;
        loop {
            if axis == beta.len() {
                out.iter_mut().for_each(|o| *o /= scale);
                return;
            }
            counters[axis] += 1;
            if counters[axis] <= beta[axis] {
                break;
            }
            counters[axis] = 0;
            axis += 1;
        }
    }
}

/// Richardson-extrapolated finite-difference derivative of a vector map.
pub fn richardson_derivative(
    map: &dyn Fn(&[f64], &mut [f64]),
    v: &[f64],
    beta: &[usize],
    out: &mut [f64],
) {
    let k: usize = beta.iter().sum();
    if k == 0 {
        map(v, out);
        return;
    }
    let scale = v.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let h = f64::EPSILON.powf(1.0 / (k as f64 + 4.0)) * scale;
    let mut coarse = vec![0.0; out.len()];
    central_difference(map, v, beta, h, &mut coarse);
    central_difference(map, v, beta, 0.5 * h, out);
    for (o, c) in out.iter_mut().zip(&coarse) {
        *o = (4.0 * *o - c) / 3.0;
    }
}

impl VelocityField for SampledField {
    fn velocity_dim(&self) -> usize {
        self.m
    }
    fn space_dim(&self) -> usize {
        self.n
    }
    fn smoothness(&self) -> usize {
        self.smoothness
    }
    fn label(&self) -> String {
        self.label.clone()
    }
    fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        (self.map)(v, out)
    }
    fn deriv_into(&self, v: &[f64], beta: &[usize], out: &mut [f64]) -> Result<()> {
        check_order(beta, self.smoothness)?;
        richardson_derivative(&*self.map, v, beta, out);
        Ok(())
    }
}

/// Field expressed in rotated velocity coordinates: `v' ↦ a(Rᵀ v')`.
#[derive(Debug, Clone)]
pub struct RotatedField {
    inner: Field,
    rotation: Vec<Vec<f64>>,
    signed_permutation: Option<Vec<(usize, f64)>>,
}

impl RotatedField {
    /// `rotation` is an orthogonal `M × M` matrix, row-major.
    pub fn new(inner: Field, rotation: Vec<Vec<f64>>) -> Result<Self> {
        let m = inner.velocity_dim();
        if rotation.len() != m || rotation.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("rotation must be M × M".into()));
        }
        // Column j of R maps e_j' back to the original axis it selects.
        let mut perm = Vec::with_capacity(m);
        for j in 0..m {
            let col: Vec<f64> = (0..m).map(|i| rotation[j][i]).collect();
            let nz: Vec<usize> = (0..m).filter(|&i| col[i].abs() > 1e-15).collect();
            if nz.len() == 1 && (col[nz[0]].abs() - 1.0).abs() < 1e-15 {
                perm.push((nz[0], col[nz[0]].signum()));
            } else {
                perm.clear();
                break;
            }
        }
        let signed_permutation = if perm.len() == m { Some(perm) } else { None };
        Ok(RotatedField { inner, rotation, signed_permutation })
    }

    fn original(&self, vp: &[f64]) -> Vec<f64> {
        let m = vp.len();
        (0..m).map(|i| (0..m).map(|j| self.rotation[j][i] * vp[j]).sum()).collect()
    }
}

impl VelocityField for RotatedField {
    fn velocity_dim(&self) -> usize {
        self.inner.velocity_dim()
    }
    fn space_dim(&self) -> usize {
        self.inner.space_dim()
    }
    fn smoothness(&self) -> usize {
        if self.signed_permutation.is_some() {
            self.inner.smoothness()
        } else {
            self.inner.smoothness().min(6)
        }
    }
    fn label(&self) -> String {
        format!("rotated({})", self.inner.label())
    }
    fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        self.inner.eval_into(&self.original(v), out)
    }
    fn deriv_into(&self, v: &[f64], beta: &[usize], out: &mut [f64]) -> Result<()> {
        check_order(beta, self.smoothness())?;
        match &self.signed_permutation {
            Some(perm) => {
                let mut inner_beta = vec![0usize; beta.len()];
                let mut sign = 1.0;
                for (j, &(axis, s)) in perm.iter().enumerate() {
                    inner_beta[axis] = beta[j];
                    if beta[j] % 2 == 1 {
                        sign *= s;
                    }
                }
                self.inner.deriv_into(&self.original(v), &inner_beta, out)?;
                out.iter_mut().for_each(|o| *o *= sign);
                Ok(())
            }
            None => {
                let map = |x: &[f64], o: &mut [f64]| self.inner.eval_into(&self.original(x), o);
                richardson_derivative(&map, v, beta, out);
                Ok(())
            }
        }
    }
}

/// Names accepted by [`catalog`].
pub const CATALOG_NAMES: [&str; 5] = ["polynomial-curve", "identity", "circle", "constant", "custom-polynomial"];

/// Field from the named catalog together with the suggested force `e_1`.
pub fn catalog(name: &str, n: usize, m: usize) -> Result<(Field, ForceField)> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    let mut e1 = vec![0.0; m];
    e1[0] = 1.0;
    let force = ForceField::constant(e1)?;
    let field: Field = match name {
        "polynomial-curve" => {
            let terms = (0..n)
                .map(|j| {
                    let mut powers = vec![0u32; m];
                    powers[0] = j as u32 + 1;
                    Monomial { component: j, coef: 1.0, powers }
                })
                .collect();
            Arc::new(PolynomialField::new(n, m, terms, "polynomial-curve")?)
        }
        "identity" => {
            if n != m {
                return Err(Error::InvalidArgument(format!("identity field needs N = M, got N = {n}, M = {m}")));
            }
            let terms = (0..n)
                .map(|j| {
                    let mut powers = vec![0u32; m];
                    powers[j] = 1;
                    Monomial { component: j, coef: 1.0, powers }
                })
                .collect();
            Arc::new(PolynomialField::new(n, m, terms, "identity")?)
        }
        "circle" => {
            if n != 2 {
                return Err(Error::InvalidArgument(format!("circle field needs N = 2, got {n}")));
            }
            Arc::new(CircleField::new(m)?)
        }
        "constant" => {
            let terms = vec![Monomial { component: 0, coef: 1.0, powers: vec![0; m] }];
            Arc::new(PolynomialField::new(n, m, terms, "constant")?)
        }
        "custom-polynomial" => {
            return Err(Error::InvalidArgument(
                "custom-polynomial needs explicit monomials; use custom_polynomial".into(),
            ))
        }
        other => return Err(Error::InvalidArgument(format!("unknown field name '{other}'"))),
    };
    Ok((field, force))
}

/// Custom polynomial field with the suggested force `e_1`.
pub fn custom_polynomial(n: usize, m: usize, terms: Vec<Monomial>) -> Result<(Field, ForceField)> {
    let mut e1 = vec![0.0; m.max(1)];
    e1[0] = 1.0;
    Ok((Arc::new(PolynomialField::new(n, m, terms, "custom-polynomial")?), ForceField::constant(e1)?))
}

/// Smooth force `F(X, v)` with `X = (t, x)` in `R^{N+1}`.
#[derive(Clone)]
pub struct SmoothForce {
    m: usize,
    space_time_dim: usize,
    map: Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>,
    label: String,
}

impl fmt::Debug for SmoothForce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothForce")
            .field("m", &self.m)
            .field("space_time_dim", &self.space_time_dim)
            .field("label", &self.label)
            .finish()
    }
}

impl SmoothForce {
    pub fn new(
        space_time_dim: usize,
        m: usize,
        label: impl Into<String>,
        map: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        SmoothForce { m, space_time_dim, map: Arc::new(map), label: label.into() }
    }

    /// `F(X, v) = offset + x_coeffs · X + v_coeffs · v`, matrices row-major with `M` rows.
    pub fn affine(offset: Vec<f64>, x_coeffs: Vec<Vec<f64>>, v_coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let m = offset.len();
        if m == 0 || x_coeffs.len() != m || v_coeffs.len() != m {
            return Err(Error::InvalidArgument("affine force needs M rows in every coefficient block".into()));
        }
        let d = x_coeffs[0].len();
        if x_coeffs.iter().any(|r| r.len() != d) || v_coeffs.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("affine force coefficient rows have inconsistent lengths".into()));
        }
        let label = format!("affine(offset={offset:?}, x={x_coeffs:?}, v={v_coeffs:?})");
        Ok(SmoothForce::new(d, m, label, move |x, v, out| {
            for i in 0..m {
                out[i] = offset[i] + dot(&x_coeffs[i], x) + dot(&v_coeffs[i], v);
            }
        }))
    }

    pub fn velocity_dim(&self) -> usize {
        self.m
    }
    pub fn space_time_dim(&self) -> usize {
        self.space_time_dim
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn eval_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        (self.map)(x, v, out)
    }
    pub fn eval(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.eval_into(x, v, &mut out);
        out
    }

    /// Jacobian with respect to the concatenated argument `(X, v)`, by central differences.
    pub fn jacobian(&self, x: &[f64], v: &[f64]) -> Vec<Vec<f64>> {
        let d = x.len() + v.len();
        let mut z: Vec<f64> = x.iter().chain(v).copied().collect();
        let mut rows = vec![vec![0.0; d]; self.m];
        let mut plus = vec![0.0; self.m];
        let mut minus = vec![0.0; self.m];
        for j in 0..d {
            let h = f64::EPSILON.cbrt() * z[j].abs().max(1.0);
            let z0 = z[j];
            z[j] = z0 + h;
            (self.map)(&z[..x.len()], &z[x.len()..], &mut plus);
            z[j] = z0 - h;
            (self.map)(&z[..x.len()], &z[x.len()..], &mut minus);
            z[j] = z0;
            for i in 0..self.m {
                rows[i][j] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        rows
    }
}

/// Force term of the kinetic equation.
#[derive(Debug, Clone)]
pub enum ForceField {
    Constant(Vec<f64>),
    Smooth(SmoothForce),
}

impl ForceField {
    pub fn constant(f: Vec<f64>) -> Result<Self> {
        if f.is_empty() || f.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("constant force must be a finite nonempty vector".into()));
        }
        Ok(ForceField::Constant(f))
    }

    pub fn velocity_dim(&self) -> usize {
        match self {
            ForceField::Constant(f) => f.len(),
            ForceField::Smooth(s) => s.velocity_dim(),
        }
    }

    /// Euclidean norm in the constant case.
    pub fn norm(&self) -> Option<f64> {
        match self {
            ForceField::Constant(f) => Some(norm(f)),
            ForceField::Smooth(_) => None,
        }
    }

    /// The constant vector, or an error for a non-constant force.
    pub fn as_constant(&self) -> Result<&[f64]> {
        match self {
            ForceField::Constant(f) => Ok(f),
            ForceField::Smooth(_) => Err(Error::Unsupported("operation requires a constant force".into())),
        }
    }

    /// The constant vector, additionally requiring a nonzero norm.
    pub fn nonzero_constant(&self) -> Result<&[f64]> {
        let f = self.as_constant()?;
        if norm(f) == 0.0 {
            return Err(Error::Unsupported("constant force must be nonzero".into()));
        }
        Ok(f)
    }

    /// `F(X, v)` for either kind.
    pub fn eval_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            ForceField::Constant(f) => out.copy_from_slice(f),
            ForceField::Smooth(s) => s.eval_into(x, v, out),
        }
    }
}

/// A unit vector `(σ_0, σ_1, …, σ_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Accepts a vector whose norm is one within the pinned tolerance.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let n = norm(&components);
        if components.len() < 2 || (n - 1.0).abs() > DIRECTION_NORM {
            return Err(Error::InvalidArgument(format!(
                "direction must be a unit vector of length ≥ 2, got norm {n}"
            )));
        }
        Ok(Direction(components))
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalize(components: &[f64]) -> Result<Self> {
        let n = norm(components);
        if n == 0.0 || !n.is_finite() || components.len() < 2 {
            return Err(Error::InvalidArgument("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Direction(components.iter().map(|x| x / n).collect()))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }
    pub fn sigma0(&self) -> f64 {
        self.0[0]
    }
    pub fn tilde(&self) -> &[f64] {
        &self.0[1..]
    }
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Enumerates multi-indices of total order `k` over `m` axes, lexicographically.
pub fn multi_indices(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == m {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for j in (0..=k).rev() {
            prefix.push(j);
            rec(m, k - j, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if m == 0 {
        return out;
    }
    rec(m, k, &mut Vec::new(), &mut out);
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// `D^k b(v)` with `D = F·∇_v` and `b = (1, a)`, written into `out` (length `N+1`).
pub fn directional_derivative_into(a: &dyn VelocityField, f: &[f64], v: &[f64], k: usize, out: &mut [f64]) -> Result<()> {
    let n = a.space_dim();
    let m = a.velocity_dim();
    if f.len() != m || v.len() != m || out.len() != n + 1 {
        return Err(Error::InvalidArgument("dimension mismatch in directional derivative".into()));
    }
    if k > a.smoothness() {
        return Err(Error::Capability { requested: k, available: a.smoothness() });
    }
    if k == 0 {
        out[0] = 1.0;
        a.eval_into(v, &mut out[1..]);
        return Ok(());
    }
    out[0] = 0.0;
    if m == 1 {
        a.deriv_into(v, &[k], &mut out[1..])?;
        let s = f[0].powi(k as i32);
        out[1..].iter_mut().for_each(|o| *o *= s);
        return Ok(());
    }
    out[1..].iter_mut().for_each(|o| *o = 0.0);
    let mut tmp = vec![0.0; n];
    for beta in multi_indices(m, k) {
        let mut w = factorial(k);
        for (&b, &fi) in beta.iter().zip(f) {
            w *= fi.powi(b as i32) / factorial(b);
        }
        if w == 0.0 {
            continue;
        }
        a.deriv_into(v, &beta, &mut tmp)?;
        for (o, t) in out[1..].iter_mut().zip(&tmp) {
            *o += w * t;
        }
    }
    Ok(())
}

/// `D^k b(v)` with `D = F·∇_v` and `b = (1, a)`.
pub fn directional_derivative(a: &dyn VelocityField, force: &ForceField, v: &[f64], k: usize) -> Result<Vec<f64>> {
    let f = force.as_constant()?;
    let mut out = vec![0.0; a.space_dim() + 1];
    directional_derivative_into(a, f, v, k, &mut out)?;
    Ok(out)
}

/// Rows `D^0 b(v), …, D^{count-1} b(v)`.
pub fn derivative_rows(a: &dyn VelocityField, f: &[f64], v: &[f64], count: usize) -> Result<Vec<Vec<f64>>> {
    (0..count)
        .map(|k| {
            let mut row = vec![0.0; a.space_dim() + 1];
            directional_derivative_into(a, f, v, k, &mut row)?;
            Ok(row)
        })
        .collect()
}

type PhaseFn = dyn Fn(f64, usize) -> f64 + Send + Sync;

/// A scalar phase `u ↦ φ(u)` with derivative access in `u`.
#[derive(Clone)]
pub struct PhaseFunction {
    deriv: Arc<PhaseFn>,
    smoothness: usize,
    domain: (f64, f64),
    label: String,
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseFunction")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl PhaseFunction {
    /// Phase given by a closure `(u, k) ↦ φ^{(k)}(u)`.
    pub fn new(
        domain: (f64, f64),
        smoothness: usize,
        label: impl Into<String>,
        deriv: impl Fn(f64, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PhaseFunction { deriv: Arc::new(deriv), smoothness, domain, label: label.into() }
    }

    /// Phase known only through values; derivatives by Richardson extrapolation.
    pub fn from_values(
        domain: (f64, f64),
        smoothness: usize,
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let map = move |x: &[f64], o: &mut [f64]| o[0] = f(x[0]);
        PhaseFunction::new(domain, smoothness, label, move |u, k| {
            let mut o = [0.0];
            richardson_derivative(&map, &[u], &[k], &mut o);
            o[0]
        })
    }

    /// Polynomial `Σ c_j u^j`.
    pub fn polynomial(coeffs: Vec<f64>, domain: (f64, f64)) -> Self {
        let label = format!("polynomial{coeffs:?}");
        PhaseFunction::new(domain, usize::MAX, label, move |u, k| {
            let mut acc = 0.0;
            for j in (k..coeffs.len()).rev() {
                acc = acc * u + coeffs[j] * falling(j as u32, k);
            }
            acc
        })
    }

    /// `scale · u^k`.
    pub fn monomial(k: usize, scale: f64, domain: (f64, f64)) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = scale;
        PhaseFunction::polynomial(c, domain)
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.deriv)(u, 0)
    }

    /// `φ^{(k)}(u)`; orders beyond the smoothness are a capability error.
    pub fn deriv(&self, u: f64, k: usize) -> Result<f64> {
        if k > self.smoothness {
            return Err(Error::Capability { requested: k, available: self.smoothness });
        }
        Ok((self.deriv)(u, k))
    }

    /// `φ^{(k)}(u)` without the smoothness check.
    pub fn deriv_unchecked(&self, u: f64, k: usize) -> f64 {
        (self.deriv)(u, k)
    }

    pub fn smoothness(&self) -> usize {
        self.smoothness
    }
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Pointwise sum of two phases on the intersection of their domains.
    pub fn add(&self, other: &PhaseFunction) -> PhaseFunction {
        let (p, q) = (self.deriv.clone(), other.deriv.clone());
        let domain = (self.domain.0.max(other.domain.0), self.domain.1.min(other.domain.1));
        PhaseFunction::new(
            domain,
            self.smoothness.min(other.smoothness),
            format!("{} + {}", self.label, other.label),
            move |u, k| p(u, k) + q(u, k),
        )
    }
}

/// `φ(v) = σ_0 + a(v)·σ̃` for a one-dimensional velocity field.
pub fn make_phase(a: &Field, d: &Direction) -> Result<PhaseFunction> {
    if a.velocity_dim() != 1 {
        return Err(Error::InvalidArgument("make_phase needs M = 1; use make_phase_on_line".into()));
    }
    let mut e1 = vec![0.0; 1];
    e1[0] = 1.0;
    make_phase_on_line(a, d, &[0.0], &e1)
}

/// `u ↦ σ_0 + a(base + u·dir)·σ̃`, the phase restricted to a line in velocity space.
pub fn make_phase_on_line(a: &Field, d: &Direction, base: &[f64], dir: &[f64]) -> Result<PhaseFunction> {
    let n = a.space_dim();
    let m = a.velocity_dim();
    if d.dim() != n + 1 {
        return Err(Error::InvalidArgument(format!("direction has {} components, expected {}", d.dim(), n + 1)));
    }
    if base.len() != m || dir.len() != m {
        return Err(Error::InvalidArgument("line base and direction must live in R^M".into()));
    }
    let field = a.clone();
    let sigma = d.components().to_vec();
    let base = base.to_vec();
    let dir = dir.to_vec();
    let label = format!("{} along {:?}", a.label(), sigma);
    Ok(PhaseFunction::new((f64::NEG_INFINITY, f64::INFINITY), a.smoothness(), label, move |u, k| {
        let mut buf = [0.0; STACK_DIM + 1];
        let mut heap;
        let row: &mut [f64] = if n < STACK_DIM {
            &mut buf[..n + 1]
        } else {
            heap = vec![0.0; n + 1];
            &mut heap
        };
        let mut vb = [0.0; STACK_DIM];
        let mut vheap;
        let v: &mut [f64] = if m <= STACK_DIM {
            &mut vb[..m]
        } else {
            vheap = vec![0.0; m];
            &mut vheap
        };
        for i in 0..m {
            v[i] = base[i] + u * dir[i];
        }
        match directional_derivative_into(&*field, &dir, v, k, row) {
            Ok(()) => dot(row, &sigma),
            Err(_) => f64::NAN,
        }
    }))
}

/// `σ_0 + a(v)·σ̃` at a point of `R^M`.
pub fn phase_value(a: &dyn VelocityField, sigma: &[f64], v: &[f64]) -> f64 {
    let n = a.space_dim();
    let mut buf = [0.0; STACK_DIM];
    if n <= STACK_DIM {
        a.eval_into(v, &mut buf[..n]);
        sigma[0] + dot(&buf[..n], &sigma[1..])
    } else {
        sigma[0] + dot(&a.eval(v), &sigma[1..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(n: usize) -> Field {
        catalog("polynomial-curve", n, 1).unwrap().0
    }

    #[test]
    fn directional_derivative_of_parabola_curve() {
        let a = curve(2);
        let f = ForceField::constant(vec![1.0]).unwrap();
        let d = directional_derivative(&*a, &f, &[0.5], 1).unwrap();
        assert_eq!(d, vec![0.0, 1.0, 1.0]);
        let d0 = directional_derivative(&*a, &f, &[0.5], 0).unwrap();
        assert_eq!(d0, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn circle_second_derivative() {
        let (a, f) = catalog("circle", 2, 1).unwrap();
        let d = directional_derivative(&*a, &f, &[0.0], 2).unwrap();
        assert!((d[0]).abs() < 1e-15 && (d[1] + 1.0).abs() < 1e-15 && d[2].abs() < 1e-15);
    }

    #[test]
    fn order_beyond_smoothness_is_capability_error() {
        let a = SampledField::new(1, 1, 2, "sin", |v, o| o[0] = v[0].sin());
        let f = ForceField::constant(vec![1.0]).unwrap();
        let e = directional_derivative(&a, &f, &[0.1], 3).unwrap_err();
        assert!(matches!(e, Error::Capability { requested: 3, available: 2 }));
    }

    #[test]
    fn phase_examples() {
        let a = catalog("identity", 1, 1).unwrap().0;
        let p = make_phase(&a, &Direction::new(vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(p.eval(0.37), 0.37);
        let a2 = curve(2);
        let p = make_phase(&a2, &Direction::new(vec![0.0, 0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(p.eval(0.3), 0.09);
        let d = Direction::normalize(&[-1.0, 0.0, 1.0]).unwrap();
        let p = make_phase(&a2, &d).unwrap();
        assert!(p.eval(1.0).abs() < 1e-16);
        assert!((p.eval(0.0) + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((p.deriv(0.5, 1).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn catalog_examples() {
        let a = curve(3);
        assert_eq!(a.eval(&[2.0]), vec![2.0, 4.0, 8.0]);
        let (c, _) = catalog("constant", 2, 1).unwrap();
        assert_eq!(c.eval(&[0.7]), vec![1.0, 0.0]);
        let (id, f) = catalog("identity", 2, 2).unwrap();
        assert_eq!(id.eval(&[0.3, -0.4]), vec![0.3, -0.4]);
        assert_eq!(f.as_constant().unwrap(), &[1.0, 0.0]);
        assert!(catalog("identity", 2, 1).is_err());
        assert!(catalog("spiral", 2, 1).is_err());
    }

    #[test]
    fn direction_requires_unit_norm() {
        assert!(Direction::new(vec![1.0, 1e-5]).is_err());
        assert!(Direction::new(vec![0.6, 0.8]).is_ok());
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices(3, 1).len(), 3);
        assert_eq!(multi_indices(3, 3).len(), 10);
    }

    #[test]
    fn rotated_field_permutation_derivatives() {
        let inner: Field = Arc::new(
            PolynomialField::new(
                1,
                2,
                vec![Monomial { component: 0, coef: 1.0, powers: vec![3, 1] }],
                "p",
            )
            .unwrap(),
        );
        // R maps (0, 2) to (2, 0): rows (0, 1), (-1, 0).
        let r = RotatedField::new(inner.clone(), vec![vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let vp = [0.4, -0.7];
        let v = [-vp[1], vp[0]];
        assert!((r.eval(&vp)[0] - inner.eval(&v)[0]).abs() < 1e-15);
        let exact = r.deriv(&vp, &[1, 1]).unwrap()[0];
        let map = |x: &[f64], o: &mut [f64]| r.eval_into(x, o);
        let mut fd = [0.0];
        richardson_derivative(&map, &vp, &[1, 1], &mut fd);
        assert!((exact - fd[0]).abs() < 1e-7 * exact.abs().max(1.0));
    }

    #[test]
    fn primitives_match_quadrature() {
        let a = curve(3);
        let mut p = vec![0.0; 3];
        assert!(a.axis0_primitive(&[0.8], &mut p));
        for j in 0..3 {
            let q = crate::quadrature::integrate_real(|u| a.eval(&[u])[j], 0.0, 0.8, 1e-14);
            assert!((p[j] - q).abs() < 1e-13);
        }
        let c = CircleField::new(1).unwrap();
        assert!(c.axis0_primitive(&[1.3], &mut p[..2]));
        assert!((p[1] - (1.0 - 1.3f64.cos())).abs() < 1e-15);
    }
}
