//! Smooth cutoff functions and the first-order-plus-correction Taylor
//! decomposition used by the propagation estimates.
//!
//! A class-ℰ function rises monotonically from 0 on (−∞, 0] to 1 on
//! [c−v, ∞) and has a smooth square root of its derivative. The canonical
//! member is the normalized primitive of the exponential bump
//! `exp(−1/(s(L−s)))` on (0, L), L = c−v.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{linear_fit, linspace, logspace, richardson_derivative, GaussRule};

/// Highest derivative order served by [`CutoffFunction::derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 8;

/// Points in the fixed verification grid over [−1, c−v+1].
pub const GRID_POINTS: usize = 10_000;

const PANELS: usize = 256;
const NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// f(λ) rises from 0 at λ ≤ 0 to 1 at λ ≥ c−v.
    Outward,
    /// Mirror image: 1 for λ ≤ v−c, 0 for λ ≥ 0.
    Inward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    /// Normalized primitive of a bump supported in [0, c−v].
    ClassE,
    /// The bump itself: h ≥ 0 with support in (0, c−v) and smooth √h.
    Admissible,
    /// Normalized primitive whose transition region extends past [0, c−v].
    Extended,
}

fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for t ≤ 0, 1 for t ≥ 1.
fn smooth_step(t: f64) -> f64 {
    let a = psi(t);
    let b = psi(1.0 - t);
    a / (a + b)
}

/// Smooth function equal to 1 on `inner` and vanishing outside `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

impl Plateau {
    pub fn new(inner: (f64, f64), outer: (f64, f64)) -> Result<Self> {
        if !(outer.0 < inner.0 && inner.0 <= inner.1 && inner.1 < outer.1) {
            return invalid(format!("plateau needs outer.0 < inner.0 <= inner.1 < outer.1, got {inner:?} in {outer:?}"));
        }
        Ok(Self { inner, outer })
    }

    pub fn value(&self, x: f64) -> f64 {
        let rise = smooth_step((x - self.outer.0) / (self.inner.0 - self.outer.0));
        let fall = smooth_step((self.outer.1 - x) / (self.outer.1 - self.inner.1));
        rise * fall
    }

    fn step(&self) -> f64 {
        0.05 * (self.outer.1 - self.outer.0)
    }

    /// l-th derivative by Richardson extrapolation.
    pub fn derivative(&self, l: usize, x: f64) -> f64 {
        richardson_derivative(&|s| self.value(s), l, x, self.step()).0
    }
}

/// Nonnegative density with a smooth square root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Profile {
    /// `exp(−1/((x−lo)(hi−x)))` on (lo, hi).
    Bump { lo: f64, hi: f64 },
    /// Square of a plateau function.
    PlateauSquared(Plateau),
}

impl Profile {
    pub fn support(&self) -> (f64, f64) {
        match self {
            Profile::Bump { lo, hi } => (*lo, *hi),
            Profile::PlateauSquared(p) => p.outer,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            Profile::Bump { .. } => {
                let r = self.sqrt_density(x);
                r * r
            }
            Profile::PlateauSquared(p) => p.value(x).powi(2),
        }
    }

    pub fn sqrt_density(&self, x: f64) -> f64 {
        match self {
            Profile::Bump { lo, hi } => {
                if x <= *lo || x >= *hi {
                    0.0
                } else {
                    (-0.5 / ((x - lo) * (hi - x))).exp()
                }
            }
            Profile::PlateauSquared(p) => p.value(x),
        }
    }

    /// k-th derivative of the density.
    pub fn density_derivative(&self, k: usize, x: f64) -> f64 {
        match self {
            Profile::Bump { lo, hi } => bump_derivatives(*lo, *hi, 1.0, x, k)[k],
            Profile::PlateauSquared(p) => {
                richardson_derivative(&|s| p.value(s).powi(2), k, x, p.step()).0
            }
        }
    }

    /// l-th derivative of the square root of the density.
    pub fn sqrt_density_derivative(&self, l: usize, x: f64) -> f64 {
        match self {
            Profile::Bump { lo, hi } => bump_derivatives(*lo, *hi, 0.5, x, l)[l],
            Profile::PlateauSquared(p) => p.derivative(l, x),
        }
    }
}

/// Derivatives 0..=kmax of g = exp(a·φ), φ(x) = −1/((x−lo)(hi−x)), from
/// g^(k) = Σ_j C(k−1, j) a φ^(j+1) g^(k−1−j) and the partial fractions
/// φ = −(1/L)(1/t + 1/(L−t)), t = x − lo.
fn bump_derivatives(lo: f64, hi: f64, a: f64, x: f64, kmax: usize) -> Vec<f64> {
    let mut g = vec![0.0; kmax + 1];
    if x <= lo || x >= hi {
        return g;
    }
    let l = hi - lo;
    let t = x - lo;
    g[0] = (-a / (t * (l - t))).exp();
    if g[0] == 0.0 {
        return g;
    }
    let phi = |j: usize| -> f64 {
        let fj = factorial(j);
        -(alt(j) * fj / t.powi(j as i32 + 1) + fj / (l - t).powi(j as i32 + 1)) / l
    };
    let dphi: Vec<f64> = (1..=kmax).map(phi).collect();
    for k in 1..=kmax {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for j in 0..k {
            acc += binom * a * dphi[j] * g[k - 1 - j];
            binom *= (k - 1 - j) as f64 / (j + 1) as f64;
        }
        g[k] = acc;
    }
    g
}

/// A member of class ℰ (or its mirror), an admissible bump, or an extended
/// companion cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffFunction {
    c: f64,
    v: f64,
    kind: CutoffKind,
    direction: Direction,
    profile: Profile,
    /// Cumulative integral of the density at panel boundaries.
    cumulative: Vec<f64>,
    norm: f64,
    rule: GaussRule,
}

fn check_velocities(c: f64, v: f64) -> Result<()> {
    if !(c.is_finite() && v.is_finite()) {
        return invalid("cutoff velocities must be finite");
    }
    if c <= v {
        return invalid(format!("class-E cutoff needs c > v, got c = {c}, v = {v}"));
    }
    Ok(())
}

impl CutoffFunction {
    /// Canonical class-ℰ member for velocities c > v.
    pub fn class_e(c: f64, v: f64) -> Result<Self> {
        check_velocities(c, v)?;
        Self::from_profile(c, v, Profile::Bump { lo: 0.0, hi: c - v }, CutoffKind::ClassE)
    }

    /// Admissible bump supported on (lo, hi) ⊆ (0, c−v).
    pub fn admissible(c: f64, v: f64, lo: f64, hi: f64) -> Result<Self> {
        check_velocities(c, v)?;
        if !(0.0 <= lo && lo < hi && hi <= c - v) {
            return invalid(format!("admissible support ({lo}, {hi}) must lie in (0, {})", c - v));
        }
        Self::from_profile(c, v, Profile::Bump { lo, hi }, CutoffKind::Admissible)
    }

    /// Normalized primitive of an arbitrary profile. The kind is `ClassE`
    /// when the profile support sits inside [0, c−v] and `Extended` otherwise.
    pub fn from_density(c: f64, v: f64, profile: Profile) -> Result<Self> {
        check_velocities(c, v)?;
        let (lo, hi) = profile.support();
        let kind = if lo >= 0.0 && hi <= c - v { CutoffKind::ClassE } else { CutoffKind::Extended };
        Self::from_profile(c, v, profile, kind)
    }

    fn from_profile(c: f64, v: f64, profile: Profile, kind: CutoffKind) -> Result<Self> {
        let (lo, hi) = profile.support();
        if !(lo < hi) {
            return invalid(format!("empty profile support ({lo}, {hi})"));
        }
        let rule = GaussRule::new(NODES);
        let width = (hi - lo) / PANELS as f64;
        let mut cumulative = Vec::with_capacity(PANELS + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for p in 0..PANELS {
            let a = lo + p as f64 * width;
            acc += rule.integrate(|x| profile.density(x), a, a + width);
            cumulative.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return invalid(format!("profile on ({lo}, {hi}) has no usable mass"));
        }
        Ok(Self { c, v, kind, direction: Direction::Outward, profile, cumulative, norm: acc, rule })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Transition width c − v.
    pub fn width(&self) -> f64 {
        self.c - self.v
    }

    pub fn kind(&self) -> CutoffKind {
        self.kind
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Total mass of the underlying density.
    pub fn mass(&self) -> f64 {
        self.norm
    }

    pub fn is_class_e(&self) -> bool {
        self.kind == CutoffKind::ClassE
    }

    /// The same function with the opposite direction flag.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.direction = match self.direction {
            Direction::Outward => Direction::Inward,
            Direction::Inward => Direction::Outward,
        };
        out
    }

    /// Primitive of a (non-cumulative) admissible bump, normalized to ℰ.
    pub fn integrate(&self) -> Result<Self> {
        match self.kind {
            CutoffKind::Admissible => {
                let mut out = self.clone();
                out.kind = CutoffKind::ClassE;
                Ok(out)
            }
            _ => invalid("only admissible bumps can be integrated into class E"),
        }
    }

    fn local(&self, lambda: f64) -> f64 {
        match self.direction {
            Direction::Outward => lambda,
            Direction::Inward => -lambda,
        }
    }

    fn sign(&self, k: usize) -> f64 {
        if self.direction == Direction::Inward && k % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    fn primitive(&self, x: f64) -> f64 {
        let (lo, hi) = self.profile.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let width = (hi - lo) / PANELS as f64;
        let panel = (((x - lo) / width) as usize).min(PANELS - 1);
        let a = lo + panel as f64 * width;
        let partial = self.rule.integrate(|s| self.profile.density(s), a, x);
        ((self.cumulative[panel] + partial) / self.norm).clamp(0.0, 1.0)
    }

    /// f(λ). For an admissible bump this is h(λ) itself.
    pub fn value(&self, lambda: f64) -> f64 {
        let x = self.local(lambda);
        match self.kind {
            CutoffKind::Admissible => self.profile.density(x),
            _ => self.primitive(x),
        }
    }

    /// f′(λ).
    pub fn prime(&self, lambda: f64) -> f64 {
        match self.kind {
            CutoffKind::Admissible => self.derivative(1, lambda).unwrap_or(f64::NAN),
            _ => self.sign(1) * self.profile.density(self.local(lambda)) / self.norm,
        }
    }

    /// √|f′(λ)|; for an admissible bump, √h(λ).
    pub fn sqrt_prime(&self, lambda: f64) -> f64 {
        let x = self.local(lambda);
        match self.kind {
            CutoffKind::Admissible => self.profile.sqrt_density(x),
            _ => self.profile.sqrt_density(x) / self.norm.sqrt(),
        }
    }

    /// k-th derivative: exact recursion for bumps, Richardson-extrapolated
    /// central differences for plateau profiles.
    pub fn derivative(&self, k: usize, lambda: f64) -> Result<f64> {
        if k > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedOrder(k));
        }
        let x = self.local(lambda);
        let d = match (self.kind, k) {
            (_, 0) => return Ok(self.value(lambda)),
            (CutoffKind::Admissible, _) => self.profile.density_derivative(k, x),
            _ => self.profile.density_derivative(k - 1, x) / self.norm,
        };
        Ok(self.sign(k) * d)
    }

    /// l-th derivative of √|f′| (of √h for an admissible bump).
    pub fn sqrt_prime_derivative(&self, l: usize, lambda: f64) -> Result<f64> {
        if l > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedOrder(l));
        }
        let scale = match self.kind {
            CutoffKind::Admissible => 1.0,
            _ => self.norm.sqrt().recip(),
        };
        Ok(self.sign(l) * scale * self.profile.sqrt_density_derivative(l, self.local(lambda)))
    }

    /// The fixed verification grid λ ∈ [−1, c−v+1] (mirrored for `Inward`).
    pub fn grid(&self, points: usize) -> Vec<f64> {
        let g = linspace(-1.0, self.width() + 1.0, points);
        match self.direction {
            Direction::Outward => g,
            Direction::Inward => g.into_iter().rev().map(|x| -x).collect(),
        }
    }

    /// Worst violation of the class-ℰ invariants on a grid: values outside
    /// [0, 1], nonzero values left of 0, values ≠ 1 right of c−v, and
    /// decreases between consecutive points. Zero means all hold.
    pub fn class_e_violation(&self, points: usize) -> f64 {
        let grid = linspace(-1.0, self.width() + 1.0, points);
        let vals: Vec<f64> = grid.iter().map(|&x| self.value(self.local(x))).collect();
        let mut worst: f64 = 0.0;
        for (i, (&x, &f)) in grid.iter().zip(&vals).enumerate() {
            worst = worst.max(-f).max(f - 1.0);
            if x <= 0.0 {
                worst = worst.max(f.abs());
            }
            if x >= self.width() {
                worst = worst.max((f - 1.0).abs());
            }
            if i > 0 {
                worst = worst.max(vals[i - 1] - f);
            }
        }
        worst
    }
}

/// Canonical class-ℰ cutoff.
pub fn make_class_e(c: f64, v: f64) -> Result<CutoffFunction> {
    CutoffFunction::class_e(c, v)
}

/// Scaled coordinate |x|_{ts} = (|x| − a − vt)/s, or for `Inward`
/// |x|′_{ts} = (|x| − a + vt)/s.
pub fn scaled_argument(x_abs: f64, a: f64, v: f64, t: f64, s: f64, direction: Direction) -> Result<f64> {
    if !(s > 0.0) {
        return invalid(format!("scale s must be positive, got {s}"));
    }
    Ok(match direction {
        Direction::Outward => (x_abs - a - v * t) / s,
        Direction::Inward => (x_abs - a + v * t) / s,
    })
}

pub fn derivative(f: &CutoffFunction, k: usize, x: f64) -> Result<f64> {
    f.derivative(k, x)
}

/// Max over the grid of |Δ^k g| / h^k for k = 1..=max_order, where Δ is the
/// forward difference with the grid step h.
pub fn divided_difference_bounds(g: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize, max_order: usize) -> Vec<f64> {
    let xs = linspace(lo, hi, points);
    let h = (hi - lo) / (points - 1) as f64;
    let mut diffs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let mut out = Vec::with_capacity(max_order);
    for _ in 0..max_order {
        diffs = diffs.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        out.push(diffs.iter().fold(0.0f64, |m, d| m.max(d.abs())));
    }
    out
}

/// Smallest C with Σ fᵢ ≤ C·f₃ on the grid. `None` when some point has
/// Σ fᵢ > 0 but f₃ = 0.
pub fn closure_constant(members: &[&CutoffFunction], target: &CutoffFunction, grid: &[f64]) -> Option<f64> {
    let mut c: f64 = 0.0;
    for &x in grid {
        let sum: f64 = members.iter().map(|f| f.value(x)).sum();
        let t = target.value(x);
        if t > 0.0 {
            c = c.max(sum / t);
        } else if sum > 0.0 {
            return None;
        }
    }
    Some(c)
}

/// Decomposition f(x) − f(y) = (x−y)u(x)u(y) + Σ_{k=2}^{n} (x−y)^k h_k(x,y) + r_n
/// with h_k(x,y) = v_k(x)w_k(x)v_k(y) and r_n = O(|x−y|^{n+1}).
#[derive(Debug, Clone)]
pub struct TaylorDecomposition {
    order: usize,
    f: CutoffFunction,
    plateaus: Vec<Plateau>,
    companions: Vec<CutoffFunction>,
    constants: Vec<f64>,
    remainder_constant: f64,
}

/// Decomposition ingredients tabulated on a set of points.
#[derive(Debug, Clone)]
pub struct TaylorSamples {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub u: Vec<f64>,
    /// `v[k-2][i]` = v_k(x_i).
    pub v: Vec<Vec<f64>>,
    /// `w[k-2][i]` = w_k(x_i).
    pub w: Vec<Vec<f64>>,
}

impl TaylorSamples {
    pub fn h(&self, k: usize, i: usize, j: usize) -> f64 {
        self.v[k - 2][i] * self.w[k - 2][i] * self.v[k - 2][j]
    }

    pub fn residual(&self, i: usize, j: usize) -> f64 {
        let d = self.x[i] - self.x[j];
        let mut r = self.f[i] - self.f[j] - d * self.u[i] * self.u[j];
        for k in 2..self.v.len() + 2 {
            r -= d.powi(k as i32) * self.h(k, i, j);
        }
        r
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn alt(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Points used to fit the remainder constant.
const REMAINDER_GRID: usize = 400;

impl TaylorDecomposition {
    pub fn new(f: &CutoffFunction, n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("Taylor order must be at least 1");
        }
        if n > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedOrder(n));
        }
        if f.kind() == CutoffKind::Admissible || f.direction() == Direction::Inward {
            return invalid("Taylor decomposition needs an outward class-E cutoff");
        }
        let (lo, hi) = f.profile().support();
        // v_k must equal 1 on supp w_k ⊆ [lo, hi]; a margin keeps its
        // derivatives from touching that set.
        let m = 0.25 * (hi - lo);
        let plateau = Plateau::new((lo - m, hi + m), (lo - 2.0 * m, hi + 2.0 * m))?;
        let plateaus = vec![plateau; n.saturating_sub(1)];
        let companions = plateaus
            .iter()
            .map(|p| CutoffFunction::from_density(f.c(), f.v(), Profile::PlateauSquared(*p)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self {
            order: n,
            f: f.clone(),
            plateaus,
            companions,
            constants: Vec::new(),
            remainder_constant: 0.0,
        };
        let grid = f.grid(GRID_POINTS);
        let samples = out.tabulate(&grid)?;
        out.constants = (2..=n)
            .map(|k| {
                let mass = out.companions[k - 2].mass();
                let sup = samples.v[k - 2]
                    .iter()
                    .zip(&samples.w[k - 2])
                    .fold(0.0f64, |m, (v, w)| m.max((v * w).abs()));
                sup * mass
            })
            .collect();
        let coarse = out.tabulate(&linspace(-1.0, f.width() + 1.0, REMAINDER_GRID))?;
        out.remainder_constant = (0..REMAINDER_GRID)
            .into_par_iter()
            .map(|i| {
                (0..REMAINDER_GRID)
                    .filter(|&j| j != i)
                    .map(|j| coarse.residual(i, j).abs() / (coarse.x[i] - coarse.x[j]).abs().powi(n as i32 + 1))
                    .fold(0.0f64, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        Ok(out)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn function(&self) -> &CutoffFunction {
        &self.f
    }

    pub fn u(&self, x: f64) -> f64 {
        self.f.sqrt_prime(x)
    }

    pub fn v(&self, k: usize, x: f64) -> f64 {
        self.plateaus[k - 2].value(x)
    }

    pub fn plateau(&self, k: usize) -> &Plateau {
        &self.plateaus[k - 2]
    }

    /// w_2(x), …, w_n(x).
    pub fn w_all(&self, x: f64) -> Result<Vec<f64>> {
        let n = self.order;
        let mut w = Vec::with_capacity(n.saturating_sub(1));
        if n < 2 {
            return Ok(w);
        }
        let u = self.f.sqrt_prime(x);
        let mut u_der = vec![u];
        for l in 1..n {
            u_der.push(self.f.sqrt_prime_derivative(l, x)?);
        }
        for k in 2..=n {
            let mut wk = alt(k + 1) * (self.f.derivative(k, x)? / factorial(k) - u * u_der[k - 1] / factorial(k - 1));
            for j in 2..k {
                let p = &self.plateaus[j - 2];
                let vj = p.value(x);
                let wj = w[j - 2];
                if vj * wj != 0.0 {
                    let l = k - j;
                    let dv = p.derivative(l, x);
                    wk += vj * wj * alt(l + 1) * dv / factorial(l);
                }
            }
            w.push(wk);
        }
        Ok(w)
    }

    pub fn w(&self, k: usize, x: f64) -> Result<f64> {
        Ok(self.w_all(x)?[k - 2])
    }

    pub fn h(&self, k: usize, x: f64, y: f64) -> Result<f64> {
        Ok(self.v(k, x) * self.w(k, x)? * self.v(k, y))
    }

    /// r_n(x, y).
    pub fn residual(&self, x: f64, y: f64) -> Result<f64> {
        let d = x - y;
        let mut r = self.f.value(x) - self.f.value(y) - d * self.u(x) * self.u(y);
        for (i, wk) in self.w_all(x)?.into_iter().enumerate() {
            let k = i + 2;
            r -= d.powi(k as i32) * self.v(k, x) * wk * self.v(k, y);
        }
        Ok(r)
    }

    /// Companion f̃_k with ũ_k = √f̃_k′ proportional to v_k.
    pub fn companion(&self, k: usize) -> &CutoffFunction {
        &self.companions[k - 2]
    }

    pub fn companions(&self) -> &[CutoffFunction] {
        &self.companions
    }

    /// C_{f,k} with |h_k(x,y)| ≤ C_{f,k} ũ_k(x) ũ_k(y) on the grid.
    pub fn constant(&self, k: usize) -> f64 {
        self.constants[k - 2]
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    /// Fitted C with |r_n(x,y)| ≤ C|x−y|^{n+1} over grid pairs.
    pub fn remainder_constant(&self) -> f64 {
        self.remainder_constant
    }

    pub fn tabulate(&self, xs: &[f64]) -> Result<TaylorSamples> {
        let rows: Vec<(f64, f64, Vec<f64>)> = xs
            .par_iter()
            .map(|&x| Ok((self.f.value(x), self.u(x), self.w_all(x)?)))
            .collect::<Result<_>>()?;
        let kmax = self.order.saturating_sub(1);
        let mut s = TaylorSamples {
            x: xs.to_vec(),
            f: Vec::with_capacity(xs.len()),
            u: Vec::with_capacity(xs.len()),
            v: (0..kmax).map(|i| xs.iter().map(|&x| self.plateaus[i].value(x)).collect()).collect(),
            w: vec![Vec::with_capacity(xs.len()); kmax],
        };
        for (f, u, w) in rows {
            s.f.push(f);
            s.u.push(u);
            for (col, wk) in s.w.iter_mut().zip(w) {
                col.push(wk);
            }
        }
        Ok(s)
    }

    /// Log-log slope of max_x |r_n(x, x+δ)| against δ.
    pub fn residual_exponent(&self, xs: &[f64], deltas: &[f64]) -> Result<f64> {
        let maxima: Vec<f64> = deltas
            .par_iter()
            .map(|&d| {
                xs.iter()
                    .map(|&x| self.residual(x, x + d).map(f64::abs))
                    .try_fold(0.0f64, |m, r| r.map(|r| m.max(r)))
            })
            .collect::<Result<_>>()?;
        if maxima.iter().any(|&m| m <= 0.0) {
            return Err(Error::InsufficientData("residual vanished identically at some step".into()));
        }
        let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
        let ly: Vec<f64> = maxima.iter().map(|m| m.ln()).collect();
        Ok(linear_fit(&lx, &ly)?.0)
    }

    /// Residual exponent over the standard sampling: 401 points spanning
    /// [−0.1, 1.1]·(c−v) and 12 log-spaced steps in [10⁻³, 0.2(c−v)].
    pub fn default_residual_exponent(&self) -> Result<f64> {
        let l = self.f.width();
        let xs = linspace(-0.1 * l, 1.1 * l, 401);
        let deltas = logspace(1e-3, 0.2 * l, 12);
        self.residual_exponent(&xs, &deltas)
    }

    /// max over grid pairs of |h_k(x,y)| / (C_{f,k} ũ_k(x) ũ_k(y)). Pairs
    /// where the bound vanishes count as infinite unless h_k does too.
    pub fn pair_bound_ratio(&self, k: usize, xs: &[f64]) -> Result<f64> {
        if k < 2 || k > self.order {
            return invalid(format!("no h_{k} in an order-{} decomposition", self.order));
        }
        let s = self.tabulate(xs)?;
        let comp = self.companion(k);
        let ut: Vec<f64> = xs.iter().map(|&x| comp.sqrt_prime(x)).collect();
        let c = self.constant(k);
        Ok((0..xs.len())
            .into_par_iter()
            .map(|i| {
                let mut worst = 0.0f64;
                for j in 0..xs.len() {
                    let h = s.h(k, i, j).abs();
                    let bound = c * ut[i] * ut[j];
                    if bound > 0.0 {
                        worst = worst.max(h / bound);
                    } else if h > 0.0 {
                        return f64::INFINITY;
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max))
    }

    /// max over distinct grid pairs of |r_n(x,y)| / (C_r |x−y|^{n+1}).
    pub fn remainder_ratio(&self, xs: &[f64]) -> Result<f64> {
        let s = self.tabulate(xs)?;
        let p = self.order as i32 + 1;
        let c = self.remainder_constant;
        Ok((0..xs.len())
            .into_par_iter()
            .map(|i| {
                (0..xs.len())
                    .filter(|&j| xs[j] != xs[i])
                    .map(|j| s.residual(i, j).abs() / (c * (xs[i] - xs[j]).abs().powi(p)))
                    .fold(0.0f64, f64::max)
            })
            .reduce(|| 0.0, f64::max))
    }
}

pub fn taylor_decompose(f: &CutoffFunction, n: usize) -> Result<TaylorDecomposition> {
    TaylorDecomposition::new(f, n)
}
