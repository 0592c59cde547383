//! Time evolution of states and observables.
//!
//! Conventions: ψ_t = e^{−itH} φ, ⟨A⟩_t = ⟨ψ_t, A ψ_t⟩, α_t(A) = e^{−itH} A e^{itH},
//! and the Heisenberg derivative DΦ(t) = i[H, Φ(t)] + ∂_tΦ(t), so that
//! d/dt ⟨Φ(t)⟩_t = ⟨DΦ(t)⟩_t.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::cutoffs::{scaled_argument, CutoffFunction, Direction};
use crate::error::{invalid, Error, Result};
use crate::fock::{FockBasis, FockState};
use crate::numerics::adaptive_simpson_with;
use crate::operators::dgamma;
use crate::sparse::{commutator, inner, norm, SparseOperator, C64};

/// Largest dimension served by the cached eigendecomposition.
pub const DENSE_LIMIT: usize = 4000;

/// Target local error of one Krylov step.
pub const KRYLOV_TOL: f64 = 1e-9;

const KRYLOV_MAX_DIM: usize = 40;
const HERMITICITY_TOL: f64 = 1e-12;
/// Largest tolerated |Im⟨A⟩| for Hermitian A, relative to the operator scale.
pub const IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    norm: f64,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return invalid("state amplitudes must be finite");
        }
        let norm = norm(&amplitudes);
        Ok(Self { amplitudes, norm })
    }

    /// Normalized basis vector for a Fock configuration.
    pub fn basis_state(basis: &FockBasis, state: &FockState) -> Result<Self> {
        let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
        amps[basis.rank(state)?] = C64::new(1.0, 0.0);
        Self::new(amps)
    }

    /// Normalized superposition Σ cᵢ |nᵢ⟩.
    pub fn superposition(basis: &FockBasis, terms: &[(C64, FockState)]) -> Result<Self> {
        let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
        for (c, s) in terms {
            amps[basis.rank(s)?] += c;
        }
        Self::new(amps)?.normalized()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn normalized(&self) -> Result<Self> {
        if !(self.norm > 0.0) {
            return invalid("cannot normalize the zero vector");
        }
        let inv = 1.0 / self.norm;
        Ok(Self { amplitudes: self.amplitudes.iter().map(|a| a * inv).collect(), norm: 1.0 })
    }

    pub fn inner(&self, other: &Self) -> C64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    pub fn apply(&self, op: &SparseOperator) -> Result<Self> {
        check_dim(op, self.dim())?;
        Self::new(op.matvec(&self.amplitudes))
    }

    /// ⟨ψ, A ψ⟩ for Hermitian A; errors if the imaginary part is not negligible.
    pub fn expectation(&self, op: &SparseOperator) -> Result<f64> {
        check_dim(op, self.dim())?;
        let e = op.expectation(&self.amplitudes);
        let scale = op.max_abs().max(1.0) * self.norm.powi(2).max(1.0);
        if e.im.abs() > IMAG_TOL * scale {
            return invalid(format!("expectation has imaginary part {:e}; observable not Hermitian", e.im));
        }
        Ok(e.re)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }
}

fn check_dim(op: &SparseOperator, dim: usize) -> Result<()> {
    if op.rows() != dim || op.cols() != dim {
        return invalid(format!("operator is {}x{} but state has dimension {dim}", op.rows(), op.cols()));
    }
    Ok(())
}

/// Sampled expectation values ⟨Φ(t)⟩_t.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub observable: String,
    pub state: String,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return invalid("trajectory times and values differ in length");
        }
        check_increasing(&times)?;
        Ok(Self { times, values, observable: String::new(), state: String::new() })
    }

    pub fn with_labels(mut self, observable: impl Into<String>, state: impl Into<String>) -> Self {
        self.observable = observable.into();
        self.state = state.into();
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(s, "{t:.16e},{v:.16e}");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

fn check_increasing(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("times must be finite and strictly increasing");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Dense eigendecomposition up to [`DENSE_LIMIT`], Krylov above.
    Auto,
    Dense,
    Krylov,
}

#[derive(Debug, Clone)]
enum Eigen {
    Real { values: DVector<f64>, vectors: DMatrix<f64> },
    Complex { values: DVector<f64>, vectors: DMatrix<C64> },
}

/// e^{−itH} for a fixed Hermitian H.
#[derive(Debug, Clone)]
pub struct Propagator {
    h: SparseOperator,
    eigen: Option<Eigen>,
}

impl Propagator {
    pub fn new(h: &SparseOperator) -> Result<Self> {
        Self::with_backend(h, Backend::Auto)
    }

    pub fn with_backend(h: &SparseOperator, backend: Backend) -> Result<Self> {
        if h.rows() != h.cols() {
            return invalid("Hamiltonian must be square");
        }
        let scale = h.max_abs().max(1.0);
        if h.hermiticity_defect() > HERMITICITY_TOL * scale {
            return invalid(format!("Hamiltonian is not Hermitian (defect {:e})", h.hermiticity_defect()));
        }
        let dense = match backend {
            Backend::Auto => h.dim() <= DENSE_LIMIT,
            Backend::Dense => {
                if h.dim() > DENSE_LIMIT {
                    return Err(Error::ResourceLimit(format!(
                        "dense propagation limited to dimension {DENSE_LIMIT}, got {}",
                        h.dim()
                    )));
                }
                true
            }
            Backend::Krylov => false,
        };
        let eigen = dense.then(|| diagonalize(h));
        Ok(Self { h: h.clone(), eigen })
    }

    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.h
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn is_dense(&self) -> bool {
        self.eigen.is_some()
    }

    /// Eigenvalues when the dense backend is active.
    pub fn spectrum(&self) -> Option<&[f64]> {
        self.eigen.as_ref().map(|e| match e {
            Eigen::Real { values, .. } | Eigen::Complex { values, .. } => values.as_slice(),
        })
    }

    /// e^{−itH} φ.
    pub fn propagate(&self, phi: &StateVector, t: f64) -> Result<StateVector> {
        if phi.dim() != self.dim() {
            return invalid(format!("state dimension {} does not match Hamiltonian {}", phi.dim(), self.dim()));
        }
        if !t.is_finite() {
            return invalid("propagation time must be finite");
        }
        if t == 0.0 {
            return Ok(phi.clone());
        }
        let out = match &self.eigen {
            Some(e) => propagate_dense(e, phi.amplitudes(), t),
            None => propagate_krylov(&self.h, phi.amplitudes(), t)?,
        };
        StateVector::new(out)
    }

    /// Propagate one state to several times in parallel, preserving order.
    pub fn propagate_many(&self, phi: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
        times.par_iter().map(|&t| self.propagate(phi, t)).collect()
    }

    /// Dense e^{−itH}.
    pub fn unitary(&self, t: f64) -> Result<DMatrix<C64>> {
        let e = self.eigen.as_ref().ok_or_else(|| {
            Error::ResourceLimit(format!("dense unitary needs dimension <= {DENSE_LIMIT}"))
        })?;
        let phases = |values: &DVector<f64>| values.map(|x| C64::from_polar(1.0, -x * t));
        Ok(match e {
            Eigen::Real { values, vectors } => {
                let v = vectors.map(|x| C64::new(x, 0.0));
                let p = phases(values);
                let mut scaled = v.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= p[j];
                }
                scaled * v.transpose()
            }
            Eigen::Complex { values, vectors } => {
                let p = phases(values);
                let mut scaled = vectors.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= p[j];
                }
                scaled * vectors.adjoint()
            }
        })
    }

    /// α_t(A) = e^{−itH} A e^{itH}.
    pub fn heisenberg(&self, a: &SparseOperator, t: f64) -> Result<SparseOperator> {
        check_dim(a, self.dim())?;
        let u = self.unitary(t)?;
        Ok(SparseOperator::from_dense(&(&u * a.to_dense() * u.adjoint())))
    }
}

fn diagonalize(h: &SparseOperator) -> Eigen {
    let n = h.dim();
    if h.is_real() {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (i, j, v) in h.entries() {
            m[(i, j)] = v.re;
        }
        let e = SymmetricEigen::new(m);
        Eigen::Real { values: e.eigenvalues, vectors: e.eigenvectors }
    } else {
        let e = SymmetricEigen::new(h.to_dense());
        Eigen::Complex { values: e.eigenvalues, vectors: e.eigenvectors }
    }
}

fn propagate_dense(e: &Eigen, phi: &[C64], t: f64) -> Vec<C64> {
    let x = DVector::from_column_slice(phi);
    match e {
        Eigen::Real { values, vectors } => {
            let re = x.map(|z| z.re);
            let im = x.map(|z| z.im);
            let cr = vectors.tr_mul(&re);
            let ci = vectors.tr_mul(&im);
            let (mut yr, mut yi) = (cr.clone(), ci.clone());
            for k in 0..values.len() {
                let p = C64::from_polar(1.0, -values[k] * t);
                let c = C64::new(cr[k], ci[k]) * p;
                yr[k] = c.re;
                yi[k] = c.im;
            }
            let or = vectors * yr;
            let oi = vectors * yi;
            or.iter().zip(oi.iter()).map(|(&a, &b)| C64::new(a, b)).collect()
        }
        Eigen::Complex { values, vectors } => {
            let mut c = vectors.ad_mul(&x);
            for k in 0..values.len() {
                c[k] *= C64::from_polar(1.0, -values[k] * t);
            }
            (vectors * c).iter().copied().collect()
        }
    }
}

/// One Lanczos approximation of e^{−iτH}v. Returns the vector and an
/// a-posteriori error estimate.
fn krylov_step(h: &SparseOperator, v: &[C64], tau: f64) -> (Vec<C64>, f64) {
    let beta0 = norm(v);
    let n = v.len();
    if beta0 == 0.0 {
        return (v.to_vec(), 0.0);
    }
    let m_max = KRYLOV_MAX_DIM.min(n);
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|a| a / beta0).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); n];
    let scale = h.max_abs().max(1e-300);
    let mut breakdown = false;
    for j in 0..m_max {
        h.matvec_into(&basis[j], &mut w);
        let a = inner(&basis[j], &w).re;
        alpha.push(a);
        for (wi, bi) in w.iter_mut().zip(&basis[j]) {
            *wi -= bi * a;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, bi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= bi * b;
            }
        }
        for _ in 0..2 {
            for q in &basis {
                let c = inner(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= qi * c;
                }
            }
        }
        let b = norm(&w);
        beta.push(b);
        if b <= 1e-13 * scale || j + 1 == n {
            breakdown = true;
            break;
        }
        if j + 1 < m_max {
            basis.push(w.iter().map(|x| x / b).collect());
        }
    }
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let e = SymmetricEigen::new(t);
    let mut y = vec![C64::new(0.0, 0.0); m];
    for k in 0..m {
        let c = e.eigenvectors[(0, k)] * C64::from_polar(1.0, -e.eigenvalues[k] * tau);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += e.eigenvectors[(i, k)] * c;
        }
    }
    let err = if breakdown { 0.0 } else { beta0 * beta[m - 1] * y[m - 1].norm() };
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (q, &c) in basis.iter().zip(&y) {
        for (o, qi) in out.iter_mut().zip(q) {
            *o += qi * c * beta0;
        }
    }
    (out, err)
}

fn propagate_krylov(h: &SparseOperator, phi: &[C64], t: f64) -> Result<Vec<C64>> {
    let mut state = phi.to_vec();
    let mut done = 0.0;
    let total = t.abs();
    let sign = t.signum();
    let mut tau = total;
    let mut steps = 0usize;
    while done < total {
        let step = tau.min(total - done);
        let (next, err) = krylov_step(h, &state, sign * step);
        if err <= KRYLOV_TOL || step < 1e-12 * total.max(1.0) {
            state = next;
            done += step;
            if err < 0.1 * KRYLOV_TOL {
                tau = step * 1.5;
            }
        } else {
            tau = step * 0.5;
        }
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::ResourceLimit("Krylov stepping did not converge".into()));
        }
    }
    Ok(state)
}

pub fn propagate(h: &SparseOperator, phi: &StateVector, t: f64) -> Result<StateVector> {
    Propagator::new(h)?.propagate(phi, t)
}

pub fn heisenberg(a: &SparseOperator, h: &SparseOperator, t: f64) -> Result<SparseOperator> {
    check_dim(a, h.dim())?;
    Propagator::with_backend(h, Backend::Dense)?.heisenberg(a, t)
}

/// Observable family Φ(t) with an analytic time derivative.
pub trait TimeDependentObservable: Sync {
    fn at(&self, t: f64) -> Result<SparseOperator>;

    /// ∂_tΦ(t).
    fn time_derivative(&self, t: f64) -> Result<SparseOperator>;

    fn label(&self) -> String {
        String::from("observable")
    }
}

/// A time-independent observable.
#[derive(Debug, Clone)]
pub struct Static(pub SparseOperator);

impl TimeDependentObservable for Static {
    fn at(&self, _t: f64) -> Result<SparseOperator> {
        Ok(self.0.clone())
    }

    fn time_derivative(&self, _t: f64) -> Result<SparseOperator> {
        Ok(SparseOperator::zeros(self.0.dim()))
    }

    fn label(&self) -> String {
        String::from("static")
    }
}

/// Φ_s(t) = dΓ(f(|x|_{ts})): second quantization of a cutoff evaluated at
/// the scaled distance of each site. The cutoff's direction selects the
/// outward argument (|x| − a − vt)/s or the inward one (|x| − a + vt)/s.
#[derive(Debug, Clone)]
pub struct PropagationObservable<'a> {
    basis: &'a FockBasis,
    radii: Vec<f64>,
    cutoff: CutoffFunction,
    a: f64,
    v: f64,
    s: f64,
}

impl<'a> PropagationObservable<'a> {
    pub fn new(basis: &'a FockBasis, radii: Vec<f64>, cutoff: CutoffFunction, a: f64, s: f64) -> Result<Self> {
        if radii.len() != basis.n_sites() {
            return invalid(format!("{} radii for {} sites", radii.len(), basis.n_sites()));
        }
        if !(s > 0.0) {
            return invalid(format!("scale s must be positive, got {s}"));
        }
        let v = cutoff.v();
        Ok(Self { basis, radii, cutoff, a, v, s })
    }

    pub fn cutoff(&self) -> &CutoffFunction {
        &self.cutoff
    }

    fn argument(&self, r: f64, t: f64) -> Result<f64> {
        scaled_argument(r, self.a, self.v, t, self.s, self.cutoff.direction())
    }

    /// f(|x|_{ts}) per site.
    pub fn weights(&self, t: f64) -> Result<Vec<f64>> {
        self.radii.iter().map(|&r| Ok(self.cutoff.value(self.argument(r, t)?))).collect()
    }

    /// ∂_t f(|x|_{ts}) per site.
    pub fn weight_rates(&self, t: f64) -> Result<Vec<f64>> {
        let rate = match self.cutoff.direction() {
            Direction::Outward => -self.v / self.s,
            Direction::Inward => self.v / self.s,
        };
        self.radii.iter().map(|&r| Ok(rate * self.cutoff.prime(self.argument(r, t)?))).collect()
    }
}

impl TimeDependentObservable for PropagationObservable<'_> {
    fn at(&self, t: f64) -> Result<SparseOperator> {
        dgamma(self.basis, &self.weights(t)?)
    }

    fn time_derivative(&self, t: f64) -> Result<SparseOperator> {
        dgamma(self.basis, &self.weight_rates(t)?)
    }

    fn label(&self) -> String {
        format!("propagation(a={}, v={}, s={})", self.a, self.v, self.s)
    }
}

/// DΦ(t) = i[H, Φ(t)] + ∂_tΦ(t).
pub fn heisenberg_derivative(obs: &dyn TimeDependentObservable, h: &SparseOperator, t: f64) -> Result<SparseOperator> {
    let phi = obs.at(t)?;
    commutator(h, &phi)?.scale(C64::new(0.0, 1.0)).add(&obs.time_derivative(t)?)
}

/// ⟨Φ(t)⟩_t at each time.
pub fn expectation_trajectory(
    obs: &dyn TimeDependentObservable,
    prop: &Propagator,
    phi: &StateVector,
    times: &[f64],
) -> Result<Trajectory> {
    check_increasing(times)?;
    let values = times
        .par_iter()
        .map(|&t| prop.propagate(phi, t)?.expectation(&obs.at(t)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory::new(times.to_vec(), values)?.with_labels(obs.label(), format!("dim {}", phi.dim())))
}

/// ⟨DΦ(t)⟩_t.
pub fn derivative_expectation(
    obs: &dyn TimeDependentObservable,
    prop: &Propagator,
    phi: &StateVector,
    t: f64,
) -> Result<f64> {
    let d = heisenberg_derivative(obs, prop.hamiltonian(), t)?;
    prop.propagate(phi, t)?.expectation(&d)
}

/// |central difference of ⟨Φ(·)⟩_· at t − ⟨DΦ(t)⟩_t|.
pub fn heisenberg_derivative_audit(
    obs: &dyn TimeDependentObservable,
    prop: &Propagator,
    phi: &StateVector,
    t: f64,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0) {
        return invalid(format!("dt must be positive, got {dt}"));
    }
    let plus = prop.propagate(phi, t + dt)?.expectation(&obs.at(t + dt)?)?;
    let minus = prop.propagate(phi, t - dt)?.expectation(&obs.at(t - dt)?)?;
    let lhs = (plus - minus) / (2.0 * dt);
    Ok((lhs - derivative_expectation(obs, prop, phi, t)?).abs())
}

/// |⟨Φ(T)⟩_T − ∫₀^T ⟨DΦ(r)⟩_r dr − ⟨Φ(0)⟩_0| with adaptive Simpson at `tol`.
pub fn basic_equality_audit(
    obs: &dyn TimeDependentObservable,
    prop: &Propagator,
    phi: &StateVector,
    big_t: f64,
    tol: f64,
) -> Result<f64> {
    if !(big_t > 0.0) {
        return invalid(format!("T must be positive, got {big_t}"));
    }
    let end = prop.propagate(phi, big_t)?.expectation(&obs.at(big_t)?)?;
    let start = phi.expectation(&obs.at(0.0)?)?;
    let integral = adaptive_simpson_with(&mut |r| derivative_expectation(obs, prop, phi, r), 0.0, big_t, tol)?;
    Ok((end - integral - start).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoffs::make_class_e;
    use crate::lattice::LatticeSpec;
    use crate::operators::{build_hamiltonian, local_observable, number_operator, HamiltonianParams};

    fn chain(len: usize, n: usize, g: f64) -> (LatticeSpec, FockBasis, SparseOperator) {
        let spec = LatticeSpec::chain(len, 1.0).unwrap();
        let basis = FockBasis::enumerate(len, n).unwrap();
        let h = build_hamiltonian(&spec, &basis, HamiltonianParams::new(g, 0.0).unwrap(), None).unwrap();
        (spec, basis, h)
    }

    #[test]
    fn rabi_oscillation() {
        let (_, basis, h) = chain(2, 1, 0.0);
        let phi = StateVector::basis_state(&basis, &FockState(vec![1, 0])).unwrap();
        let n1 = local_observable(&basis, 1, |n| n as f64).unwrap();
        for backend in [Backend::Dense, Backend::Krylov] {
            let p = Propagator::with_backend(&h, backend).unwrap();
            for &t in &[0.0, 0.3, 1.1, 2.7] {
                let got = p.propagate(&phi, t).unwrap().expectation(&n1).unwrap();
                assert!((got - t.sin().powi(2)).abs() < 1e-9, "{backend:?} t={t}");
            }
        }
    }

    #[test]
    fn unitarity_group_law_energy() {
        let (_, basis, h) = chain(5, 2, 1.3);
        let phi = StateVector::basis_state(&basis, &FockState(vec![0, 1, 0, 1, 0])).unwrap();
        let p = Propagator::new(&h).unwrap();
        let e0 = phi.expectation(&h).unwrap();
        for &t in &[0.4, 1.7, -2.2] {
            let psi = p.propagate(&phi, t).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-9);
            assert!((psi.expectation(&h).unwrap() - e0).abs() < 1e-9);
            let two = p.propagate(&p.propagate(&phi, t).unwrap(), 0.9).unwrap();
            assert!(two.distance(&p.propagate(&phi, t + 0.9).unwrap()) < 1e-8);
        }
        assert_eq!(p.propagate(&phi, 0.0).unwrap().distance(&phi), 0.0);
    }

    #[test]
    fn backends_agree() {
        let (_, basis, h) = chain(6, 3, 0.7);
        let phi = StateVector::basis_state(&basis, &FockState(vec![1, 0, 1, 0, 1, 0])).unwrap();
        let dense = Propagator::with_backend(&h, Backend::Dense).unwrap();
        let kry = Propagator::with_backend(&h, Backend::Krylov).unwrap();
        for &t in &[0.5, 3.0, -1.5] {
            let a = dense.propagate(&phi, t).unwrap();
            let b = kry.propagate(&phi, t).unwrap();
            assert!(a.distance(&b) < 1e-7, "t={t} {}", a.distance(&b));
            assert!((b.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = SparseOperator::from_triplets(2, 2, vec![(0, 1, C64::new(1.0, 0.0))]);
        assert!(Propagator::new(&m).is_err());
    }

    #[test]
    fn heisenberg_preserves_number_and_norm() {
        let (_, basis, h) = chain(4, 2, 1.0);
        let p = Propagator::new(&h).unwrap();
        let n = number_operator(&basis);
        assert!(p.heisenberg(&n, 1.3).unwrap().max_abs_diff(&n).unwrap() < 1e-10);
        let a = local_observable(&basis, 0, |k| (k * k) as f64).unwrap();
        let at = p.heisenberg(&a, 0.8).unwrap();
        assert!((at.spectral_norm().unwrap() - a.spectral_norm().unwrap()).abs() < 1e-8);
        assert!(p.heisenberg(&a, 0.0).unwrap().max_abs_diff(&a).unwrap() < 1e-12);
        // ⟨φ, α_t(A) φ⟩ = ⟨e^{itH}φ, A e^{itH}φ⟩.
        let phi = StateVector::basis_state(&basis, &FockState(vec![1, 1, 0, 0])).unwrap();
        let lhs = phi.expectation(&at).unwrap();
        let rhs = p.propagate(&phi, -0.8).unwrap().expectation(&a).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn trajectories_and_audits() {
        let (spec, basis, h) = chain(6, 2, 1.0);
        let p = Propagator::new(&h).unwrap();
        let phi = StateVector::basis_state(&basis, &FockState(vec![0, 0, 1, 1, 0, 0])).unwrap();
        let n = Static(number_operator(&basis));
        let traj = expectation_trajectory(&n, &p, &phi, &[0.0, 0.5, 1.0]).unwrap();
        assert!(traj.values.iter().all(|v| (v - 2.0).abs() < 1e-10));
        assert!(traj.to_csv().starts_with("t,value\n0.0000000000000000e0,"));
        assert!(basic_equality_audit(&n, &p, &phi, 1.0, 1e-8).unwrap() < 1e-10);
        assert!(heisenberg_derivative_audit(&n, &p, &phi, 0.5, 1e-3).unwrap() < 1e-10);

        let radii: Vec<f64> = (0..6).map(|i| spec.site(i)[0] as f64).map(f64::abs).collect();
        let f = make_class_e(3.0, 2.5).unwrap();
        let obs = PropagationObservable::new(&basis, radii, f, 0.5, 1.0).unwrap();
        let r1 = heisenberg_derivative_audit(&obs, &p, &phi, 0.3, 2e-3).unwrap();
        let r2 = heisenberg_derivative_audit(&obs, &p, &phi, 0.3, 1e-3).unwrap();
        assert!(r2 < 1e-6, "{r2}");
        assert!((3.5..=4.5).contains(&(r1 / r2)), "ratio {}", r1 / r2);
        assert!(basic_equality_audit(&obs, &p, &phi, 0.6, 1e-8).unwrap() < 1e-6);
        assert!(Trajectory::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }
}
