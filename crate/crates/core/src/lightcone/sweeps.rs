//! Time/radius sweeps: particle transport, commutator growth, signaling and
//! the factorized-dynamics remainder.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::ConeConfig;
use super::factorization::Factorization;
use super::report::{Check, SweepCell, SweepReport};
use crate::error::{Error, Result};
use crate::evolution::{Propagator, StateVector, IMAG_TOL, KRYLOV_TOL};
use crate::fock::FockBasis;
use crate::numerics::linear_fit;
use crate::lattice::SiteSet;
use crate::operators::{build_hamiltonian, dgamma_diagonal, gamma_projection};
use crate::sparse::{inner, SparseOperator, C64};

/// Everything a sweep needs: sector, dynamics and initial state.
pub(crate) struct Prepared {
    pub basis: FockBasis,
    pub prop: Propagator,
    pub phi: StateVector,
    pub radii: Vec<f64>,
}

impl Prepared {
    pub fn new(cfg: &ConeConfig) -> Result<Self> {
        let basis = cfg.basis()?;
        let h = build_hamiltonian(&cfg.spec, &basis, cfg.params, None)?;
        let prop = Propagator::new(&h)?;
        let phi = cfg.initial_state.build(&cfg.spec, &basis)?;
        Ok(Self { basis, prop, phi, radii: cfg.radii() })
    }

    pub fn particles(&self) -> f64 {
        self.basis.n_particles() as f64
    }

    /// Largest |x − center| over occupied sites of any configuration in φ.
    fn occupied_radii(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, amp) in self.phi.amplitudes().iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            for (x, &n) in self.basis.occupations(i).iter().enumerate() {
                if n > 0 {
                    out.push(self.radii[x]);
                }
            }
        }
        out
    }

    fn provenance(&self) -> BTreeMap<String, String> {
        let mut p = BTreeMap::new();
        p.insert("backend".into(), if self.prop.is_dense() { "dense".into() } else { "krylov".into() });
        p.insert("dimension".into(), self.basis.len().to_string());
        p.insert("krylov_tol".into(), format!("{KRYLOV_TOL:e}"));
        p.insert("imag_tol".into(), format!("{IMAG_TOL:e}"));
        p
    }
}

/// Indicator weights of {x : |x − center| > ρ}.
fn outside_weights(radii: &[f64], rho: f64) -> Vec<f64> {
    radii.iter().map(|&r| if r > rho { 1.0 } else { 0.0 }).collect()
}

/// Σ_i |ψ_i|² d_i for a diagonal operator.
fn diagonal_expectation(psi: &StateVector, diag: &[f64]) -> f64 {
    psi.amplitudes().iter().zip(diag).map(|(a, d)| a.norm_sqr() * d).sum()
}

fn thresholds_map(cfg: &ConeConfig) -> BTreeMap<String, f64> {
    let t = &cfg.thresholds;
    BTreeMap::from([
        ("transport".to_string(), t.transport),
        ("commutator".to_string(), t.commutator),
        ("arrival_ratio".to_string(), t.arrival_ratio),
        ("factorization".to_string(), t.factorization),
        ("velocity".to_string(), t.velocity),
        ("velocity_ceiling".to_string(), t.velocity_ceiling),
        ("inequality_multiplier".to_string(), t.inequality_multiplier),
    ])
}

/// Whether (t, ρ) lies strictly ahead of the front: ρ > b + ct.
fn outside_cone(cfg: &ConeConfig, t: f64, rho: f64) -> bool {
    rho > cfg.b + cfg.c * t
}

/// Particle leakage L(t, ρ) = ⟨dΓ(χ_{|x|>ρ})⟩_t for a state supported in
/// the ball of radius b. Cells with ρ > b + ct are asserted against
/// ε_transport·⟨N⟩; the rest are recorded.
///
/// The companion report holds the mirrored quantity: the state is the
/// normalized projection of the uniform vector onto configurations with
/// every particle outside ρ, and the measured value is the number of
/// particles that have entered the ball of radius b.
pub fn transport_sweep(cfg: &ConeConfig) -> Result<SweepReport> {
    let prep = Prepared::new(cfg)?;
    if let Some(r) = prep.occupied_radii().into_iter().find(|&r| r >= cfg.b) {
        return Err(Error::InvalidConfig(format!(
            "initial state has a particle at distance {r} from the center, outside the ball of radius b = {}",
            cfg.b
        )));
    }
    let n_avg = prep.particles();
    let eps = cfg.thresholds.transport * n_avg;
    let counts: Vec<Vec<f64>> = cfg
        .rho_grid
        .iter()
        .map(|&rho| dgamma_diagonal(&prep.basis, &outside_weights(&prep.radii, rho)))
        .collect();

    let rows: Vec<Vec<SweepCell>> = cfg
        .t_grid
        .par_iter()
        .map(|&t| {
            let psi = prep.prop.propagate(&prep.phi, t)?;
            Ok(cfg
                .rho_grid
                .iter()
                .zip(&counts)
                .map(|(&rho, diag)| {
                    let value = diagonal_expectation(&psi, diag);
                    cell(t, rho, value, outside_cone(cfg, t, rho).then_some(eps))
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut report = SweepReport::new("transport", cfg.kappa());
    report.thresholds = thresholds_map(cfg);
    report.provenance = prep.provenance();
    report.checks.push(monotonicity_check(&rows, &cfg.rho_grid));
    report.cells = rows.into_iter().flatten().collect();
    report.extras.insert("particles".into(), n_avg);
    report.extras.insert("c".into(), cfg.c);

    let level = cfg.thresholds.velocity * n_avg;
    match velocity_fit(&report, level) {
        Ok(vel) => {
            report.fitted_velocity = Some(vel);
            let ceiling = cfg.thresholds.velocity_ceiling * cfg.kappa();
            report.checks.push(Check::new("velocity_ceiling", Some(vel), Some(ceiling), Some(vel <= ceiling)));
        }
        Err(Error::InsufficientData(_)) => {
            report.checks.push(Check::new("velocity_ceiling", None, None, None));
        }
        Err(e) => return Err(e),
    }
    report.companion = Some(Box::new(mirror_sweep(cfg, &prep)?));
    Ok(report)
}

fn cell(t: f64, rho: f64, value: f64, bound: Option<f64>) -> SweepCell {
    SweepCell { t, rho, value, bound, pass: bound.map(|b| value <= b) }
}

/// L(t, ·) must be nonincreasing in ρ at every t.
fn monotonicity_check(rows: &[Vec<SweepCell>], rhos: &[f64]) -> Check {
    let mut order: Vec<usize> = (0..rhos.len()).collect();
    order.sort_by(|&i, &j| rhos[i].total_cmp(&rhos[j]));
    let worst = rows
        .iter()
        .flat_map(|row| order.windows(2).map(move |w| row[w[1]].value - row[w[0]].value))
        .fold(0.0f64, f64::max);
    Check::new("monotone_in_rho", Some(worst), Some(1e-12), Some(worst <= 1e-12))
}

fn mirror_sweep(cfg: &ConeConfig, prep: &Prepared) -> Result<SweepReport> {
    let inside: Vec<f64> = prep.radii.iter().map(|&r| if r < cfg.b { 1.0 } else { 0.0 }).collect();
    let inside_count = dgamma_diagonal(&prep.basis, &inside);
    let eps = cfg.thresholds.transport * prep.particles();

    let uniform = StateVector::new(vec![C64::new(1.0, 0.0); prep.basis.len()])?;
    let states: Vec<Option<StateVector>> = cfg
        .rho_grid
        .iter()
        .map(|&rho| {
            let far = SiteSet::from_mask(prep.radii.iter().map(|&r| r > rho).collect());
            let v = uniform.apply(&gamma_projection(&prep.basis, &far)?)?;
            (v.norm() > 0.0).then(|| v.normalized()).transpose()
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<SweepCell>> = cfg
        .t_grid
        .par_iter()
        .map(|&t| {
            cfg.rho_grid
                .iter()
                .zip(&states)
                .map(|(&rho, state)| {
                    let value = match state {
                        Some(s) => diagonal_expectation(&prep.prop.propagate(s, t)?, &inside_count),
                        None => 0.0,
                    };
                    Ok(cell(t, rho, value, outside_cone(cfg, t, rho).then_some(eps)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut report = SweepReport::new("transport-mirror", cfg.kappa());
    report.thresholds = thresholds_map(cfg);
    report.provenance = prep.provenance();
    report.cells = rows.into_iter().flatten().collect();
    Ok(report)
}

/// Front velocity from a transport report: for each ρ the first time the
/// leakage reaches `level` (linearly interpolated), then the slope of ρ
/// against arrival time. No arrivals at all means a frozen front (speed
/// 0); one or two arrivals are too few to fit.
pub fn velocity_fit(report: &SweepReport, level: f64) -> Result<f64> {
    let mut arrivals = Vec::new();
    let mut radii = Vec::new();
    for rho in report.rhos() {
        let mut col = report.column(rho);
        col.sort_by(|a, b| a.t.total_cmp(&b.t));
        if let Some(t) = arrival_time(&col, level) {
            arrivals.push(t);
            radii.push(rho);
        }
    }
    match arrivals.len() {
        0 => Ok(0.0),
        1 | 2 => Err(Error::InsufficientData(format!(
            "front reached only {} radii; need at least 3 to fit a velocity",
            arrivals.len()
        ))),
        _ => {
            if arrivals.windows(2).all(|w| w[0] == w[1]) {
                return Err(Error::InsufficientData("all arrivals coincide".into()));
            }
            Ok(linear_fit(&arrivals, &radii)?.0)
        }
    }
}

fn arrival_time(col: &[&SweepCell], level: f64) -> Option<f64> {
    let i = col.iter().position(|c| c.value >= level)?;
    if i == 0 {
        return Some(col[0].t);
    }
    let (a, b) = (col[i - 1], col[i]);
    Some(a.t + (level - a.value) * (b.t - a.t) / (b.value - a.value))
}

/// ‖A‖ for a diagonal observable.
fn diagonal_norm(op: &SparseOperator) -> Result<f64> {
    if !op.is_diagonal() {
        return Err(Error::InvalidConfig("observables must be site-local occupation functions".into()));
    }
    Ok(op.max_abs())
}

/// Checks shared by the commutator and remainder sweeps: A inside the ball
/// of radius b, B at distance at least 2ρ − b, and no particles of φ in
/// the annulus b ≤ |x| ≤ 2ρ − b, for every ρ of the grid.
fn check_separation(cfg: &ConeConfig, prep: &Prepared) -> Result<(SparseOperator, SparseOperator, f64)> {
    let rho_max = cfg.rho_grid.iter().copied().fold(f64::MIN, f64::max);
    let outer = 2.0 * rho_max - cfg.b;
    let ia = cfg.observable_a.site_index(&cfg.spec)?;
    let ib = cfg.observable_b.site_index(&cfg.spec)?;
    if prep.radii[ia] >= cfg.b {
        return Err(Error::InvalidConfig(format!(
            "observable A at distance {} is not inside the ball of radius b = {}",
            prep.radii[ia], cfg.b
        )));
    }
    if prep.radii[ib] < outer {
        return Err(Error::InvalidConfig(format!(
            "observable B at distance {} is closer than 2*rho - b = {outer}",
            prep.radii[ib]
        )));
    }
    if let Some(r) = prep.occupied_radii().into_iter().find(|&r| r >= cfg.b && r <= outer) {
        return Err(Error::InvalidConfig(format!(
            "initial state has a particle at distance {r}, inside the annulus [{}, {outer}]",
            cfg.b
        )));
    }
    let a = cfg.observable_a.build(&cfg.spec, &prep.basis)?;
    let b = cfg.observable_b.build(&cfg.spec, &prep.basis)?;
    let scale = diagonal_norm(&a)? * diagonal_norm(&b)? * prep.particles();
    Ok((a, b, scale))
}

/// |⟨φ, [α_t(A), B] φ⟩| = |2 Im ⟨e^{itH}φ, A e^{itH} B φ⟩|.
fn commutator_value(prop: &Propagator, phi: &StateVector, bphi: &StateVector, a: &SparseOperator, t: f64) -> Result<f64> {
    let left = prop.propagate(phi, -t)?;
    let right = prop.propagate(bphi, -t)?.apply(a)?;
    Ok((2.0 * inner(left.amplitudes(), right.amplitudes()).im).abs())
}

/// |⟨φ, [α_t(A), B] φ⟩| for A near the center and B far away. Cells with
/// t ≤ (ρ − b)/c are asserted against ε_comm·‖A‖‖B‖⟨N⟩. The first sample
/// past every cone must exceed the in-cone maximum by the arrival ratio.
pub fn commutator_sweep(cfg: &ConeConfig) -> Result<SweepReport> {
    let prep = Prepared::new(cfg)?;
    let (a, b, scale) = check_separation(cfg, &prep)?;
    let bphi = prep.phi.apply(&b)?;
    let values: Vec<f64> = cfg
        .t_grid
        .par_iter()
        .map(|&t| commutator_value(&prep.prop, &prep.phi, &bphi, &a, t))
        .collect::<Result<_>>()?;

    let eps = cfg.thresholds.commutator * scale;
    let in_cone = |t: f64, rho: f64| t <= (rho - cfg.b) / cfg.c;
    let mut report = SweepReport::new("commutator", cfg.kappa());
    for (&t, &value) in cfg.t_grid.iter().zip(&values) {
        for &rho in &cfg.rho_grid {
            report.cells.push(cell(t, rho, value, in_cone(t, rho).then_some(eps)));
        }
    }
    let last_cone = cfg.rho_grid.iter().map(|&rho| (rho - cfg.b) / cfg.c).fold(f64::MIN, f64::max);
    let inside_max = cfg
        .t_grid
        .iter()
        .zip(&values)
        .filter(|(&t, _)| t <= last_cone)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    report.extras.insert("in_cone_max".into(), inside_max);
    report.extras.insert("norm_scale".into(), scale);
    let post = cfg.t_grid.iter().zip(&values).find(|(&t, _)| t > last_cone);
    let arrival = match post {
        Some((&t, &v)) => {
            report.extras.insert("first_post_cone_time".into(), t);
            report.extras.insert("first_post_cone_value".into(), v);
            let need = cfg.thresholds.arrival_ratio * inside_max;
            Check::new("post_cone_arrival", Some(v), Some(need), Some(v >= need))
        }
        None => Check::new("post_cone_arrival", None, None, None),
    };
    report.checks.push(arrival);
    report.thresholds = thresholds_map(cfg);
    report.provenance = prep.provenance();
    Ok(report)
}

/// Local signaling: D(r, t) = ⟨φ_r, α_t(B) φ_r⟩ − ⟨φ, α_t(B) φ⟩ with
/// φ_r = e^{−irA}φ, compared with its linearization r·⟨φ, i[A, α_t(B)]φ⟩.
/// The `rho` column holds r and the `bound` column the linear prediction.
/// Rows after the first r pass when the residual |D − linear| shrinks like
/// r² (or both residuals sit at rounding level). A zero kick must give D = 0.
pub fn signaling_experiment(cfg: &ConeConfig) -> Result<SweepReport> {
    let prep = Prepared::new(cfg)?;
    let a = cfg.observable_a.build(&cfg.spec, &prep.basis)?;
    let b = cfg.observable_b.build(&cfg.spec, &prep.basis)?;
    let a_diag: Vec<f64> = a.diagonal_entries().iter().map(|z| z.re).collect();
    if cfg.r_grid.iter().any(|&r| !(r >= 0.0 && r.is_finite())) || cfg.r_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig("r_grid must be nonnegative and strictly decreasing".into()));
    }
    let kicked: Vec<StateVector> = cfg
        .r_grid
        .iter()
        .map(|&r| {
            let amps = prep
                .phi
                .amplitudes()
                .iter()
                .zip(&a_diag)
                .map(|(z, &ai)| z * C64::from_polar(1.0, -r * ai))
                .collect();
            StateVector::new(amps)
        })
        .collect::<Result<_>>()?;
    let aphi = prep.phi.apply(&a)?;

    let heis = |state: &StateVector, t: f64| -> Result<f64> { prop_expect(&prep.prop, state, &b, t) };
    let rows: Vec<Vec<SweepCell>> = cfg
        .t_grid
        .par_iter()
        .map(|&t| {
            let base = heis(&prep.phi, t)?;
            let back = prep.prop.propagate(&prep.phi, -t)?.apply(&b)?;
            let slope = -2.0 * inner(prep.prop.propagate(&aphi, -t)?.amplitudes(), back.amplitudes()).im;
            let mut row: Vec<SweepCell> = Vec::new();
            let mut prev: Option<(f64, f64)> = None;
            for (&r, state) in cfg.r_grid.iter().zip(&kicked) {
                let d = heis(state, t)? - base;
                let lin = r * slope;
                let res = (d - lin).abs();
                let pass = prev.map(|(r0, res0)| quadratic_shrink(r0, res0, r, res));
                row.push(SweepCell { t, rho: r, value: d, bound: Some(lin), pass });
                prev = Some((r, res));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut report = SweepReport::new("signal", cfg.kappa());
    report.cells = rows.into_iter().flatten().collect();
    report.thresholds = thresholds_map(cfg);
    report.provenance = prep.provenance();
    Ok(report)
}

/// Residual level below which second-order convergence is not resolvable.
const SIGNALING_FLOOR: f64 = 1e-11;

fn quadratic_shrink(r0: f64, res0: f64, r1: f64, res1: f64) -> bool {
    if r1 == 0.0 {
        return res1 == 0.0;
    }
    if res0 < SIGNALING_FLOOR && res1 < SIGNALING_FLOOR {
        return true;
    }
    let expected = (r0 / r1).powi(2);
    let ratio = res0 / res1;
    ratio >= 0.875 * expected && ratio <= 1.125 * expected
}

/// ⟨ψ, α_t(B) ψ⟩ = ⟨e^{itH}ψ, B e^{itH}ψ⟩ for a diagonal B.
fn prop_expect(prop: &Propagator, psi: &StateVector, b: &SparseOperator, t: f64) -> Result<f64> {
    prop.propagate(psi, -t)?.expectation(b)
}

/// |⟨φ, Rem φ⟩| with Rem = α_t(A)B − α̃_t(A)B, where α̃ is generated by
/// the decoupled Hamiltonian U*H̃U of the cut at radius ρ. Cells with
/// t ≤ (ρ − b)/c are asserted against ε_fact·‖A‖‖B‖⟨N⟩.
pub fn factorization_sweep(cfg: &ConeConfig) -> Result<SweepReport> {
    let prep = Prepared::new(cfg)?;
    let (a, b, scale) = check_separation(cfg, &prep)?;
    let bphi = prep.phi.apply(&b)?;
    let decoupled: Vec<Propagator> = cfg
        .rho_grid
        .iter()
        .map(|&rho| {
            let cut = cfg.spec.ball(&cfg.center, rho);
            let fact = Factorization::new(&prep.basis, &cut)?;
            Propagator::new(&fact.decoupled_in_sector_basis(&cfg.spec, cfg.params)?)
        })
        .collect::<Result<_>>()?;

    let correlator = |prop: &Propagator, t: f64| -> Result<C64> {
        let left = prop.propagate(&prep.phi, -t)?;
        let right = prop.propagate(&bphi, -t)?.apply(&a)?;
        Ok(inner(left.amplitudes(), right.amplitudes()))
    };
    let eps = cfg.thresholds.factorization * scale;
    let rows: Vec<Vec<SweepCell>> = cfg
        .t_grid
        .par_iter()
        .map(|&t| {
            let full = correlator(&prep.prop, t)?;
            cfg.rho_grid
                .iter()
                .zip(&decoupled)
                .map(|(&rho, prop)| {
                    let value = (full - correlator(prop, t)?).norm();
                    Ok(cell(t, rho, value, (t <= (rho - cfg.b) / cfg.c).then_some(eps)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut report = SweepReport::new("factorization", cfg.kappa());
    report.cells = rows.into_iter().flatten().collect();
    report.extras.insert("norm_scale".into(), scale);
    report.thresholds = thresholds_map(cfg);
    report.provenance = prep.provenance();
    Ok(report)
}
