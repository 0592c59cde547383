//! Audits: the differential inequality for the propagation observable,
//! Heisenberg calculus, operator identities, cutoff Taylor bounds and the
//! factorization defect identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ConeConfig;
use super::factorization::{defect_identity_residual, Factorization};
use super::report::AuditReport;
use super::sweeps::Prepared;
use crate::cutoffs::{
    closure_constant, divided_difference_bounds, make_class_e, CutoffFunction, TaylorDecomposition, GRID_POINTS,
    MAX_DERIVATIVE_ORDER,
};
use crate::error::{Error, Result};
use crate::evolution::{basic_equality_audit, heisenberg_derivative_audit, PropagationObservable, TimeDependentObservable};
use crate::fock::{sector_dimension, FockBasis};
use crate::lattice::{LatticeSpec, SiteSet};
use crate::numerics::{adaptive_simpson_with, linspace};
use crate::operators::{build_hamiltonian, dgamma, dgamma_diagonal, hopping_commutator, number_operator, HamiltonianParams};
use crate::sparse::commutator;

/// Absolute tolerance of the time integrals.
const INTEGRAL_TOL: f64 = 1e-10;
/// Slack for rounding when comparing equal quantities.
const ROUNDING_SLACK: f64 = 1e-12;

/// ∫ over consecutive grid intervals, accumulated: out[i] = ∫_{t_0}^{t_i} g.
fn cumulative_integral(times: &[f64], g: &(dyn Fn(f64) -> Result<f64> + Sync)) -> Result<Vec<f64>> {
    let pieces: Vec<f64> = times
        .par_windows(2)
        .map(|w| adaptive_simpson_with(&mut |r| g(r), w[0], w[1], INTEGRAL_TOL))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for p in pieces {
        acc += p;
        out.push(acc);
    }
    Ok(out)
}

/// ⟨dΓ(g(|x|_{rs}))⟩_r for a cutoff derivative profile g.
fn scaled_expectation(prep: &Prepared, cfg: &ConeConfig, f: &CutoffFunction, r: f64) -> Result<f64> {
    let weights: Vec<f64> =
        prep.radii.iter().map(|&x| f.prime((x - cfg.a - cfg.v * r) / cfg.s)).collect();
    let diag = dgamma_diagonal(&prep.basis, &weights);
    let psi = prep.prop.propagate(&prep.phi, r)?;
    Ok(psi.amplitudes().iter().zip(&diag).map(|(z, d)| z.norm_sqr() * d).sum())
}

/// Differential-inequality audit along the time grid. With
///
///   LHS(t)  = ⟨Φ_s(t)⟩_t + (v−κ)/s ∫₀ᵗ ⟨dΓ(f′(|x|_{rs}))⟩_r dr,
///   Corr(t) = Σ_{k=2}^{n} κ^{(k)} C_{f,k} s^{−k} ∫₀ᵗ ⟨dΓ(f̃_k′(|x|_{rs}))⟩_r dr
///             + κ^{(n+1)} C_r s^{−n−1} t ⟨N⟩,
///
/// the fitted multiplier M = max_t (LHS − ⟨Φ_s(0)⟩_0)/Corr must not exceed
/// the configured threshold. Rows carry LHS and ⟨Φ_s(0)⟩_0 + threshold·Corr.
pub fn inequality_audit(cfg: &ConeConfig) -> Result<AuditReport> {
    let t_max = *cfg.t_grid.last().expect("resolved grids are non-empty");
    if cfg.s < t_max {
        return Err(Error::InvalidConfig(format!("need s >= max t, got s = {} and max t = {t_max}", cfg.s)));
    }
    let kappa = cfg.kappa();
    let prep = Prepared::new(cfg)?;
    let n = cfg.taylor_order;
    let f = make_class_e(cfg.c, cfg.v)?;
    let td = TaylorDecomposition::new(&f, n)?;
    let obs = PropagationObservable::new(&prep.basis, prep.radii.clone(), f.clone(), cfg.a, cfg.s)?;

    let phi_t: Vec<f64> = cfg
        .t_grid
        .par_iter()
        .map(|&t| prep.prop.propagate(&prep.phi, t)?.expectation(&obs.at(t)?))
        .collect::<Result<_>>()?;
    let drift = cumulative_integral(&cfg.t_grid, &|r| scaled_expectation(&prep, cfg, &f, r))?;
    let mut corr = vec![0.0; cfg.t_grid.len()];
    for k in 2..=n {
        let coeff = cfg.spec.kappa_p(k as u32) * td.constant(k) * cfg.s.powi(-(k as i32));
        let comp = td.companion(k);
        let integral = cumulative_integral(&cfg.t_grid, &|r| scaled_expectation(&prep, cfg, comp, r))?;
        for (c, i) in corr.iter_mut().zip(integral) {
            *c += coeff * i;
        }
    }
    let tail = cfg.spec.kappa_p(n as u32 + 1) * td.remainder_constant() * cfg.s.powi(-(n as i32) - 1) * prep.particles();
    for (c, &t) in corr.iter_mut().zip(&cfg.t_grid) {
        *c += tail * (t - cfg.t_grid[0]);
    }

    let start = phi_t[0];
    let thr = cfg.thresholds.inequality_multiplier;
    let mut report = AuditReport::new("audit-inequality");
    let mut multiplier = f64::NEG_INFINITY;
    let mut integrated = 0.0f64;
    for (i, &t) in cfg.t_grid.iter().enumerate() {
        let lhs = phi_t[i] + (cfg.v - kappa) / cfg.s * drift[i];
        let excess = lhs - start;
        if corr[i] > 0.0 {
            multiplier = multiplier.max(excess / corr[i]);
        } else if excess > ROUNDING_SLACK {
            multiplier = f64::INFINITY;
        }
        report.push_le("inequality", 0, t, lhs, start + thr * corr[i] + ROUNDING_SLACK);
        let growth = phi_t[i] - start;
        report.push("integrated-estimate", 0, t, growth, None, None);
        if t > 0.0 {
            integrated = integrated.max(growth / (t * prep.particles() / cfg.s.powi(2)));
        }
    }
    report.push_le("fitted-multiplier", 0, n as f64, multiplier.max(0.0), thr);
    report.extras.insert("fitted_multiplier".into(), multiplier);
    report.extras.insert("integrated_constant".into(), integrated);
    report.extras.insert("kappa".into(), kappa);
    report.extras.insert("remainder_constant".into(), td.remainder_constant());
    for k in 2..=n {
        report.extras.insert(format!("taylor_constant_{k}"), td.constant(k));
    }
    Ok(report)
}

/// Heisenberg-derivative and basic-equality checks for Φ_s at the
/// configured cutoff, plus conservation of N.
pub fn calculus_audit(cfg: &ConeConfig) -> Result<AuditReport> {
    let t_max = *cfg.t_grid.last().expect("resolved grids are non-empty");
    if !(t_max > 0.0) {
        return Err(Error::InvalidConfig("calculus audit needs a positive final time".into()));
    }
    let prep = Prepared::new(cfg)?;
    let f = make_class_e(cfg.c, cfg.v)?;
    let obs = PropagationObservable::new(&prep.basis, prep.radii.clone(), f, cfg.a, cfg.s)?;
    let probe = 0.3 * t_max;
    let steps = [0.02, 0.01, 0.005, 0.0025];
    let residuals: Vec<f64> = steps
        .iter()
        .map(|&dt| heisenberg_derivative_audit(&obs, &prep.prop, &prep.phi, probe, dt))
        .collect::<Result<_>>()?;

    let mut report = AuditReport::new("audit-calculus");
    for (&dt, &r) in steps.iter().zip(&residuals) {
        report.push("heisenberg-derivative", 0, dt, r, None, None);
    }
    for (w, pair) in steps.windows(2).zip(residuals.windows(2)) {
        let resolved = pair[0] > 1e-11 || pair[1] > 1e-11;
        let ratio = if resolved { pair[0] / pair[1] } else { 4.0 };
        let expected = (w[0] / w[1]).powi(2);
        report.push("derivative-convergence", 0, w[1], ratio, Some(expected), Some((ratio / expected - 1.0).abs() <= 0.125));
    }
    let eq = basic_equality_audit(&obs, &prep.prop, &prep.phi, t_max, 1e-9)?;
    report.push_le("basic-equality", 0, t_max, eq, 1e-6);
    let h = prep.prop.hamiltonian();
    let cons = commutator(h, &number_operator(&prep.basis))?.max_abs();
    report.push_le("number-conservation", 0, 0.0, cons, ROUNDING_SLACK);
    Ok(report)
}

/// A random small lattice with its sector and couplings.
struct Instance {
    spec: LatticeSpec,
    basis: FockBasis,
    params: HamiltonianParams,
}

fn with_random_hopping(spec: &LatticeSpec, rng: &mut ChaCha8Rng) -> Result<LatticeSpec> {
    let bonds: Vec<_> = spec.bonds().map(|(i, j, _)| (i, j, rng.random_range(-1.0..1.0))).collect();
    LatticeSpec::new(spec.dim(), spec.sites().to_vec(), bonds)
}

/// Geometry cycles through chain, grid and |x−y|^{−4} power-law chain,
/// each with at most `max_sites` sites (at least 4).
fn random_instance(i: usize, rng: &mut ChaCha8Rng, max_sites: usize) -> Result<Instance> {
    let spec = match i % 3 {
        0 => with_random_hopping(&LatticeSpec::chain(rng.random_range(2..=max_sites), 1.0)?, rng)?,
        1 => with_random_hopping(&LatticeSpec::grid(&[2, rng.random_range(2..=max_sites / 2)], 1.0)?, rng)?,
        _ => LatticeSpec::power_law_chain(rng.random_range(3..=max_sites), rng.random_range(0.2..1.5), 4.0)?,
    };
    let particles = rng.random_range(1..=3);
    let basis = FockBasis::enumerate(spec.n_sites(), particles)?;
    let params = HamiltonianParams::new(rng.random_range(0.0..3.0), rng.random_range(-1.0..1.0))?;
    Ok(Instance { spec, basis, params })
}

fn instances(seed: u64, count: usize, max_sites: usize) -> Result<Vec<Instance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_instance(i, &mut rng, max_sites)).collect()
}

/// Seeded operator identities on lattices of at most 5 sites: [H, dΓ(f)]
/// against the hopping formula, [H, N] = 0 and Hermiticity of H.
pub fn operator_audit(seed: u64, count: usize) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let insts = instances(seed, count, 5)?;
    let weights: Vec<Vec<f64>> =
        insts.iter().map(|ins| (0..ins.spec.n_sites()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let rows: Vec<Vec<(&str, f64, f64, f64)>> = insts
        .par_iter()
        .zip(&weights)
        .map(|(ins, w)| {
            let h = build_hamiltonian(&ins.spec, &ins.basis, ins.params, None)?;
            let lhs = commutator(&h, &dgamma(&ins.basis, w)?)?;
            let rhs = hopping_commutator(&ins.spec, &ins.basis, w)?;
            let dim = ins.basis.len() as f64;
            Ok(vec![
                ("hopping-commutator", dim, lhs.max_abs_diff(&rhs)?, 1e-10),
                ("number-conservation", dim, commutator(&h, &number_operator(&ins.basis))?.max_abs(), ROUNDING_SLACK),
                ("hermiticity", dim, h.hermiticity_defect(), ROUNDING_SLACK),
            ])
        })
        .collect::<Result<_>>()?;
    let mut report = AuditReport::new("audit-operators");
    for (i, row) in rows.into_iter().enumerate() {
        for (check, dim, value, bound) in row {
            report.push_le(check, i, dim, value, bound);
        }
    }
    Ok(report)
}

/// Seeded factorization checks on random cuts: bijectivity, block
/// dimensions C(|Λ_<|+k−1, k)·C(|Λ_>|+N−k−1, N−k), and the identity
/// H̃U − UH = U·(boundary defect).
pub fn factorization_identity_audit(seed: u64, count: usize) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfac7);
    let insts = instances(seed, count, 6)?;
    let cuts: Vec<SiteSet> = insts
        .iter()
        .map(|ins| SiteSet::from_mask((0..ins.spec.n_sites()).map(|_| rng.random_bool(0.5)).collect()))
        .collect();
    let rows: Vec<(bool, bool, f64)> = insts
        .par_iter()
        .zip(&cuts)
        .map(|(ins, cut)| {
            let fact = Factorization::new(&ins.basis, cut)?;
            let (m_in, m_out) = (cut.len(), ins.spec.n_sites() - cut.len());
            let n = ins.basis.n_particles();
            let dims_ok = fact.blocks().iter().all(|b| {
                let expect = |m: usize, k: usize| if m == 0 { u64::from(k == 0) } else { sector_dimension(m, k) };
                b.in_dim as u64 == expect(m_in, b.k) && b.out_dim as u64 == expect(m_out, n - b.k)
            });
            let residual = defect_identity_residual(&ins.spec, &ins.basis, ins.params, cut)?;
            Ok((fact.is_bijection(), dims_ok, residual))
        })
        .collect::<Result<_>>()?;
    let mut report = AuditReport::new("audit-factorization");
    for (i, ((bij, dims, res), ins)) in rows.into_iter().zip(&insts).enumerate() {
        let dim = ins.basis.len() as f64;
        report.push("bijection", i, dim, f64::from(u8::from(bij)), Some(1.0), Some(bij));
        report.push("block-dimensions", i, dim, f64::from(u8::from(dims)), Some(1.0), Some(dims));
        report.push_le("defect-identity", i, dim, res, 1e-10);
    }
    Ok(report)
}

/// Cutoff checks for f = make_class_e(c, v): class invariants, unit
/// mass, smoothness of √f′, residual exponents for orders 1..=max_order,
/// the factorized pair bounds for h_k, and closure under addition.
pub fn taylor_audit(c: f64, v: f64, max_order: usize) -> Result<AuditReport> {
    let f = make_class_e(c, v)?;
    let mut report = AuditReport::new("audit-taylor");
    report.push_le("class-e", 0, 0.0, f.class_e_violation(GRID_POINTS), 0.0);
    let mass = adaptive_simpson_with(&mut |x| Ok(f.prime(x)), -1.0, f.width() + 1.0, 1e-12)?;
    report.push_le("unit-mass", 0, 0.0, (mass - 1.0).abs(), 1e-8);
    let smooth = divided_difference_bounds(|x| f.sqrt_prime(x), -0.5, f.width() + 0.5, 400, MAX_DERIVATIVE_ORDER);
    for (k, b) in smooth.iter().enumerate() {
        report.push("sqrt-derivative-bound", 0, (k + 1) as f64, *b, None, Some(b.is_finite()));
    }

    let grid = f.grid(GRID_POINTS);
    for n in 1..=max_order {
        let td = TaylorDecomposition::new(&f, n)?;
        let exp = td.default_residual_exponent()?;
        report.push_ge("residual-exponent", n, n as f64, exp, n as f64 + 0.9);
        let offset = linspace(-0.97, f.width() + 0.93, 301);
        report.push("remainder-ratio", n, n as f64, td.remainder_ratio(&offset)?, None, None);
        report.extras.insert(format!("remainder_constant_{n}"), td.remainder_constant());
        for k in 2..=n {
            report.push_le("pair-bound", n, k as f64, td.pair_bound_ratio(k, &grid)?, 1.0 + 1e-12);
            report.extras.insert(format!("taylor_constant_{n}_{k}"), td.constant(k));
        }
    }

    let w = f.width();
    let g = CutoffFunction::admissible(c, v, 0.2 * w, 0.7 * w)?.integrate()?;
    let closure = closure_constant(&[&f, &g], &f, &f.grid(2001));
    report.push(
        "closure",
        0,
        0.0,
        closure.unwrap_or(f64::INFINITY),
        None,
        Some(closure.is_some()),
    );
    Ok(report)
}
