//! Second-quantized operators on a fixed-N sector.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fock::FockBasis;
use crate::lattice::{LatticeSpec, SiteSet};
use crate::sparse::{SparseOperator, C64};

/// On-site interaction `g` and chemical potential `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianParams {
    pub g: f64,
    pub mu: f64,
}

impl HamiltonianParams {
    pub fn new(g: f64, mu: f64) -> Result<Self> {
        let p = Self { g, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 0.0) || !self.g.is_finite() || !self.mu.is_finite() {
            return invalid(format!("need finite g >= 0 and finite mu, got g={} mu={}", self.g, self.mu));
        }
        Ok(())
    }

    /// g = 0 is outside the model's standing assumption g > 0; it is kept
    /// for free-particle oracles and flagged in reports.
    pub fn is_free_gas(&self) -> bool {
        self.g == 0.0
    }
}

fn check_basis(spec: &LatticeSpec, basis: &FockBasis) -> Result<()> {
    if spec.n_sites() != basis.n_sites() {
        return invalid(format!(
            "lattice has {} sites but basis has {}",
            spec.n_sites(),
            basis.n_sites()
        ));
    }
    Ok(())
}

fn check_weights(basis: &FockBasis, weights: &[f64]) -> Result<()> {
    if weights.len() != basis.n_sites() {
        return invalid(format!("{} weights for {} sites", weights.len(), basis.n_sites()));
    }
    Ok(())
}

/// H = −Σ J_xy b*_x b_y + (g/2) Σ n_x(n_x−1) − μ Σ n_x, with every sum
/// restricted to `support` (all sites when `None`).
pub fn build_hamiltonian(
    spec: &LatticeSpec,
    basis: &FockBasis,
    params: HamiltonianParams,
    support: Option<&SiteSet>,
) -> Result<SparseOperator> {
    check_basis(spec, basis)?;
    params.validate()?;
    let m = spec.n_sites();
    for (i, j, _) in spec.bonds() {
        if spec.hopping(i, j) != spec.hopping(j, i) {
            return invalid(format!("hopping not symmetric on pair ({i}, {j})"));
        }
    }
    let all = SiteSet::all(m);
    let support = support.unwrap_or(&all);
    if support.n_sites() != m {
        return invalid("support set belongs to a different lattice");
    }

    let mut triplets = Vec::new();
    let mut scratch = Vec::with_capacity(m);
    for idx in 0..basis.len() {
        let occ = basis.occupations(idx);
        let diag: f64 = support
            .iter()
            .map(|x| {
                let n = occ[x] as f64;
                0.5 * params.g * n * (n - 1.0) - params.mu * n
            })
            .sum();
        triplets.push((idx, idx, C64::new(diag, 0.0)));
        for y in support.iter() {
            if occ[y] == 0 {
                continue;
            }
            for &(x, j) in spec.neighbors(y) {
                if !support.contains(x) {
                    continue;
                }
                if let Some((target, amp)) = basis.hop(idx, x, y, &mut scratch) {
                    triplets.push((target, idx, C64::new(-j * amp, 0.0)));
                }
            }
        }
    }
    let n = basis.len();
    Ok(SparseOperator::from_triplets(n, n, triplets))
}

/// dΓ(f) = Σ_x f(x) n_x for a site-diagonal one-particle operator.
pub fn dgamma(basis: &FockBasis, weights: &[f64]) -> Result<SparseOperator> {
    check_weights(basis, weights)?;
    Ok(SparseOperator::diagonal(&dgamma_diagonal(basis, weights)))
}

/// Diagonal of dΓ(f), one entry per basis state.
pub fn dgamma_diagonal(basis: &FockBasis, weights: &[f64]) -> Vec<f64> {
    basis
        .states()
        .map(|occ| occ.iter().zip(weights).map(|(&n, &w)| n as f64 * w).sum())
        .collect()
}

/// The total number operator N.
pub fn number_operator(basis: &FockBasis) -> SparseOperator {
    SparseOperator::diagonal(&vec![basis.n_particles() as f64; basis.len()])
}

/// dΓ(χ_S): number of particles inside `set`.
pub fn count_in(basis: &FockBasis, set: &SiteSet) -> Result<SparseOperator> {
    let weights: Vec<f64> = set.mask().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    dgamma(basis, &weights)
}

/// Γ(χ_S): projection onto states with every particle inside `set`.
pub fn gamma_projection(basis: &FockBasis, set: &SiteSet) -> Result<SparseOperator> {
    if set.n_sites() != basis.n_sites() {
        return invalid("site set belongs to a different lattice");
    }
    let diag: Vec<f64> = basis
        .states()
        .map(|occ| {
            let outside = occ.iter().enumerate().any(|(x, &n)| n > 0 && !set.contains(x));
            if outside {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    Ok(SparseOperator::diagonal(&diag))
}

/// Σ_{x,y} J_xy (f(x) − f(y)) b*_x b_y.
pub fn hopping_commutator(spec: &LatticeSpec, basis: &FockBasis, weights: &[f64]) -> Result<SparseOperator> {
    check_basis(spec, basis)?;
    check_weights(basis, weights)?;
    let mut triplets = Vec::new();
    let mut scratch = Vec::new();
    for idx in 0..basis.len() {
        let occ = basis.occupations(idx);
        for y in 0..spec.n_sites() {
            if occ[y] == 0 {
                continue;
            }
            for &(x, j) in spec.neighbors(y) {
                let coeff = j * (weights[x] - weights[y]);
                if coeff == 0.0 {
                    continue;
                }
                if let Some((target, amp)) = basis.hop(idx, x, y, &mut scratch) {
                    triplets.push((target, idx, C64::new(coeff * amp, 0.0)));
                }
            }
        }
    }
    let n = basis.len();
    Ok(SparseOperator::from_triplets(n, n, triplets))
}

/// h(n_x): a bounded function of the occupation at one site.
pub fn local_observable(basis: &FockBasis, site: usize, h: impl Fn(u32) -> f64) -> Result<SparseOperator> {
    if site >= basis.n_sites() {
        return invalid(format!("site {site} out of range"));
    }
    let diag: Vec<f64> = basis.states().map(|occ| h(occ[site])).collect();
    Ok(SparseOperator::diagonal(&diag))
}

/// b*_x b_y as a sector operator.
pub fn hop_operator(basis: &FockBasis, x: usize, y: usize) -> SparseOperator {
    let mut triplets = Vec::new();
    let mut scratch = Vec::new();
    for idx in 0..basis.len() {
        if let Some((target, amp)) = basis.hop(idx, x, y, &mut scratch) {
            triplets.push((target, idx, C64::new(amp, 0.0)));
        }
    }
    let n = basis.len();
    SparseOperator::from_triplets(n, n, triplets)
}

/// b_x as a map from the N-sector `from` into the (N−1)-sector `to`.
pub fn annihilation_operator(from: &FockBasis, to: &FockBasis, site: usize) -> Result<SparseOperator> {
    if from.n_sites() != to.n_sites() || from.n_particles() != to.n_particles() + 1 {
        return invalid("annihilation needs bases on the same sites with N and N−1 particles");
    }
    let mut triplets = Vec::new();
    let mut scratch = Vec::new();
    for idx in 0..from.len() {
        let occ = from.occupations(idx);
        if occ[site] == 0 {
            continue;
        }
        scratch.clear();
        scratch.extend_from_slice(occ);
        scratch[site] -= 1;
        let target = to.rank_unchecked(&scratch);
        triplets.push((target, idx, C64::new((occ[site] as f64).sqrt(), 0.0)));
    }
    Ok(SparseOperator::from_triplets(to.len(), from.len(), triplets))
}
