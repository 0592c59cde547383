//! Fock-space factorization across a cut: F_N ≅ ⊕_k F_k(inside) ⊗ F_{N−k}(outside).

use crate::error::{invalid, Result};
use crate::fock::FockBasis;
use crate::lattice::{LatticeSpec, SiteSet};
use crate::operators::{build_hamiltonian, HamiltonianParams};
use crate::sparse::{SparseOperator, C64};

/// One side of the cut. A side without sites is the vacuum line: a single
/// state when it holds no particles, nothing otherwise.
#[derive(Debug, Clone)]
struct Side {
    basis: Option<FockBasis>,
}

impl Side {
    fn new(sites: &[usize], particles: usize) -> Result<Self> {
        let basis = if sites.is_empty() { None } else { Some(FockBasis::enumerate(sites.len(), particles)?) };
        Ok(Self { basis })
    }

    fn dim(&self, particles: usize) -> usize {
        match &self.basis {
            Some(b) => b.len(),
            None => usize::from(particles == 0),
        }
    }

    fn rank(&self, occ: &[u32]) -> Result<usize> {
        match &self.basis {
            Some(b) => b.rank_slice(occ),
            None => Ok(0),
        }
    }

    /// Hamiltonian of the restricted lattice on this sector (a 1×1 zero for
    /// the vacuum line).
    fn hamiltonian(&self, spec: &LatticeSpec, set: &SiteSet, params: HamiltonianParams) -> Result<SparseOperator> {
        match &self.basis {
            Some(b) => {
                let (sub, _) = spec.restrict(set)?;
                build_hamiltonian(&sub, b, params, None)
            }
            None => Ok(SparseOperator::zeros(1)),
        }
    }
}

/// The block F_k(inside) ⊗ F_{N−k}(outside), stored at `offset` with
/// index `offset + in_rank · out_dim + out_rank`.
#[derive(Debug, Clone)]
pub struct Block {
    pub k: usize,
    pub offset: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    inside: Side,
    outside: Side,
}

impl Block {
    pub fn len(&self) -> usize {
        self.in_dim * self.out_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The unitary U_ρ as a permutation of the sector basis, blocks ordered by
/// decreasing inside particle number.
#[derive(Debug, Clone)]
pub struct Factorization {
    cut: SiteSet,
    particles: usize,
    blocks: Vec<Block>,
    forward: Vec<usize>,
}

impl Factorization {
    pub fn new(basis: &FockBasis, cut: &SiteSet) -> Result<Self> {
        if cut.n_sites() != basis.n_sites() {
            return invalid("cut belongs to a different lattice");
        }
        let n = basis.n_particles();
        let inside: Vec<usize> = cut.iter().collect();
        let outside: Vec<usize> = cut.complement().iter().collect();

        let mut blocks = Vec::new();
        let mut offset = 0;
        for k in (0..=n).rev() {
            let ins = Side::new(&inside, k)?;
            let outs = Side::new(&outside, n - k)?;
            let (in_dim, out_dim) = (ins.dim(k), outs.dim(n - k));
            blocks.push(Block { k, offset, in_dim, out_dim, inside: ins, outside: outs });
            offset += in_dim * out_dim;
        }
        if offset != basis.len() {
            return invalid(format!("block dimensions sum to {offset}, sector has {}", basis.len()));
        }

        let mut forward = vec![0; basis.len()];
        let mut occ_in = Vec::with_capacity(inside.len());
        let mut occ_out = Vec::with_capacity(outside.len());
        for (idx, occ) in basis.states().enumerate() {
            occ_in.clear();
            occ_in.extend(inside.iter().map(|&x| occ[x]));
            occ_out.clear();
            occ_out.extend(outside.iter().map(|&x| occ[x]));
            let k: usize = occ_in.iter().map(|&m| m as usize).sum();
            let block = &blocks[n - k];
            forward[idx] = block.offset + block.inside.rank(&occ_in)? * block.out_dim + block.outside.rank(&occ_out)?;
        }
        Ok(Self { cut: cut.clone(), particles: n, blocks, forward })
    }

    pub fn cut(&self) -> &SiteSet {
        &self.cut
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// All N+1 blocks, including empty ones, from k = N down to 0.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// (inside dim, outside dim) per block.
    pub fn block_sizes(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.in_dim, b.out_dim)).collect()
    }

    /// Factorized index of each sector basis state.
    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.forward.len()];
        for (i, &f) in self.forward.iter().enumerate() {
            inv[f] = i;
        }
        inv
    }

    /// Whether `forward` hits every factorized index exactly once.
    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.forward.len()];
        for &f in &self.forward {
            if f >= seen.len() || seen[f] {
                return false;
            }
            seen[f] = true;
        }
        true
    }

    /// Inside particle number of a factorized index.
    pub fn sector_of(&self, factorized: usize) -> usize {
        let b = self.blocks.iter().find(|b| factorized >= b.offset && factorized < b.offset + b.len());
        b.map(|b| b.k).unwrap_or(self.particles)
    }

    /// U_ρ: sector basis → factorized basis.
    pub fn unitary(&self) -> SparseOperator {
        let n = self.forward.len();
        let trip = self.forward.iter().enumerate().map(|(i, &f)| (f, i, C64::new(1.0, 0.0))).collect();
        SparseOperator::from_triplets(n, n, trip)
    }

    /// H̃ = ⊕_k (H_< ⊗ 1 + 1 ⊗ H_>) in the factorized basis. Interactions
    /// stay on both sides; only bonds crossing the cut are dropped.
    pub fn decoupled_hamiltonian(&self, spec: &LatticeSpec, params: HamiltonianParams) -> Result<SparseOperator> {
        if spec.n_sites() != self.cut.n_sites() {
            return invalid("lattice does not match the cut");
        }
        let outside_set = self.cut.complement();
        let mut trip = Vec::new();
        for b in self.blocks.iter().filter(|b| !b.is_empty()) {
            let h_in = b.inside.hamiltonian(spec, &self.cut, params)?;
            let h_out = b.outside.hamiltonian(spec, &outside_set, params)?;
            for (i, j, val) in h_in.entries() {
                for a in 0..b.out_dim {
                    trip.push((b.offset + i * b.out_dim + a, b.offset + j * b.out_dim + a, val));
                }
            }
            for (a, c, val) in h_out.entries() {
                for i in 0..b.in_dim {
                    trip.push((b.offset + i * b.out_dim + a, b.offset + i * b.out_dim + c, val));
                }
            }
        }
        let n = self.len();
        Ok(SparseOperator::from_triplets(n, n, trip))
    }

    /// U*H̃U, the decoupled dynamics expressed in the sector basis.
    pub fn decoupled_in_sector_basis(&self, spec: &LatticeSpec, params: HamiltonianParams) -> Result<SparseOperator> {
        let u = self.unitary();
        u.adjoint().matmul(&self.decoupled_hamiltonian(spec, params)?.matmul(&u)?)
    }
}

pub fn factorize(basis: &FockBasis, cut: &SiteSet) -> Result<Factorization> {
    Factorization::new(basis, cut)
}

/// Σ_{x∉cut, y∈cut} J_xy (b*_x b_y + b*_y b_x) in the sector basis, which
/// equals H̃ − H after conjugating H̃ back with U_ρ.
pub fn boundary_defect_cut(spec: &LatticeSpec, basis: &FockBasis, cut: &SiteSet) -> Result<SparseOperator> {
    if spec.n_sites() != basis.n_sites() || cut.n_sites() != basis.n_sites() {
        return invalid("lattice, basis and cut disagree on the number of sites");
    }
    let mut trip = Vec::new();
    let mut scratch = Vec::with_capacity(basis.n_sites());
    for idx in 0..basis.len() {
        let occ = basis.occupations(idx);
        for y in 0..basis.n_sites() {
            if occ[y] == 0 {
                continue;
            }
            for &(x, j) in spec.neighbors(y) {
                if cut.contains(x) == cut.contains(y) {
                    continue;
                }
                if let Some((target, amp)) = basis.hop(idx, x, y, &mut scratch) {
                    trip.push((target, idx, C64::new(j * amp, 0.0)));
                }
            }
        }
    }
    let n = basis.len();
    Ok(SparseOperator::from_triplets(n, n, trip))
}

/// Boundary defect for the cut at the ball |x − center| < ρ.
pub fn boundary_defect(spec: &LatticeSpec, basis: &FockBasis, center: &[f64], rho: f64) -> Result<SparseOperator> {
    boundary_defect_cut(spec, basis, &spec.ball(center, rho))
}

/// max |H̃U − UH − U·defect| entrywise; zero up to rounding.
pub fn defect_identity_residual(
    spec: &LatticeSpec,
    basis: &FockBasis,
    params: HamiltonianParams,
    cut: &SiteSet,
) -> Result<f64> {
    let fact = Factorization::new(basis, cut)?;
    let u = fact.unitary();
    let h = build_hamiltonian(spec, basis, params, None)?;
    let ht = fact.decoupled_hamiltonian(spec, params)?;
    let lhs = ht.matmul(&u)?.sub(&u.matmul(&h)?)?;
    let rhs = u.matmul(&boundary_defect_cut(spec, basis, cut)?)?;
    lhs.max_abs_diff(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::sector_dimension;

    fn chain_setup(len: usize, n: usize) -> (LatticeSpec, FockBasis) {
        let spec = LatticeSpec::chain(len, 1.0).unwrap();
        let basis = FockBasis::enumerate(len, n).unwrap();
        (spec, basis)
    }

    #[test]
    fn block_dimensions_multiply_out() {
        let (spec, basis) = chain_setup(5, 3);
        let cut = spec.ball(&[0.0], 1.5);
        let fact = factorize(&basis, &cut).unwrap();
        assert!(fact.is_bijection());
        for (b, (din, dout)) in fact.blocks().iter().zip(fact.block_sizes()) {
            assert_eq!(din as u64, sector_dimension(3, b.k));
            assert_eq!(dout as u64, sector_dimension(2, 3 - b.k));
        }
        assert_eq!(fact.blocks()[0].k, 3);
    }

    #[test]
    fn empty_and_full_cuts() {
        let (_, basis) = chain_setup(4, 2);
        for cut in [SiteSet::empty(4), SiteSet::all(4)] {
            let fact = factorize(&basis, &cut).unwrap();
            assert!(fact.is_bijection());
            assert_eq!(fact.blocks().iter().filter(|b| !b.is_empty()).count(), 1);
        }
    }

    #[test]
    fn defect_identity_holds_on_chain_and_grid() {
        let params = HamiltonianParams::new(1.3, 0.4).unwrap();
        let (spec, basis) = chain_setup(6, 2);
        let cut = spec.ball(&[0.0], 1.5);
        assert!(defect_identity_residual(&spec, &basis, params, &cut).unwrap() < 1e-12);

        let grid = LatticeSpec::grid(&[2, 3], 0.7).unwrap();
        let basis = FockBasis::enumerate(6, 3).unwrap();
        let cut = SiteSet::from_indices(6, [0, 4]).unwrap();
        assert!(defect_identity_residual(&grid, &basis, params, &cut).unwrap() < 1e-12);
    }

    #[test]
    fn decoupled_hamiltonian_is_block_diagonal() {
        let params = HamiltonianParams::new(2.0, 0.0).unwrap();
        let (spec, basis) = chain_setup(5, 2);
        let fact = factorize(&basis, &spec.ball(&[0.0], 1.5)).unwrap();
        let ht = fact.decoupled_hamiltonian(&spec, params).unwrap();
        for (i, j, _) in ht.entries() {
            assert_eq!(fact.sector_of(i), fact.sector_of(j));
        }
        assert!(ht.is_hermitian(1e-14));
    }

    #[test]
    fn defect_vanishes_without_crossing_bonds() {
        let (spec, basis) = chain_setup(5, 2);
        let d = boundary_defect(&spec, &basis, &[0.0], 10.0).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }
}
