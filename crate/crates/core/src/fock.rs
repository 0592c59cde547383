//! Fixed-N occupation-number bases.
//!
//! States are ordered lexicographically with site 0 most significant and
//! larger occupations first, so `(N, 0, …, 0)` has rank 0. Ranking uses the
//! combinatorial number system and needs no hash table.

use std::fmt;

use crate::error::{Error, Result};

/// Default cap on the sector dimension C(N+M−1, N).
pub const DEFAULT_DIM_CAP: u64 = 5_000_000;

/// Environment variable overriding [`DEFAULT_DIM_CAP`].
pub const DIM_CAP_ENV: &str = "HUBBARD_CONE_DIM_CAP";

pub fn dim_cap() -> u64 {
    std::env::var(DIM_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_DIM_CAP)
}

/// Occupation numbers, one per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState(pub Vec<u32>);

impl FockState {
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&n| n as u64).sum()
    }

    pub fn occupations(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

/// b_x: returns the lowered state and √n_x (zero amplitude, unchanged state,
/// when the mode is empty).
pub fn annihilate(state: &FockState, site: usize) -> (FockState, f64) {
    let n = state.0[site];
    if n == 0 {
        return (state.clone(), 0.0);
    }
    let mut out = state.clone();
    out.0[site] -= 1;
    (out, (n as f64).sqrt())
}

/// b*_x: returns the raised state and √(n_x+1). Leaves the N-sector.
pub fn create(state: &FockState, site: usize) -> (FockState, f64) {
    let mut out = state.clone();
    out.0[site] += 1;
    let amp = (out.0[site] as f64).sqrt();
    (out, amp)
}

/// Number of N-particle states on M sites, saturating.
pub fn sector_dimension(sites: usize, particles: usize) -> u64 {
    binomial_saturating((particles + sites).saturating_sub(1) as u64, particles as u64)
}

fn binomial_saturating(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// The ordered basis of one (M sites, N particles) sector.
#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    sites: usize,
    particles: usize,
    occupations: Vec<u32>,
    // tail[k][n] = number of ways to place n particles on k sites.
    tail: Vec<Vec<u64>>,
}

impl FockBasis {
    /// Enumerates the sector, respecting [`dim_cap`].
    pub fn enumerate(sites: usize, particles: usize) -> Result<Self> {
        Self::enumerate_with_cap(sites, particles, dim_cap())
    }

    pub fn enumerate_with_cap(sites: usize, particles: usize, cap: u64) -> Result<Self> {
        if sites == 0 {
            return Err(Error::InvalidArgument("basis needs at least one site".into()));
        }
        let dim = sector_dimension(sites, particles);
        if dim > cap {
            return Err(Error::ResourceLimit(format!(
                "sector dimension C({}, {particles}) = {dim} exceeds cap {cap} \
                 (set {DIM_CAP_ENV} to raise it)",
                particles + sites - 1
            )));
        }

        let tail = (0..=sites)
            .map(|k| (0..=particles).map(|n| if k == 0 { u64::from(n == 0) } else { sector_dimension(k, n) }).collect())
            .collect();

        let mut occupations = Vec::with_capacity(dim as usize * sites);
        let mut state = vec![0u32; sites];
        state[0] = particles as u32;
        loop {
            occupations.extend_from_slice(&state);
            // Next state in descending lexicographic order: lower the last
            // non-zero entry before the final site and sweep everything to
            // its right into the following slot.
            let Some(i) = (0..sites - 1).rev().find(|&i| state[i] > 0) else {
                break;
            };
            let rest: u32 = state[i + 1..].iter().sum();
            state[i] -= 1;
            for s in &mut state[i + 1..] {
                *s = 0;
            }
            state[i + 1] = rest + 1;
        }
        debug_assert_eq!(occupations.len() as u64, dim * sites as u64);

        Ok(Self { sites, particles, occupations, tail })
    }

    pub fn n_sites(&self) -> usize {
        self.sites
    }

    pub fn n_particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.occupations.len() / self.sites
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    /// Occupations of the state at `index`.
    pub fn occupations(&self, index: usize) -> &[u32] {
        &self.occupations[index * self.sites..(index + 1) * self.sites]
    }

    pub fn unrank(&self, index: usize) -> FockState {
        FockState(self.occupations(index).to_vec())
    }

    pub fn states(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.occupations.chunks_exact(self.sites)
    }

    /// Position of `occupations` in the ordered basis.
    pub fn rank_slice(&self, occupations: &[u32]) -> Result<usize> {
        if occupations.len() != self.sites {
            return Err(Error::InvalidArgument(format!(
                "state has {} sites, basis has {}",
                occupations.len(),
                self.sites
            )));
        }
        let total: u64 = occupations.iter().map(|&n| n as u64).sum();
        if total != self.particles as u64 {
            return Err(Error::InvalidArgument(format!(
                "state holds {total} particles, basis sector has {}",
                self.particles
            )));
        }
        Ok(self.rank_unchecked(occupations))
    }

    pub fn rank(&self, state: &FockState) -> Result<usize> {
        self.rank_slice(&state.0)
    }

    /// Rank without validation; the caller guarantees length and total.
    pub(crate) fn rank_unchecked(&self, occupations: &[u32]) -> usize {
        let mut remaining = self.particles;
        let mut rank = 0u64;
        for (i, &n) in occupations[..self.sites - 1].iter().enumerate() {
            let n = n as usize;
            if remaining > n {
                // All states with a larger occupation here come first: they
                // place at most remaining−n−1 particles on the k sites after i.
                let k = self.sites - i - 1;
                rank += self.cumulative(k, remaining - n - 1);
            }
            remaining -= n;
        }
        rank as usize
    }

    // Σ_{q=0}^{upto} (ways to put q particles on k sites) = ways to put
    // `upto` particles on k+1 sites.
    fn cumulative(&self, k: usize, upto: usize) -> u64 {
        self.tail[k + 1][upto]
    }

    /// Index of the state obtained by moving one particle from `from` to `to`,
    /// with amplitude √n_from·√(n_to+1). `None` when `from` is empty.
    pub fn hop(&self, index: usize, to: usize, from: usize, scratch: &mut Vec<u32>) -> Option<(usize, f64)> {
        let occ = self.occupations(index);
        let n_from = occ[from];
        if n_from == 0 {
            return None;
        }
        if to == from {
            return Some((index, n_from as f64));
        }
        scratch.clear();
        scratch.extend_from_slice(occ);
        let amp = (n_from as f64).sqrt() * ((scratch[to] + 1) as f64).sqrt();
        scratch[from] -= 1;
        scratch[to] += 1;
        Some((self.rank_unchecked(scratch), amp))
    }
}
