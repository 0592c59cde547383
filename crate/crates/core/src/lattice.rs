//! Finite lattices embedded in ℝ^d with a symmetric hopping matrix.
//!
//! Sites carry integer coordinates; every distance in the crate is the
//! Euclidean norm of a coordinate difference. Boundaries are open.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Lattices up to this many sites keep a dense hopping table.
const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
enum HoppingStore {
    Dense { n: usize, values: Vec<f64> },
    Sparse(BTreeMap<(usize, usize), f64>),
}

impl HoppingStore {
    fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            HoppingStore::Dense { n, values } => values[i * n + j],
            HoppingStore::Sparse(map) => {
                let key = if i < j { (i, j) } else { (j, i) };
                map.get(&key).copied().unwrap_or(0.0)
            }
        }
    }
}

/// A finite lattice Λ with hopping amplitudes J_xy.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    dim: usize,
    sites: Vec<Vec<i64>>,
    store: HoppingStore,
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// On-disk form: `{"dim": d, "sites": [[..]..], "hopping": [[i, j, J_ij], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatticeDoc {
    pub dim: usize,
    pub sites: Vec<Vec<i64>>,
    pub hopping: Vec<(usize, usize, f64)>,
}

fn centered_axis(len: usize) -> impl Iterator<Item = i64> {
    let offset = ((len - 1) / 2) as i64;
    (0..len as i64).map(move |k| k - offset)
}

impl LatticeSpec {
    /// General constructor. Hopping entries may be given on either ordering of
    /// a pair; repeated entries must agree.
    pub fn new(
        dim: usize,
        sites: Vec<Vec<i64>>,
        hopping: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if dim == 0 {
            return invalid("lattice dimension must be positive");
        }
        if sites.is_empty() {
            return invalid("lattice needs at least one site");
        }
        if let Some(bad) = sites.iter().position(|s| s.len() != dim) {
            return invalid(format!(
                "site {bad} has {} coordinates, expected {dim}",
                sites[bad].len()
            ));
        }
        let mut seen = BTreeMap::new();
        for (i, s) in sites.iter().enumerate() {
            if let Some(prev) = seen.insert(s.clone(), i) {
                return invalid(format!("sites {prev} and {i} share coordinates {s:?}"));
            }
        }

        let n = sites.len();
        let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, value) in hopping {
            if i >= n || j >= n {
                return invalid(format!("hopping pair ({i}, {j}) out of range for {n} sites"));
            }
            if !value.is_finite() {
                return invalid(format!("hopping ({i}, {j}) is not finite"));
            }
            if i == j {
                if value != 0.0 {
                    return invalid(format!("diagonal hopping J_{i}{i} must be zero"));
                }
                continue;
            }
            let key = if i < j { (i, j) } else { (j, i) };
            match pairs.get(&key) {
                Some(&prev) if prev != value => {
                    return invalid(format!(
                        "conflicting hopping for pair ({}, {}): {prev} vs {value}",
                        key.0, key.1
                    ));
                }
                _ => {
                    pairs.insert(key, value);
                }
            }
        }
        pairs.retain(|_, v| *v != 0.0);

        let mut adjacency = vec![Vec::new(); n];
        for (&(i, j), &v) in &pairs {
            adjacency[i].push((j, v));
            adjacency[j].push((i, v));
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(j, _)| j);
        }

        let store = if n <= DENSE_LIMIT {
            let mut values = vec![0.0; n * n];
            for (&(i, j), &v) in &pairs {
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
            HoppingStore::Dense { n, values }
        } else {
            HoppingStore::Sparse(pairs)
        };

        Ok(Self { dim, sites, store, adjacency })
    }

    /// Nearest-neighbor chain of `len` sites, centered so the middle site sits
    /// at (or just right of) the origin.
    pub fn chain(len: usize, hopping: f64) -> Result<Self> {
        if len == 0 {
            return invalid("chain length must be at least 1");
        }
        let sites = centered_axis(len).map(|x| vec![x]).collect();
        Self::new(1, sites, (1..len).map(|i| (i - 1, i, hopping)))
    }

    /// Hypercubic grid with nearest-neighbor hopping, each axis centered like
    /// [`LatticeSpec::chain`].
    pub fn grid(shape: &[usize], hopping: f64) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return invalid("grid shape must be non-empty with positive extents");
        }
        let mut sites: Vec<Vec<i64>> = vec![Vec::new()];
        for &len in shape {
            sites = sites
                .into_iter()
                .flat_map(|prefix| {
                    centered_axis(len).map(move |x| {
                        let mut s = prefix.clone();
                        s.push(x);
                        s
                    })
                })
                .collect();
        }
        let mut bonds = Vec::new();
        for i in 0..sites.len() {
            for j in i + 1..sites.len() {
                let d: i64 = sites[i].iter().zip(&sites[j]).map(|(a, b)| (a - b).abs()).sum();
                if d == 1 {
                    bonds.push((i, j, hopping));
                }
            }
        }
        Self::new(shape.len(), sites, bonds)
    }

    /// Every pair gets `hopping(distance)`; used for long-range models such as
    /// J_xy = |x−y|^{-4}.
    pub fn from_distance_fn(
        dim: usize,
        sites: Vec<Vec<i64>>,
        hopping: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let n = sites.len();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = euclid(&sites[i], &sites[j]);
                entries.push((i, j, hopping(d)));
            }
        }
        Self::new(dim, sites, entries)
    }

    /// Centered chain with J_xy = scale·|x−y|^{-power} for every pair.
    pub fn power_law_chain(len: usize, scale: f64, power: f64) -> Result<Self> {
        if len == 0 {
            return invalid("chain length must be at least 1");
        }
        let sites = centered_axis(len).map(|x| vec![x]).collect();
        Self::from_distance_fn(1, sites, |d| scale * d.powf(-power))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.sites[i]
    }

    pub fn sites(&self) -> &[Vec<i64>] {
        &self.sites
    }

    pub fn site_index(&self, coord: &[i64]) -> Option<usize> {
        self.sites.iter().position(|s| s.as_slice() == coord)
    }

    pub fn hopping(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.store.get(i, j)
        }
    }

    /// Nonzero hopping partners of site `i`, sorted by index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Undirected bonds `(i, j, J_ij)` with `i < j`.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |(j, _)| *j > i).map(move |&(j, v)| (i, j, v)))
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.store, HoppingStore::Dense { .. })
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclid(&self.sites[i], &self.sites[j])
    }

    /// |x − center| for site `i`.
    pub fn radius_from(&self, i: usize, center: &[f64]) -> f64 {
        self.sites[i]
            .iter()
            .zip(center)
            .map(|(&a, &c)| (a as f64 - c).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// κ_J^(p) = max_x Σ_y |J_xy| |x−y|^p.
    pub fn kappa_p(&self, p: u32) -> f64 {
        (0..self.n_sites())
            .map(|x| {
                self.adjacency[x]
                    .iter()
                    .map(|&(y, j)| j.abs() * self.distance(x, y).powi(p as i32))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// The velocity scale κ = κ_J^(1).
    pub fn kappa(&self) -> f64 {
        self.kappa_p(1)
    }

    /// Sites with |x − center| < radius (strict).
    pub fn ball(&self, center: &[f64], radius: f64) -> SiteSet {
        SiteSet::from_mask(
            (0..self.n_sites())
                .map(|i| self.radius_from(i, center) < radius)
                .collect(),
        )
    }

    /// Sites with |x − center| = radius, realized as a thin annulus.
    pub fn shell(&self, center: &[f64], radius: f64) -> SiteSet {
        const EPS: f64 = 1e-9;
        self.ball(center, radius + EPS).difference(&self.ball(center, radius - EPS))
    }

    /// Same geometry with every hopping amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.dim,
            self.sites.clone(),
            self.bonds().map(|(i, j, v)| (i, j, v * factor)).collect::<Vec<_>>(),
        )
    }

    /// Point reflection x → −x, keeping site indices.
    pub fn reflected(&self) -> Result<Self> {
        Self::new(
            self.dim,
            self.sites.iter().map(|s| s.iter().map(|x| -x).collect()).collect(),
            self.bonds().collect::<Vec<_>>(),
        )
    }

    /// Sub-lattice on the sites of `set` (in increasing index order) keeping
    /// only bonds with both ends inside. Also returns the parent index of
    /// each new site.
    pub fn restrict(&self, set: &SiteSet) -> Result<(Self, Vec<usize>)> {
        if set.n_sites() != self.n_sites() {
            return invalid("site set belongs to a different lattice");
        }
        let keep: Vec<usize> = set.iter().collect();
        let mut new_index = vec![usize::MAX; self.n_sites()];
        for (k, &i) in keep.iter().enumerate() {
            new_index[i] = k;
        }
        let bonds: Vec<_> = self
            .bonds()
            .filter(|&(i, j, _)| set.contains(i) && set.contains(j))
            .map(|(i, j, v)| (new_index[i], new_index[j], v))
            .collect();
        let sites = keep.iter().map(|&i| self.sites[i].clone()).collect();
        Ok((Self::new(self.dim, sites, bonds)?, keep))
    }

    pub fn to_doc(&self) -> LatticeDoc {
        LatticeDoc { dim: self.dim, sites: self.sites.clone(), hopping: self.bonds().collect() }
    }

    pub fn from_doc(doc: &LatticeDoc) -> Result<Self> {
        Self::new(doc.dim, doc.sites.clone(), doc.hopping.iter().copied())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LatticeDoc = serde_json::from_str(text)?;
        Self::from_doc(&doc)
    }
}

fn euclid(a: &[i64], b: &[i64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt()
}

/// A subset of a lattice's site indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SiteSet {
    mask: Vec<bool>,
}

impl SiteSet {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn from_indices(n_sites: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; n_sites];
        for i in indices {
            if i >= n_sites {
                return Err(Error::InvalidArgument(format!(
                    "site {i} out of range for {n_sites} sites"
                )));
            }
            mask[i] = true;
        }
        Ok(Self { mask })
    }

    pub fn all(n_sites: usize) -> Self {
        Self { mask: vec![true; n_sites] }
    }

    pub fn empty(n_sites: usize) -> Self {
        Self { mask: vec![false; n_sites] }
    }

    pub fn n_sites(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn complement(&self) -> Self {
        Self { mask: self.mask.iter().map(|m| !m).collect() }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect() }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect() }
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && !*b).collect() }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.intersection(other).is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restriction_keeps_inner_bonds() {
        let spec = LatticeSpec::power_law_chain(5, 1.0, 4.0).unwrap();
        let set = SiteSet::from_indices(5, [1, 2, 4]).unwrap();
        let (sub, parent) = spec.restrict(&set).unwrap();
        assert_eq!(parent, vec![1, 2, 4]);
        assert_eq!(sub.sites(), &[vec![-1], vec![0], vec![2]]);
        assert_eq!(sub.hopping(0, 2), spec.hopping(1, 4));
        assert_eq!(sub.bonds().count(), 3);
    }

    #[test]
    fn chain_of_three() {
        let spec = LatticeSpec::chain(3, 1.0).unwrap();
        assert_eq!(spec.sites(), &[vec![-1], vec![0], vec![1]]);
        assert_eq!(spec.hopping(0, 1), 1.0);
        assert_eq!(spec.hopping(1, 2), 1.0);
        assert_eq!(spec.hopping(0, 2), 0.0);
    }

    #[test]
    fn single_site_chain_has_no_bonds() {
        let spec = LatticeSpec::chain(1, 5.0).unwrap();
        assert_eq!(spec.n_sites(), 1);
        assert_eq!(spec.bonds().count(), 0);
        assert_eq!(spec.kappa(), 0.0);
    }

    #[test]
    fn chain_bond_count() {
        let spec = LatticeSpec::chain(5, 2.0).unwrap();
        let nonzero = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|&(i, j)| spec.hopping(i, j) != 0.0)
            .count();
        assert_eq!(nonzero, 8);
    }

    #[test]
    fn zero_length_chain_rejected() {
        assert!(matches!(LatticeSpec::chain(0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn square_grid() {
        let spec = LatticeSpec::grid(&[2, 2], 1.0).unwrap();
        assert_eq!(spec.n_sites(), 4);
        assert_eq!(spec.bonds().count(), 4);
    }

    #[test]
    fn constructor_errors() {
        let dup = LatticeSpec::new(1, vec![vec![0], vec![0]], []);
        assert!(matches!(dup, Err(Error::InvalidArgument(_))));
        let conflict = LatticeSpec::new(1, vec![vec![0], vec![1]], [(0, 1, 1.0), (1, 0, 2.0)]);
        assert!(matches!(conflict, Err(Error::InvalidArgument(_))));
        let agree = LatticeSpec::new(1, vec![vec![0], vec![1]], [(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(agree.is_ok());
        let diag = LatticeSpec::new(1, vec![vec![0], vec![1]], [(0, 0, 1.0)]);
        assert!(diag.is_err());
    }

    #[test]
    fn empty_hopping_is_interaction_only() {
        let spec = LatticeSpec::new(1, vec![vec![0], vec![1], vec![2]], []).unwrap();
        assert_eq!(spec.bonds().count(), 0);
        assert_eq!(spec.kappa_p(3), 0.0);
    }

    #[test]
    fn kappa_values() {
        assert_eq!(LatticeSpec::chain(5, 1.0).unwrap().kappa_p(1), 2.0);
        assert_eq!(LatticeSpec::chain(4, 1.5).unwrap().kappa(), 3.0);
        assert_eq!(LatticeSpec::chain(2, 0.7).unwrap().kappa(), 0.7);
        assert_eq!(LatticeSpec::grid(&[3, 3], 1.0).unwrap().kappa(), 4.0);
    }

    #[test]
    fn long_range_kappa_matches_pair_loop() {
        let spec = LatticeSpec::power_law_chain(7, 1.0, 4.0).unwrap();
        assert!(spec.is_dense());
        assert_eq!(spec.bonds().count(), 21);
        // Brute force over all ordered pairs; the center site (coordinate 0)
        // maximizes the sum.
        let coords: Vec<f64> = (-3..=3).map(|x| x as f64).collect();
        let mut best: f64 = 0.0;
        for &x in &coords {
            let mut sum = 0.0;
            for &y in &coords {
                if x != y {
                    let d = (x - y).abs();
                    sum += d.powi(-4) * d;
                }
            }
            best = best.max(sum);
        }
        let center: f64 = [1.0f64, 2.0, 3.0].iter().map(|d| 2.0 * d.powi(-3)).sum();
        assert!((best - center).abs() < 1e-15);
        assert!((spec.kappa() - best).abs() < 1e-14);
    }

    #[test]
    fn ball_is_strict() {
        let spec = LatticeSpec::chain(5, 1.0).unwrap();
        let b = spec.ball(&[0.0], 1.5);
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(spec.ball(&[0.0], 0.0).is_empty());
        assert!(spec.ball(&[0.0], 1.0).iter().eq([2]));
        assert_eq!(spec.ball(&[0.0], f64::INFINITY).len(), 5);
        let shell = spec.shell(&[0.0], 2.0);
        assert_eq!(shell.iter().collect::<Vec<_>>(), vec![0, 4]);
    }

    #[test]
    fn sparse_storage_above_limit() {
        let spec = LatticeSpec::chain(80, 1.0).unwrap();
        assert!(!spec.is_dense());
        assert_eq!(spec.hopping(10, 11), 1.0);
        assert_eq!(spec.hopping(11, 10), 1.0);
        assert_eq!(spec.hopping(10, 12), 0.0);
        assert_eq!(spec.kappa(), 2.0);
    }

    #[test]
    fn json_round_trip() {
        let spec = LatticeSpec::power_law_chain(6, 0.75, 4.0).unwrap();
        let text = spec.to_json().unwrap();
        let back = LatticeSpec::from_json(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.to_json().unwrap(), text);
    }
}
