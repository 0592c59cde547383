//! Experiment configuration: the serialized document and its resolved form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::StateVector;
use crate::fock::{FockBasis, FockState};
use crate::lattice::{LatticeDoc, LatticeSpec};
use crate::operators::{local_observable, HamiltonianParams};
use crate::sparse::{SparseOperator, C64};

/// Lattice recipe as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeDescriptor {
    Chain {
        length: usize,
        #[serde(default = "one")]
        hopping: f64,
    },
    Grid {
        shape: Vec<usize>,
        #[serde(default = "one")]
        hopping: f64,
    },
    PowerLawChain {
        length: usize,
        #[serde(default = "one")]
        scale: f64,
        power: f64,
    },
    Explicit(LatticeDoc),
}

fn one() -> f64 {
    1.0
}

impl LatticeDescriptor {
    pub fn build(&self) -> Result<LatticeSpec> {
        match self {
            LatticeDescriptor::Chain { length, hopping } => LatticeSpec::chain(*length, *hopping),
            LatticeDescriptor::Grid { shape, hopping } => LatticeSpec::grid(shape, *hopping),
            LatticeDescriptor::PowerLawChain { length, scale, power } => {
                LatticeSpec::power_law_chain(*length, *scale, *power)
            }
            LatticeDescriptor::Explicit(doc) => LatticeSpec::from_doc(doc),
        }
    }
}

/// Either an explicit list of values or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GridSpec::List(v) => Ok(v.clone()),
            GridSpec::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(Error::InvalidConfig(format!(
                        "range needs step > 0 and stop >= start, got {start}..{stop} by {step}"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|i| start + i as f64 * step).collect())
            }
        }
    }
}

/// One occupied site of a Fock configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occupation {
    pub site: Vec<i64>,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperpositionTerm {
    /// (re, im).
    pub amplitude: (f64, f64),
    pub fock: Vec<Occupation>,
}

/// Initial state: a Fock product state or a normalized superposition of at
/// most [`MAX_SUPERPOSITION`] of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateDescriptor {
    Fock(Vec<Occupation>),
    Superposition(Vec<SuperpositionTerm>),
}

pub const MAX_SUPERPOSITION: usize = 8;

fn occupations(spec: &LatticeSpec, occ: &[Occupation]) -> Result<FockState> {
    let mut n = vec![0u32; spec.n_sites()];
    for o in occ {
        let i = spec
            .site_index(&o.site)
            .ok_or_else(|| Error::InvalidConfig(format!("no lattice site at {:?}", o.site)))?;
        n[i] += o.n;
    }
    Ok(FockState(n))
}

impl StateDescriptor {
    /// The Fock configurations involved, with amplitudes.
    pub fn terms(&self, spec: &LatticeSpec) -> Result<Vec<(C64, FockState)>> {
        match self {
            StateDescriptor::Fock(occ) => Ok(vec![(C64::new(1.0, 0.0), occupations(spec, occ)?)]),
            StateDescriptor::Superposition(terms) => {
                if terms.is_empty() || terms.len() > MAX_SUPERPOSITION {
                    return Err(Error::InvalidConfig(format!(
                        "superposition needs 1..={MAX_SUPERPOSITION} terms, got {}",
                        terms.len()
                    )));
                }
                terms
                    .iter()
                    .map(|t| Ok((C64::new(t.amplitude.0, t.amplitude.1), occupations(spec, &t.fock)?)))
                    .collect()
            }
        }
    }

    pub fn particle_number(&self, spec: &LatticeSpec) -> Result<usize> {
        let terms = self.terms(spec)?;
        let n = terms[0].1.total();
        if terms.iter().any(|(_, s)| s.total() != n) {
            return Err(Error::InvalidConfig("superposition mixes particle numbers".into()));
        }
        Ok(n as usize)
    }

    pub fn build(&self, spec: &LatticeSpec, basis: &FockBasis) -> Result<StateVector> {
        let terms = self.terms(spec)?;
        if terms.iter().any(|(_, s)| s.total() as usize != basis.n_particles()) {
            return Err(Error::InvalidConfig(format!(
                "initial state does not have {} particles",
                basis.n_particles()
            )));
        }
        let state = StateVector::superposition(basis, &terms)
            .map_err(|e| Error::InvalidConfig(format!("initial state: {e}")))?;
        Ok(state)
    }

    /// Default: N particles on the sites closest to `center`, one per site.
    pub fn near_center(spec: &LatticeSpec, center: &[f64], particles: usize) -> Self {
        let mut order: Vec<usize> = (0..spec.n_sites()).collect();
        order.sort_by(|&i, &j| spec.radius_from(i, center).total_cmp(&spec.radius_from(j, center)).then(i.cmp(&j)));
        let mut counts = vec![0u32; spec.n_sites()];
        for k in 0..particles {
            counts[order[k % order.len()]] += 1;
        }
        let mut occ: Vec<Occupation> = Vec::new();
        for (i, &n) in counts.iter().enumerate() {
            if n > 0 {
                occ.push(Occupation { site: spec.site(i).to_vec(), n });
            }
        }
        StateDescriptor::Fock(occ)
    }
}

/// Local observable h(n_x) at one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableDescriptor {
    pub site: Vec<i64>,
    #[serde(default)]
    pub kind: ObservableKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ObservableKind {
    /// 1[n_x ≥ 1].
    #[default]
    Occupied,
    /// 1[n_x = n].
    Exactly { n: u32 },
    /// n_x.
    Number,
}

impl ObservableDescriptor {
    pub fn site_index(&self, spec: &LatticeSpec) -> Result<usize> {
        spec.site_index(&self.site)
            .ok_or_else(|| Error::InvalidConfig(format!("observable site {:?} not on the lattice", self.site)))
    }

    pub fn build(&self, spec: &LatticeSpec, basis: &FockBasis) -> Result<SparseOperator> {
        let site = self.site_index(spec)?;
        match self.kind {
            ObservableKind::Occupied => local_observable(basis, site, |n| if n >= 1 { 1.0 } else { 0.0 }),
            ObservableKind::Exactly { n: k } => local_observable(basis, site, move |n| if n == k { 1.0 } else { 0.0 }),
            ObservableKind::Number => local_observable(basis, site, |n| n as f64),
        }
    }
}

/// Pass/fail thresholds. Fractions are relative to ⟨N⟩ (and ‖A‖‖B‖ where
/// observables enter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Leakage allowance outside the cone, as a fraction of ⟨N⟩.
    pub transport: f64,
    /// Commutator allowance inside the cone, as a fraction of ‖A‖‖B‖⟨N⟩.
    pub commutator: f64,
    /// Required ratio of the first post-cone sample to the in-cone maximum.
    pub arrival_ratio: f64,
    /// Remainder allowance for the factorized product, fraction of ‖A‖‖B‖⟨N⟩.
    pub factorization: f64,
    /// Front detection level for velocity fits, fraction of ⟨N⟩.
    pub velocity: f64,
    /// Allowed fitted velocity as a multiple of κ.
    pub velocity_ceiling: f64,
    /// Largest acceptable fitted multiplier of the correction terms.
    pub inequality_multiplier: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            transport: 1e-2,
            commutator: 1e-3,
            arrival_ratio: 10.0,
            factorization: 1e-3,
            velocity: 0.05,
            velocity_ceiling: 1.15,
            inequality_multiplier: 10.0,
        }
    }
}

/// Serialized cone configuration; omitted fields take documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfigDoc {
    pub lattice: LatticeDescriptor,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub mu: f64,
    /// Defaults to the particle number of the initial state, or 1.
    #[serde(default)]
    pub particles: Option<usize>,
    /// Origin of |x|; defaults to the coordinate origin.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub rho_grid: Option<GridSpec>,
    #[serde(default)]
    pub t_grid: Option<GridSpec>,
    /// Defaults to 1.5κ (1 when κ = 0).
    #[serde(default)]
    pub c: Option<f64>,
    /// Defaults to (κ + c)/2.
    #[serde(default)]
    pub v: Option<f64>,
    /// Defaults to max(t_grid), or 1 if that is 0.
    #[serde(default)]
    pub s: Option<f64>,
    /// Defaults to b + 0.5.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub initial_state: Option<StateDescriptor>,
    #[serde(default)]
    pub observable_a: Option<ObservableDescriptor>,
    #[serde(default)]
    pub observable_b: Option<ObservableDescriptor>,
    #[serde(default)]
    pub r_grid: Option<Vec<f64>>,
    #[serde(default = "default_order")]
    pub taylor_order: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_b() -> f64 {
    1.5
}

fn default_alpha() -> f64 {
    0.5
}

fn default_order() -> usize {
    1
}

/// Resolved configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeConfig {
    pub lattice: LatticeDescriptor,
    pub spec: LatticeSpec,
    pub params: HamiltonianParams,
    pub particles: usize,
    pub center: Vec<f64>,
    pub b: f64,
    pub rho_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub c: f64,
    pub v: f64,
    pub s: f64,
    pub a: f64,
    pub alpha: f64,
    pub initial_state: StateDescriptor,
    pub observable_a: ObservableDescriptor,
    pub observable_b: ObservableDescriptor,
    pub r_grid: Vec<f64>,
    pub taylor_order: usize,
    pub thresholds: Thresholds,
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

impl ConeConfigDoc {
    /// A minimal document for a lattice, everything else defaulted.
    pub fn for_lattice(lattice: LatticeDescriptor) -> Self {
        serde_json::from_value(serde_json::json!({ "lattice": lattice })).expect("minimal config is valid")
    }

    pub fn resolve(&self) -> Result<ConeConfig> {
        let spec = self.lattice.build().map_err(|e| cfg_err("lattice", e.to_string()))?;
        let params = HamiltonianParams::new(self.g, self.mu).map_err(|e| cfg_err("g", e.to_string()))?;
        let kappa = spec.kappa();
        let center = match &self.center {
            Some(c) if c.len() != spec.dim() => {
                return Err(cfg_err("center", format!("expected {} coordinates, got {}", spec.dim(), c.len())))
            }
            Some(c) => c.clone(),
            None => vec![0.0; spec.dim()],
        };
        if !(self.b > 0.0) {
            return Err(cfg_err("b", format!("b must be positive, got {}", self.b)));
        }
        let particles = match (&self.particles, &self.initial_state) {
            (Some(n), _) => *n,
            (None, Some(s)) => s.particle_number(&spec).map_err(|e| cfg_err("initial_state", e.to_string()))?,
            (None, None) => 1,
        };
        let initial_state = match &self.initial_state {
            Some(s) => s.clone(),
            None => StateDescriptor::near_center(&spec, &center, particles),
        };
        let max_radius = (0..spec.n_sites()).map(|i| spec.radius_from(i, &center)).fold(0.0, f64::max);
        let rho_grid = match &self.rho_grid {
            Some(g) => g.values().map_err(|e| cfg_err("rho_grid", e.to_string()))?,
            None => {
                let mut v = Vec::new();
                let mut r = (self.b - 0.5).ceil() + 0.5;
                while r < max_radius {
                    v.push(r);
                    r += 1.0;
                }
                v
            }
        };
        if rho_grid.is_empty() {
            return Err(cfg_err("rho_grid", "no radii"));
        }
        if let Some(r) = rho_grid.iter().find(|&&r| r < self.b) {
            return Err(cfg_err("rho_grid", format!("radius {r} is smaller than b = {}", self.b)));
        }
        let t_grid = match &self.t_grid {
            Some(g) => g.values().map_err(|e| cfg_err("t_grid", e.to_string()))?,
            None => GridSpec::Range { start: 0.0, stop: 3.0, step: 0.01 }.values()?,
        };
        if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("t_grid", "times must be nonnegative and strictly increasing"));
        }
        let c = self.c.unwrap_or(if kappa > 0.0 { 1.5 * kappa } else { 1.0 });
        if !(c > kappa) {
            return Err(cfg_err(
                "c",
                format!("c = {c} must exceed the maximal velocity kappa = {kappa} of this lattice"),
            ));
        }
        let v = self.v.unwrap_or(0.5 * (kappa + c));
        if !(v > kappa && v < c) {
            return Err(cfg_err("v", format!("need c > v > kappa, got c = {c}, v = {v}, kappa = {kappa}")));
        }
        let t_max = *t_grid.last().expect("non-empty");
        let s = self.s.unwrap_or(if t_max > 0.0 { t_max } else { 1.0 });
        if !(s > 0.0) {
            return Err(cfg_err("s", format!("s must be positive, got {s}")));
        }
        let a = self.a.unwrap_or(self.b + 0.5);
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(cfg_err("alpha", format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let nearest = |far: bool| {
            let mut best = 0;
            for i in 0..spec.n_sites() {
                let (ri, rb) = (spec.radius_from(i, &center), spec.radius_from(best, &center));
                if (far && ri > rb) || (!far && ri < rb) {
                    best = i;
                }
            }
            ObservableDescriptor { site: spec.site(best).to_vec(), kind: ObservableKind::Occupied }
        };
        let observable_a = self.observable_a.clone().unwrap_or_else(|| nearest(false));
        let observable_b = self.observable_b.clone().unwrap_or_else(|| nearest(true));
        observable_a.site_index(&spec).map_err(|e| cfg_err("observable_a.site", e.to_string()))?;
        observable_b.site_index(&spec).map_err(|e| cfg_err("observable_b.site", e.to_string()))?;
        let r_grid = self.r_grid.clone().unwrap_or_else(|| vec![0.1, 0.05, 0.025, 0.0125]);
        if self.taylor_order == 0 {
            return Err(cfg_err("taylor_order", "must be at least 1"));
        }
        Ok(ConeConfig {
            lattice: self.lattice.clone(),
            spec,
            params,
            particles,
            center,
            b: self.b,
            rho_grid,
            t_grid,
            c,
            v,
            s,
            a,
            alpha: self.alpha,
            initial_state,
            observable_a,
            observable_b,
            r_grid,
            taylor_order: self.taylor_order,
            thresholds: self.thresholds.clone(),
        })
    }
}

impl ConeConfig {
    /// Fully explicit document; resolving it reproduces `self`.
    pub fn to_doc(&self) -> ConeConfigDoc {
        ConeConfigDoc {
            lattice: self.lattice.clone(),
            g: self.params.g,
            mu: self.params.mu,
            particles: Some(self.particles),
            center: Some(self.center.clone()),
            b: self.b,
            rho_grid: Some(GridSpec::List(self.rho_grid.clone())),
            t_grid: Some(GridSpec::List(self.t_grid.clone())),
            c: Some(self.c),
            v: Some(self.v),
            s: Some(self.s),
            a: Some(self.a),
            alpha: self.alpha,
            initial_state: Some(self.initial_state.clone()),
            observable_a: Some(self.observable_a.clone()),
            observable_b: Some(self.observable_b.clone()),
            r_grid: Some(self.r_grid.clone()),
            taylor_order: self.taylor_order,
            thresholds: self.thresholds.clone(),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.spec.kappa()
    }

    pub fn basis(&self) -> Result<FockBasis> {
        FockBasis::enumerate(self.spec.n_sites(), self.particles)
    }

    /// |x − center| for every site.
    pub fn radii(&self) -> Vec<f64> {
        (0..self.spec.n_sites()).map(|i| self.spec.radius_from(i, &self.center)).collect()
    }
}
