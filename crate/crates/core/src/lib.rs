//! Exact dynamics and light-cone experiments for the generalized
//! Bose-Hubbard model on finite lattices.
//!
//! The crate builds fixed-N Fock sectors, sparse second-quantized operators,
//! smooth cutoff functions and their Taylor decompositions, and runs
//! propagation-bound experiments (particle transport, commutator sweeps,
//! Fock-space factorization, differential-inequality audits) on them.

pub mod cli;
pub mod cutoffs;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod lattice;
pub mod lightcone;
pub mod numerics;
pub mod operators;
pub mod sparse;

pub use error::{Error, Result};
pub use fock::{FockBasis, FockState};
pub use lattice::{LatticeSpec, SiteSet};
pub use operators::HamiltonianParams;
pub use sparse::{SparseOperator, C64};
