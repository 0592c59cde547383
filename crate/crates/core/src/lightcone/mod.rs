//! Light-cone experiments: configuration, sweeps, audits and reports.

pub mod audits;
pub mod config;
pub mod factorization;
pub mod report;
pub mod sweeps;

pub use audits::{calculus_audit, factorization_identity_audit, inequality_audit, operator_audit, taylor_audit};
pub use config::{ConeConfig, ConeConfigDoc, GridSpec, LatticeDescriptor, ObservableDescriptor, StateDescriptor, Thresholds};
pub use factorization::{boundary_defect, boundary_defect_cut, defect_identity_residual, factorize, Factorization};
pub use report::{AuditReport, AuditRow, Check, PassCounts, Report, SweepCell, SweepReport};
pub use sweeps::{commutator_sweep, factorization_sweep, signaling_experiment, transport_sweep, velocity_fit};
