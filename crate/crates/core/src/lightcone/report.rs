//! Sweep and audit reports with their CSV and JSON forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

/// Fixed 17-significant-digit float formatting used by every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_pass(p: Option<bool>) -> &'static str {
    match p {
        Some(true) => "true",
        Some(false) => "false",
        None => "skip",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PassCounts {
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
}

impl PassCounts {
    fn tally(flags: impl Iterator<Item = Option<bool>>) -> Self {
        let mut c = Self::default();
        for f in flags {
            match f {
                Some(true) => c.pass += 1,
                Some(false) => c.fail += 1,
                None => c.skipped += 1,
            }
        }
        c
    }
}

/// One (t, ρ) grid cell. Cells outside the asserted region carry no bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub t: f64,
    pub rho: f64,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

/// A named scalar assertion attached to a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

impl Check {
    pub fn new(name: &str, value: Option<f64>, bound: Option<f64>, pass: Option<bool>) -> Self {
        Self { name: name.to_string(), value, bound, pass }
    }
}

/// Grid of (t, ρ) measurements with bounds and pass flags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub experiment: String,
    pub cells: Vec<SweepCell>,
    pub kappa: f64,
    pub fitted_velocity: Option<f64>,
    pub thresholds: BTreeMap<String, f64>,
    /// Propagation backend and tolerances shared by all cells.
    pub provenance: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub extras: BTreeMap<String, f64>,
    /// A companion sweep written next to this one (e.g. mirrored bounds).
    pub companion: Option<Box<SweepReport>>,
}

impl SweepReport {
    pub fn new(experiment: &str, kappa: f64) -> Self {
        Self { experiment: experiment.to_string(), kappa, ..Default::default() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,rho,value,bound,pass\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt_f64(c.t),
                fmt_f64(c.rho),
                fmt_f64(c.value),
                fmt_opt(c.bound),
                fmt_pass(c.pass)
            );
        }
        s
    }

    pub fn pass_counts(&self) -> PassCounts {
        PassCounts::tally(self.cells.iter().map(|c| c.pass).chain(self.checks.iter().map(|c| c.pass)))
    }

    /// True when no cell or check (including the companion's) failed.
    pub fn passed(&self) -> bool {
        self.pass_counts().fail == 0 && self.companion.as_ref().is_none_or(|c| c.passed())
    }

    /// Cells at a given ρ in time order.
    pub fn column(&self, rho: f64) -> Vec<&SweepCell> {
        self.cells.iter().filter(|c| c.rho == rho).collect()
    }

    pub fn rhos(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.rho) {
                out.push(c.rho);
            }
        }
        out
    }

    pub fn summary(&self) -> Value {
        json!({
            "experiment": self.experiment,
            "kappa": self.kappa,
            "fitted_velocity": self.fitted_velocity,
            "thresholds": self.thresholds,
            "pass_counts": self.pass_counts(),
            "checks": self.checks,
            "provenance": self.provenance,
            "extras": self.extras,
        })
    }
}

/// One audit measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub check: String,
    pub instance: usize,
    pub param: f64,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

/// Flat list of audit measurements.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub experiment: String,
    pub rows: Vec<AuditRow>,
    pub extras: BTreeMap<String, f64>,
}

impl AuditReport {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.to_string(), ..Default::default() }
    }

    /// Record a value; `pass` is evaluated by the caller.
    pub fn push(&mut self, check: &str, instance: usize, param: f64, value: f64, bound: Option<f64>, pass: Option<bool>) {
        self.rows.push(AuditRow { check: check.to_string(), instance, param, value, bound, pass });
    }

    /// Record a value asserted to satisfy `value <= bound`.
    pub fn push_le(&mut self, check: &str, instance: usize, param: f64, value: f64, bound: f64) {
        self.push(check, instance, param, value, Some(bound), Some(value <= bound));
    }

    /// Record a value asserted to satisfy `value >= bound`.
    pub fn push_ge(&mut self, check: &str, instance: usize, param: f64, value: f64, bound: f64) {
        self.push(check, instance, param, value, Some(bound), Some(value >= bound));
    }

    pub fn extend(&mut self, other: AuditReport) {
        self.rows.extend(other.rows);
        self.extras.extend(other.extras);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,instance,param,value,bound,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.check,
                r.instance,
                fmt_f64(r.param),
                fmt_f64(r.value),
                fmt_opt(r.bound),
                fmt_pass(r.pass)
            );
        }
        s
    }

    pub fn pass_counts(&self) -> PassCounts {
        PassCounts::tally(self.rows.iter().map(|r| r.pass))
    }

    pub fn passed(&self) -> bool {
        self.pass_counts().fail == 0
    }

    pub fn rows_for<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a AuditRow> + 'a {
        self.rows.iter().filter(move |r| r.check == check)
    }

    pub fn summary(&self) -> Value {
        let mut per_check: BTreeMap<&str, PassCounts> = BTreeMap::new();
        for r in &self.rows {
            let e = per_check.entry(&r.check).or_default();
            match r.pass {
                Some(true) => e.pass += 1,
                Some(false) => e.fail += 1,
                None => e.skipped += 1,
            }
        }
        json!({
            "experiment": self.experiment,
            "pass_counts": self.pass_counts(),
            "per_check": per_check,
            "extras": self.extras,
        })
    }
}

/// Either kind of report, as produced by an experiment run.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Sweep(SweepReport),
    Audit(AuditReport),
}

impl Report {
    pub fn experiment(&self) -> &str {
        match self {
            Report::Sweep(r) => &r.experiment,
            Report::Audit(r) => &r.experiment,
        }
    }

    pub fn to_csv(&self) -> String {
        match self {
            Report::Sweep(r) => r.to_csv(),
            Report::Audit(r) => r.to_csv(),
        }
    }

    pub fn passed(&self) -> bool {
        match self {
            Report::Sweep(r) => r.passed(),
            Report::Audit(r) => r.passed(),
        }
    }

    pub fn summary(&self) -> Value {
        match self {
            Report::Sweep(r) => r.summary(),
            Report::Audit(r) => r.summary(),
        }
    }
}
