//! Command-line front end: config parsing, dotted-path overrides, experiment
//! dispatch and report files.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lightcone::report::Report;
use crate::lightcone::{self, ConeConfig, ConeConfigDoc};

/// Exit status when every assertion passed.
pub const EXIT_PASS: i32 = 0;
/// Exit status for operational errors (bad config, I/O, resource limits).
pub const EXIT_ERROR: i32 = 1;
/// Exit status when the run completed but an assertion failed.
pub const EXIT_FAIL: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Transport,
    Commutator,
    Signal,
    Factorization,
    AuditOperators,
    AuditTaylor,
    AuditInequality,
    AuditFactorization,
    AuditCalculus,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Transport => "transport",
            Experiment::Commutator => "commutator",
            Experiment::Signal => "signal",
            Experiment::Factorization => "factorization",
            Experiment::AuditOperators => "audit-operators",
            Experiment::AuditTaylor => "audit-taylor",
            Experiment::AuditInequality => "audit-inequality",
            Experiment::AuditFactorization => "audit-factorization",
            Experiment::AuditCalculus => "audit-calculus",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_instances() -> usize {
    24
}

/// The on-disk run document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunDoc {
    #[serde(default)]
    experiment: Option<Experiment>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_instances")]
    instances: usize,
    #[serde(default)]
    verbosity: u8,
    cone: ConeConfigDoc,
}

/// A validated run: experiment kind, resolved cone config and run options.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub cone: ConeConfig,
    pub out: PathBuf,
    /// Seed for randomized audit instances.
    pub seed: u64,
    /// Number of randomized audit instances.
    pub instances: usize,
    pub verbosity: u8,
}

impl RunConfig {
    /// Fully explicit document; parsing it yields the same config.
    pub fn to_document(&self) -> Value {
        json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "instances": self.instances,
            "verbosity": self.verbosity,
            "cone": self.cone.to_doc(),
        })
    }

    /// First 12 hex digits of SHA-256 over the canonical document. Keys are
    /// sorted and output options are excluded, so equal runs share a hash.
    pub fn hash(&self) -> String {
        let mut doc = self.to_document();
        doc.as_object_mut().expect("object").remove("verbosity");
        let digest = Sha256::digest(doc.to_string().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Set `path` (dot separated) in a JSON document, creating objects along
/// the way. Values parse as JSON when possible and as strings otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config { path: assignment.into(), message: "expected key=value".into() })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(Error::Config { path: path.into(), message: "empty path segment".into() });
        }
        let obj = match node {
            Value::Object(m) => m,
            _ => {
                return Err(Error::Config {
                    path: keys[..i].join("."),
                    message: "cannot set a field inside a non-object value".into(),
                })
            }
        };
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn prefix_config_error(e: Error) -> Error {
    match e {
        Error::Config { path, message } => Error::Config { path: format!("cone.{path}"), message },
        other => other,
    }
}

/// Build a run from a JSON document plus overrides.
pub fn parse_document(mut doc: Value, overrides: &[String], experiment: Option<Experiment>) -> Result<RunConfig> {
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let run: RunDoc = serde_path_to_error::deserialize(doc).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let experiment = experiment.or(run.experiment).ok_or_else(|| Error::Config {
        path: "experiment".into(),
        message: "no experiment given on the command line or in the config".into(),
    })?;
    let cone = run.cone.resolve().map_err(prefix_config_error)?;
    Ok(RunConfig {
        experiment,
        cone,
        out: PathBuf::from("reports"),
        seed: run.seed,
        instances: run.instances,
        verbosity: run.verbosity,
    })
}

/// Read and validate a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_with(path, &[], None)
}

pub fn parse_config_with(path: &Path, overrides: &[String], experiment: Option<Experiment>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let doc: Value = serde_json::from_str(&text)?;
    parse_document(doc, overrides, experiment)
}

/// Run the selected experiment and return its report.
pub fn execute(cfg: &RunConfig) -> Result<Report> {
    let cone = &cfg.cone;
    Ok(match cfg.experiment {
        Experiment::Transport => Report::Sweep(lightcone::transport_sweep(cone)?),
        Experiment::Commutator => Report::Sweep(lightcone::commutator_sweep(cone)?),
        Experiment::Signal => Report::Sweep(lightcone::signaling_experiment(cone)?),
        Experiment::Factorization => Report::Sweep(lightcone::factorization_sweep(cone)?),
        Experiment::AuditOperators => Report::Audit(lightcone::operator_audit(cfg.seed, cfg.instances)?),
        Experiment::AuditTaylor => Report::Audit(lightcone::taylor_audit(cone.c, cone.v, cone.taylor_order.max(3))?),
        Experiment::AuditInequality => Report::Audit(lightcone::inequality_audit(cone)?),
        Experiment::AuditFactorization => {
            Report::Audit(lightcone::factorization_identity_audit(cfg.seed, cfg.instances)?)
        }
        Experiment::AuditCalculus => Report::Audit(lightcone::calculus_audit(cone)?),
    })
}

/// Summary JSON with the run's config and hash attached.
pub fn summary_json(cfg: &RunConfig, report: &Report, hash: &str) -> Value {
    let mut s = report.summary();
    let obj = s.as_object_mut().expect("summaries are objects");
    obj.insert("config".into(), cfg.to_document());
    obj.insert("hash".into(), json!(hash));
    obj.entry("kappa").or_insert(json!(cfg.cone.kappa()));
    obj.entry("fitted_velocity").or_insert(Value::Null);
    obj.entry("thresholds").or_insert(json!(cfg.cone.thresholds));
    s
}

/// Write `<experiment>-<hash>.csv` and `.json` (plus companion sweeps) into
/// `cfg.out`. Returns the written paths.
pub fn write_report(cfg: &RunConfig, report: &Report) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out)?;
    let hash = cfg.hash();
    let mut parts = vec![report.clone()];
    if let Report::Sweep(r) = report {
        if let Some(c) = &r.companion {
            parts.push(Report::Sweep((**c).clone()));
        }
    }
    let mut written = Vec::new();
    for part in &parts {
        let stem = format!("{}-{hash}", part.experiment());
        let csv = cfg.out.join(format!("{stem}.csv"));
        std::fs::write(&csv, part.to_csv())?;
        let js = cfg.out.join(format!("{stem}.json"));
        std::fs::write(&js, serde_json::to_string_pretty(&summary_json(cfg, part, &hash))? + "\n")?;
        written.push(csv);
        written.push(js);
    }
    Ok(written)
}

/// Execute, write reports and report whether every assertion held.
pub fn run(cfg: &RunConfig) -> Result<bool> {
    let report = execute(cfg)?;
    let files = write_report(cfg, &report)?;
    let counts = match &report {
        Report::Sweep(r) => r.pass_counts(),
        Report::Audit(r) => r.pass_counts(),
    };
    let passed = report.passed();
    println!(
        "{}: {} ({} passed, {} failed, {} recorded)",
        cfg.experiment,
        if passed { "pass" } else { "FAIL" },
        counts.pass,
        counts.fail,
        counts.skipped
    );
    if cfg.verbosity > 0 {
        for f in &files {
            eprintln!("wrote {}", f.display());
        }
    }
    Ok(passed)
}

#[derive(Debug, Parser)]
#[command(name = "hubbard-cone", version, about = "Light-cone experiments for the generalized Bose-Hubbard model")]
pub struct Cli {
    /// Experiment to run.
    pub experiment: Experiment,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config field, e.g. `--set cone.g=1.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory for reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print extra diagnostics; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

fn run_cli(cli: &Cli) -> Result<bool> {
    let mut cfg = parse_config_with(&cli.config, &cli.set, Some(cli.experiment))?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.verbosity = cfg.verbosity.max(cli.verbose);
    match cli.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| run(&cfg))
        }
        None => run(&cfg),
    }
}

/// Parse arguments, run, and map the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    match run_cli(&cli) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
