//! Acceptance run: one PASS/FAIL line per criterion, then a single assert.
//!
//! Run with `cargo test -p hubbard-cone --test acceptance -- --nocapture`
//! to see the lines.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use hubbard_cone::cli::{execute, parse_config, parse_document, RunConfig};
use hubbard_cone::lightcone::report::Report;
use hubbard_cone::lightcone::{
    calculus_audit, commutator_sweep, factorization_identity_audit, operator_audit, taylor_audit, transport_sweep,
    AuditReport,
};

fn config(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Outcome {
    ok: bool,
    detail: String,
}

fn max_value(r: &AuditReport, check: &str) -> f64 {
    r.rows_for(check).map(|row| row.value).fold(0.0, f64::max)
}

fn criterion(n: usize, name: &str, limit: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = body();
    let took = start.elapsed();
    let ok = out.ok && took <= limit;
    println!(
        "criterion {n} {name}: {} ({}; {:.2}s of {}s)",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

#[test]
fn acceptance() {
    let cfg_ops = config("audits.json");
    let mut results = Vec::new();

    results.push(criterion(1, "operator identities", Duration::from_secs(30), || {
        let r = operator_audit(cfg_ops.seed, cfg_ops.instances).unwrap();
        let instances = r.rows_for("hopping-commutator").count();
        let comm = max_value(&r, "hopping-commutator");
        let cons = max_value(&r, "number-conservation");
        Outcome {
            ok: instances >= 20 && comm < 1e-10 && cons < 1e-12 && r.passed(),
            detail: format!("{instances} instances, max commutator residual {comm:.2e}, max [H,N] {cons:.2e}"),
        }
    }));

    results.push(criterion(2, "factorization identity", Duration::from_secs(30), || {
        let r = factorization_identity_audit(cfg_ops.seed, cfg_ops.instances).unwrap();
        let instances = r.rows_for("defect-identity").count();
        let worst = max_value(&r, "defect-identity");
        Outcome {
            ok: instances >= 10 && worst < 1e-10 && r.passed(),
            detail: format!("{instances} instances incl. |x-y|^-4 chains, max residual {worst:.2e}"),
        }
    }));

    results.push(criterion(3, "calculus audit", Duration::from_secs(120), || {
        let r = calculus_audit(&config("calculus.json").cone).unwrap();
        let ratios: Vec<f64> = r.rows_for("derivative-convergence").skip(1).map(|row| row.value).collect();
        let eq = max_value(&r, "basic-equality");
        let ok = ratios.iter().all(|q| (3.5..=4.5).contains(q)) && eq < 1e-6 && r.passed();
        Outcome { ok, detail: format!("halving ratios {ratios:.3?}, basic equality {eq:.2e}") }
    }));

    results.push(criterion(4, "taylor decomposition", Duration::from_secs(60), || {
        let c = &cfg_ops.cone;
        let r = taylor_audit(c.c, c.v, 3).unwrap();
        let exps: Vec<f64> = r.rows_for("residual-exponent").map(|row| row.value).collect();
        let pair = max_value(&r, "pair-bound");
        let ok = exps.iter().enumerate().all(|(i, &e)| e >= i as f64 + 1.9) && pair <= 1.0 + 1e-12 && r.passed();
        Outcome { ok, detail: format!("exponents {exps:.3?}, worst pair ratio {pair:.6}") }
    }));

    let transport_cfg = config("transport.json");
    let transport = transport_sweep(&transport_cfg.cone).unwrap();
    results.push(criterion(5, "particle transport", Duration::from_secs(300), || {
        let asserted = transport.cells.iter().filter(|c| c.pass.is_some());
        let worst = asserted.clone().map(|c| c.value).fold(0.0, f64::max);
        let zero_row = transport.cells.iter().filter(|c| c.t == 0.0).all(|c| c.value == 0.0);
        let mono = transport.checks.iter().find(|c| c.name == "monotone_in_rho").and_then(|c| c.pass) == Some(true);
        let all_cells = transport.cells.iter().all(|c| c.pass != Some(false));
        Outcome {
            ok: all_cells && zero_row && mono,
            detail: format!("{} asserted cells, max leakage {worst:.3e}, t=0 row exact: {zero_row}", asserted.count()),
        }
    }));

    results.push(criterion(6, "commutator cone", Duration::from_secs(300), || {
        let r = commutator_sweep(&config("commutator.json").cone).unwrap();
        let inside = r.extras["in_cone_max"];
        let post = r.extras.get("first_post_cone_value").copied().unwrap_or(0.0);
        let scale = r.extras["norm_scale"];
        Outcome {
            ok: r.passed() && inside < 1e-3 * scale && post >= 10.0 * inside,
            detail: format!("in-cone max {inside:.3e}, first post-cone {post:.3e}"),
        }
    }));

    results.push(criterion(7, "velocity ceiling", Duration::from_secs(300), || {
        let kappa = transport_cfg.cone.kappa();
        let v1 = transport.fitted_velocity.unwrap_or(f64::NAN);
        let mut doubled = transport_cfg.cone.to_doc();
        doubled.lattice = hubbard_cone::lightcone::LatticeDescriptor::Chain { length: 9, hopping: 2.0 };
        doubled.c = None;
        doubled.v = None;
        let v2 = transport_sweep(&doubled.resolve().unwrap()).unwrap().fitted_velocity.unwrap_or(f64::NAN);
        let ratio = v2 / v1;
        Outcome {
            ok: v1 <= 1.15 * kappa && (ratio / 2.0 - 1.0).abs() <= 0.2,
            detail: format!("fitted {v1:.3} vs 1.15*kappa = {:.3}; doubled J gives {v2:.3} (ratio {ratio:.3})", 1.15 * kappa),
        }
    }));

    results.push(criterion(8, "determinism", Duration::from_secs(300), || {
        let mut identical = true;
        let mut names = Vec::new();
        for (file, kind) in [
            ("transport.json", None),
            ("commutator.json", Some("signal")),
            ("audits.json", Some("audit-operators")),
            ("audits.json", Some("audit-factorization")),
        ] {
            let mut cfg = config(file);
            if let Some(k) = kind {
                cfg = parse_document(cfg.to_document(), &[format!("experiment={k}")], None).unwrap();
            }
            let first = execute(&cfg).unwrap().to_csv();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let second = pool.install(|| execute(&cfg).unwrap()).to_csv();
            identical &= first == second;
            names.push(cfg.experiment.to_string());
        }
        let companion_same = match execute(&config("transport.json")).unwrap() {
            Report::Sweep(r) => r.companion.map(|c| c.to_csv()) == transport.companion.as_ref().map(|c| c.to_csv()),
            Report::Audit(_) => false,
        };
        Outcome {
            ok: identical && companion_same,
            detail: format!("byte-identical CSVs across runs and thread counts for {}", names.join(", ")),
        }
    }));

    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &ok)| !ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
