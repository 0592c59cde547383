"""Smoke test for the Python bindings.

Build and install the extension first, e.g.
    pip install maturin && maturin develop --release -m crates/py/Cargo.toml
or put a built `hubbard_cone_py` shared library on PYTHONPATH.
"""

import csv
import io
import json
from pathlib import Path

import hubbard_cone_py as hc

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def load(name):
    return (CONFIGS / name).read_text()


def main():
    assert hc.sector_dimension(9, 2) == 45

    ops = hc.run_experiment(load("audits.json"))
    assert ops["experiment"] == "audit-operators" and ops["passed"]
    rows = list(csv.DictReader(io.StringIO(ops["csv"])))
    assert {r["check"] for r in rows} >= {"hopping-commutator", "number-conservation"}

    transport = hc.run_experiment(load("transport.json"))
    assert transport["passed"] and transport["companion_csv"] is not None
    summary = json.loads(transport["summary"])
    assert summary["hash"] == hc.config_hash(load("transport.json"))
    assert abs(summary["kappa"] - 2.0) < 1e-12

    strict = hc.run_experiment(load("transport.json"), ["cone.thresholds.transport=1e-30"])
    assert not strict["passed"]

    try:
        hc.run_experiment(load("transport.json"), ["cone.c=0.5"])
    except ValueError as e:
        assert "cone.c" in str(e)
    else:
        raise AssertionError("invalid override accepted")

    again = hc.run_experiment(load("commutator.json"), experiment="signal")
    assert again["csv"] == hc.run_experiment(load("commutator.json"), experiment="signal")["csv"]
    print("smoke test passed")


if __name__ == "__main__":
    main()
