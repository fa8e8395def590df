#!/usr/bin/env python3
"""Drive the full pipeline through the command-line interface.

Runs the same four commands a shell user would: generate a synthetic
data set, fit a model, classify the node scans, and score the verdicts
against the truth manifest.  Everything lands in demos/out/cli/.

Usage:
    python demos/06_cli_round_trip.py
"""

import json
from pathlib import Path

from nodescan.cli import main

base = Path(__file__).parent / "out" / "cli"
data = base / "data"
results = base / "results"
base.mkdir(parents=True, exist_ok=True)


def run(argv):
    print("\n$ nodescan " + " ".join(argv))
    rc = main(argv)
    assert rc == 0, f"exit code {rc}"


run(["synth", "--out-dir", str(data), "--seed", "4", "--nodes", "8",
     "--met-fraction", "0.5"])

run(["train", "--training", str(data / "training.csv"),
     "--nonnodal", str(data / "nonnodal.csv"),
     "--out", str(base / "model.json")])

nodes = sorted((data / "nodes").glob("*.csv"))
run(["classify", "--model", str(base / "model.json"),
     "--out-dir", str(results), "--ppm"] + [str(f) for f in nodes])

run(["eval", "--results", str(results), "--truth", str(data / "truth.csv"),
     "--out", str(base / "report.json"), "--roc", str(base / "roc.csv")])

report = json.loads((base / "report.json").read_text())
print(f"\nreport: sensitivity {report['sensitivity']:.3f}, "
      f"specificity {report['specificity']:.3f}, auc {report['auc']:.3f}")
print(f"artifacts under {base}")
