#!/usr/bin/env python3
"""Classify a small synthetic suite and score the verdicts.

A node is called metastatic as soon as any pixel keeps the metastatic
label after smoothing.  Alongside the verdict each node gets a score
(its largest smoothed metastatic posterior), which is what the ROC
curve and the prevalence-adjusted precision are built from.
Writes one posterior heat map and the evaluation report to demos/out/.

Usage:
    python demos/05_score_a_suite.py
"""

import json
from pathlib import Path

from nodescan.classify import classify_node, evaluate, render_ppm, roc_points
from nodescan.config import RunConfig
from nodescan.model import fit_model
from nodescan.preprocess import preprocess_matrix, preprocess_node, preprocess_training
from nodescan.synth import SynthConfig, gen_node, gen_nonnodal, gen_training
from nodescan.types import METASTATIC, NORMAL

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

# pull the classes closer together than the default so some nodes are
# genuinely hard and the ranking metrics have work to do
scfg = SynthConfig(seed=4, mean_metastatic=(4.8, 0.0), blob_max_px=16)
rcfg = RunConfig()
pc = rcfg.preprocess_config()
train = preprocess_training(gen_training(scfg), pc)
nonnodal = preprocess_matrix(gen_nonnodal(scfg), pc)
model = fit_model(train, rcfg.k_ext, rcfg.k_int, nonnodal=nonnodal, preprocess=pc)

results = []
for i in range(16):
    truth = METASTATIC if i % 2 == 0 else NORMAL
    node, _ = gen_node(scfg, truth, index=100 + i)
    pre = preprocess_node(node, model.preprocess)
    res = classify_node(pre, model, rcfg)
    results.append(res)
    mark = "x" if res.verdict != truth else " "
    print(f"{mark} {res.node_id}: truth {truth:<10} verdict {res.verdict:<10} "
          f"score {res.score:.3f}")

report = evaluate(results, prevalence=0.20)
print(f"\nsensitivity {report.sensitivity:.3f}  "
      f"specificity {report.specificity:.3f}  auc {report.auc:.3f}")
print(f"precision at 20% prevalence: {report.ppv_at_prevalence:.3f}")

pts = roc_points(results)
print(f"roc: {len(pts)} points from (0,0) to (1,1)")

# artifacts: report json + a posterior heat map of the first node
(out_dir / "suite_report.json").write_text(json.dumps(report.to_dict(), indent=2))
ppm = render_ppm(results[0], scfg.R, scfg.C)
(out_dir / f"{results[0].node_id}.ppm").write_bytes(ppm)
print(f"\nwrote {out_dir / 'suite_report.json'}")
print(f"wrote {out_dir / (results[0].node_id + '.ppm')} "
      "(red = metastatic posterior, blue = normal, black = background)")
