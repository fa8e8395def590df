"""Node classification driver plus evaluation utilities.

A node is called metastatic as soon as one pixel ends up with label 2;
its ROC score is the largest metastatic posterior among non-background
pixels.  Rendering writes a plain-text portable pixmap with background
pixels black and tissue pixels on a blue-to-red scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .config import RunConfig
from .dimred import fit_node_basis, reduce
from .mixture import run_stage1
from .model import Model
from .mrf import run_stage2
from .priors import build_group_priors, position_field
from .types import (
    METASTATIC,
    NORMAL,
    ClassifiedNode,
    InputError,
    NodeScan,
)


@dataclass
class EvalReport:
    sensitivity: float
    specificity: float
    auc: float
    tp: int
    fp: int
    tn: int
    fn: int
    ppv_at_prevalence: float
    prevalence: float
    n_nodes: int

    def to_dict(self) -> dict:
        return {
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "auc": self.auc,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "ppv_at_prevalence": self.ppv_at_prevalence,
            "prevalence": self.prevalence,
            "n_nodes": self.n_nodes,
        }


def node_context(node: NodeScan, model: Model, cfg: RunConfig):
    """Per-node reduced scores and group priors (shared by classify/sweep)."""
    if node.spectra.grid != model.grid:
        raise InputError(
            f"node {node.node_id!r} wavelength grid does not match the model"
        )
    basis = fit_node_basis(
        node, model.train_mean, model.q_ext, model.k_int, k_ext=model.k_ext
    )
    red = reduce(node.spectra.rows, basis)
    pm, nn = model.node_priors(basis)
    gp = build_group_priors(pm, nn, model.k_diag_list(cfg.k_diag_overrides()))
    return red, gp


def classify_node(
    node: NodeScan,
    model: Model,
    cfg: RunConfig | None = None,
    stage1_only: bool = False,
    return_states: bool = False,
):
    """Run the full per-node pipeline on an already-preprocessed node.

    The node must sit on the model's wavelength grid.  With
    return_states=True the stage states are returned alongside the
    result, for inspection and for reruns that reuse stage 1.
    """
    cfg = cfg or RunConfig()
    red, gp = node_context(node, model, cfg)
    field1 = position_field(node.R, node.C, cfg.rho_s1)
    st1 = run_stage1(red.scores, field1, gp, cfg.em_config())
    st2 = None
    final = st1
    if not stage1_only:
        field2 = position_field(node.R, node.C, cfg.rho_s2)
        st2 = run_stage2(red.scores, st1, field2, gp, cfg.mrf_config())
        final = st2
    result = _state_to_result(node, final)
    if return_states:
        return result, st1, st2
    return result


def _state_to_result(node: NodeScan, state) -> ClassifiedNode:
    labels = state.y
    met = state.z[:, 1]
    verdict = METASTATIC if np.any(labels == 2) else NORMAL
    tissue = labels != 3
    score = float(met[tissue].max()) if np.any(tissue) else 0.0
    return ClassifiedNode(
        node_id=node.node_id,
        labels=labels,
        met_posterior=met,
        verdict=verdict,
        score=score,
        truth=node.truth,
    )


def render_ppm(result: ClassifiedNode, R: int, C: int) -> bytes:
    """Plain-text (P3) pixmap of the posterior map.

    Background pixels are black; tissue pixels blend from blue (normal)
    to red (metastatic) as round(255 z), 0, round(255 (1 - z)), with
    halves rounded up.
    """
    if result.n != R * C:
        raise InputError(f"result has {result.n} pixels, grid wants {R * C}")
    lines = ["P3", f"{C} {R}", "255"]
    for r in range(R):
        parts = []
        for c in range(C):
            i = r * C + c
            if result.labels[i] == 3:
                parts.append("0 0 0")
            else:
                z = float(result.met_posterior[i])
                red = int(math.floor(255 * z + 0.5))
                blue = int(math.floor(255 * (1 - z) + 0.5))
                parts.append(f"{red} 0 {blue}")
        lines.append(" ".join(parts))
    return ("\n".join(lines) + "\n").encode("ascii")


def ppv(sensitivity: float, specificity: float, prevalence: float) -> float:
    """Positive predictive value at an assumed prevalence.

    Returns nan in the degenerate no-predicted-positives case
    (sensitivity 0 at specificity 1).
    """
    for name, v in (("sensitivity", sensitivity), ("specificity", specificity)):
        if not 0 <= v <= 1:
            raise InputError(f"{name} must lie in [0, 1]")
    if not 0 < prevalence < 1:
        raise InputError("prevalence must lie strictly inside (0, 1)")
    denom = sensitivity * prevalence + (1 - specificity) * (1 - prevalence)
    if denom == 0:
        return float("nan")
    return sensitivity * prevalence / denom


def _midrank_auc(scores: np.ndarray, is_pos: np.ndarray) -> float:
    """Probability a positive outscores a negative, ties counting half."""
    ranks = rankdata(scores, method="average")
    n_pos = int(is_pos.sum())
    n_neg = is_pos.size - n_pos
    r_pos = ranks[is_pos].sum()
    return float((r_pos - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_points(results) -> np.ndarray:
    """(fpr, tpr) pairs from the node scores, one per distinct threshold."""
    truths, scores = _truths_scores(results)
    is_pos = truths == METASTATIC
    n_pos = int(is_pos.sum())
    n_neg = is_pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputError("roc needs both metastatic and normal nodes")
    pts = [(0.0, 0.0)]
    for t in np.unique(scores)[::-1]:
        pred = scores >= t
        pts.append(
            (
                float((pred & ~is_pos).sum()) / n_neg,
                float((pred & is_pos).sum()) / n_pos,
            )
        )
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return np.array(pts)


def _truths_scores(results):
    if not results:
        raise InputError("no results to evaluate")
    truths, scores = [], []
    for r in results:
        if r.truth is None:
            raise InputError(f"node {r.node_id!r} has no ground-truth verdict")
        truths.append(r.truth)
        scores.append(r.score)
    return np.asarray(truths, dtype=object), np.asarray(scores, dtype=float)


def evaluate(results, prevalence: float = 0.2) -> EvalReport:
    """Verdict-level confusion metrics, rank AUC, and PPV at a prevalence."""
    truths, scores = _truths_scores(results)
    verdicts = np.asarray([r.verdict for r in results], dtype=object)
    is_pos = truths == METASTATIC
    pred_pos = verdicts == METASTATIC
    n_pos = int(is_pos.sum())
    n_neg = is_pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InputError("evaluation needs both metastatic and normal nodes")
    tp = int((pred_pos & is_pos).sum())
    fp = int((pred_pos & ~is_pos).sum())
    fn = n_pos - tp
    tn = n_neg - fp
    sens = tp / n_pos
    spec = tn / n_neg
    return EvalReport(
        sensitivity=sens,
        specificity=spec,
        auc=_midrank_auc(scores, is_pos),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        ppv_at_prevalence=ppv(sens, spec, prevalence),
        prevalence=prevalence,
        n_nodes=int(is_pos.size),
    )
