"""Readers and writers for every on-disk artifact.

Formats (all plain text):

* training CSV -- ``# wavelengths: w1,w2,...`` header line, then one row
  per spectrum: ``label,site_id,v1,...,vp``.  Accepted label tokens are
  ``normal``/``n``, ``metastatic``/``c`` and ``nonnodal``; writers always
  emit the full tokens.
* node CSV -- ``# grid: R C`` line, the wavelength header, then exactly
  R*C reflectance rows in row-major pixel order from the top-left.
* result JSON -- node_id, verdict, labels, met_posterior.  The ROC score
  is reconstructed on read as the max met_posterior over non-background
  pixels.
* model JSON -- wavelength grid, preprocess settings, training mean,
  discriminant loading, per-class full-space moments, and the prior
  blocks (each {mu, K_diag, nu, lambda_inv}; mu and lambda_inv are a
  reference instantiation, recomputed per node at classify time).
* truth manifest CSV -- ``node_id,truth`` lines, for evaluation.

All writers go through an atomic replace so readers never observe a
half-written file.  Floats are serialised with repr, which round-trips
exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .dimred import ClassMoments
from .model import Model
from .preprocess import PreprocessConfig
from .types import (
    METASTATIC,
    NONNODAL,
    NORMAL,
    ClassifiedNode,
    InputError,
    ManualTrainingSet,
    NodeScan,
    SpectralMatrix,
    WavelengthGrid,
)

_LABEL_TOKENS = {
    "normal": NORMAL,
    "n": NORMAL,
    "metastatic": METASTATIC,
    "c": METASTATIC,
    "nonnodal": NONNODAL,
}

_WL_PREFIX = "# wavelengths:"
_GRID_PREFIX = "# grid:"


def _fmt(v) -> str:
    return repr(float(v))


def write_atomic(path, data) -> None:
    """Write bytes/str to path via a temp file and atomic replace."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_lines(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return [ln for ln in text.splitlines() if ln.strip() != ""]


def _parse_wavelengths(line: str, path) -> WavelengthGrid:
    if not line.startswith(_WL_PREFIX):
        raise InputError(f"{path}: missing '{_WL_PREFIX}' header line")
    try:
        pts = [float(v) for v in line[len(_WL_PREFIX):].split(",")]
    except ValueError as exc:
        raise InputError(f"{path}: bad wavelength header ({exc})") from exc
    return WavelengthGrid(np.array(pts))


def _parse_values(parts, p, path, ln):
    if len(parts) != p:
        raise InputError(
            f"{path}: line {ln}: row length mismatch: expected {p} values, "
            f"got {len(parts)}"
        )
    try:
        return [float(v) for v in parts]
    except ValueError as exc:
        raise InputError(f"{path}: line {ln}: bad value ({exc})") from exc


def _parse_label(tok: str, path, ln) -> str:
    tok = tok.strip().lower()
    if tok not in _LABEL_TOKENS:
        raise InputError(f"{path}: line {ln}: unknown label token {tok!r}")
    return _LABEL_TOKENS[tok]


# ---------------------------------------------------------------------------
# training / non-nodal spectra

def _read_labelled_csv(path):
    lines = _read_lines(path)
    if not lines:
        raise InputError(f"{path}: empty file")
    grid = _parse_wavelengths(lines[0], path)
    p = len(grid)
    labels, sites, rows = [], [], []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) < 3:
            raise InputError(f"{path}: line {ln}: expected label,site_id,values")
        labels.append(_parse_label(parts[0], path, ln))
        sites.append(parts[1].strip())
        rows.append(_parse_values(parts[2:], p, path, ln))
    if not rows:
        raise InputError(f"{path}: no spectra rows")
    return grid, np.array(labels, dtype=object), np.array(sites, dtype=object), np.array(rows)


def read_training(path) -> ManualTrainingSet:
    """Load the two-class manual training CSV."""
    grid, labels, sites, rows = _read_labelled_csv(path)
    if NONNODAL in labels:
        raise InputError(
            f"{path}: label 'nonnodal' not allowed in the manual training set"
        )
    present = set(labels)
    if present != {NORMAL, METASTATIC}:
        raise InputError(f"{path}: single-class file: found only {sorted(present)}")
    return ManualTrainingSet(SpectralMatrix(grid, rows, origin="manual"), labels, sites)


def read_nonnodal(path) -> SpectralMatrix:
    """Load a CSV of spectra that must all carry the nonnodal label."""
    grid, labels, _, rows = _read_labelled_csv(path)
    bad = set(labels) - {NONNODAL}
    if bad:
        raise InputError(f"{path}: non-nodal file contains label {sorted(bad)[0]!r}")
    return SpectralMatrix(grid, rows, origin="manual")


def write_training(train: ManualTrainingSet, path) -> None:
    lines = [_WL_PREFIX + " " + ",".join(_fmt(w) for w in train.spectra.grid.points)]
    for lab, site, row in zip(train.labels, train.site_ids, train.spectra.rows):
        lines.append(f"{lab},{site}," + ",".join(_fmt(v) for v in row))
    write_atomic(path, "\n".join(lines) + "\n")


def write_nonnodal(spectra: SpectralMatrix, path) -> None:
    lines = [_WL_PREFIX + " " + ",".join(_fmt(w) for w in spectra.grid.points)]
    for i, row in enumerate(spectra.rows):
        lines.append(f"{NONNODAL},x{i:04d}," + ",".join(_fmt(v) for v in row))
    write_atomic(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# node scans

def read_node(path) -> NodeScan:
    """Load a scanned-node CSV; the node id is the file stem."""
    lines = _read_lines(path)
    if len(lines) < 3 or not lines[0].startswith(_GRID_PREFIX):
        raise InputError(f"{path}: missing '{_GRID_PREFIX} R C' header line")
    parts = lines[0][len(_GRID_PREFIX):].split()
    if len(parts) != 2:
        raise InputError(f"{path}: grid header must give two integers")
    try:
        R, C = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise InputError(f"{path}: bad grid header ({exc})") from exc
    grid = _parse_wavelengths(lines[1], path)
    p = len(grid)
    rows = []
    for ln, line in enumerate(lines[2:], start=3):
        rows.append(_parse_values(line.split(","), p, path, ln))
    if len(rows) != R * C:
        raise InputError(f"{path}: expected {R * C} rows, got {len(rows)}")
    return NodeScan(
        SpectralMatrix(grid, np.array(rows), origin="scan"),
        R, C, node_id=Path(path).stem,
    )


def write_node(node: NodeScan, path) -> None:
    lines = [
        f"{_GRID_PREFIX} {node.R} {node.C}",
        _WL_PREFIX + " " + ",".join(_fmt(w) for w in node.spectra.grid.points),
    ]
    for row in node.spectra.rows:
        lines.append(",".join(_fmt(v) for v in row))
    write_atomic(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# results

def write_result(result: ClassifiedNode, path) -> None:
    doc = {
        "node_id": result.node_id,
        "verdict": result.verdict,
        "labels": [int(v) for v in result.labels],
        "met_posterior": [float(v) for v in result.met_posterior],
    }
    write_atomic(path, json.dumps(doc, indent=1) + "\n")


def read_result(path) -> ClassifiedNode:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read result {path}: {exc}") from exc
    missing = {"node_id", "verdict", "labels", "met_posterior"} - set(doc)
    if missing:
        raise InputError(f"{path}: result missing fields {sorted(missing)}")
    labels = np.asarray(doc["labels"], dtype=int)
    met = np.asarray(doc["met_posterior"], dtype=float)
    tissue = labels != 3
    score = float(met[tissue].max()) if tissue.any() else 0.0
    return ClassifiedNode(
        node_id=str(doc["node_id"]),
        labels=labels,
        met_posterior=met,
        verdict=str(doc["verdict"]),
        score=score,
        truth=doc.get("truth"),
    )


# ---------------------------------------------------------------------------
# truth manifests

def read_truth_manifest(path) -> dict:
    out = {}
    for ln, line in enumerate(_read_lines(path), start=1):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise InputError(f"{path}: line {ln}: expected node_id,truth")
        out[parts[0]] = _parse_label(parts[1], path, ln)
    if not out:
        raise InputError(f"{path}: empty truth manifest")
    return out


def write_truth_manifest(truths: dict, path) -> None:
    lines = [f"{node_id},{truth}" for node_id, truth in truths.items()]
    write_atomic(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# models

def _moments_to_dict(m: ClassMoments) -> dict:
    return {"mean": m.mean.tolist(), "cov": m.cov.tolist()}


def _moments_from_dict(d, path) -> ClassMoments:
    try:
        return ClassMoments(np.asarray(d["mean"], float), np.asarray(d["cov"], float))
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: bad moments block ({exc})") from exc


def write_model(model: Model, path) -> None:
    doc = {
        "format": "nodescan-model-v1",
        "preprocess": {
            "sg_window": model.preprocess.sg_window,
            "sg_order": model.preprocess.sg_order,
            "crop_lo": model.preprocess.crop_lo,
            "crop_hi": model.preprocess.crop_hi,
        },
        "wavelengths": model.grid.points.tolist(),
        "train_mean": model.train_mean.tolist(),
        "q_ext": model.q_ext.tolist(),
        "k_ext": int(model.k_ext),
        "k_int": int(model.k_int),
        "class_moments": {
            cls: _moments_to_dict(m) for cls, m in sorted(model.class_moments.items())
        },
        "nonnodal_kspace": (
            _moments_to_dict(model.nonnodal_kspace)
            if model.nonnodal_kspace is not None else None
        ),
        "k_diags": {cls: list(map(float, v)) for cls, v in sorted(model.k_diags.items())},
        "priors": model.reference_priors,
    }
    write_atomic(path, json.dumps(doc, indent=1) + "\n")


def read_model(path) -> Model:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc
    if doc.get("format") != "nodescan-model-v1":
        raise InputError(f"{path}: not a model file (format tag missing)")
    try:
        pp = PreprocessConfig(**doc["preprocess"])
        model = Model(
            grid=WavelengthGrid(np.asarray(doc["wavelengths"], float)),
            train_mean=np.asarray(doc["train_mean"], float),
            q_ext=np.asarray(doc["q_ext"], float),
            k_ext=int(doc["k_ext"]),
            k_int=int(doc["k_int"]),
            class_moments={
                cls: _moments_from_dict(m, path)
                for cls, m in doc["class_moments"].items()
            },
            k_diags={cls: tuple(v) for cls, v in doc.get("k_diags", {}).items()},
            preprocess=pp,
            nonnodal_kspace=(
                _moments_from_dict(doc["nonnodal_kspace"], path)
                if doc.get("nonnodal_kspace") else None
            ),
            reference_priors=doc.get("priors", {}),
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed model file ({exc})") from exc
    return model
