"""Run configuration: one flat record of every tuning knob, loadable from
a JSON file of flat keys and overridable by CLI flags.

The defaults are the tuned operating point of the pipeline; any subset
may be overridden.  The JSON file uses the field names below verbatim,
plus the special key "priors.nonnodal" holding {"mean": [...],
"cov": [[...]]} as a fixed reduced-space non-nodal prior.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dimred import ClassMoments
from .mixture import EmConfig
from .mrf import MrfConfig
from .preprocess import PreprocessConfig
from .types import METASTATIC, NONNODAL, NORMAL, InputError

#: Environment variable naming a default config file.
CONFIG_ENV = "NODESCAN_CONFIG"

#: Special (non-field) config key for a fixed non-nodal prior block.
NONNODAL_KEY = "priors.nonnodal"


@dataclass
class RunConfig:
    # preprocessing
    sg_window: int = 7
    sg_order: int = 2
    crop_lo: float = 400.0
    crop_hi: float = 800.0
    # dimension reduction
    k_ext: int = 20
    k_int: int = 1
    # position prior sharpness, per stage
    rho_s1: float = 5.0
    rho_s2: float = 1.0
    # t degrees of freedom, per stage
    nu_s1: float = 4.0
    nu_s2: float = 4.0
    # smoothing strength and stopping rules
    beta: float = 15.0
    epsilon_s1: float = 0.01
    theta_tol: float = 0.01
    max_outer: int = 500
    max_sweeps: int = 100
    inner_tol: float = 1e-8
    inner_max: int = 50
    # evaluation
    prevalence: float = 0.2
    # optional per-component prior weight overrides (length 1 + k_int each)
    k_diag_normal: Optional[tuple] = None
    k_diag_metastatic: Optional[tuple] = None
    k_diag_nonnodal: Optional[tuple] = None
    # optional fixed reduced-space non-nodal prior, from "priors.nonnodal"
    nonnodal_prior: Optional[ClassMoments] = field(default=None, repr=False)

    def __post_init__(self):
        if self.k_ext < 1 or self.k_int < 1:
            raise InputError("k_ext and k_int must be positive")
        for name in ("rho_s1", "rho_s2", "nu_s1", "nu_s2"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")
        if self.beta < 0:
            raise InputError("beta must be non-negative")
        if not 0 < self.prevalence < 1:
            raise InputError("prevalence must lie strictly inside (0, 1)")

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(self.sg_window, self.sg_order, self.crop_lo, self.crop_hi)

    def em_config(self) -> EmConfig:
        return EmConfig(
            nu=self.nu_s1,
            epsilon=self.epsilon_s1,
            max_outer=self.max_outer,
            inner_tol=self.inner_tol,
            inner_max=self.inner_max,
        )

    def mrf_config(self) -> MrfConfig:
        return MrfConfig(
            beta=self.beta,
            nu=self.nu_s2,
            max_sweeps=self.max_sweeps,
            theta_tol=self.theta_tol,
            inner_tol=self.inner_tol,
            inner_max=self.inner_max,
        )

    def k_diag_overrides(self) -> dict:
        out = {}
        if self.k_diag_normal is not None:
            out[NORMAL] = self.k_diag_normal
        if self.k_diag_metastatic is not None:
            out[METASTATIC] = self.k_diag_metastatic
        if self.k_diag_nonnodal is not None:
            out[NONNODAL] = self.k_diag_nonnodal
        return out

    def k_diag_dict(self) -> dict:
        """Explicitly-set prior weights only (for storing into a model)."""
        return {k: list(v) for k, v in self.k_diag_overrides().items()}


_INT_KEYS = {"sg_window", "sg_order", "k_ext", "k_int", "max_outer", "max_sweeps",
             "inner_max"}
_FLOAT_KEYS = {"crop_lo", "crop_hi", "rho_s1", "rho_s2", "nu_s1", "nu_s2", "beta",
               "epsilon_s1", "theta_tol", "inner_tol", "prevalence"}
_SEQ_KEYS = {"k_diag_normal", "k_diag_metastatic", "k_diag_nonnodal"}

#: Keys accepted in a config file, with their built-in defaults (for --help).
CONFIG_KEYS = {
    name: getattr(RunConfig(), name)
    for name in sorted(_INT_KEYS | _FLOAT_KEYS | _SEQ_KEYS)
}


def _coerce(key: str, value):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _SEQ_KEYS:
            if value is None:
                return None
            seq = tuple(float(v) for v in value)
            if not seq:
                raise ValueError("empty sequence")
            return seq
    except (TypeError, ValueError) as exc:
        raise InputError(f"config key {key!r}: bad value {value!r} ({exc})") from exc
    raise InputError(f"unknown config key {key!r}")


def _parse_nonnodal_block(block) -> ClassMoments:
    if not isinstance(block, dict) or set(block) != {"mean", "cov"}:
        raise InputError('priors.nonnodal must be {"mean": [...], "cov": [[...]]}')
    return ClassMoments(np.asarray(block["mean"], float), np.asarray(block["cov"], float))


def load_config_file(path: str) -> dict:
    """Read a flat JSON config file into a key -> value dict (validated keys)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise InputError(f"config file {path}: expected a JSON object")
    out = {}
    for key, value in raw.items():
        if key == NONNODAL_KEY:
            out["nonnodal_prior"] = _parse_nonnodal_block(value)
        else:
            out[key] = _coerce(key, value)
    return out


def make_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional file, then overrides.

    When path is None the NODESCAN_CONFIG environment variable is
    consulted.  overrides holds already-typed values (CLI flags); None
    values are ignored.
    """
    values: dict = {}
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is not None:
        values.update(load_config_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "nonnodal_prior":
            values[key] = value
        else:
            values[key] = _coerce(key, value)
    return RunConfig(**values)
