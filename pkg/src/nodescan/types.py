"""Shared domain records: wavelength grids, spectral matrices, training
sets, node scans, and per-node classification results.

Component labels use the fixed coding 1 = normal, 2 = metastatic,
3 = non-nodal background everywhere in this package.  Pixels of an
R x C scan are stored row-major from the top-left corner, so pixel i
sits at 1-based grid coordinates r = i // C + 1, c = i % C + 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

NORMAL = "normal"
METASTATIC = "metastatic"
NONNODAL = "nonnodal"

#: Component order used for mixture arrays: column j holds component j + 1.
COMPONENT_NAMES = (NORMAL, METASTATIC, NONNODAL)


class InputError(ValueError):
    """Malformed input: bad file contents, shapes, labels, or parameters."""


class NumericalError(RuntimeError):
    """Numerical failure: singular matrices, underflow, non-convergence."""


def pixel_index(r: int, c: int, ncols: int) -> int:
    """Row-major pixel index of the 1-based grid coordinates (r, c)."""
    return (r - 1) * ncols + (c - 1)


def pixel_coords(i: int, ncols: int) -> tuple[int, int]:
    """Inverse of :func:`pixel_index`; returns 1-based (r, c)."""
    return i // ncols + 1, i % ncols + 1


@dataclass(eq=False)
class WavelengthGrid:
    """Strictly increasing wavelength axis (nm) shared by a set of spectra."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 1 or self.points.size < 3:
            raise InputError("wavelength grid needs at least 3 points")
        if not np.all(np.isfinite(self.points)):
            raise InputError("non-finite wavelength value")
        if not np.all(np.diff(self.points) > 0):
            raise InputError("wavelengths must be strictly increasing")

    def __len__(self) -> int:
        return int(self.points.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, WavelengthGrid) and np.array_equal(
            self.points, other.points
        )


@dataclass(eq=False)
class SpectralMatrix:
    """A stack of spectra on a common wavelength grid, one row per spectrum."""

    grid: WavelengthGrid
    rows: np.ndarray
    origin: str = "manual"  # "manual" (probe spectra) or "scan" (imaged node)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2:
            raise InputError("spectra must form a 2-D matrix")
        if self.rows.shape[1] != len(self.grid):
            raise InputError(
                f"row length mismatch: {self.rows.shape[1]} values for "
                f"{len(self.grid)} wavelengths"
            )
        if not np.all(np.isfinite(self.rows)):
            raise InputError("non-finite reflectance value")
        if self.origin not in ("manual", "scan"):
            raise InputError(f"unknown origin {self.origin!r}")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


@dataclass(eq=False)
class ManualTrainingSet:
    """Labelled single-point spectra from histology-confirmed sites.

    labels carries one of NORMAL / METASTATIC per row; site_ids groups rows
    taken from the same physical site so cross-validation can hold out whole
    sites at a time.
    """

    spectra: SpectralMatrix
    labels: np.ndarray
    site_ids: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=object)
        self.site_ids = np.asarray(self.site_ids, dtype=object)
        n = self.spectra.n
        if self.labels.shape != (n,) or self.site_ids.shape != (n,):
            raise InputError("labels and site_ids must match the row count")
        bad = set(self.labels) - {NORMAL, METASTATIC}
        if bad:
            raise InputError(f"unknown label token {sorted(bad)[0]!r}")
        present = set(self.labels)
        if present != {NORMAL, METASTATIC}:
            raise InputError("single-class file: need both normal and metastatic rows")

    @property
    def n(self) -> int:
        return self.spectra.n


@dataclass(eq=False)
class NodeScan:
    """One scanned node: an R x C grid of spectra in row-major pixel order."""

    spectra: SpectralMatrix
    R: int
    C: int
    node_id: str = "node"
    truth: Optional[str] = None  # optional histology verdict, for evaluation

    def __post_init__(self):
        if self.R < 1 or self.C < 1:
            raise InputError("grid dimensions must be positive")
        if self.spectra.n != self.R * self.C:
            raise InputError(
                f"expected {self.R * self.C} rows, got {self.spectra.n}"
            )
        if self.truth is not None and self.truth not in (NORMAL, METASTATIC):
            raise InputError(f"unknown truth label {self.truth!r}")

    @property
    def n(self) -> int:
        return self.spectra.n


@dataclass(eq=False)
class ClassifiedNode:
    """Per-node output: pixel labels, metastatic posterior, and the verdict.

    The verdict follows the any-pixel rule: a node is called metastatic as
    soon as a single pixel carries label 2.  score is the maximum metastatic
    posterior over non-background pixels and feeds the ROC analysis.
    """

    node_id: str
    labels: np.ndarray
    met_posterior: np.ndarray
    verdict: str
    score: float
    truth: Optional[str] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        self.met_posterior = np.asarray(self.met_posterior, dtype=float)
        if self.labels.ndim != 1 or self.labels.shape != self.met_posterior.shape:
            raise InputError("labels and met_posterior must be aligned vectors")
        if not np.all(np.isin(self.labels, (1, 2, 3))):
            raise InputError("pixel labels must be 1, 2 or 3")
        if np.any(self.met_posterior < 0) or np.any(self.met_posterior > 1):
            raise InputError("met_posterior outside [0, 1]")
        expected = METASTATIC if np.any(self.labels == 2) else NORMAL
        if self.verdict != expected:
            raise InputError(
                f"verdict {self.verdict!r} contradicts pixel labels "
                f"(expected {expected!r})"
            )
        if self.truth is not None and self.truth not in (NORMAL, METASTATIC):
            raise InputError(f"unknown truth label {self.truth!r}")

    @property
    def n(self) -> int:
        return self.labels.size
