"""Spectral preprocessing: smoothing, wavelength cropping, and row-wise
standard-normal-variate scaling, applied in that order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .types import (
    InputError,
    ManualTrainingSet,
    NodeScan,
    SpectralMatrix,
    WavelengthGrid,
)


@dataclass
class PreprocessConfig:
    """Smoothing window/order and the retained wavelength interval (nm)."""

    sg_window: int = 7
    sg_order: int = 2
    crop_lo: float = 400.0
    crop_hi: float = 800.0

    def __post_init__(self):
        if self.sg_window < 3 or self.sg_window % 2 == 0:
            raise InputError("sg_window must be odd and >= 3")
        if not 0 <= self.sg_order < self.sg_window:
            raise InputError("sg_order must satisfy 0 <= order < window")
        if not self.crop_lo < self.crop_hi:
            raise InputError("crop_lo must be below crop_hi")


def savitzky_golay(values: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """Least-squares polynomial smoothing with output length preserved.

    Interior points use the centred window fit; near the edges the
    first/last full window's polynomial is evaluated at the asymmetric
    offsets, so no samples are dropped.  Works on a single spectrum or on
    a matrix of row spectra.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] < cfg.sg_window:
        raise InputError(
            f"spectrum shorter than smoothing window "
            f"({values.shape[-1]} < {cfg.sg_window})"
        )
    return savgol_filter(values, cfg.sg_window, cfg.sg_order, axis=-1, mode="interp")


def crop(matrix: SpectralMatrix, cfg: PreprocessConfig) -> SpectralMatrix:
    """Keep only the wavelengths inside [crop_lo, crop_hi], inclusive."""
    keep = (matrix.grid.points >= cfg.crop_lo) & (matrix.grid.points <= cfg.crop_hi)
    kept = int(keep.sum())
    if kept < 3:
        raise InputError(
            f"empty crop result: [{cfg.crop_lo}, {cfg.crop_hi}] keeps {kept} "
            f"wavelengths (need >= 3)"
        )
    return SpectralMatrix(
        WavelengthGrid(matrix.grid.points[keep]),
        matrix.rows[:, keep],
        origin=matrix.origin,
    )


def snv(values: np.ndarray) -> np.ndarray:
    """Centre and scale one spectrum to mean 0 and sample sd 1."""
    values = np.asarray(values, dtype=float)
    sd = values.std(ddof=1)
    if not np.isfinite(sd) or sd <= 0:
        raise InputError("zero variance spectrum cannot be scaled")
    return (values - values.mean()) / sd


def preprocess_matrix(matrix: SpectralMatrix, cfg: PreprocessConfig) -> SpectralMatrix:
    """Smooth each row, crop the grid, then apply row-wise snv scaling."""
    smoothed = SpectralMatrix(
        matrix.grid, savitzky_golay(matrix.rows, cfg), origin=matrix.origin
    )
    cropped = crop(smoothed, cfg)
    rows = cropped.rows
    sd = rows.std(axis=1, ddof=1)
    bad = np.where(~(sd > 0) | ~np.isfinite(sd))[0]
    if bad.size:
        raise InputError(f"zero variance spectrum at row {int(bad[0])}")
    scaled = (rows - rows.mean(axis=1, keepdims=True)) / sd[:, None]
    return SpectralMatrix(cropped.grid, scaled, origin=matrix.origin)


def preprocess_training(train: ManualTrainingSet, cfg: PreprocessConfig) -> ManualTrainingSet:
    return ManualTrainingSet(
        preprocess_matrix(train.spectra, cfg), train.labels, train.site_ids
    )


def preprocess_node(node: NodeScan, cfg: PreprocessConfig) -> NodeScan:
    return NodeScan(
        preprocess_matrix(node.spectra, cfg),
        node.R,
        node.C,
        node_id=node.node_id,
        truth=node.truth,
    )
