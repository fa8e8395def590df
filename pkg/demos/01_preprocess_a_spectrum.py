#!/usr/bin/env python3
"""Walk a raw spectrum through the cleanup chain, one stage at a time.

The chain is smooth -> crop -> scale: a Savitzky-Golay polynomial filter
knocks down shot noise, the noisy grid ends below 400 nm and above
800 nm are dropped, and each spectrum is centred and scaled to unit
spread so illumination differences between probes cancel out.

Usage:
    python demos/01_preprocess_a_spectrum.py
"""

import numpy as np

from nodescan.preprocess import (
    PreprocessConfig,
    crop,
    preprocess_matrix,
    savitzky_golay,
    snv,
)
from nodescan.synth import SynthConfig, gen_training
from nodescan.types import SpectralMatrix

cfg = PreprocessConfig()
train = gen_training(SynthConfig(seed=4, sites_per_class=2, spectra_per_site=3))
grid = train.spectra.grid
row = train.spectra.rows[0]

print(f"raw spectrum: {row.size} wavelengths, "
      f"{grid.points[0]:.0f}-{grid.points[-1]:.0f} nm")
print(f"  mean {row.mean():+.4f}  sd {row.std(ddof=1):.4f}")

# stage 1: polynomial smoothing (window 7, order 2 by default)
smooth = savitzky_golay(row[None, :], cfg)[0]
print(f"\nafter smoothing (window {cfg.sg_window}, order {cfg.sg_order}):")
print(f"  largest correction {np.abs(smooth - row).max():.5f}")

# the filter reproduces any polynomial of its own order exactly
t = np.linspace(0.0, 2.0, row.size)
poly = 0.3 * t**2 - 1.1 * t + 0.5
print(f"  quadratic passthrough error "
      f"{np.abs(savitzky_golay(poly[None, :], cfg) - poly).max():.2e}")

# stage 2: drop the unreliable grid ends
kept = crop(SpectralMatrix(grid, smooth[None, :]), cfg)
print(f"\nafter cropping to [{cfg.crop_lo:.0f}, {cfg.crop_hi:.0f}] nm:")
print(f"  {row.size} -> {kept.grid.points.size} wavelengths "
      f"({kept.grid.points[0]:.1f}-{kept.grid.points[-1]:.1f} nm)")

# stage 3: per-spectrum standardization
scaled = snv(kept.rows[0])
print("\nafter scaling:")
print(f"  mean {scaled.mean():+.2e}  sd {scaled.std(ddof=1):.12f}")

# the one-call form applies all three stages to a whole matrix
full = preprocess_matrix(train.spectra, cfg)
print(f"\npreprocess_matrix: {train.spectra.rows.shape} -> {full.rows.shape}")
print(f"  row means all within {np.abs(full.rows.mean(axis=1)).max():.2e} of 0")
