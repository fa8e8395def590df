"""Synthetic data generator mirroring the model's own assumptions.

Spectra are built from a 2-D latent score: dimension 0 separates normal
from metastatic tissue, dimension 1 carries the within-node variation
the internal axes are meant to capture.  Latent scores are t-distributed
via the scale-mixture construction (a normal draw divided by the square
root of a gamma weight), embedded into wavelength space along two fixed
smooth orthonormal shapes on top of a common base curve, plus white
noise.  Nodes carry a central nodal disc with a non-nodal rim; blobs of
metastatic pixels are rectangles placed inside the disc.

Everything is deterministic per (seed, stream, index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .priors import scaled_distance
from .types import (
    METASTATIC,
    NONNODAL,
    NORMAL,
    InputError,
    ManualTrainingSet,
    NodeScan,
    SpectralMatrix,
    WavelengthGrid,
)

_CLASS_KEYS = {NORMAL: 0, METASTATIC: 1, NONNODAL: 2}


@dataclass
class SynthConfig:
    seed: int = 0
    R: int = 20
    C: int = 20
    n_wavelengths: int = 103
    wl_lo: float = 320.0
    wl_hi: float = 800.0
    nu_gen: float = 10.0         # latent t degrees of freedom
    latent_scale: float = 0.05   # embedding amplitude per latent unit
    noise_sd: float = 0.01
    site_sd: float = 0.15        # per-site latent mean jitter (training)
    nodal_radius: float = 0.82   # scaled-distance threshold of the nodal disc
    sites_per_class: int = 30
    spectra_per_site: int = 10
    blob_count: int = 1
    blob_min_px: int = 9
    blob_max_px: int = 40
    mean_normal: tuple = (0.0, 0.0)
    mean_metastatic: tuple = (7.0, 0.0)
    mean_nonnodal: tuple = (2.0, 6.0)
    cov_normal: tuple = ((1.0, 0.2), (0.2, 1.0))
    cov_metastatic: tuple = ((1.2, -0.2), (-0.2, 1.1))
    cov_nonnodal: tuple = ((2.0, 0.0), (0.0, 1.5))

    def __post_init__(self):
        if self.R < 1 or self.C < 1 or self.n_wavelengths < 7:
            raise InputError("bad synthetic grid sizes")
        if not 0 < self.nodal_radius <= 1:
            raise InputError("nodal_radius must lie in (0, 1]")
        if self.blob_min_px < 1 or self.blob_max_px < self.blob_min_px:
            raise InputError("bad blob size range")

    def wavelengths(self) -> WavelengthGrid:
        return WavelengthGrid(np.linspace(self.wl_lo, self.wl_hi, self.n_wavelengths))

    def class_params(self, cls: str):
        mean = {NORMAL: self.mean_normal, METASTATIC: self.mean_metastatic,
                NONNODAL: self.mean_nonnodal}[cls]
        cov = {NORMAL: self.cov_normal, METASTATIC: self.cov_metastatic,
               NONNODAL: self.cov_nonnodal}[cls]
        return np.asarray(mean, float), np.asarray(cov, float)


def _shapes(cfg: SynthConfig):
    """Base curve and two orthonormal embedding directions."""
    w = cfg.wavelengths().points
    t = (w - cfg.wl_lo) / (cfg.wl_hi - cfg.wl_lo)
    base = 1.2 * np.exp(-(((t - 0.45) / 0.22) ** 2)) + 0.4 * t
    raw = np.column_stack([np.sin(2 * np.pi * t), np.sin(4 * np.pi * t + 0.7)])
    Q, _ = np.linalg.qr(raw)
    return base, Q


def _latent(rng, mean, cov, nu, size):
    """t-distributed latent draws: normal scaled by a gamma weight."""
    L = np.linalg.cholesky(cov)
    z = rng.standard_normal((size, mean.size)) @ L.T
    u = rng.gamma(shape=nu / 2.0, scale=2.0 / nu, size=size)
    return mean + z / np.sqrt(u)[:, None]


def _embed(cfg: SynthConfig, rng, latents):
    base, Q = _shapes(cfg)
    spectra = base + cfg.latent_scale * (latents @ Q.T)
    spectra = spectra + cfg.noise_sd * rng.standard_normal(spectra.shape)
    return spectra


def gen_training(cfg: SynthConfig) -> ManualTrainingSet:
    """Two-class manual training set with per-site latent jitter."""
    rng = np.random.default_rng((cfg.seed, 1))
    grid = cfg.wavelengths()
    rows, labels, sites = [], [], []
    for cls in (NORMAL, METASTATIC):
        mean, cov = cfg.class_params(cls)
        for s in range(cfg.sites_per_class):
            site_mean = mean + cfg.site_sd * rng.standard_normal(mean.size)
            lat = _latent(rng, site_mean, cov, cfg.nu_gen, cfg.spectra_per_site)
            rows.append(_embed(cfg, rng, lat))
            labels.extend([cls] * cfg.spectra_per_site)
            sites.extend([f"{cls[0]}{s:03d}"] * cfg.spectra_per_site)
    return ManualTrainingSet(
        SpectralMatrix(grid, np.vstack(rows), origin="manual"),
        np.array(labels, dtype=object),
        np.array(sites, dtype=object),
    )


def gen_nonnodal(cfg: SynthConfig, n: int = 200) -> SpectralMatrix:
    """Labelled non-nodal spectra for the background prior."""
    rng = np.random.default_rng((cfg.seed, 2))
    mean, cov = cfg.class_params(NONNODAL)
    lat = _latent(rng, mean, cov, cfg.nu_gen, n)
    return SpectralMatrix(cfg.wavelengths(), _embed(cfg, rng, lat), origin="manual")


def _nodal_mask(cfg: SynthConfig) -> np.ndarray:
    mask = np.empty(cfg.R * cfg.C, dtype=bool)
    for i in range(mask.size):
        r, c = i // cfg.C + 1, i % cfg.C + 1
        mask[i] = scaled_distance(r, c, cfg.R, cfg.C) <= cfg.nodal_radius
    return mask


def _place_blob(rng, mask2d, occupied2d, h, w):
    """Uniformly pick a top-left corner so the h x w rectangle fits the mask.

    Rectangles keep at least one pixel of clearance from previously placed
    blobs so distinct ground-truth regions never merge.
    """
    R, C = mask2d.shape
    ok = []
    for r0 in range(R - h + 1):
        for c0 in range(C - w + 1):
            if not mask2d[r0:r0 + h, c0:c0 + w].all():
                continue
            # clearance window: rectangle dilated by one pixel, clipped
            ra, rb = max(r0 - 1, 0), min(r0 + h + 1, R)
            ca, cb = max(c0 - 1, 0), min(c0 + w + 1, C)
            if occupied2d[ra:rb, ca:cb].any():
                continue
            ok.append((r0, c0))
    if not ok:
        raise InputError(f"blob of size {h}x{w} does not fit inside the nodal area")
    r0, c0 = ok[int(rng.integers(len(ok)))]
    occupied2d[r0:r0 + h, c0:c0 + w] = True
    return r0, c0


def gen_node(cfg: SynthConfig, truth: str, index: int = 0, blobs=None):
    """One synthetic node scan plus its ground-truth pixel labels.

    truth selects the node verdict; metastatic nodes receive blobs, given
    either explicitly as (height, width) pairs or drawn from the
    configured pixel-count range.  Returns (NodeScan, truth_labels).
    """
    if truth not in (NORMAL, METASTATIC):
        raise InputError(f"unknown truth label {truth!r}")
    rng = np.random.default_rng((cfg.seed, 3, index))
    n = cfg.R * cfg.C
    nodal = _nodal_mask(cfg)
    field = np.where(nodal, 1, 3)
    if truth == METASTATIC:
        if blobs is None:
            blobs = []
            for _ in range(cfg.blob_count):
                for _attempt in range(1000):
                    h = int(rng.integers(2, 9))
                    w = int(rng.integers(2, 9))
                    # compact rectangles only: thin strips are not
                    # representative deposits and defeat 8-neighbour
                    # smoothing by having no interior pixel
                    if max(h, w) > 2 * min(h, w):
                        continue
                    if cfg.blob_min_px <= h * w <= cfg.blob_max_px:
                        blobs.append((h, w))
                        break
                else:
                    raise InputError("blob size range admits no 2..8 rectangle")
        mask2d = nodal.reshape(cfg.R, cfg.C)
        field2d = field.reshape(cfg.R, cfg.C)
        occupied2d = np.zeros_like(mask2d)
        for h, w in blobs:
            r0, c0 = _place_blob(rng, mask2d, occupied2d, int(h), int(w))
            field2d[r0:r0 + h, c0:c0 + w] = 2
        field = field2d.ravel()
    # one latent draw per pixel according to its ground-truth class
    lat = np.empty((n, 2))
    for cls, code in ((NORMAL, 1), (METASTATIC, 2), (NONNODAL, 3)):
        members = field == code
        if not members.any():
            continue
        mean, cov = cfg.class_params(cls)
        lat[members] = _latent(rng, mean, cov, cfg.nu_gen, int(members.sum()))
    spectra = _embed(cfg, rng, lat)
    node = NodeScan(
        SpectralMatrix(cfg.wavelengths(), spectra, origin="scan"),
        cfg.R,
        cfg.C,
        node_id=f"synth{index:03d}",
        truth=truth,
    )
    return node, field
