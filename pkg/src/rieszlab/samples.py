"""Deterministic sample families for the estimator sweeps.

Band-limited samples are defined by continuum Fourier coefficients so the
same function can be evaluated on every resolution of a refinement study;
spikes are tied to continuum anchor points and land on the nearest site.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Grid
from .weights import Weight


@dataclass
class BandLimited:
    """Real trigonometric polynomial sum a_k cos(2 pi k.x) + b_k sin(2 pi k.x)."""

    modes: np.ndarray   # (m, dim) integer mode vectors
    cos_coef: np.ndarray
    sin_coef: np.ndarray

    def evaluate(self, grid: Grid) -> np.ndarray:
        x = grid.coords()
        phase = 2.0 * np.pi * (x @ self.modes.T)
        return np.cos(phase) @ self.cos_coef + np.sin(phase) @ self.sin_coef


def _mode_list(dim: int, band: int) -> np.ndarray:
    """Distinct non-conjugate modes with sup-norm <= band, excluding zero."""
    if dim == 1:
        return np.array([[k] for k in range(1, band + 1)])
    modes = []
    for k1 in range(0, band + 1):
        for k2 in range(-band, band + 1):
            if k1 == 0 and k2 <= 0:
                continue
            modes.append((k1, k2))
    return np.array(modes)


def band_limited_family(rng: np.random.Generator, dim: int, band: int,
                        count: int) -> list:
    """`count` random band-limited functions with unit coefficient scale."""
    modes = _mode_list(dim, band)
    out = []
    for _ in range(count):
        out.append(BandLimited(
            modes=modes,
            cos_coef=rng.standard_normal(len(modes)),
            sin_coef=rng.standard_normal(len(modes)),
        ))
    return out


@dataclass
class SpikeSample:
    """Unit L^1_W spike anchored at a continuum point."""

    anchor: np.ndarray  # point in [0,1)^dim

    def evaluate(self, grid: Grid, w: Weight) -> np.ndarray:
        site = nearest_site(grid, self.anchor)
        f = np.zeros(grid.total_sites)
        f[site] = 1.0 / (w.values[site] * grid.cell_volume)
        return f


def nearest_site(grid: Grid, point: np.ndarray) -> int:
    idx = [int(np.round(point[d] * grid.points_per_axis)) % grid.points_per_axis
           for d in range(grid.dim)]
    flat = 0
    for i in idx:
        flat = flat * grid.points_per_axis + i
    return flat


def spike_family(rng: np.random.Generator, dim: int, count: int) -> list:
    return [SpikeSample(anchor=rng.random(dim)) for _ in range(count)]


def project_mean_zero(f: np.ndarray, w: Weight) -> np.ndarray:
    """Remove the W-weighted mean (projection onto the range of L)."""
    mean = float((f * w.values).sum() / w.values.sum())
    return f - mean


def lp_norm(f: np.ndarray, w: Weight, grid: Grid, p: float) -> float:
    return float(((np.abs(f) ** p * w.values).sum() * grid.cell_volume) ** (1.0 / p))
