"""Muckenhoupt weight diagnostics on the periodic grid.

Discrete balls use the torus Euclidean metric with strict inequality:
a site x belongs to B(c, r) iff dist(x, c) < r.  Radii are carried in units
of the grid spacing h; families enumerate every center and every radius in
{h, 2h, ..., floor(N/4) h}, so suprema over "all balls" are exhaustive at
desk scale.  Averages are discrete means over ball sites.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .errors import (
    BallWrapsTorus,
    DegenerateBall,
    EmptyBallFamily,
    NonPositiveExponentGap,
    NonPositiveWeight,
)
from .grids import Grid, WRAP_GUARD, torus_dist2


@dataclass
class Weight:
    """Nonnegative grid function used as a reference measure w(x) dx."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.total_sites,):
            raise ValueError("weight shape does not match grid")
        if np.any(self.values < 0):
            raise NonPositiveWeight("weight has negative entries")

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    def normalize(self) -> "Weight":
        """Rescale to mean 1 (total mass = torus volume)."""
        m = self.mean
        if m <= 0:
            raise NonPositiveWeight("cannot normalize a zero weight")
        return Weight(self.grid, self.values / m)

    def require_positive(self) -> np.ndarray:
        if np.any(self.values <= 0):
            raise NonPositiveWeight("weight must be strictly positive")
        return self.values

    def measure(self, mask=None) -> float:
        """w(E) = sum_E w h^n; full torus when mask is None."""
        vol = self.grid.cell_volume
        if mask is None:
            return float(self.values.sum() * vol)
        return float(self.values[mask].sum() * vol)

    @classmethod
    def ones(cls, grid: Grid) -> "Weight":
        return cls(grid, np.ones(grid.total_sites))


@dataclass(frozen=True)
class BallFamily:
    """All discrete balls with radii m*h, m in `radii`, centered at every site.

    `coverage` records whether the family exhausts radii up to the wrap
    guard R_max = 1/4.
    """

    grid: Grid
    radii: tuple
    coverage: bool

    def __post_init__(self):
        n = self.grid.points_per_axis
        for m in self.radii:
            if m < 1 or m * self.grid.spacing > WRAP_GUARD + 1e-12:
                raise BallWrapsTorus(
                    f"radius {m}h outside (0, 1/4] on N={n}")

    @property
    def ball_count(self) -> int:
        return len(self.radii) * self.grid.total_sites

    def balls(self):
        """Iterate (center_site, radius_in_h) over the whole family."""
        for m in self.radii:
            for c in range(self.grid.total_sites):
                yield c, m


def build_ball_family(grid: Grid, r_max: float = WRAP_GUARD) -> BallFamily:
    m_max = int(np.floor(r_max * grid.points_per_axis + 1e-12))
    radii = tuple(range(1, m_max + 1))
    if not radii:
        raise EmptyBallFamily(f"no radii below {r_max} at N={grid.points_per_axis}")
    return BallFamily(grid=grid, radii=radii,
                      coverage=abs(r_max - WRAP_GUARD) < 1e-12)


@lru_cache(maxsize=256)
def _footprint(dim: int, radius_h: float) -> np.ndarray:
    """Boolean stencil of offsets with |offset| < radius (units of h)."""
    reach = int(np.ceil(radius_h)) - 1 if float(radius_h).is_integer() \
        else int(np.floor(radius_h))
    reach = max(reach, 0)
    axes = [np.arange(-reach, reach + 1)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    d2 = sum(m * m for m in mesh)
    return d2 < radius_h ** 2


def _ball_sum(grid: Grid, field: np.ndarray, radius_h: float) -> np.ndarray:
    """For every center c: sum of `field` over B(c, radius_h*h), via direct
    wrapped convolution (exact summation, no FFT roundoff)."""
    fp = _footprint(grid.dim, radius_h).astype(float)
    shaped = grid.reshape(field)
    out = ndimage.convolve(shaped, fp, mode="wrap")
    return out.ravel()


def _ball_size(grid: Grid, radius_h: float) -> int:
    return int(_footprint(grid.dim, radius_h).sum())


def ap_constant(w: Weight, p: float, balls: BallFamily) -> float:
    """[w]_{A_p}: sup over the family of (avg_B w)(avg_B w^{-1/(p-1)})^{p-1}."""
    if p <= 1.0:
        raise NonPositiveExponentGap(f"A_p needs p > 1, got {p}")
    if not balls.radii:
        raise EmptyBallFamily("ball family has no radii")
    vals = w.require_positive()
    dual = vals ** (-1.0 / (p - 1.0))
    best = 0.0
    for m in balls.radii:
        size = _ball_size(w.grid, m)
        avg_w = _ball_sum(w.grid, vals, m) / size
        avg_dual = _ball_sum(w.grid, dual, m) / size
        best = max(best, float((avg_w * avg_dual ** (p - 1.0)).max()))
    return best


def reverse_holder_constant(w: Weight, r: float, balls: BallFamily) -> float:
    """RH_r constant: sup over balls of (avg_B w^r)^{1/r} / (avg_B w)."""
    if r <= 1.0:
        raise ValueError(f"reverse Holder exponent must exceed 1, got {r}")
    if not balls.radii:
        raise EmptyBallFamily("ball family has no radii")
    vals = np.asarray(w.values, dtype=float)
    best = 0.0
    for m in balls.radii:
        size = _ball_size(w.grid, m)
        avg_w = _ball_sum(w.grid, vals, m) / size
        avg_pow = _ball_sum(w.grid, vals ** r, m) / size
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = avg_pow ** (1.0 / r) / avg_w
        best = max(best, float(np.nanmax(ratio)))
    return best


@dataclass
class DoublingReport:
    """Per-ball doubling ratios w(aB) / (a^{np} [w]_{A_p} w(B))."""

    p: float
    dilation: float
    ap: float
    ratios: dict
    max_ratio: float
    passed: bool


def doubling_check(w: Weight, p: float, a: float, balls: BallFamily) -> DoublingReport:
    """Verify w(aB) <= a^{np} [w]_{A_p} w(B) over the family.

    Raises BallWrapsTorus when a dilated radius exceeds the wrap guard.
    """
    if a <= 1.0:
        raise ValueError(f"dilation factor must exceed 1, got {a}")
    h = w.grid.spacing
    for m in balls.radii:
        if a * m * h > WRAP_GUARD + 1e-12:
            raise BallWrapsTorus(
                f"dilated radius {a * m}h exceeds the 1/4 wrap guard")
    vals = w.require_positive()
    ap = ap_constant(w, p, balls)
    bound = a ** (w.grid.dim * p) * ap
    ratios = {}
    worst = 0.0
    for m in balls.radii:
        mass = _ball_sum(w.grid, vals, m)
        mass_dil = _ball_sum(w.grid, vals, a * m)
        r = mass_dil / (bound * mass)
        ratios[m] = r
        worst = max(worst, float(r.max()))
    return DoublingReport(p=p, dilation=a, ap=ap, ratios=ratios,
                          max_ratio=worst, passed=worst <= 1.0 + 1e-9)


def maximal_function(w: Weight, f: np.ndarray, balls: BallFamily) -> np.ndarray:
    """Weighted Hardy-Littlewood maximal function.

    (M_w f)(y) = max over balls B containing y of w(B)^{-1} sum_B |f| w h^n.
    """
    if not balls.radii:
        raise EmptyBallFamily("ball family has no radii")
    vals = np.asarray(w.values, dtype=float)
    af = np.abs(np.asarray(f, dtype=float))
    out = np.zeros(w.grid.total_sites)
    for m in balls.radii:
        den = _ball_sum(w.grid, vals, m)
        if np.any(den <= 0):
            raise DegenerateBall(f"zero-mass ball at radius {m}h")
        num = _ball_sum(w.grid, af * vals, m)
        avg = num / den
        fp = _footprint(w.grid.dim, m)
        local = ndimage.maximum_filter(w.grid.reshape(avg), footprint=fp,
                                       mode="wrap").ravel()
        np.maximum(out, local, out=out)
    return out


def gaussian_weight_integral(w: Weight, y: int, s: float, c: float) -> float:
    """Normalized Gaussian mass w(B_s(y))^{-1} sum_x e^{-c d(x,y)^2/s^2} w h^n."""
    if not (0.0 < s <= WRAP_GUARD + 1e-12):
        raise ValueError(f"scale s must lie in (0, 1/4], got {s}")
    if c <= 0:
        raise ValueError(f"decay rate c must be positive, got {c}")
    d2 = torus_dist2(w.grid)[y]
    vol = w.grid.cell_volume
    ball_mass = float(w.values[d2 < s * s].sum() * vol)
    if ball_mass <= 0.0:
        raise DegenerateBall(f"w(B_s(y)) = 0 at site {y}, s={s}")
    total = float((np.exp(-c * d2 / (s * s)) * w.values).sum() * vol)
    return total / ball_mass
