"""Weighted Calderon-Zygmund decomposition and weak-(1,1) estimators.

The decomposition is the dyadic stopping-time construction: descend the
dyadic cube tree of the torus, select maximal cubes whose W-average of |f|
meets the level alpha (ties select), subtract the W-weighted cube average on
each selected cube.  Each bad part rides inside the circumscribed ball of
its cube dilated by sqrt(dim).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlphaTooSmall, InvalidExponent, NoDyadicStructure
from .grids import DiscreteOperator, Grid
from .weights import Weight


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass
class BadPart:
    """One localized mean-zero piece b_j with its cube and ball."""

    level: int
    cube_index: tuple
    sites: np.ndarray
    values: np.ndarray          # b_j restricted to `sites`
    ball_center: np.ndarray     # continuum point on the torus
    ball_radius: float
    cube_average: float         # W-weighted average of f over the cube

    def dense(self, total_sites: int) -> np.ndarray:
        out = np.zeros(total_sites)
        out[self.sites] = self.values
        return out


@dataclass
class CZDecomposition:
    alpha: float
    weight: Weight
    good: np.ndarray
    bad_parts: list

    def reconstruct(self) -> np.ndarray:
        total = self.good.copy()
        for part in self.bad_parts:
            total[part.sites] += part.values
        return total


def _cube_sites(grid: Grid, level: int, index: tuple) -> np.ndarray:
    n = grid.points_per_axis
    side = n >> level
    ids = np.arange(grid.total_sites).reshape(grid.shape)
    slices = tuple(slice(i * side, (i + 1) * side) for i in index)
    return ids[slices].ravel()


def _ball_mask(grid: Grid, center: np.ndarray, radius: float) -> np.ndarray:
    x = grid.coords()
    d2 = np.zeros(grid.total_sites)
    for d in range(grid.dim):
        dd = grid.torus_delta(x[:, d], center[d])
        d2 += dd * dd
    return d2 < radius * radius


def cz_decompose(f: np.ndarray, alpha: float, w: Weight,
                 grid: Grid) -> CZDecomposition:
    """Split f = g + sum b_j at level alpha in L^1(W dx).

    Requires alpha above the global W-average of |f| and a power-of-two
    resolution for the dyadic tree.
    """
    n = grid.points_per_axis
    if not _is_power_of_two(n):
        raise NoDyadicStructure(f"N={n} is not a power of two")
    f = np.asarray(f, dtype=float)
    wv = w.values
    vol = grid.cell_volume

    total_mass = float(wv.sum() * vol)
    global_avg = float((np.abs(f) * wv).sum() * vol) / total_mass
    if alpha <= global_avg:
        raise AlphaTooSmall(
            f"alpha={alpha:.6g} not above the global average {global_avg:.6g}")

    max_level = int(np.log2(n))
    selected = []
    frontier = [(0, (0,) * grid.dim)]
    while frontier:
        next_frontier = []
        for level, index in frontier:
            sites = _cube_sites(grid, level, index)
            wmass = float(wv[sites].sum())
            avg = float((np.abs(f[sites]) * wv[sites]).sum()) / wmass if wmass > 0 else 0.0
            if avg >= alpha and level > 0:
                selected.append((level, index, sites, wmass))
            elif level < max_level:
                for child in np.ndindex(*(2,) * grid.dim):
                    next_frontier.append(
                        (level + 1, tuple(2 * i + c for i, c in zip(index, child))))
        frontier = next_frontier

    good = f.copy()
    parts = []
    h = grid.spacing
    for level, index, sites, wmass in selected:
        side_sites = n >> level
        side = side_sites * h
        center = np.array([(i * side_sites + side_sites / 2.0) * h for i in index])
        radius = 0.5 * side * grid.dim       # circumradius * sqrt(dim)
        favg = float((f[sites] * wv[sites]).sum()) / wmass
        values = f[sites] - favg
        good[sites] = favg
        parts.append(BadPart(level=level, cube_index=index, sites=sites,
                             values=values, ball_center=center,
                             ball_radius=radius, cube_average=favg))
    return CZDecomposition(alpha=alpha, weight=w, good=good, bad_parts=parts)


@dataclass
class CZReport:
    """Measured constants for the five decomposition properties plus the
    reconstruction defect.  Ball-side (v) carries both the lower and upper
    measured constants; the cube-side lower constant is >= 1 by selection."""

    good_bound: float            # (i)   ||g||_inf / alpha
    bad_mass: float              # (ii)  max_j int_{B_j} |b_j| W / (alpha W(B_j))
    total_ball_mass: float       # (iii) alpha sum_j W(B_j) / ||f||_{L1_W}
    overlap: int                 # (iv)  max_x sum_j chi_{B_j}(x)
    level_lower: float           # (v)   min_j avg_{B_j} |f| / alpha
    level_upper: float           # (v)   max_j avg_{B_j} |f| / alpha
    cube_level_lower: float      # (v on cubes) min_j avg_{Q_j} |f| / alpha
    cube_level_upper: float
    support_ok: bool
    mean_zero_defect: float
    reconstruction_error: float
    passed: bool


def verify_cz(dec: CZDecomposition, f: np.ndarray) -> CZReport:
    """Measure the constants of the five decomposition properties on (dec, f)."""
    f = np.asarray(f, dtype=float)
    grid = dec.weight.grid
    wv = dec.weight.values
    vol = grid.cell_volume
    alpha = dec.alpha

    recon = np.abs(dec.reconstruct() - f).max() if dec.bad_parts else \
        float(np.abs(dec.good - f).max())
    good_bound = float(np.abs(dec.good).max()) / alpha

    if not dec.bad_parts:
        return CZReport(good_bound=good_bound, bad_mass=0.0,
                        total_ball_mass=0.0, overlap=0,
                        level_lower=float("nan"), level_upper=float("nan"),
                        cube_level_lower=float("nan"),
                        cube_level_upper=float("nan"),
                        support_ok=True, mean_zero_defect=0.0,
                        reconstruction_error=float(recon),
                        passed=recon <= 1e-12)

    f_l1w = float((np.abs(f) * wv).sum() * vol)
    overlap = np.zeros(grid.total_sites, dtype=int)
    bad_mass = 0.0
    ball_mass_sum = 0.0
    lo5, up5 = np.inf, 0.0
    lo5c, up5c = np.inf, 0.0
    support_ok = True
    mz = 0.0
    for part in dec.bad_parts:
        mask = _ball_mask(grid, part.ball_center, part.ball_radius)
        overlap += mask
        if not mask[part.sites].all():
            support_ok = False
        wb = float(wv[mask].sum() * vol)
        ball_mass_sum += wb
        bad_int = float((np.abs(part.values) * wv[part.sites]).sum() * vol)
        bad_mass = max(bad_mass, bad_int / (alpha * wb))
        ball_avg = float((np.abs(f[mask]) * wv[mask]).sum() * vol) / wb
        lo5, up5 = min(lo5, ball_avg / alpha), max(up5, ball_avg / alpha)
        wq = float(wv[part.sites].sum() * vol)
        cube_avg = float((np.abs(f[part.sites]) * wv[part.sites]).sum() * vol) / wq
        lo5c, up5c = min(lo5c, cube_avg / alpha), max(up5c, cube_avg / alpha)
        mz = max(mz, abs(float((part.values * wv[part.sites]).sum() * vol)))

    report = CZReport(
        good_bound=good_bound,
        bad_mass=bad_mass,
        total_ball_mass=alpha * ball_mass_sum / f_l1w,
        overlap=int(overlap.max()),
        level_lower=float(lo5), level_upper=float(up5),
        cube_level_lower=float(lo5c), cube_level_upper=float(up5c),
        support_ok=support_ok,
        mean_zero_defect=mz,
        reconstruction_error=float(recon),
        passed=bool(recon <= 1e-12 and support_ok
                    and np.all(np.isfinite([good_bound, bad_mass, lo5, up5]))
                    and lo5 > 0.0),
    )
    return report


def riesz_magnitude(op: DiscreteOperator, f: np.ndarray,
                    riesz: np.ndarray | None = None) -> np.ndarray:
    """Euclidean magnitude of the Riesz vector field of f."""
    from .calculus import riesz_matrices
    r = riesz_matrices(op) if riesz is None else riesz
    field = np.einsum("dxy,y->dx", r, np.asarray(f, dtype=float))
    return np.sqrt((field ** 2).sum(axis=0))


def weak_type_estimator(op: DiscreteOperator, w: Weight, samples,
                        alphas, riesz: np.ndarray | None = None) -> float:
    """max over (f, alpha) of alpha W({|Tf| > alpha}) / ||f||_{L1_W}."""
    from .calculus import riesz_matrices
    r = riesz_matrices(op) if riesz is None else riesz
    vol = op.grid.cell_volume
    wv = w.values
    worst = 0.0
    for f in samples:
        mag = riesz_magnitude(op, f, riesz=r)
        l1 = float((np.abs(f) * wv).sum() * vol)
        if l1 == 0.0:
            continue
        for alpha in alphas:
            level_mass = float(wv[mag > alpha].sum() * vol)
            worst = max(worst, alpha * level_mass / l1)
    return worst


def lp_norm_estimator(op: DiscreteOperator, w: Weight, p: float, samples,
                      riesz: np.ndarray | None = None,
                      allow_unproven: bool = False) -> float:
    """max over samples of ||Tf||_{L^p_W} / ||f||_{L^p_W}, 1 < p <= 2.

    Exponents above 2 are refused unless allow_unproven is set; such runs are
    exploratory and their values are recorded, never asserted.
    """
    if not (1.0 < p <= 2.0) and not (allow_unproven and p > 2.0):
        raise InvalidExponent(f"p={p} outside (1, 2]")
    from .calculus import riesz_matrices
    r = riesz_matrices(op) if riesz is None else riesz
    vol = op.grid.cell_volume
    wv = w.values
    worst = 0.0
    for f in samples:
        mag = riesz_magnitude(op, f, riesz=r)
        num = float(((mag ** p) * wv).sum() * vol) ** (1.0 / p)
        den = float((np.abs(f) ** p * wv).sum() * vol) ** (1.0 / p)
        if den > 0:
            worst = max(worst, num / den)
    return worst
