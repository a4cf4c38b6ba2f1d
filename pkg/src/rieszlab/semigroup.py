"""Heat semigroup kernels and empirical Gaussian bound fits.

Kernels are stored with the quadrature scaling Gamma = M / h^n so that
(e^{-t^2 L} f)(x) = sum_y Gamma(x, y) f(y) h^n.  The existential constants
of the continuum bounds are replaced by a fit-and-stability procedure:
grid-search the decay rate, take the max ratio as the amplitude, and declare
the fit stable when the amplitude moves < 25% under grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import EigendecompositionFailed, LabError, NoFiniteConstant
from .grids import DiscreteOperator, WRAP_GUARD, torus_dist2
from .weights import Weight, _ball_sum

_ROW_TOL = 1e-10
_POS_TOL = -1e-10

DEFAULT_C_GRID = tuple(np.round(np.arange(0.05, 1.0001, 0.05), 2))


@dataclass
class KernelMatrix:
    """Site-pair kernel of e^{-t^2 L} (kind 'heat') or t^2 L e^{-t^2 L}
    (kind 'tLe'), scaled by h^{-n}."""

    grid: object
    t: float
    kind: str
    entries: np.ndarray

    def row_quadrature(self) -> np.ndarray:
        return self.entries.sum(axis=1) * self.grid.cell_volume

    def weighted_column_defect(self, w: Weight) -> float:
        """max_y |sum_x Gamma(x,y) W(x) h^n - W(y)| (adjoint invariance)."""
        col = (w.values[:, None] * self.entries).sum(axis=0) * self.grid.cell_volume
        return float(np.abs(col - w.values).max())


def heat_matrix(op: DiscreteOperator, t: float) -> np.ndarray:
    """e^{-t^2 L} by eigendecomposition, expm as fallback; identity at t=0."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if t == 0.0:
        return np.eye(op.total_sites)
    sd = op.spectral()
    if sd.vectors is not None:
        return op.apply_function(lambda lam: np.exp(-t * t * lam))
    out = scipy.linalg.expm(-t * t * op.matrix)
    if not np.all(np.isfinite(out)):
        raise EigendecompositionFailed("scaling-and-squaring fallback diverged")
    return out


def heat_kernel(op: DiscreteOperator, t: float) -> KernelMatrix:
    """Kernel of e^{-t^2 L}; validates conservation and positivity."""
    if not (0.0 < t <= WRAP_GUARD + 1e-12):
        raise ValueError(f"need 0 < t <= 1/4, got {t}")
    entries = heat_matrix(op, t) / op.grid.cell_volume
    kern = KernelMatrix(grid=op.grid, t=t, kind="heat", entries=entries)
    rows = kern.row_quadrature()
    if np.abs(rows - 1.0).max() > _ROW_TOL:
        raise LabError(
            f"heat kernel row quadrature off by {np.abs(rows - 1.0).max():.3e}")
    # positivity up to roundoff; the floor scales with the kernel magnitude
    floor = _POS_TOL * max(1.0, float(entries.max()))
    if entries.min() < floor:
        raise LabError(f"heat kernel entry {entries.min():.3e} below positivity floor")
    return kern


def tle_kernel(op: DiscreteOperator, t: float) -> KernelMatrix:
    """Kernel of t^2 L e^{-t^2 L}; signed, rows integrate to zero."""
    if not (0.0 < t <= WRAP_GUARD + 1e-12):
        raise ValueError(f"need 0 < t <= 1/4, got {t}")
    sd = op.spectral()
    if sd.vectors is not None:
        m = op.apply_function(lambda lam: t * t * lam * np.exp(-t * t * lam))
    else:
        m = t * t * (op.matrix @ heat_matrix(op, t))
    kern = KernelMatrix(grid=op.grid, t=t, kind="tLe",
                        entries=m / op.grid.cell_volume)
    rows = kern.row_quadrature()
    if np.abs(rows).max() > _ROW_TOL:
        raise LabError(
            f"tLe kernel row quadrature off by {np.abs(rows).max():.3e}")
    return kern


def ball_weight_profile(w: Weight, radius: float) -> np.ndarray:
    """w(B_r(x)) for every site x; radius in torus length units."""
    m = radius * w.grid.points_per_axis
    return _ball_sum(w.grid, w.values, m) * w.grid.cell_volume


@dataclass
class BoundFit:
    """Fitted Gaussian envelope: rate c_fit, amplitude C_fit.

    `table` maps each candidate rate to its amplitude; `stable` is filled in
    by refinement studies (None until compared against another resolution).
    """

    side: str
    c_fit: float
    C_fit: float
    residual_max: float
    table: dict = field(default_factory=dict)
    stable: bool | None = None


def _upper_ratio(entries, env_scale, d2, t, w, c) -> float:
    env = env_scale * np.exp(-c * d2 / (t * t)) * w[None, :]
    return float((entries / env).max())


def gaussian_bound_fit(op: DiscreteOperator, w: Weight, tgrid, side: str,
                       kernels: dict | None = None,
                       c_grid=DEFAULT_C_GRID,
                       amplitude_cap: float = 10.0) -> BoundFit:
    """Fit (c, C) for the two-sided Gaussian envelopes of the heat kernel.

    upper:  Gamma(x,y) <= C min(1/w(B_t(x)), 1/w(B_t(y))) e^{-c d^2/t^2} w(y)
    lower:  Gamma(x,y) >= C^{-1} max(...) e^{-d^2/(c t^2)} w(y), d <= 3t

    The amplitude C(c) grows with c; the fitted rate is the largest candidate
    whose amplitude stays within `amplitude_cap` times the smallest-candidate
    amplitude, which keeps the argmax pairs in the grid-converged range.
    """
    if side not in ("upper", "lower"):
        raise ValueError(f"side must be 'upper' or 'lower', got {side}")
    tgrid = list(tgrid)
    if not tgrid or any(not (0 < t <= WRAP_GUARD + 1e-12) for t in tgrid):
        raise ValueError("tgrid must be nonempty within (0, 1/4]")
    wv = w.require_positive()
    d2 = torus_dist2(op.grid)

    per_t = []
    for t in tgrid:
        kern = kernels[t] if kernels is not None else heat_kernel(op, t)
        wb = ball_weight_profile(w, t)
        inv = 1.0 / wb
        if side == "upper":
            env_scale = np.minimum(inv[:, None], inv[None, :])
            per_t.append((kern.entries, env_scale, t, None))
        else:
            mask = d2 <= (3.0 * t) ** 2
            if np.any(kern.entries[mask] <= 0.0):
                raise NoFiniteConstant(
                    f"kernel not positive on the near-diagonal region at t={t}")
            env_scale = np.maximum(inv[:, None], inv[None, :])
            per_t.append((kern.entries, env_scale, t, mask))

    table = {}
    for c in c_grid:
        worst = 0.0
        for entries, env_scale, t, mask in per_t:
            if side == "upper":
                r = _upper_ratio(entries, env_scale, d2, t, wv, c)
            else:
                env = env_scale * np.exp(-d2 / (c * t * t)) * wv[None, :]
                r = float((env[mask] / entries[mask]).max())
            worst = max(worst, r)
        table[float(c)] = worst

    base = min(table.values())
    feasible = [c for c, amp in table.items() if amp <= amplitude_cap * base]
    if not feasible:
        raise NoFiniteConstant(f"no rate with amplitude within {amplitude_cap}x base")
    c_fit = max(feasible)
    return BoundFit(side=side, c_fit=c_fit, C_fit=table[c_fit],
                    residual_max=table[c_fit], table=table)


def gradient_kernel(op: DiscreteOperator, s: float) -> np.ndarray:
    """Gradient (in x) of every kernel column: shape (dim, n, n),
    [d, x, y] = (D_d Gamma_{s^2}(., y))(x)."""
    gamma = heat_matrix(op, s) / op.grid.cell_volume
    return np.stack([d @ gamma for d in op.grads])


def grad_kernel_energy_profile(op: DiscreteOperator, w: Weight, s: float,
                               gamma: float,
                               grad: np.ndarray | None = None) -> np.ndarray:
    """For every y: sum_x |grad_x Gamma(x,y)|^2 e^{2 gamma d^2/s^2} w(x) h^n."""
    g = gradient_kernel(op, s) if grad is None else grad
    sq = np.einsum("dxy,dxy->xy", g, g)
    d2 = torus_dist2(op.grid)
    integrand = sq * np.exp(2.0 * gamma * d2 / (s * s)) * w.values[:, None]
    return integrand.sum(axis=0) * op.grid.cell_volume


def grad_kernel_energy(op: DiscreteOperator, w: Weight, s: float, y: int,
                       gamma: float) -> float:
    """Weighted, exponentially tilted energy of one kernel column."""
    return float(grad_kernel_energy_profile(op, w, s, gamma)[y])


def annulus_grad_profile(op: DiscreteOperator, w: Weight, s: float, t: float,
                         grad: np.ndarray | None = None) -> np.ndarray:
    """For every y: sum_{dist(x,y)>t} |grad_x Gamma_{s^2}(x,y)| w(x) h^n."""
    from .errors import EmptyAnnulus
    g = gradient_kernel(op, s) if grad is None else grad
    mag = np.sqrt(np.einsum("dxy,dxy->xy", g, g))
    d2 = torus_dist2(op.grid)
    mask = d2 > t * t
    if not mask.any():
        raise EmptyAnnulus(f"no sites beyond distance {t}")
    integrand = np.where(mask, mag * w.values[:, None], 0.0)
    return integrand.sum(axis=0) * op.grid.cell_volume


def annulus_grad_bound(op: DiscreteOperator, w: Weight, s: float, t: float,
                       y: int) -> float:
    if t == 0.0:
        g = gradient_kernel(op, s)
        mag = np.sqrt(np.einsum("dxy,dxy->xy", g, g))
        return float((mag[:, y] * w.values).sum() * op.grid.cell_volume)
    return float(annulus_grad_profile(op, w, s, t)[y])


def fit_annulus_decay(op: DiscreteOperator, w: Weight, sgrid,
                      t_over_s=(0.0, 1.0, 2.0, 3.0, 4.0)) -> dict:
    """Fit value(s,t,y) <= C s^{-1} e^{-beta (t/s)^2} w(y) over an (s, t) grid.

    beta is the smallest pairwise log-slope of the aggregated profile in
    xi = (t/s)^2, so every two-point decay inequality holds by construction.
    """
    xs = sorted(set(t_over_s))
    agg = {xi: 0.0 for xi in xs}
    for s in sgrid:
        grad = gradient_kernel(op, s)
        for xi in xs:
            t = np.sqrt(xi) * s
            if t == 0.0:
                g = np.sqrt(np.einsum("dxy,dxy->xy", grad, grad))
                prof = (g * w.values[:, None]).sum(axis=0) * op.grid.cell_volume
            else:
                prof = annulus_grad_profile(op, w, s, t, grad=grad)
            ratio = prof * s / w.values
            agg[xi] = max(agg[xi], float(ratio.max()))
    betas = []
    for i, xi in enumerate(xs):
        for xj in xs[i + 1:]:
            if agg[xj] > 0 and agg[xi] > 0:
                betas.append(np.log(agg[xi] / agg[xj]) / (xj - xi))
    beta = float(min(betas)) if betas else 0.0
    amp = max(agg[xi] * np.exp(beta * xi) for xi in xs)
    return {"beta": beta, "C": float(amp), "profile": agg}
