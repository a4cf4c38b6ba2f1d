"""Functional calculus: square roots, subordination quadrature, the Riesz
transform and the K_t commutator kernel.

L^{-1/2} has two routes that must agree: the eigen-calculus (primary) and
the subordination integral pi^{-1/2} int_0^inf e^{-sL} s^{-1/2} ds evaluated
by composite Gauss-Legendre after the substitution s = e^v.  The pi^{-1/2}
normalization makes the quadrature operator equal L^{-1/2} exactly, so the
cross-check is an equality test rather than a proportionality test.

On the torus the constants span the kernel of L; every inverse power is
defined as zero on that null mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyAnnulus,
    QuadratureNotConverged,
    SpectrumInLeftHalfPlane,
    ZeroGradient,
)
from .grids import DiscreteOperator, torus_dist2
from .semigroup import heat_matrix
from .weights import Weight

_NULL_REL = 1e-10
_SPEC_SLACK = 10.0  # times h^2 ||L||


def _null_threshold(op: DiscreteOperator) -> float:
    return _NULL_REL * op.norm_inf


def _spectrum_guard(op: DiscreteOperator):
    sd = op.spectral()
    slack = _SPEC_SLACK * op.grid.spacing ** 2 * op.norm_inf
    low = float(sd.eigvals.real.min())
    if low < -slack:
        raise SpectrumInLeftHalfPlane(
            f"min Re eigenvalue {low:.3e} below -{slack:.3e}")
    return sd


def sqrt_op(op: DiscreteOperator) -> np.ndarray:
    """Principal square root of L through the eigen calculus; the null mode
    maps to 0."""
    _spectrum_guard(op)
    eps = _null_threshold(op)

    def fn(lam):
        out = np.sqrt(lam.astype(complex))
        out[np.abs(lam) <= eps] = 0.0
        return out

    return op.apply_function(fn)


def inv_sqrt_eigen(op: DiscreteOperator) -> np.ndarray:
    """L^{-1/2} on the complement of the null mode (eigen-calculus route)."""
    _spectrum_guard(op)
    eps = _null_threshold(op)

    def fn(lam):
        out = np.zeros_like(lam, dtype=complex)
        keep = np.abs(lam) > eps
        out[keep] = lam[keep].astype(complex) ** -0.5
        return out

    return op.apply_function(fn)


@dataclass
class QuadratureRule:
    """Nodes/weights in s-space approximating int_0^inf F(s) ds for
    semigroup-type integrands; built by composite Gauss-Legendre on v = log s."""

    nodes: np.ndarray
    weights: np.ndarray
    scheme: str
    node_count: int

    def inv_sqrt_values(self, lam: np.ndarray) -> np.ndarray:
        """pi^{-1/2} sum w_k s_k^{-1/2} e^{-s_k lam}, vectorized over lam."""
        lam = np.asarray(lam, dtype=complex)
        expo = np.exp(-np.outer(lam, self.nodes))
        return (expo * (self.weights / np.sqrt(self.nodes))).sum(axis=1) / np.sqrt(np.pi)


def _log_gl_rule(v_lo: float, v_hi: float, node_count: int) -> tuple:
    """Composite Gauss-Legendre on [v_lo, v_hi] in v = log s, mapped back to
    s-space nodes and ds-weights."""
    per = 8 if node_count >= 8 else max(node_count, 2)
    panels = max(1, node_count // per)
    per = max(2, node_count // panels)
    x, w = np.polynomial.legendre.leggauss(per)
    edges = np.linspace(v_lo, v_hi, panels + 1)
    vs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        vs.append(mid + half * x)
        ws.append(half * w)
    v = np.concatenate(vs)
    wv = np.concatenate(ws)
    s = np.exp(v)
    return s, wv * s  # ds = e^v dv


def _spectral_interval(op: DiscreteOperator) -> tuple:
    sd = op.spectral()
    eps = _null_threshold(op)
    mags = np.abs(sd.eigvals)
    nz = mags > eps
    re = sd.eigvals.real[nz]
    return float(re.min()), float(np.abs(sd.eigvals[nz]).max())


def build_quadrature(op: DiscreteOperator, node_count: int | None = None,
                     tol: float = 1e-9) -> QuadratureRule:
    """Subordination rule sized for the spectrum of `op`.

    The v-interval covers [lambda_min/10, 10 lambda_max]; when node_count is
    None it is sized so the scalar relative error stays below `tol` across
    that range (about 8 nodes per unit of log-length).
    """
    lam_lo, lam_hi = _spectral_interval(op)
    big = 10.0 * lam_hi
    small = lam_lo / 10.0
    v_lo = 2.0 * np.log(0.25 * tol * np.sqrt(np.pi / big))
    v_hi = np.log((np.log(4.0 / tol) + 10.0) / small)
    if node_count is None:
        node_count = 8 * int(np.ceil((v_hi - v_lo) / 1.5))
    s, w = _log_gl_rule(v_lo, v_hi, node_count)
    return QuadratureRule(nodes=s, weights=w, scheme="log-gl",
                          node_count=len(s))


def quadrature_scalar_error(rule: QuadratureRule, lam_lo: float,
                            lam_hi: float, samples: int = 200) -> float:
    """Worst relative error of the rule against lambda^{-1/2} on a log-spaced
    sample of [lam_lo, lam_hi]."""
    lam = np.geomspace(lam_lo, lam_hi, samples)
    approx = rule.inv_sqrt_values(lam).real
    exact = lam ** -0.5
    return float(np.abs((approx - exact) / exact).max())


def inv_sqrt_subordination(op: DiscreteOperator, quad: QuadratureRule) -> np.ndarray:
    """L^{-1/2} by subordination quadrature, restricted to the complement of
    the null mode; raises QuadratureNotConverged when it strays more than
    1e-6 (relative operator norm) from the eigen-calculus route."""
    _spectrum_guard(op)
    eps = _null_threshold(op)

    def fn(lam):
        out = quad.inv_sqrt_values(lam)
        out[np.abs(lam) <= eps] = 0.0
        return out

    approx = op.apply_function(fn)
    oracle = inv_sqrt_eigen(op)
    rel = float(np.linalg.norm(approx - oracle, 2) / np.linalg.norm(oracle, 2))
    if rel > 1e-6:
        raise QuadratureNotConverged(
            f"subordination deviates from eigen calculus by {rel:.3e}")
    return approx


def riesz_matrices(op: DiscreteOperator, inv_sqrt: np.ndarray | None = None) -> np.ndarray:
    """Component matrices of the Riesz transform, shape (dim, n, n)."""
    base = inv_sqrt_eigen(op) if inv_sqrt is None else inv_sqrt
    return np.stack([d @ base for d in op.grads])


def riesz_transform(op: DiscreteOperator, f: np.ndarray,
                    inv_sqrt: np.ndarray | None = None) -> np.ndarray:
    """Vector field (D_i L^{-1/2} f)_i; constants map to the zero field."""
    base = inv_sqrt_eigen(op) if inv_sqrt is None else inv_sqrt
    g = base @ np.asarray(f, dtype=float)
    return np.stack([d @ g for d in op.grads])


def weighted_l2(grid, w: Weight, f: np.ndarray) -> float:
    return float(np.sqrt((np.asarray(f) ** 2 * w.values).sum() * grid.cell_volume))


def kato_ratios(op: DiscreteOperator, w: Weight, f: np.ndarray,
                sqrt_l: np.ndarray | None = None,
                sqrt_lt: np.ndarray | None = None) -> tuple:
    """(||sqrt(L) f|| / ||grad f||, ||sqrt(L~) f|| / ||grad f||) in L^2_W."""
    from .adjoint import normalized_adjoint
    f = np.asarray(f, dtype=float)
    grad = op.gradient(f)
    gn = float(np.sqrt((grad ** 2).sum(axis=0) @ w.values * op.grid.cell_volume))
    if gn == 0.0:
        raise ZeroGradient("input has vanishing centered gradient")
    if sqrt_l is None:
        sqrt_l = sqrt_op(op)
    if sqrt_lt is None:
        sqrt_lt = sqrt_op(normalized_adjoint(op, w))
    r1 = weighted_l2(op.grid, w, sqrt_l @ f) / gn
    r2 = weighted_l2(op.grid, w, sqrt_lt @ f) / gn
    return r1, r2


@dataclass
class KtKernel:
    """Vector-valued kernel of grad L^{-1/2}(I - e^{-tL}), shape (dim, n, n)."""

    grid: object
    t: float
    entries: np.ndarray

    def constant_defect(self) -> float:
        """max component-wise |K_t 1| (both pieces kill constants)."""
        sums = self.entries.sum(axis=2) * self.grid.cell_volume
        return float(np.abs(sums).max())


def kt_kernel(op: DiscreteOperator, t: float,
              quad: QuadratureRule | None = None,
              node_count: int = 160, check_tol: float = 1e-6) -> KtKernel:
    """Kernel of grad L^{-1/2}(I - e^{-tL}) by split subordination quadrature.

    g_t(s) = s^{-1/2} - chi_{s>t} (s-t)^{-1/2} is integrated as two pieces:
    s in (0, t) where g_t = s^{-1/2}, and u = s - t in (0, inf) where
    g_t = (u+t)^{-1/2} - u^{-1/2}; no node lands on the s = t singularity.
    The null mode is assigned its exact value 0.
    """
    if t <= 0:
        raise ValueError(f"need t > 0, got {t}")
    _spectrum_guard(op)
    eps = _null_threshold(op)
    lam_lo, lam_hi = _spectral_interval(op)
    tol = 1e-9
    v_lo = 2.0 * np.log(0.25 * tol * np.sqrt(np.pi / (10 * lam_hi)))
    v_hi = np.log((np.log(4.0 / tol) + 10.0) / (lam_lo / 10.0))

    n_low = node_count if quad is None else quad.node_count
    s_low, w_low = _log_gl_rule(v_lo, np.log(t), n_low)
    s_up, w_up = _log_gl_rule(v_lo, v_hi, n_low)

    def fn(lam):
        lam = lam.astype(complex)
        low = np.exp(-np.outer(lam, s_low)) @ (w_low / np.sqrt(s_low))
        gu = 1.0 / np.sqrt(s_up + t) - 1.0 / np.sqrt(s_up)
        up = np.exp(-np.outer(lam, s_up + t)) @ (w_up * gu)
        out = (low + up) / np.sqrt(np.pi)
        out[np.abs(lam) <= eps] = 0.0
        return out

    scalar_part = op.apply_function(fn)
    vol = op.grid.cell_volume
    entries = np.stack([(d @ scalar_part) / vol for d in op.grads])

    inv = inv_sqrt_eigen(op)
    oracle_scalar = inv - inv @ heat_matrix(op, np.sqrt(t))
    oracle = np.stack([(d @ oracle_scalar) / vol for d in op.grads])
    rel = float(np.linalg.norm((entries - oracle).ravel()) /
                np.linalg.norm(oracle.ravel()))
    if rel > check_tol:
        raise QuadratureNotConverged(
            f"K_t quadrature deviates from eigen calculus by {rel:.3e}")
    return KtKernel(grid=op.grid, t=t, entries=entries)


def kt_bound_check(kern: KtKernel, w: Weight, t: float) -> float:
    """max_y w(y)^{-1} sum_{dist(x,y) >= sqrt(t)} |K_t(x,y)| w(x) h^n."""
    if np.sqrt(t) > 0.25 + 1e-12:
        raise ValueError(f"need sqrt(t) <= 1/4, got t={t}")
    mag = np.sqrt(np.einsum("dxy,dxy->xy", kern.entries, kern.entries))
    d2 = torus_dist2(kern.grid)
    mask = d2 >= t
    if not mask.any():
        raise EmptyAnnulus(f"no sites at distance >= sqrt({t})")
    wv = w.require_positive()
    masses = (np.where(mask, mag * wv[:, None], 0.0)).sum(axis=0) * kern.grid.cell_volume
    return float((masses / wv).max())
