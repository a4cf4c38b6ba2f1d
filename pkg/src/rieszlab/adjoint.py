"""Global nonnegative adjoint solution W and the structure it certifies.

W spans the null space of the matrix transpose of L, is strictly positive,
and is normalized to mean 1 over the torus.  The weighted energy identity,
the normalized adjoint operator and the accretivity of L in the W inner
product are all verified against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonPositiveWeight, NullspaceNotSimple, SignIndefinite
from .grids import DiscreteOperator
from .weights import Weight

_SIGN_TOL = 1e-8
_NULL_REL = 1e-10


@dataclass
class AdjointSolution:
    weight: Weight
    residual: float
    nullspace_dim: int
    min_value: float


def _inverse_iteration(a: np.ndarray, max_iter: int = 60) -> np.ndarray | None:
    """Null vector of `a` by shift-0 inverse iteration; None on failure.

    LU of the numerically singular matrix has a tiny trailing pivot; each
    solve amplifies the null direction by ~1/eps, so 2-3 sweeps converge.
    """
    n = a.shape[0]
    scale = np.abs(a).max()
    try:
        lu, piv = scipy.linalg.lu_factor(a)
    except scipy.linalg.LinAlgError:
        return None
    x = np.ones(n) / np.sqrt(n)
    best, best_res = None, np.inf
    for _ in range(max_iter):
        y = scipy.linalg.lu_solve((lu, piv), x)
        norm = np.linalg.norm(y)
        if not np.isfinite(norm) or norm == 0.0:
            return best
        x = y / norm
        res = float(np.abs(a @ x).max())
        if res < best_res:
            best, best_res = x.copy(), res
        if res <= 1e-14 * scale:
            break
    return best


def _eig_null_vector(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(a)
    k = int(np.argmin(np.abs(w)))
    vec = np.real(v[:, k])
    return vec / np.linalg.norm(vec)


def solve_adjoint(op: DiscreteOperator) -> AdjointSolution:
    """Compute the discrete adjoint solution W with L^T W = 0.

    Inverse iteration first, full eigendecomposition as fallback; the null
    space must be simple and the vector single-signed.  W is normalized to
    mean 1; entries within 1e-8 * max(W) of zero are clamped to that
    tolerance (W appears in denominators downstream).
    """
    lt = op.matrix.T.copy()
    vec = _inverse_iteration(lt)
    if vec is None:
        vec = _eig_null_vector(lt)

    sv = scipy.linalg.svdvals(lt)
    dim_null = int(np.sum(sv <= _NULL_REL * sv[0]))
    if dim_null != 1:
        raise NullspaceNotSimple(
            f"null space dimension {dim_null}, expected a simple null vector")

    if vec.sum() < 0:
        vec = -vec
    top = np.abs(vec).max()
    if vec.min() < -_SIGN_TOL * top:
        raise SignIndefinite(
            f"null vector attains {vec.min():.3e} against scale {top:.3e}")
    vec = np.maximum(vec, _SIGN_TOL * top)

    w = Weight(op.grid, vec).normalize()
    residual = float(np.abs(lt @ w.values).max())
    return AdjointSolution(weight=w, residual=residual,
                           nullspace_dim=dim_null,
                           min_value=float(w.values.min()))


def _axis_diff(grid, f: np.ndarray, axis: int, mode: str) -> np.ndarray:
    shaped = grid.reshape(f)
    h = grid.spacing
    if mode == "forward":
        out = (np.roll(shaped, -1, axis=axis) - shaped) / h
    elif mode == "backward":
        out = (shaped - np.roll(shaped, 1, axis=axis)) / h
    else:
        out = (np.roll(shaped, -1, axis=axis) - np.roll(shaped, 1, axis=axis)) / (2 * h)
    return out.ravel()


def energy_identity_residual(op: DiscreteOperator, w: Weight, f: np.ndarray) -> float:
    """Normalized defect of the weighted energy identity
    sum_ij a_ij (D_i f)(D_j f) W h^n  =  sum f (Lf) W h^n.

    Diagonal terms use the mean of the two one-sided difference squares,
    which makes the discrete summation by parts exact whenever L^T W
    vanishes; cross terms use centered products (second-order consistent).
    """
    f = np.asarray(f, dtype=float)
    grid = op.grid
    vol = grid.cell_volume
    wv = w.values

    energy = 0.0
    for d in range(grid.dim):
        fwd = _axis_diff(grid, f, d, "forward")
        bwd = _axis_diff(grid, f, d, "backward")
        energy += float(
            (op.coeffs.component(d, d) * 0.5 * (fwd ** 2 + bwd ** 2) * wv).sum() * vol)
    if grid.dim > 1:
        cent = [_axis_diff(grid, f, d, "centered") for d in range(grid.dim)]
        for i in range(grid.dim):
            for j in range(i + 1, grid.dim):
                energy += float(
                    (2.0 * op.coeffs.component(i, j) * cent[i] * cent[j] * wv).sum() * vol)

    pairing = float((f * (op.matrix @ f) * wv).sum() * vol)
    f_norm2 = float((f ** 2 * wv).sum() * vol)
    if f_norm2 == 0.0:
        return 0.0
    return abs(energy - pairing) / (f_norm2 * op.norm_inf)


def normalized_adjoint(op: DiscreteOperator, w: Weight) -> DiscreteOperator:
    """diag(W)^{-1} L^T diag(W): the adjoint of L in the W inner product."""
    wv = w.require_positive()
    matrix = (op.matrix.T * wv[None, :]) / wv[:, None]
    return DiscreteOperator(grid=op.grid, coeffs=op.coeffs,
                            matrix=matrix, grads=op.grads)


def accretivity_check(op: DiscreteOperator, w: Weight) -> float:
    """Min of Re<Lu, u>_W over ||u||_W = 1.

    Equals the smallest eigenvalue of D^{-1/2} sym(D L) D^{-1/2} with
    D = diag(W); should sit above -10 h^2 ||L||.
    """
    wv = w.require_positive()
    dl = wv[:, None] * op.matrix
    sym = 0.5 * (dl + dl.T)
    inv_sqrt = 1.0 / np.sqrt(wv)
    b = inv_sqrt[:, None] * sym * inv_sqrt[None, :]
    return float(np.linalg.eigvalsh(b)[0])


def sectoriality_angle(op: DiscreteOperator, w: Weight, samples: int = 50,
                       rng: np.random.Generator | None = None) -> float:
    """Sampled bound on |Im<Lu,u>_W| / Re<Lu,u>_W over random complex u."""
    rng = rng or np.random.default_rng(0)
    wv = w.require_positive()
    vol = op.grid.cell_volume
    worst = 0.0
    for _ in range(samples):
        u = rng.standard_normal(op.total_sites) + 1j * rng.standard_normal(op.total_sites)
        z = np.vdot(u * wv, op.matrix @ u) * vol
        if z.real > 0:
            worst = max(worst, abs(z.imag) / z.real)
    return worst
