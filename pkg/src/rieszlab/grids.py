"""Periodic lattice geometry, coefficient fields and finite-difference assembly.

The torus [0,1)^dim is sampled on N points per axis (h = 1/N).  Grid functions
are stored as flat vectors of length N^dim in row-major site order; 2-d fields
can be viewed as (N, N) arrays via ``grid.reshape``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    EigendecompositionFailed,
    EllipticityViolated,
    InvalidDimension,
    ResolutionTooSmall,
)

TORUS_SIDE = 1.0

#: scales r <= 1/4 never wrap around the torus non-trivially
WRAP_GUARD = 0.25


@dataclass(frozen=True)
class Grid:
    """Periodic lattice with N sites per axis and spacing h = 1/N."""

    dim: int
    points_per_axis: int

    @property
    def spacing(self) -> float:
        return TORUS_SIDE / self.points_per_axis

    @property
    def h(self) -> float:
        return self.spacing

    @property
    def total_sites(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def coords(self) -> np.ndarray:
        """Site coordinates, shape (total_sites, dim)."""
        axes = [np.arange(self.points_per_axis) * self.spacing] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def reshape(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f).reshape(self.shape)

    def torus_delta(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Coordinate-wise wrapped difference a - b on the torus."""
        d = np.abs(a - b)
        return np.minimum(d, TORUS_SIDE - d)


def build_grid(dim: int, n: int) -> Grid:
    """Build a periodic grid; dim must be 1 or 2, n even and at least 4."""
    if dim not in (1, 2):
        raise InvalidDimension(f"dim must be 1 or 2, got {dim}")
    if n < 4:
        raise ResolutionTooSmall(f"need N >= 4, got {n}")
    if n % 2 != 0:
        raise ResolutionTooSmall(f"need even N for dyadic refinement, got {n}")
    return Grid(dim=dim, points_per_axis=n)


@lru_cache(maxsize=32)
def _dist2_cached(dim: int, n: int) -> np.ndarray:
    grid = Grid(dim, n)
    x = grid.coords()
    d2 = np.zeros((grid.total_sites, grid.total_sites))
    for d in range(dim):
        dd = grid.torus_delta(x[:, d][:, None], x[:, d][None, :])
        d2 += dd * dd
    return d2


def torus_dist2(grid: Grid) -> np.ndarray:
    """Matrix of squared torus distances between all site pairs (cached)."""
    return _dist2_cached(grid.dim, grid.points_per_axis)


def torus_dist(grid: Grid) -> np.ndarray:
    return np.sqrt(torus_dist2(grid))


@dataclass(frozen=True)
class CoefficientSpec:
    """Named coefficient preset with its parameters.

    Presets:
      identity            a_ij = delta_ij
      scalar              a(x) = offset + amplitude * sin(2 pi f x1) (times
                          cos(2 pi f x2) in 2-d), diagonal field a * I
      smooth_anisotropic  unit matrix plus a smooth symmetric perturbation of
                          size `amplitude`
    """

    name: str
    amplitude: float = 1.0
    frequency: int = 1
    offset: float = 2.0
    lambda_min: float = 1e-6


@dataclass
class CoefficientField:
    """Per-site symmetric dim x dim matrices with a verified ellipticity bound.

    ``entries`` has shape (total_sites, dim, dim); ``lam`` is the tight
    constant with spec(A(x)) contained in [lam, 1/lam] at every site.
    """

    grid: Grid
    entries: np.ndarray
    lam: float
    spec: CoefficientSpec

    def component(self, i: int, j: int) -> np.ndarray:
        return self.entries[:, i, j]


def _site_eig_range(entries: np.ndarray) -> tuple:
    """Min and max eigenvalue over all per-site symmetric matrices."""
    if entries.shape[1] == 1:
        vals = entries[:, 0, 0]
        return float(vals.min()), float(vals.max())
    evs = np.linalg.eigvalsh(entries)
    return float(evs.min()), float(evs.max())


def make_coefficients(grid: Grid, spec: CoefficientSpec) -> CoefficientField:
    """Sample a coefficient preset pointwise at grid sites and verify
    ellipticity.

    Raises EllipticityViolated when some site eigenvalue drops below
    spec.lambda_min (or below 0).
    """
    x = grid.coords()
    n, dim = grid.total_sites, grid.dim
    two_pi_f = 2.0 * np.pi * spec.frequency
    entries = np.zeros((n, dim, dim))

    if spec.name == "identity":
        entries[:] = np.eye(dim)
    elif spec.name == "scalar":
        a = spec.offset + spec.amplitude * np.sin(two_pi_f * x[:, 0])
        if dim == 2:
            a = spec.offset + spec.amplitude * (
                np.sin(two_pi_f * x[:, 0]) * np.cos(two_pi_f * x[:, 1]))
        for d in range(dim):
            entries[:, d, d] = a
    elif spec.name == "smooth_anisotropic":
        eps = spec.amplitude
        if dim == 1:
            entries[:, 0, 0] = 1.0 + eps * np.sin(two_pi_f * x[:, 0])
        else:
            sx, cx = np.sin(two_pi_f * x[:, 0]), np.cos(two_pi_f * x[:, 0])
            sy, cy = np.sin(two_pi_f * x[:, 1]), np.cos(two_pi_f * x[:, 1])
            entries[:, 0, 0] = 1.0 + eps * sx * cy
            entries[:, 1, 1] = 1.0 - eps * cx * sy
            off = 0.5 * eps * sx * sy
            entries[:, 0, 1] = off
            entries[:, 1, 0] = off
    else:
        raise ValueError(f"unknown coefficient preset {spec.name!r}")

    emin, emax = _site_eig_range(entries)
    if emin <= 0.0 or emin < spec.lambda_min:
        raise EllipticityViolated(
            f"preset {spec.name!r}: site eigenvalue {emin:.6g} below "
            f"lambda_min {spec.lambda_min:.6g}")
    lam = min(emin, 1.0 / emax)
    return CoefficientField(grid=grid, entries=entries, lam=lam, spec=spec)


def _shift_matrix(grid: Grid, axis: int, step: int) -> np.ndarray:
    """Permutation matrix P with (P u)(x) = u(x + step*h*e_axis), periodic."""
    n = grid.points_per_axis
    idx = np.arange(grid.total_sites).reshape(grid.shape)
    shifted = np.roll(idx, -step, axis=axis).ravel()
    p = np.zeros((grid.total_sites, grid.total_sites))
    p[np.arange(grid.total_sites), shifted] = 1.0
    return p


@dataclass
class SpectralData:
    """Eigendecomposition of the operator matrix; None fields mean the
    decomposition was rejected (ill-conditioned eigenvectors)."""

    eigvals: np.ndarray
    vectors: np.ndarray | None
    inverse: np.ndarray | None
    cond: float
    symmetric: bool


@dataclass
class DiscreteOperator:
    """Assembled non-divergence operator L = -sum a_ij D_i D_j plus the
    centered first-difference gradients.  Instances are treated as immutable
    once assembled."""

    grid: Grid
    coeffs: CoefficientField
    matrix: np.ndarray
    grads: list
    _spectral: SpectralData | None = field(default=None, repr=False)

    @property
    def total_sites(self) -> int:
        return self.grid.total_sites

    @property
    def norm_inf(self) -> float:
        return float(np.abs(self.matrix).sum(axis=1).max())

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Centered-difference gradient, shape (dim, total_sites)."""
        f = np.asarray(f)
        return np.stack([d @ f for d in self.grads])

    def spectral(self, cond_limit: float = 1e8) -> SpectralData:
        """Eigendecomposition of the matrix, cached on the operator.

        The symmetric path uses eigh; otherwise eig.  When the eigenvector
        condition number exceeds cond_limit the vectors/inverse are dropped
        and callers must fall back to expm.
        """
        if self._spectral is not None:
            return self._spectral
        m = self.matrix
        symmetric = np.array_equal(m, m.T)
        if symmetric:
            w, v = np.linalg.eigh(m)
            data = SpectralData(w.astype(complex), v.astype(complex),
                                v.T.astype(complex), 1.0, True)
        else:
            w, v = np.linalg.eig(m)
            cond = float(np.linalg.cond(v))
            if cond <= cond_limit:
                data = SpectralData(w, v, np.linalg.inv(v), cond, False)
            else:
                data = SpectralData(w, None, None, cond, False)
        self._spectral = data
        return data

    def apply_function(self, fn) -> np.ndarray:
        """Real matrix fn(L) through the eigendecomposition; fn maps complex
        eigenvalues to complex values elementwise."""
        sd = self.spectral()
        if sd.vectors is None:
            raise EigendecompositionFailed(
                f"eigenvector condition number {sd.cond:.3g} too large")
        vals = fn(sd.eigvals)
        out = (sd.vectors * vals[None, :]) @ sd.inverse
        return np.real(out)


def assemble_operator(grid: Grid, coeffs: CoefficientField) -> DiscreteOperator:
    """Assemble L = -sum_ij a_ij(x) (D_i D_j u)(x) with centered stencils.

    Pure second differences on the diagonal, 4-point centered products for
    the cross terms.  The diagonal of the matrix is re-derived from the
    off-diagonal row sums so every row annihilates constants at machine
    precision.
    """
    h = grid.spacing
    n = grid.total_sites
    dim = grid.dim

    shifts = {}
    for d in range(dim):
        shifts[(d, +1)] = _shift_matrix(grid, d, +1)
        shifts[(d, -1)] = _shift_matrix(grid, d, -1)

    eye = np.eye(n)
    second = []
    for d in range(dim):
        second.append((shifts[(d, +1)] - 2.0 * eye + shifts[(d, -1)]) / h**2)

    grads = [(shifts[(d, +1)] - shifts[(d, -1)]) / (2.0 * h) for d in range(dim)]

    L = np.zeros((n, n))
    for d in range(dim):
        L -= coeffs.component(d, d)[:, None] * second[d]
    for i in range(dim):
        for j in range(i + 1, dim):
            cross = grads[i] @ grads[j]
            L -= 2.0 * coeffs.component(i, j)[:, None] * cross

    # pin exact annihilation of constants
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))

    return DiscreteOperator(grid=grid, coeffs=coeffs, matrix=L, grads=grads)
