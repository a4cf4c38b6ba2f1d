"""Exception hierarchy shared by all rieszlab modules."""


class LabError(Exception):
    """Base class for all rieszlab errors."""


# -- lattice -----------------------------------------------------------------

class InvalidDimension(LabError):
    """Grid dimension outside the supported set {1, 2}."""


class ResolutionTooSmall(LabError):
    """Grid resolution below the minimum (N >= 4, N even)."""


class EllipticityViolated(LabError):
    """A site matrix has spectrum outside the configured ellipticity window."""


# -- weights -----------------------------------------------------------------

class NonPositiveWeight(LabError):
    """Weight is not strictly positive where positivity is required."""


class EmptyBallFamily(LabError):
    """Ball family contains no balls."""


class NonPositiveExponentGap(LabError):
    """A_p exponent must satisfy p > 1."""


class BallWrapsTorus(LabError):
    """Dilated ball radius exceeds the torus wrap guard (1/4)."""


class DegenerateBall(LabError):
    """Ball carries zero weight mass."""


# -- adjoint solution --------------------------------------------------------

class NullspaceNotSimple(LabError):
    """Transposed operator has a null space of dimension != 1."""


class SignIndefinite(LabError):
    """Null vector changes sign beyond the relative tolerance."""


# -- semigroup ---------------------------------------------------------------

class EigendecompositionFailed(LabError):
    """Both the eigendecomposition path and the expm fallback diverged."""


class NoFiniteConstant(LabError):
    """Bound ratio is unbounded over the tested range (bound violation)."""


class EmptyAnnulus(LabError):
    """The region {dist > t} contains no grid sites."""


# -- functional calculus -----------------------------------------------------

class SpectrumInLeftHalfPlane(LabError):
    """Some eigenvalue has real part below the accretivity slack."""


class QuadratureNotConverged(LabError):
    """Quadrature operator disagrees with the eigen-calculus oracle."""


# -- Calderon-Zygmund --------------------------------------------------------

class AlphaTooSmall(LabError):
    """Decomposition level below the global weighted average of |f|."""


class NoDyadicStructure(LabError):
    """Grid resolution is not a power of two; no dyadic cube tree exists."""


class InvalidExponent(LabError):
    """Lebesgue exponent outside the supported range (1, 2]."""


# -- lab ---------------------------------------------------------------------

class ZeroGradient(LabError):
    """Input function has vanishing discrete gradient."""


class ZeroSquareFunction(LabError):
    """Square function of the input vanishes; ratio undefined."""


class EmptyTimeGrid(LabError):
    """Time grid for the cone discretization is empty."""


class ExperimentError(LabError):
    """A configured check failed; carries the check name and anchor."""

    def __init__(self, check: str, anchor: str, message: str):
        self.check = check
        self.anchor = anchor
        super().__init__(f"[{check} / {anchor}] {message}")
