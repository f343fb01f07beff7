"""Exception types raised by the library.

Everything derives from :class:`SpheroidError` so callers (the CLI in
particular) can separate numerical failures from programming errors.
"""


class SpheroidError(Exception):
    """Base class for all library errors."""


class ConfigError(SpheroidError):
    """Invalid suspension file or experiment configuration."""


class FocalDegeneracy(SpheroidError):
    """Point lies on the focal segment (prolate) or focal ring (oblate)."""


class NoConvergence(SpheroidError):
    """An iterative geometric refinement hit its iteration cap."""


class LegendreOverflow(SpheroidError):
    """A Legendre table entry exceeded the floating point range."""

    def __init__(self, n, m, msg=None):
        self.n, self.m = n, m
        super().__init__(msg or f"Legendre overflow at (n, m) = ({n}, {m})")


class LentzNoConvergence(SpheroidError):
    """Continued fraction for Q_N^m / Q_{N-1}^m did not converge."""

    def __init__(self, m, iterations):
        self.m, self.iterations = m, iterations
        super().__init__(f"Lentz continued fraction failed for m={m} after {iterations} terms")


class WronskianViolation(SpheroidError):
    """Backward recursion for Q lost accuracy (argument too close to the cut)."""

    def __init__(self, n, m, residual):
        self.n, self.m, self.residual = n, m, residual
        super().__init__(f"Casoratian residual {residual:.3e} at (n, m) = ({n}, {m})")


class RegionMismatch(SpheroidError):
    """Target lies on the wrong side of the source surface for an expansion."""


class OverlapDetected(SpheroidError):
    """Two particles of a suspension overlap or touch."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        super().__init__(f"overlapping particle pairs: {self.pairs}")


class TargetInsideParticle(SpheroidError):
    """An exterior evaluation target lies inside a particle."""


class GMRESStagnation(SpheroidError):
    """GMRES stopped before reaching the requested tolerance."""

    def __init__(self, msg, residuals):
        self.residuals = list(residuals)
        super().__init__(msg)
