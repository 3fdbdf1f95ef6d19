"""Exception types shared across the package."""


class LcprodError(Exception):
    """Base class for all package-specific errors."""


class InvalidPotential(LcprodError):
    """Potential parameters violate convexity or normalizability.

    Carries the block index when raised while generating a product measure.
    """

    def __init__(self, message, block_index=None):
        if block_index is not None:
            message = f"block {block_index}: {message}"
        super().__init__(message)
        self.block_index = block_index


class InvalidEmbedding(LcprodError):
    """Affine map is rank deficient or dimensionally incompatible."""


class UnsupportedDomain(LcprodError):
    """No sampler or mass computation for this potential composition."""


class ShapeError(LcprodError):
    """Vector or matrix dimensions do not match the paired object."""


class InsufficientDepth(LcprodError):
    """A truncated point is shallower than the requested block depth."""


class TailDiverges(LcprodError):
    """The tail mean series failed its convergence probe."""


class TailDeclarationError(LcprodError):
    """Declared tail behaviour is inconsistent with the paired measure."""


class HypothesisNotMet(LcprodError):
    """A construction hypothesis fails, e.g. the prefix support passes through zero."""


class RuleSyntaxError(LcprodError):
    """A measure, coefficient, or sequence rule does not parse."""


class ConfigError(LcprodError):
    """Invalid experiment configuration; collects every validation error."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
