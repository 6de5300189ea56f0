"""Exception types shared across the package.

Everything derives from :class:`YosoError` so callers can catch the whole
family with one clause.  Errors that signal a violated numeric precondition
also derive from ``ValueError`` for interoperability with generic callers.
"""


class YosoError(Exception):
    """Base class for all errors raised by this package."""


class NotSymmetric(YosoError, ValueError):
    """Matrix handed to the symmetric eigensolver is not symmetric."""


class DidNotConverge(YosoError, RuntimeError):
    """Iterative numeric routine exceeded its iteration cap."""


class RankDeficient(YosoError, RuntimeError):
    """Matrix expected to have full (row) rank is numerically deficient."""


class NegativeVariance(YosoError, ValueError):
    pass


class ShapeMismatch(YosoError, ValueError):
    """Operands have incompatible dimensions."""


class NodeOutOfRange(YosoError, ValueError):
    pass


class EmptyGraph(YosoError, ValueError):
    pass


class ZeroProbabilityMass(YosoError, ValueError):
    """Sampling distribution has no usable mass (negative, NaN or zero-sum)."""


class DegenerateSpectrum(YosoError, ValueError):
    """All node scores vanished and no fallback was permitted."""


class StepTooLarge(YosoError, RuntimeError):
    """Proximal-gradient objective increased; the step bound is violated."""


class TooLarge(YosoError, ValueError):
    """Brute-force enumeration would exceed its support-count budget."""


class NotOrthonormal(YosoError, ValueError):
    pass


class NonFinite(YosoError, ArithmeticError):
    """NaN/Inf appeared in a quantity that must stay finite (divergence)."""


class NoLabeledMeasurements(YosoError, ValueError):
    """No measurement row has an anchor inside the training split."""


class ZeroNormEmbedding(YosoError, ValueError):
    """Cosine similarity requested for an (almost) all-zero embedding row."""


class EmptySplit(YosoError, ValueError):
    pass


class MissingFile(YosoError, FileNotFoundError):
    pass


class ParseError(YosoError, ValueError):
    """Malformed dataset file; carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"{message} (line {line_number})"
        super().__init__(message)
        self.line_number = line_number


class InconsistentDimensions(YosoError, ValueError):
    pass


class InvalidParams(YosoError, ValueError):
    pass


class DeltaOutOfRange(YosoError, ValueError):
    """An isometry constant >= 1 makes the requested bound vacuous."""


class InsufficientNodes(YosoError, ValueError):
    pass
