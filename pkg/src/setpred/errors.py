"""Exception hierarchy shared across the package.

Everything derives from SetPredError so callers can catch broadly;
most classes also subclass ValueError or RuntimeError to stay friendly
to generic handling code.
"""


class SetPredError(Exception):
    """Base class for all package-specific errors."""


# --- parameters / configuration ---------------------------------------

class InvalidParams(SetPredError, ValueError):
    """Parameters violate kind-specific admissibility rules."""


class ConfigConflict(SetPredError, ValueError):
    """Run configuration is internally inconsistent."""


# --- utility sequences -------------------------------------------------

class SizeOutOfRange(SetPredError, ValueError):
    """Set size outside {1..K}."""


class UndefinedAtSize(SetPredError, ValueError):
    """Utility kind is not defined at this set size."""


class NonPositiveG(SetPredError, ValueError):
    """Reciprocal-based check requires g(s) > 0."""


class NotNormalized(SetPredError, ValueError):
    """Operation requires g(1) = 1; rescale the spec first."""


# --- inference ---------------------------------------------------------

class EmptyPrediction(SetPredError, ValueError):
    """Prediction sets must be non-empty."""


class ThetaOutOfRange(SetPredError, ValueError):
    """Cumulative-mass threshold must lie in [0, 1]."""


class UniverseTooLarge(SetPredError, ValueError):
    """Exhaustive enumeration is guarded to small class universes."""


class UniverseMismatch(SetPredError, ValueError):
    """Two distributions do not share the same class universe."""


class ProviderExhaustedEarly(SetPredError, RuntimeError):
    """Provider yielded no classes at all."""


class NonMonotoneProvider(SetPredError, RuntimeError):
    """Provider emitted an increasing mass, violating its contract."""


# --- vectors, models, data ---------------------------------------------

class DimensionMismatch(SetPredError, ValueError):
    """Feature dimensions of a vector and a model disagree."""


class EmptyInput(SetPredError, ValueError):
    """Operation requires at least one element."""


class EmptyCalibration(SetPredError, ValueError):
    """Calibration set must be non-empty."""


class DataFormatError(SetPredError, ValueError):
    """Malformed data file."""


class ParseError(DataFormatError):
    """Unparseable token; message carries the line number."""


class NonMonotoneIndices(DataFormatError):
    """Feature indices on a line are not strictly increasing."""


# --- label trees ---------------------------------------------------------

class TreeStructureError(SetPredError, ValueError):
    """Label tree violates a structural invariant."""


class CycleDetected(TreeStructureError):
    """Edge list does not describe a rooted tree."""


class MultipleRoots(TreeStructureError):
    """More or fewer than exactly one root."""


class UnmappedClass(TreeStructureError):
    """Class/leaf correspondence is not a bijection."""


class UnaryInternalNode(TreeStructureError):
    """Internal nodes must have at least two children."""


class UnnormalizedNode(SetPredError, ValueError):
    """Per-node child distribution does not sum to one."""


class MissingNodeModel(SetPredError, ValueError):
    """An internal tree node has no trained child classifier."""


# --- warnings ------------------------------------------------------------

class DegenerateDataWarning(RuntimeWarning):
    """A class had no training examples; fallback rule applied."""
