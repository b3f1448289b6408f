"""Shared exception types.

Every error raised on purpose by this package derives from :class:`MvizError`,
so callers can catch one type at the CLI / service boundary and map it to an
exit code or HTTP status.  Conditions that are reported but not fatal
(surrogate not converged, constant feature columns) are returned as flags on
result objects instead of being raised.
"""


class MvizError(Exception):
    """Base class for all package errors."""


class UnboundInput(MvizError):
    """A graph input slot was not supplied a value at evaluation time."""


class ShapeMismatch(MvizError):
    """Operands or bound values have incompatible shapes."""


class NonScalarOutputWithoutSeed(MvizError):
    """Gradient of a non-scalar output requested without selecting a component."""


class EmptyAtomSet(MvizError):
    """An attribution query named zero atoms."""


class SchemaMismatch(MvizError):
    """Datapoint does not match the schema it is claimed to follow."""


class UnknownLayer(MvizError):
    """Requested layer name does not exist in the model."""


class InvalidSpec(MvizError):
    """Synthetic task description is internally inconsistent."""


class Divergence(MvizError):
    """Training produced non-finite loss."""


class DegenerateDesign(MvizError):
    """Surrogate design matrix is unusable (e.g. all rows identical)."""


class SampleTooSmall(MvizError):
    """Too few samples for the requested estimate."""


class MissingGroundTruth(MvizError):
    """Dataset carries no planted ground truth for the requested check."""


class SingleClassLabels(MvizError):
    """A fit that needs at least two classes saw only one."""


class PoolTooSmall(MvizError):
    """Selection pool smaller than the requested batch."""


class EmptyDataset(MvizError):
    """Zero datapoints where at least one is required."""


class MissingSurrogate(MvizError):
    """A stage that needs the fitted surrogate ran without one."""


class IoFailure(MvizError):
    """File could not be read, written, or parsed."""
