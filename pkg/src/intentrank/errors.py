"""Exception and warning types shared across the package."""


class IntentRankError(Exception):
    """Base class for all errors raised by this package."""


class NormalizationError(IntentRankError):
    """Vector cannot be normalized (zero norm or non-finite entries)."""


class DimensionError(IntentRankError):
    """Operands have incompatible or empty dimensions."""


class EmptyQueryError(IntentRankError):
    """A query carries neither a text nor a reference-image embedding."""


class UnknownRegionError(IntentRankError):
    """Feedback references a region id that is not in the bundle."""


class InvalidStateError(IntentRankError):
    """An intent state violates a structural requirement (e.g. no positives)."""


class InvalidCostError(IntentRankError):
    """A transport cost matrix contains non-finite entries."""


class DegenerateInstanceError(IntentRankError):
    """Target and distractor are indistinguishable (similarity at 1)."""


class FormatError(IntentRankError):
    """A bundle manifest or record file violates its schema."""


class MismatchError(IntentRankError):
    """Query and bundle refer to different images."""


class SortOrderError(IntentRankError):
    """Ranked input is not sorted by descending score."""


class ConfigError(IntentRankError):
    """A configuration value is out of its legal range."""


class MaxIterationsWarning(UserWarning):
    """Sinkhorn hit the iteration cap before reaching the marginal tolerance."""
