"""Exception types shared across the toolkit."""


class PlatescreenError(Exception):
    """Base class for all toolkit errors."""


class FrameGapError(PlatescreenError):
    """A frame index is missing from an image sequence."""

    def __init__(self, missing_index, message=None):
        self.missing_index = missing_index
        super().__init__(message or f"missing frame at index {missing_index}")


class DimensionError(PlatescreenError):
    """Images in a sequence or operation have inconsistent dimensions."""


class EmptySelectionError(PlatescreenError):
    """A frame selection produced an empty stream."""


class DegenerateSpreadError(PlatescreenError):
    """A normalization has zero spread (constant image)."""


class MergeConflictError(PlatescreenError):
    """Two projects share well ids and cannot be merged."""

    def __init__(self, colliding_ids):
        self.colliding_ids = sorted(colliding_ids)
        super().__init__(f"well ids present in both projects: {self.colliding_ids}")


class FactorSchemaError(PlatescreenError):
    """Factor declarations of two projects do not match."""


class PlacementError(PlatescreenError):
    """Synthetic egg placement failed within the retry budget."""


class NoDataError(PlatescreenError):
    """A series contains no valid samples."""


class DegenerateLabelsError(PlatescreenError):
    """Labels describe fewer than two usable classes."""


class StratificationError(PlatescreenError):
    """Stratified folds are infeasible for the given labels."""


class IncompleteFeaturesError(PlatescreenError):
    """A cascade stage was reached but a required feature is missing."""

    def __init__(self, stage, feature):
        self.stage = stage
        self.feature = feature
        super().__init__(f"stage '{stage}' requires missing feature '{feature}'")


class NumericalError(PlatescreenError):
    """A numerical routine failed (singular or ill-conditioned matrix)."""
