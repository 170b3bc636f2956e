"""Exception types raised across the package."""


class ArchRepError(Exception):
    """Base class for package errors."""


class MissingMoment(ArchRepError, KeyError):
    pass


class NonStationary(ArchRepError, ValueError):
    pass


class HistoryTooShort(ArchRepError, ValueError):
    pass


class OrderMismatch(ArchRepError, ValueError):
    pass


class PathTooShort(ArchRepError, ValueError):
    pass


class AlphaAtOrBelowOne(ArchRepError, ValueError):
    pass


class HypothesisViolated(ArchRepError, ValueError):
    pass


class PartitionConditionFailed(ArchRepError, ValueError):
    pass


class InsufficientGammaGrid(ArchRepError, ValueError):
    pass


class ConfigInvalid(ArchRepError, ValueError):
    """Invalid experiment configuration; ``diagnostics`` lists field/line messages."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))
