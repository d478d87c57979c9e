"""Exception types raised by demonsim."""


class DemonSimError(Exception):
    """Base class for all demonsim errors."""


class AbsolutelyIrreversibleError(DemonSimError, ValueError):
    """Support of the first distribution is not contained in the second."""


class ZeroProbabilityOutcome(DemonSimError, ValueError):
    """An entropy production was requested for an unrealizable outcome."""


class DivergentObservableError(DemonSimError, ValueError):
    """An observable is infinite on an outcome with nonzero weight."""


class TruncationError(DemonSimError, ValueError):
    """The Fock-space cutoff leaves too much thermal tail mass."""


class DimensionMismatchError(DemonSimError, ValueError):
    pass


class ConfigError(DemonSimError, ValueError):
    """Invalid sweep configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
