"""Exception types shared across the toolkit."""


class EivError(Exception):
    """Base class for all toolkit errors."""


class RankDeficientError(EivError):
    """A matrix required to have full (row or column) rank does not.

    Carries the offending minimum singular value in ``sigma_min``.
    """

    def __init__(self, message, sigma_min=None):
        super().__init__(message)
        self.sigma_min = sigma_min


class WellPosednessError(EivError):
    """An LFT closure hit a (near-)singular feedback inversion.

    Carries the condition number of ``I - D @ delta`` in ``cond``.
    """

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class UnstableSystemError(EivError):
    """H2 norm requested for a system that is not asymptotically stable."""


class DataFormatError(EivError):
    """A dataset or config file could not be parsed.

    ``line`` is the 1-based offending line number if known.
    """

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
