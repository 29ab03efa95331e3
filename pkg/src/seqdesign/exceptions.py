"""Exception hierarchy for seqdesign."""


class SeqDesignError(Exception):
    """Base class for all errors raised by this package."""


class ConvergenceError(SeqDesignError):
    """A numerical routine did not converge within its iteration budget."""


class SeparationError(SeqDesignError):
    """The binary data are (quasi-)completely separated; no finite MLE exists.

    The offending data are attached as ``data`` when available.
    """

    def __init__(self, message, data=None):
        super().__init__(message)
        self.data = data


class DegenerateDesignError(SeqDesignError):
    """Fewer than two distinct covariate values; (a, b) is not identifiable."""


class InitialSearchFailed(SeqDesignError):
    """The bisection search ended without an identifiable dataset."""


class NoImprovementError(SeqDesignError):
    """A candidate path runs parallel to the benchmark path (no cut point)."""


class AllCandidatesDegenerateError(SeqDesignError):
    """Every candidate stage size raised :class:`NoImprovementError`."""


class RankDeficiencyError(SeqDesignError):
    """The regression design matrix is singular."""


class InvalidPolicyError(SeqDesignError):
    """A sizing policy is missing something it needs (e.g. a stage rule)."""


class ProtocolError(SeqDesignError):
    """An external instrument sent a malformed reply."""
