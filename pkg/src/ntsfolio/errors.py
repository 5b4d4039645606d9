"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for every error this package raises deliberately."""


class ParseError(EngineError):
    """Malformed input file; message carries the offending row number."""


class ValidationError(EngineError):
    """Input violates a declared invariant (e.g. non-positive price)."""


class AlignmentError(EngineError):
    """Assets share no common dates after intersection."""


class InsufficientDataError(EngineError):
    """Series or sample too short for the requested operation."""


class DegenerateSeriesError(EngineError):
    """Constant or zero-variance series where variance structure is required."""


class EstimationError(EngineError):
    """Maximum-likelihood estimation failed to converge.

    ``best_effort`` carries the least-bad fit found, when one exists.
    """

    def __init__(self, message, best_effort=None):
        super().__init__(message)
        self.best_effort = best_effort


class AccuracyError(EngineError):
    """A numerical grid cannot reach the requested tolerance.

    ``diagnostics`` is a dict describing the grid that was attempted.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NotAGambleError(EngineError):
    """Sample fails the gamble requirements (positive mean, possible loss).

    ``reason`` is ``"expectation"`` when the sample mean is not positive and
    ``"losses"`` when no outcome is negative.
    """

    def __init__(self, message, reason):
        super().__init__(message)
        self.reason = reason


class InfeasibleProblemError(EngineError):
    """No portfolio in the feasible box attains positive expected return."""


class ContractError(EngineError):
    """A caller-supplied callable or array violated its contract."""


class CompletenessError(EngineError):
    """A grouped result set is missing one or more expected groups."""
