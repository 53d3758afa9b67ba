"""Exception types shared across the package."""


class OppShuffleError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(OppShuffleError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidPairError(InvalidParameterError):
    """A node was paired with itself."""


class InsufficientDataError(OppShuffleError):
    """An estimate was requested before any observation was recorded."""


class DisconnectedGraphError(OppShuffleError):
    """An operation requiring a connected (sub)graph met an unreachable node."""


class InfeasibleCohortError(OppShuffleError):
    """No cohort satisfying the requested constraints exists (or the search gave up)."""


class TraceFormatError(OppShuffleError):
    """A trace or cache file failed to parse.

    ``line_no`` is the 1-based line number of the first offending row.
    """

    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no
