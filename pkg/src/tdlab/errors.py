"""Exception hierarchy shared by every tdlab module."""

from __future__ import annotations


class TdlabError(Exception):
    """Base class for all tdlab errors."""


class ConfigError(TdlabError, ValueError):
    """Malformed configuration or inconsistent shapes."""


class AssumptionViolation(TdlabError):
    """A problem instance or schedule breaks one of the convergence assumptions.

    ``assumption`` holds the assumption number when one applies:

    1. the behaviour chain is irreducible and aperiodic and covers the target policy
    2. features have full column rank and A is nonsingular
    3. step sizes are c_alpha / (t+1)^nu with nu in (2/3, 1]
    4. the gap is nondecreasing, bounded by c_tau alpha_t^-tau and chi^f(t) is summable
    """

    def __init__(self, message: str, assumption: int | None = None) -> None:
        if assumption is not None:
            message = f"Assumption {assumption} violated: {message}"
        super().__init__(message)
        self.assumption = assumption


class CoverageViolation(AssumptionViolation):
    def __init__(self, message: str) -> None:
        super().__init__(message, assumption=1)


class GenerationError(TdlabError):
    """Random instance generation gave up after too many rejections."""


class WindowError(TdlabError, LookupError):
    """Access to a transition-window slot that was evicted or never pushed.

    Always indicates a driver bug, never bad user input.
    """


class TdlabIOError(TdlabError, OSError):
    """Reading or writing a file failed; the message carries the path."""
