"""Exception hierarchy.

Every error carries a ``kind`` that the command line maps to an exit code:
``"config"`` (2), ``"violation"`` (1) and ``"nonconvergence"`` (3).
"""

from __future__ import annotations


class QLMError(Exception):
    kind = "config"

    def __init__(self, message: str, *, stage: str | None = None, **details):
        super().__init__(message)
        self.stage = stage
        self.details = details


class ConfigError(QLMError):
    """Invalid input, grid or scenario."""


class GridError(ConfigError):
    pass


class DataRejected(ConfigError):
    """Initial data outside the hypotheses of the construction."""


class EmbeddingError(DataRejected):
    """A 2-metric that cannot be realized as a convex surface of revolution."""


class InequalityViolation(QLMError):
    """A theorem-backed margin came out negative beyond the allowed slack."""

    kind = "violation"


class NonconvergenceError(QLMError):
    kind = "nonconvergence"


class SingularSystemError(NonconvergenceError):
    pass


class NewtonFailure(NonconvergenceError):
    pass


class JangBreakdown(NonconvergenceError):
    pass


class FlowBreakdown(NonconvergenceError):
    def __init__(self, message: str, *, last_r: float, **kw):
        super().__init__(message, last_r=last_r, **kw)
        self.last_r = last_r


EXIT_CODES = {"violation": 1, "config": 2, "nonconvergence": 3}


def exit_code(exc: BaseException) -> int:
    return EXIT_CODES.get(getattr(exc, "kind", None), 2)
