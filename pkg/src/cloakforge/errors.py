"""Exception types shared across the package."""

from __future__ import annotations


class GeometryError(ValueError):
    """Raised for empty, degenerate, or non-watertight boundary input."""


class SingularSystemError(RuntimeError):
    """Raised when a factorization meets an (numerically) singular pivot."""


class ConfigError(ValueError):
    """Raised for malformed run configuration text or invalid values."""


class OptimizationAborted(RuntimeError):
    """Raised when the optimization loop cannot continue.

    Carries the failing step index and, when available, the directory the
    last resumable state was dumped to.
    """

    def __init__(self, step: int, reason: str, dump_dir: str | None = None):
        self.step = step
        self.reason = reason
        self.dump_dir = dump_dir
        msg = f"optimization aborted at step {step}: {reason}"
        if dump_dir is not None:
            msg += f" (state dumped to {dump_dir})"
        super().__init__(msg)
