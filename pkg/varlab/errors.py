class VarlabError(Exception):
    """Base error. Carries a human readable ``detail`` like an HTTP error body."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigurationError(VarlabError, ValueError):
    """Invalid grid, seed, partition or experiment configuration."""

    def __init__(self, detail: str, line: int | None = None):
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail)
        self.line = line


class DomainError(VarlabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class CoverageError(VarlabError, ValueError):
    """A grid does not cover the region a computation needs."""

    def __init__(self, detail: str, bound: str, required: float, available: float):
        super().__init__(f"{detail}: {bound} bound requires {required:.6g}, grid provides {available:.6g}")
        self.bound = bound
        self.required = required
        self.available = available


class ReplicateError(VarlabError, RuntimeError):
    """A Monte Carlo replicate failed."""

    def __init__(self, replicate: int, error: str):
        super().__init__(f"replicate {replicate} failed: {error}")
        self.replicate = replicate
        self.error = error


class UsageError(VarlabError):
    """Command line misuse."""
