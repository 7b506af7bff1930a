"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(ValueError):
    """A run configuration failed validation.

    ``diagnostics`` holds one human-readable line per problem, each
    prefixed with the line number in the source document when known.
    """

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


class PicardDivergence(RuntimeError):
    """Picard iteration did not reach tolerance within the iteration budget."""

    def __init__(self, report, message=None):
        self.report = report
        if message is None:
            last = report.deltas[-1] if report.deltas else float("nan")
            message = (
                f"Picard iteration not converged after {report.iterations} "
                f"iterations (last delta {last:.3e}, tol {report.tol:.1e})"
            )
        super().__init__(message)
