"""Exception types raised by the library and mapped to exit codes by the CLI."""

from __future__ import annotations

from typing import Any, Dict


class HardEdgeError(Exception):
    """Base error carrying a human-readable detail and structured context.

    Attributes:
        detail: Message shown to the user.
        context: Extra diagnostics (offending index, acceptance rate, ...).
        exit_code: Process exit code used by the CLI.
    """

    exit_code = 1

    def __init__(self, detail: str, **context: Any) -> None:
        super().__init__(detail)
        self.detail = detail
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        return {"error": type(self).__name__, "detail": self.detail, **self.context}


class ConfigError(HardEdgeError):
    exit_code = 2


class DomainError(HardEdgeError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 3


class SeriesRegimeError(DomainError):
    """Time below t_min, where the spectral series is not evaluated."""


class TruncationError(HardEdgeError):
    exit_code = 4


class QuadratureError(HardEdgeError):
    exit_code = 4


class ZeroBracketError(HardEdgeError):
    """A Bessel zero could not be certified by a sign-change bracket."""

    exit_code = 4


class ZeroTableError(HardEdgeError):
    exit_code = 4


class NormalizationError(DomainError):
    pass


class SamplerError(HardEdgeError):
    exit_code = 5


class RejectionExhaustedError(SamplerError):
    pass
