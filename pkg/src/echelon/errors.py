"""Exception taxonomy.

Every error raised by the library derives from :class:`EchelonError` and
carries the process exit code the command-line front end uses for it, so the
mapping between library failures and exit statuses lives in one place.
"""
from __future__ import annotations

from typing import Any


class EchelonError(Exception):
    """Base class for all library errors."""

    exit_code = 1
    kind = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_json(self) -> dict:
        payload = {"error": self.kind, "message": self.message}
        for key, value in self.details.items():
            payload[key] = _jsonable(value)
        return payload


class ParseError(EchelonError):
    """Malformed series, operator or configuration literal."""

    exit_code = 2
    kind = "parse"


class PreconditionError(EchelonError, ValueError):
    """An input violates the documented precondition of an operation."""

    exit_code = 3
    kind = "precondition"


class SignatureError(PreconditionError):
    """Two series (or a series and an axis) have incompatible lattice signatures."""

    kind = "signature"


class ScaleDomainError(PreconditionError):
    """A scale parameter lies outside the open interval (0, S)."""

    kind = "scale-domain"


class DegenerateError(PreconditionError):
    """A quadratic part that must be invertible is singular."""

    kind = "degenerate"


class FrequencyDriftError(PreconditionError):
    """The frequency vector of a deformed Hamiltonian moves with t."""

    kind = "frequency-drift"


class ResonanceError(EchelonError):
    """A small divisor vanishes (to tolerance) on the requested jet."""

    exit_code = 4
    kind = "resonance"

    def __init__(self, message: str, witness=None, divisor=None, **details: Any):
        super().__init__(message, witness=witness, divisor=divisor, **details)
        self.witness = witness
        self.divisor = divisor


class ConvergenceError(EchelonError):
    """A convergence precondition (condition (E)) fails and no jet shortcut applies."""

    exit_code = 5
    kind = "convergence"

    def __init__(self, message: str, step=None, **details: Any):
        super().__init__(message, step=step, **details)
        self.step = step


class ExponentialRefusedError(ConvergenceError):
    """exp(u) cannot be evaluated: u neither raises order nor satisfies condition (E)."""

    kind = "exp-refused"


def _jsonable(value):
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return str(value)
