"""Exception hierarchy shared by every module.

Each exception carries a stable ``code`` used by the CLI error JSON.
"""

from __future__ import annotations


class PontryaginError(Exception):
    code = "pontryagin-error"

    def to_json(self) -> dict:
        return {"error": self.code, "message": str(self)}


class DSLSyntaxError(PontryaginError, ValueError):
    """Malformed map source; ``offset`` is the 0-based character index."""

    code = "syntax-error"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset

    def to_json(self) -> dict:
        return {**super().to_json(), "offset": self.offset}


class ArityError(PontryaginError, ValueError):
    code = "arity-error"


class DomainError(PontryaginError, ArithmeticError):
    code = "domain-error"


class DegenerateFrame(PontryaginError):
    code = "degenerate-frame"


class OrientationMismatch(PontryaginError):
    code = "orientation-mismatch"


class LoopsTooClose(PontryaginError):
    code = "loops-too-close"


class WrongAmbientDimension(PontryaginError):
    code = "wrong-ambient-dimension"


class PointNotOnFiber(PontryaginError):
    code = "point-not-on-fiber"


class BudgetExhausted(PontryaginError):
    code = "budget-exhausted"


class NotRegular(PontryaginError):
    code = "not-regular"


class ContinuationFailed(PontryaginError):
    code = "continuation-failed"


class EscapedSupport(PontryaginError):
    code = "escaped-support"


class UnsupportedDimension(PontryaginError):
    code = "unsupported-dimension"


class NonIntegerLinking(PontryaginError):
    code = "non-integer-linking"


class DimensionMismatch(PontryaginError):
    code = "dimension-mismatch"


class EpsilonUnderflow(PontryaginError):
    code = "epsilon-underflow"


class OutsideBall(PontryaginError, ValueError):
    code = "outside-ball"


class PreconditionViolated(PontryaginError):
    code = "precondition-violated"
