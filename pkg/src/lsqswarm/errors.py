"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class LsqSwarmError(Exception):
    """Base class for all errors raised by lsqswarm."""


class DimensionError(LsqSwarmError, ValueError):
    pass


class InvalidInputError(LsqSwarmError, ValueError):
    pass


class NumericalError(LsqSwarmError, ArithmeticError):
    pass


class PartitionShapeError(LsqSwarmError, ValueError):
    pass


class InvalidSplitError(LsqSwarmError, ValueError):
    pass


class GraphShapeError(LsqSwarmError, ValueError):
    pass


class AssumptionViolated(LsqSwarmError):
    """A constituent graph of a network is not connected.

    ``which`` names the offending graph: ``"cluster"``, ``"intra:<i>"``,
    ``"row:<i>"`` or ``"col:<j>"`` (indices are zero-based).
    """

    def __init__(self, which: str, detail: str = ""):
        self.which = which
        msg = f"connectivity assumption violated by graph {which!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class VariantError(LsqSwarmError, TypeError):
    pass


class ShapeError(LsqSwarmError, ValueError):
    pass


class DivergenceError(LsqSwarmError):
    def __init__(self, h: float, t: float, norm: float):
        self.h = h
        self.t = t
        self.norm = norm
        super().__init__(
            f"state norm {norm:.3g} exceeded the divergence bound at t={t:.6g} "
            f"(step size h={h:.3g}); try a smaller h"
        )


class InsufficientDecay(LsqSwarmError):
    pass


class ParseError(LsqSwarmError):
    def __init__(self, line: int | None, reason: str, source: str | None = None):
        self.line = line
        self.reason = reason
        self.source = source
        where = source or "<input>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {reason}")


class ValidationError(LsqSwarmError):
    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"invalid {field}: {reason}")
