"""Errors raised by the lab.

Every error knows the module it came from and the process exit code the
command line maps it to (2 input format, 3 numerical, 4 configuration).
"""

from __future__ import annotations

from typing import Any, Optional, Sequence


class RatioLabError(Exception):
    exit_code: int = 1

    def __init__(self, message: str, *, module: str = "ratiolab") -> None:
        super().__init__(message)
        self.message = message
        self.module = module

    def as_record(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "module": self.module,
            "message": self.message,
            "exit_code": self.exit_code,
        }


class InputFormatError(RatioLabError):
    exit_code = 2


class PopulationFormatError(InputFormatError):
    def __init__(self, message: str, *, row: Optional[int] = None, column: Optional[str] = None) -> None:
        super().__init__(message, module="cli")
        self.row = row
        self.column = column

    def as_record(self) -> dict[str, Any]:
        rec = super().as_record()
        if self.row is not None:
            rec["row"] = self.row
        if self.column is not None:
            rec["column"] = self.column
        return rec


class FixtureFormatError(InputFormatError):
    def __init__(self, message: str, *, line: Optional[str] = None, lineno: Optional[int] = None) -> None:
        super().__init__(message, module="cli")
        self.line = line
        self.lineno = lineno

    def as_record(self) -> dict[str, Any]:
        rec = super().as_record()
        if self.lineno is not None:
            rec["lineno"] = self.lineno
            rec["line"] = self.line
        return rec


class NumericalError(RatioLabError):
    exit_code = 3


class ZeroMeanError(NumericalError):
    pass


class SingularSystemError(NumericalError):
    pass


class MissingVTermError(NumericalError, KeyError):
    def __init__(self, indices: Sequence[tuple[int, int, int]], *, module: str = "approximation") -> None:
        self.indices = tuple(sorted(indices))
        names = ", ".join("V%d%d%d" % idx for idx in self.indices)
        super().__init__(f"missing V-table entries: {names}", module=module)

    def __str__(self) -> str:
        return self.message


class EvaluationError(NumericalError):
    def __init__(self, message: str, *, subset: Optional[Sequence[int]] = None, module: str = "estimators") -> None:
        super().__init__(message, module=module)
        self.subset = tuple(subset) if subset is not None else None

    def as_record(self) -> dict[str, Any]:
        rec = super().as_record()
        if self.subset is not None:
            rec["subset"] = list(self.subset)
        return rec


class ConfigurationError(RatioLabError, ValueError):
    exit_code = 4


class InvalidSpecError(ConfigurationError):
    def __init__(self, violations: Sequence[str]) -> None:
        self.violations = tuple(violations)
        super().__init__("invalid estimator spec: " + "; ".join(self.violations), module="estimators")


class MissingPublishedConstantError(ConfigurationError):
    def __init__(self, symbols: Sequence[str], where: str) -> None:
        self.symbols = tuple(symbols)
        super().__init__(
            f"{where} uses symbol(s) never defined in print: {', '.join(self.symbols)}; supply published.<symbol> values",
            module="approximation",
        )


class BudgetExceededError(ConfigurationError):
    def __init__(self, subsets: int, budget: int) -> None:
        self.subsets = subsets
        self.budget = budget
        super().__init__(f"{subsets} subsets exceed the enumeration budget {budget}", module="simulation")
