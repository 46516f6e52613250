"""Sparse polynomials in (e0, e1, e2) truncated at a fixed total degree"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Iterator, Mapping, Union

from scipy.special import binom

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

Index = tuple[int, int, int]
Scalar = Union[int, float]

DEFAULT_DEGREE = 4
ZERO_INDEX: Index = (0, 0, 0)


def _unit(axis: int) -> Index:
    out = [0, 0, 0]
    out[axis] = 1
    return tuple(out)


@dataclass(frozen=True)
class TruncatedSeries:
    """Coefficients keyed by exponent triple; monomials above ``degree`` are dropped."""

    terms: Mapping[Index, float]
    degree: int = DEFAULT_DEGREE

    def __post_init__(self) -> None:
        kept = {k: float(v) for k, v in self.terms.items() if sum(k) <= self.degree and v != 0}
        object.__setattr__(self, "terms", MappingProxyType(kept))

    @classmethod
    def constant(cls, value: Scalar, degree: int = DEFAULT_DEGREE) -> "TruncatedSeries":
        return cls({ZERO_INDEX: value}, degree)

    @classmethod
    def variable(cls, axis: int, degree: int = DEFAULT_DEGREE) -> "TruncatedSeries":
        """The bare relative error e0, e1 or e2."""
        return cls({_unit(axis): 1.0}, degree)

    def __getitem__(self, index: Index) -> float:
        return self.terms.get(tuple(index), 0.0)

    def __iter__(self) -> Iterator[Index]:
        return iter(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def items(self):
        return self.terms.items()

    def _coerce(self, other: Union["TruncatedSeries", Scalar]) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            return other
        return TruncatedSeries.constant(other, self.degree)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return TruncatedSeries(out, min(self.degree, other.degree))

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries({k: -v for k, v in self.terms.items()}, self.degree)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return TruncatedSeries({k: v * other for k, v in self.terms.items()}, self.degree)
        degree = min(self.degree, other.degree)
        out: dict[Index, float] = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                k = (ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2])
                if sum(k) <= degree:
                    out[k] = out.get(k, 0.0) + va * vb
        return TruncatedSeries(out, degree)

    __rmul__ = __mul__

    def __pow__(self, power: int):
        if not isinstance(power, int) or power < 0:
            raise ConfigurationError("series powers must be non-negative integers", module="approximation")
        out = TruncatedSeries.constant(1.0, self.degree)
        for _ in range(power):
            out = out * self
        return out

    def constant_term(self) -> float:
        return self[ZERO_INDEX]

    def truncate(self, degree: int) -> "TruncatedSeries":
        return TruncatedSeries(self.terms, min(degree, self.degree))

    def compose(self, outer: Callable[[int], float]) -> "TruncatedSeries":
        """``sum_j outer(j) * self**j`` for a series with zero constant term."""
        if self.constant_term() != 0:
            raise ConfigurationError("composition needs a series without constant term", module="approximation")
        out = TruncatedSeries.constant(outer(0), self.degree)
        power = TruncatedSeries.constant(1.0, self.degree)
        for j in range(1, self.degree + 1):
            power = power * self
            coef = outer(j)
            if coef:
                out = out + power * coef
        return out

    def __repr__(self) -> str:
        body = ", ".join(f"{'e%d%d%d' % k}: {v:.6g}" for k, v in sorted(self.terms.items(), key=lambda kv: (sum(kv[0]), kv[0])))
        return f"TruncatedSeries({{{body}}}, degree={self.degree})"


def binomial_series(u: TruncatedSeries, exponent: float) -> TruncatedSeries:
    """``(1 + u)**exponent`` through the generalised binomial coefficients."""
    return u.compose(lambda j: float(binom(exponent, j)))


def exp_series(u: TruncatedSeries) -> TruncatedSeries:
    return u.compose(lambda j: 1.0 / math.factorial(j))
