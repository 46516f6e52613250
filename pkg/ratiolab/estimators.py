"""Point evaluation of the five estimator families on a sample"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import ClassVar, Sequence, Union

import numpy as np

from django.db import models

from .exceptions import ConfigurationError, EvaluationError, InvalidSpecError
from .population import Means, Population

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-9
DELTA_RANGE = (-1, 0, 1)


class Family(models.TextChoices):
    T1 = "t1", "t1 power ratio-cum-product"
    T2 = "t2", "t2 weighted ratio"
    T3 = "t3", "t3 multivariate ratio"
    T4 = "t4", "t4 exponential ratio-cum-product"
    T5 = "t5", "t5 two-auxiliary ratio-type"


@dataclass(frozen=True)
class T1:
    alpha1: float = 1.0
    alpha2: float = 0.0

    family: ClassVar[Family] = Family.T1


@dataclass(frozen=True)
class T2:
    lambda1: float = 0.5
    lambda2: float = 0.5

    family: ClassVar[Family] = Family.T2


@dataclass(frozen=True)
class T3:
    """Weights act on (x, z); ``alpha`` is the common exponent."""

    w1: float = 0.5
    w2: float = 0.5
    alpha: float = 1.0

    family: ClassVar[Family] = Family.T3


@dataclass(frozen=True)
class T4:
    beta1: float = 1.0
    beta2: float = 1.0

    family: ClassVar[Family] = Family.T4


@dataclass(frozen=True)
class T5:
    k1: float = 0.5
    k2: float = 0.5
    delta1: int = 1
    delta2: int = 1
    c: float = 2.0
    d: float = 1.0

    family: ClassVar[Family] = Family.T5

    @property
    def eta1(self) -> float:
        if self.c == self.d:
            raise InvalidSpecError(["c = d"])
        return self.d / (self.c - self.d)


EstimatorSpec = Union[T1, T2, T3, T4, T5]

SPEC_TYPES: dict[str, type] = {
    Family.T1: T1,
    Family.T2: T2,
    Family.T3: T3,
    Family.T4: T4,
    Family.T5: T5,
}


def make_spec(family: str, **params: float) -> EstimatorSpec:
    try:
        cls = SPEC_TYPES[Family(family.lower())]
    except ValueError:
        raise ConfigurationError(f"unknown estimator family {family!r}", module="estimators")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(params) - known)
    if unknown:
        raise ConfigurationError(f"{family}: unknown parameter(s) {', '.join(unknown)}", module="estimators")
    if cls is T5:
        for key in ("delta1", "delta2"):
            if key in params and float(params[key]).is_integer():
                params[key] = int(params[key])
    return cls(**params)


def spec_params(spec: EstimatorSpec) -> dict[str, float]:
    return asdict(spec)


def describe(spec: EstimatorSpec) -> str:
    inner = ", ".join(f"{k}={v:.6g}" for k, v in spec_params(spec).items())
    return f"{spec.family.value}({inner})"


def validate_spec(spec: EstimatorSpec) -> list[str]:
    violations: list[str] = []
    for name, value in spec_params(spec).items():
        if not math.isfinite(float(value)):
            violations.append(f"{name} is not finite")
    if violations:
        return violations

    def weight_sum(a: float, b: float) -> None:
        total = a + b
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            violations.append(f"weights sum {total:.10g} ≠ 1")

    match spec:
        case T2():
            weight_sum(spec.lambda1, spec.lambda2)
        case T3():
            weight_sum(spec.w1, spec.w2)
        case T5():
            weight_sum(spec.k1, spec.k2)
            if spec.c == spec.d:
                violations.append("c = d")
            for name in ("delta1", "delta2"):
                value = getattr(spec, name)
                if not float(value).is_integer() or int(value) not in DELTA_RANGE:
                    violations.append(f"{name} must be one of -1, 0, 1 (got {value})")
    return violations


@dataclass(frozen=True)
class SampleView:
    indices: tuple[int, ...]
    ybar: float
    xbar: float
    zbar: float

    @classmethod
    def draw(cls, pop: Population, indices: Sequence[int]) -> "SampleView":
        idx = tuple(int(i) for i in indices)
        if not idx:
            raise ConfigurationError("a sample needs at least one unit", module="estimators")
        if len(set(idx)) != len(idx):
            raise ConfigurationError(f"sample indices are not distinct: {idx}", module="estimators")
        if min(idx) < 0 or max(idx) >= pop.N:
            raise ConfigurationError(f"sample indices outside [0, {pop.N})", module="estimators")
        arr = np.asarray(idx, dtype=np.intp)
        return cls(
            indices=idx,
            ybar=float(np.mean(pop.y[arr])),
            xbar=float(np.mean(pop.x[arr])),
            zbar=float(np.mean(pop.z[arr])),
        )

    @property
    def n(self) -> int:
        return len(self.indices)

    def relative_errors(self, means: Means) -> tuple[float, float, float]:
        means.require_nonzero(module="estimators")
        return (
            (self.ybar - means.ybar) / means.ybar,
            (self.xbar - means.xbar) / means.xbar,
            (self.zbar - means.zbar) / means.zbar,
        )


def _power(base: np.ndarray, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    # fractional exponents only on strictly positive bases
    if exponent == 0:
        return np.ones_like(base), np.zeros(base.shape, dtype=bool)
    if float(exponent).is_integer():
        out = base ** float(exponent)
        return out, ~np.isfinite(out)
    bad = ~(base > 0)
    out = np.where(bad, np.nan, np.abs(base) ** exponent)
    return out, bad | ~np.isfinite(out)


def _ratio_term(weight: float, numerator: float, denominator: np.ndarray) -> np.ndarray:
    if weight == 0:
        return np.zeros_like(denominator)
    return weight * (numerator / denominator)


def evaluate_many(
    spec: EstimatorSpec,
    ybar: np.ndarray,
    xbar: np.ndarray,
    zbar: np.ndarray,
    means: Means,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimator values over arrays of sample means.

    Returns ``(values, invalid)``; ``invalid`` flags rows where the formula is
    undefined (division by zero, fractional power of a non-positive ratio).
    """
    ybar = np.asarray(ybar, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    X, Z = means.xbar, means.zbar
    bad = np.zeros(ybar.shape, dtype=bool)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        match spec:
            case T1():
                fx, bx = _power(X / xbar, spec.alpha1)
                fz, bz = _power(Z / zbar, spec.alpha2)
                values = ybar * fx * fz
                bad |= bx | bz
            case T2():
                values = ybar * (_ratio_term(spec.lambda1, X, xbar) + _ratio_term(spec.lambda2, Z, zbar))
            case T3():
                base = (spec.w1 * X + spec.w2 * Z) / (spec.w1 * xbar + spec.w2 * zbar)
                f, b = _power(base, spec.alpha)
                values = ybar * f
                bad |= b
            case T4():
                gx = spec.beta1 * (X - xbar) / (X + xbar) if spec.beta1 else np.zeros_like(xbar)
                gz = spec.beta2 * (Z - zbar) / (Z + zbar) if spec.beta2 else np.zeros_like(zbar)
                values = ybar * np.exp(gx) * np.exp(gz)
            case T5():
                if (spec.c - spec.d) * X == 0:
                    raise EvaluationError("(c - d) * X-bar is zero")
                fx, bx = _power((spec.c * X - spec.d * xbar) / ((spec.c - spec.d) * X), int(spec.delta1))
                fz, bz = _power(zbar / Z, int(spec.delta2))
                values = ybar * (spec.k1 * fx + spec.k2 * (2.0 - fz))
                bad |= bx | bz
            case _:
                raise ConfigurationError(f"not an estimator spec: {spec!r}", module="estimators")
    bad |= ~np.isfinite(values)
    return values, bad


def evaluate(spec: EstimatorSpec, sample: SampleView, pop: Population) -> float:
    violations = validate_spec(spec)
    if violations:
        raise InvalidSpecError(violations)
    values, bad = evaluate_many(spec, [sample.ybar], [sample.xbar], [sample.zbar], pop.means)
    if bad[0]:
        logger.debug("evaluate: undefined %s on subset=%s", describe(spec), sample.indices)
        raise EvaluationError(f"{describe(spec)} is undefined on this sample", subset=sample.indices)
    return float(values[0])
