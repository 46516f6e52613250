"""Taylor bias/MSE approximations, optimal parameters and the regression benchmark.

Every formula is first built as a coefficient map ``{(p, q, r): coefficient}``,
a linear functional over the V table, and then contracted with a ``VTable``.
Re-derived maps come from the truncated expansion of ``t / Ybar - 1``;
as-published maps are literal transcriptions of the printed expressions,
including their defects.

``optimize_t3_alpha`` and ``grid_search_t1`` back the ``optimal-search``
parameter policy of the report.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import binom

from django.db import models

from . import app_settings, errata
from .estimators import T1, T2, T3, T4, T5, EstimatorSpec, Family, SPEC_TYPES, describe, validate_spec
from .exceptions import (
    ConfigurationError,
    InvalidSpecError,
    MissingPublishedConstantError,
    MissingVTermError,
    NumericalError,
    SingularSystemError,
)
from .moments import Index, Means, VTable, index_order
from .series import TruncatedSeries, binomial_series, exp_series

logger = logging.getLogger(__name__)

CoefficientMap = dict[Index, float]

PUBLISHED_SYMBOLS = frozenset({"A1", "A2", "theta", "S", "M2", "M3", "N2", "N3", "alpha1", "alpha2"})

# relative size below which a coefficient or a determinant counts as zero
COEFFICIENT_RTOL = 1e-14
SINGULAR_RTOL = 1e-12

T3_ALPHA_BOUNDS = (-4.0, 4.0)
T3_ALPHA_TOL = 1e-8


class FormulaMode(models.TextChoices):
    AS_PUBLISHED = "as-published", "As published"
    RE_DERIVED = "re-derived", "Re-derived"


class OptimizationMethod(models.TextChoices):
    PUBLISHED_FORMULA = "published-formula", "Published formula"
    QUADRATIC_SOLVE = "quadratic-solve", "Quadratic solve"


def _idx(code: str) -> Index:
    return (int(code[0]), int(code[1]), int(code[2]))


def _terms(*pairs: tuple[str, float]) -> CoefficientMap:
    """Accumulate ``("pqr", coefficient)`` pairs; repeated indices add up."""
    out: CoefficientMap = {}
    for code, coef in pairs:
        key = _idx(code)
        out[key] = out.get(key, 0.0) + float(coef)
    return out


# Published constants and series coefficients


@dataclass(frozen=True)
class PublishedConstants:
    """Caller-supplied values for symbols the printed formulas never define."""

    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = sorted(set(self.values) - PUBLISHED_SYMBOLS)
        if unknown:
            raise ConfigurationError(f"unknown published constant(s): {', '.join(unknown)}", module="approximation")
        object.__setattr__(self, "values", MappingProxyType({k: float(v) for k, v in self.values.items()}))

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.values

    def get(self, symbol: str) -> Optional[float]:
        return self.values.get(symbol)


@dataclass(frozen=True)
class SeriesCoefficients:
    family: str
    mode: str
    values: Mapping[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def require(self, where: str, *names: str) -> tuple[float, ...]:
        missing = [name for name in names if name not in self.values]
        if missing:
            raise MissingPublishedConstantError(missing, where)
        return tuple(self.values[name] for name in names)


def _rising(a: float, j: int) -> float:
    # a (a + 1) ... (a + j - 1) / j!, so R1 = _rising(alpha1, 2) = alpha1 (alpha1 + 1) / 2
    return float(binom(a + j - 1, j))


def _univariate_exp_ratio(beta: float, degree: int = 4) -> list[float]:
    e = TruncatedSeries.variable(1, degree)
    half = e * 0.5
    series = exp_series(-half * binomial_series(half, -1.0) * beta)
    return [series[(0, j, 0)] for j in range(1, degree + 1)]


def series_coefficients(
    spec: EstimatorSpec,
    mode: str = FormulaMode.RE_DERIVED,
    published: Optional[PublishedConstants] = None,
    means: Optional[Means] = None,
) -> SeriesCoefficients:
    mode = FormulaMode(mode)
    published = published or PublishedConstants()
    values: dict[str, float] = {}

    def take(*symbols: str) -> None:
        for symbol in symbols:
            if symbol in published:
                values[symbol] = published.get(symbol)

    match spec:
        case T1():
            for j in (1, 2, 3):
                values[f"R{j}"] = _rising(spec.alpha1, j + 1)
                values[f"S{j}"] = _rising(spec.alpha2, j + 1)
        case T2():
            if mode == FormulaMode.AS_PUBLISHED:
                take("alpha1", "alpha2")
        case T3():
            if means is not None and spec.w1 * means.xbar + spec.w2 * means.zbar != 0:
                values["lambda"] = 1.0 / (spec.w1 * means.xbar + spec.w2 * means.zbar)
            if mode == FormulaMode.RE_DERIVED:
                values["A1"] = _rising(spec.alpha, 2)
                values["A2"] = _rising(spec.alpha, 3)
                if "lambda" in values:
                    values["theta"] = values["lambda"]
            else:
                take("A1", "A2", "theta")
        case T4():
            b1, b2 = spec.beta1, spec.beta2
            values.update(
                M=b1 + b1**2 / 2,
                N=b2 + b2**2 / 2,
                O=b1**2 + b1**3 / 6,
                P=b2**2 + b2**3 / 6,
                Q=b1 * b2 + b1**2 * b2 / 2,
                R=b1 * b2 + b1 * b2**2 / 2,
            )
            if mode == FormulaMode.RE_DERIVED:
                for j, coef in enumerate(_univariate_exp_ratio(b1), start=1):
                    values[f"x{j}"] = coef
                for j, coef in enumerate(_univariate_exp_ratio(b2), start=1):
                    values[f"z{j}"] = coef
            else:
                take("S")
        case T5():
            eta1 = spec.eta1
            values.update(
                eta1=eta1,
                M1=spec.delta1 * (spec.delta1 - 1) / 2 * eta1**2,
                N1=spec.delta2 * (spec.delta2 - 1) / 2,
            )
            if mode == FormulaMode.RE_DERIVED:
                # (1 - eta1 e1)^d1 = 1 - d1 eta1 e1 + M1 e1^2 - M2 e1^3 + M3 e1^4
                # 2 - (1 + e2)^d2 = 1 - d2 e2 - N1 e2^2 - N2 e2^3 - N3 e2^4
                values.update(
                    M2=float(binom(spec.delta1, 3)) * eta1**3,
                    M3=float(binom(spec.delta1, 4)) * eta1**4,
                    N2=float(binom(spec.delta2, 3)),
                    N3=float(binom(spec.delta2, 4)),
                )
            else:
                take("M2", "M3", "N2", "N3", "alpha1", "alpha2")
    return SeriesCoefficients(family=spec.family.value, mode=mode, values=MappingProxyType(values))


# Series expansion


def _require_valid(spec: EstimatorSpec) -> None:
    violations = validate_spec(spec)
    if violations:
        raise InvalidSpecError(violations)


def taylor_expand_estimator(spec: EstimatorSpec, order: int = 4, means: Optional[Means] = None) -> TruncatedSeries:
    """Expansion of ``t / Ybar - 1`` in (e0, e1, e2) up to total degree ``order``.

    t3 mixes the two auxiliary means, so its expansion needs ``means``.
    """
    if order not in (1, 2, 3, 4):
        raise ConfigurationError(f"expansion order must be 1 to 4 (got {order})", module="approximation")
    _require_valid(spec)
    e0, e1, e2 = (TruncatedSeries.variable(axis, order) for axis in range(3))
    lead = e0 + 1.0

    match spec:
        case T1():
            ratio = binomial_series(e1, -spec.alpha1) * binomial_series(e2, -spec.alpha2)
        case T2():
            ratio = binomial_series(e1, -1.0) * spec.lambda1 + binomial_series(e2, -1.0) * spec.lambda2
        case T3():
            if means is None:
                raise ConfigurationError("t3 expansion needs the auxiliary means", module="approximation")
            total = spec.w1 * means.xbar + spec.w2 * means.zbar
            if total == 0:
                raise NumericalError("w1 * Xbar + w2 * Zbar is zero", module="approximation")
            u = (e1 * (spec.w1 * means.xbar) + e2 * (spec.w2 * means.zbar)) * (1.0 / total)
            ratio = binomial_series(u, -spec.alpha)
        case T4():
            h1, h2 = e1 * 0.5, e2 * 0.5
            u1 = -h1 * binomial_series(h1, -1.0)
            u2 = -h2 * binomial_series(h2, -1.0)
            ratio = exp_series(u1 * spec.beta1 + u2 * spec.beta2)
        case T5():
            ratio = binomial_series(e1 * -spec.eta1, spec.delta1) * spec.k1 + (2.0 - binomial_series(e2, spec.delta2)) * spec.k2
        case _:
            raise ConfigurationError(f"not an estimator spec: {spec!r}", module="approximation")

    expansion = lead * ratio - 1.0
    logger.debug("taylor_expand_estimator: %s order=%s terms=%s", describe(spec), order, len(expansion))
    return expansion


def rederived_map(spec: EstimatorSpec, metric: str, means: Optional[Means] = None) -> CoefficientMap:
    match metric:
        case errata.BIAS1:
            series = taylor_expand_estimator(spec, 2, means)
        case "mse1":
            linear = taylor_expand_estimator(spec, 1, means)
            series = TruncatedSeries(linear.terms, 2) ** 2
        case errata.MSE2:
            series = taylor_expand_estimator(spec, 4, means) ** 2
        case _:
            raise ConfigurationError(f"unknown metric {metric!r}", module="approximation")
    # E[e0] = E[e1] = E[e2] = 0 under SRSWOR
    return {k: v for k, v in series.items() if sum(k) >= 2}


# Printed forms


def _published_bias1(spec: EstimatorSpec, sc: SeriesCoefficients, means: Optional[Means]) -> CoefficientMap:
    where = f"first-order bias of {spec.family.value}"
    match spec:
        case T1():
            a1, a2 = spec.alpha1, spec.alpha2
            return _terms(("110", -a1), ("102", a2), ("020", sc["R1"]), ("002", sc["S1"]), ("011", a1 * a2))
        case T2():
            alpha1, alpha2 = sc.require(where, "alpha1", "alpha2")
            l1, l2 = spec.lambda1, spec.lambda2
            return _terms(("110", -l1), ("101", -l2), ("020", l1), ("002", l2), ("011", alpha1 * alpha2))
        case T3():
            X, Z = _require_means(means, where)
            (lam,) = sc.require(where, "lambda")
            a, w1, w2 = spec.alpha, spec.w1, spec.w2
            quad = lam**2 * a * (a + 1) / 2
            return _terms(
                ("110", -a * lam * w1 * X),
                ("101", a * lam * w2),
                ("020", quad * w1**2 * X**2),
                ("002", quad * w2**2 * Z**2),
                ("011", quad * 2 * w1 * w2 * X * Z),
            )
        case T4():
            b1, b2 = spec.beta1, spec.beta2
            return _terms(
                ("110", -b1 / 2), ("101", -b2 / 2), ("020", b1 / 4 + b1**2 / 8), ("002", b2 / 4 + b2**2 / 8)
            )
        case T5():
            alpha1, alpha2 = sc.require(where, "alpha1", "alpha2")
            eta1, d1, d2 = sc["eta1"], spec.delta1, spec.delta2
            return _terms(
                ("110", -spec.k1 * eta1 * d1),
                ("101", -spec.k2 * d2),
                ("020", spec.k1 * sc["M1"]),
                ("002", -spec.k2 * sc["N1"]),
                ("011", alpha1 * alpha2),
            )
    raise ConfigurationError(f"not an estimator spec: {spec!r}", module="approximation")


def _quadratic_form(c1: float, c2: float, cross: float) -> CoefficientMap:
    # E[(e0 - c1 e1 - c2 e2)^2] with an explicit e1 e2 coefficient
    return _terms(("200", 1), ("020", c1**2), ("002", c2**2), ("110", -2 * c1), ("101", -2 * c2), ("011", cross))


def _published_mse1(spec: EstimatorSpec, sc: SeriesCoefficients, means: Optional[Means]) -> CoefficientMap:
    match spec:
        case T1():
            return _quadratic_form(spec.alpha1, spec.alpha2, 2 * spec.alpha1 * spec.alpha2)
        case T2():
            return _quadratic_form(spec.lambda1, spec.lambda2, 2 * spec.lambda1 * spec.lambda2)
        case T3():
            X, Z = _require_means(means, f"first-order MSE of {spec.family.value}")
            (lam,) = sc.require("first-order MSE of t3", "lambda")
            c1, c2 = spec.alpha * lam * spec.w1 * X, spec.alpha * lam * spec.w2 * Z
            return _quadratic_form(c1, c2, 2 * c1 * c2)
        case T4():
            return _quadratic_form(spec.beta1 / 2, spec.beta2 / 2, spec.beta1 * spec.beta2 / 2)
        case T5():
            c1, c2 = spec.k1 * spec.delta1 * sc["eta1"], spec.k2 * spec.delta2
            return _quadratic_form(c1, c2, 2 * c1 * c2)
    raise ConfigurationError(f"not an estimator spec: {spec!r}", module="approximation")


def _published_mse2_t1(spec: T1, sc: SeriesCoefficients) -> CoefficientMap:
    a1, a2 = spec.alpha1, spec.alpha2
    R1, R2, S1, S2 = sc["R1"], sc["R2"], sc["S1"], sc["S2"]
    # the printed "6 M1 alpha1" in the V121 term is read as R1
    return _terms(
        ("200", 1), ("020", a1**2), ("002", a2**2), ("110", -2 * a1), ("101", -2 * a2), ("011", 2 * a1 * a2),
        ("210", -2 * a1), ("201", -2 * a2), ("120", 2 * R1 + 2 * a1**2), ("102", 2 * S1),
        ("021", -2 * a1**2 * a2), ("012", -2 * S1 * a1), ("030", -2 * R1 * a1), ("111", 6 * a1 * a2),
        ("220", a1**2 + 2 * R1), ("202", a2**2 + 2 * S1), ("022", a1**2 * a2**2 + 2 * R1 * S1),
        ("121", -(4 * a1**2 * a2 + 6 * R1 * a1)), ("112", -4 * a1 * (S1 + a2**2)), ("211", 4 * a1 * a2),
        ("130", -2 * (R2 + 2 * a1 * R1)), ("103", -2 * (S2 + 2 * a2 * S1)),
        ("012", -2 * a1 * (S2 - a2 * S1)), ("021", 2 * a2 * (R2 + a1 * R1)),
        ("040", R1**2 + 2 * a1 * R2), ("004", S1**2 + 2 * a2 * S2),
    )


def _published_mse2_t2(spec: T2) -> CoefficientMap:
    l1, l2 = spec.lambda1, spec.lambda2
    ll = 2 * l1 * l2
    return _terms(
        ("200", 1),
        *((code, l1**2 * c) for code, c in (("020", 1), ("220", 1), ("040", 3), ("120", 2), ("030", -2), ("130", -4))),
        *((code, l2**2 * c) for code, c in (("002", 1), ("202", 1), ("004", 3), ("102", 2), ("003", -2), ("103", -4))),
        *((code, 2 * l1 * c) for code, c in (("110", -1), ("210", -1), ("120", 1), ("220", 1), ("130", -1))),
        *((code, 2 * l2 * c) for code, c in (("101", -1), ("201", -1), ("202", 1))),
        *(
            (code, ll * c)
            for code, c in (
                ("011", 1), ("111", 2), ("012", -1), ("112", -2), ("013", 1),
                ("211", 1), ("021", -1), ("121", -2), ("022", 1), ("031", 1),
            )
        ),
    )


def _published_mse2_t3(spec: T3, sc: SeriesCoefficients, means: Optional[Means]) -> CoefficientMap:
    where = "second-order MSE of t3"
    A1, A2, th = sc.require(where, "A1", "A2", "theta")
    X, Z = _require_means(means, where)
    a, w1, w2 = spec.alpha, spec.w1, spec.w2
    sq = a**2 * th**2
    quart = A1**2 * th**4 + 4 * A2 * a * th**4
    quart4 = A1**4 * th**4 + 2 * A2 * a * th**4
    quart6 = A1**2 * th**4 + 2 * A2 * a * th**4
    # printed weights: w1^2 Xbar1 and w2^2 Xbar2, not squared means
    return _terms(
        ("200", 1),
        ("020", w1**2 * X * sq), ("220", w1**2 * X * (sq + 2 * A1 * th**2)), ("120", w1**2 * X * (2 * sq + 2 * A1 * th**2)),
        ("002", w2**2 * Z * sq), ("202", w2**2 * Z * (sq + 2 * A1 * th**2)), ("120", w2**2 * Z * (2 * sq + 2 * A1 * th**2)),
        ("211", 2 * w1 * w2 * X * Z * (sq + 2 * A1 * th**2)), ("111", 2 * w1 * w2 * X * Z * (2 * sq + 2 * A1 * th**2)),
        ("031", 2 * w1**3 * w2 * X**3 * Z * quart), ("013", 2 * w1 * w2**3 * X * Z**3 * quart),
        ("110", -2 * a * th * w1 * X), ("210", -2 * a * th * w1 * X),
        ("101", -2 * a * th * w2 * Z), ("201", -2 * a * th * w2 * Z),
        ("121", 3 * w1**2 * w2 * X**2 * Z * (-2 * A2 * th**3 - 4 * A1 * a * th**3)),
        ("012", 3 * w1**2 * w2 * X**2 * Z * (-2 * A1 * a * th**3)),
        ("112", 3 * w1 * X * w2**2 * Z**2 * (-2 * A2 * th**3 - 4 * A1 * a * th**3)),
        ("012", 3 * w1 * X * w2**2 * Z**2 * (-2 * A1 * a * th**3)),
        ("040", w1**4 * X**4 * quart4), ("002", w2**4 * Z**4 * quart4),
        ("130", w1**3 * X**3 * (-2 * A2 * th**3 - 4 * A1 * a * th**3)), ("030", w1**3 * X**3 * (-2 * A1 * a * th**3)),
        ("103", w2**3 * Z**3 * (-2 * A2 * th**3 - 4 * A1 * a * th**3)), ("003", w2**3 * Z**3 * (-2 * A1 * a * th**3)),
        ("022", 6 * w1**2 * X**2 * w2**2 * Z**2 * quart6),
    )


def _published_mse2_t4(spec: T4, sc: SeriesCoefficients) -> CoefficientMap:
    (S,) = sc.require("second-order MSE of t4", "S")
    b1, b2 = spec.beta1, spec.beta2
    M, N, O, P, Q, R = (sc[k] for k in "MNOPQR")
    return _terms(
        ("200", 1), ("020", b1**2 / 4), ("002", b2**2 / 4), ("110", -b1),
        ("210", -b1 * (M + b1**2 / 4)), ("102", (N + b2**2 / 4) / 2),
        ("021", -(M + b1**2 * b2)), ("012", -(N + b2**2 * b1)),
        ("111", 1.5 * b1 * b2), ("011", 0.5 * b1 * b2), ("030", -0.75 * b1 * M), ("003", -0.5 * b2 * N),
        ("220", (M + b1**2 / 4) / 2), ("202", (N + b2**2 / 4) / 2),
        ("022", (b1**2 * b2**2 / 2 + b1 + b2 * Q + M * N) / 8),
        ("130", -(O + 2 * b1 * M) / 4), ("103", -(P + 2 * b2 * N) / 4),
        ("031", (b1 * Q + O + S * M) / 8), ("013", (b2 * R + b1 * P + S * N) / 8),
        ("121", -(Q + 2 * b1**2 * b2 + b2 * M) / 4), ("112", -(2 * b2**2 * b1 + 2 * b1 * N + R) / 4),
        ("040", -(2 * b1 * O + M**2) / 16), ("004", (2 * b2 * P + N**2) / 16),
        ("211", (b1**2 * b2 + S) / 2),
    )


def _published_mse2_t5(spec: T5, sc: SeriesCoefficients) -> CoefficientMap:
    M2, N2 = sc.require("second-order MSE of t5", "M2", "N2")
    k1, k2, d1, d2 = spec.k1, spec.k2, spec.delta1, spec.delta2
    eta1, M1, N1 = sc["eta1"], sc["M1"], sc["N1"]
    de = d1 * eta1
    return _terms(
        ("200", 1),
        ("020", k1**2 * de**2), ("022", k1**2 * de**2), ("120", 2 * k1**2 * de**2),
        ("040", k1**2 * (2 * de * M1 + M1**2)), ("030", -4 * k1**2 * de * M1),
        ("002", k2**2 * d2**2), ("202", k2**2 * d2**2), ("102", 2 * k2**2 * d2**2),
        ("103", 2 * k2**2 * d2 * N1), ("030", 2 * k2**2 * d2 * N1), ("004", k2**2 * (2 * d2 * N2 + N1**2)),
        ("110", -2 * k1 * de), ("210", -2 * k1 * de), ("120", 2 * k1 * M1), ("220", 2 * k1 * M1), ("130", -2 * k1 * M2),
        ("101", -2 * k2 * d2), ("201", -2 * k2 * d2), ("102", -2 * k2 * N1), ("202", -2 * k2 * N1), ("103", -2 * k2 * N2),
        ("011", 2 * k1 * k2 * de * d2), ("111", 4 * k1 * k2 * de * d2), ("211", 2 * k1 * k2 * de * d2),
        ("012", 2 * k1 * k2 * de * N1), ("013", 2 * k1 * k2 * de * N2),
    )


def published_map(
    spec: EstimatorSpec,
    metric: str,
    means: Optional[Means] = None,
    published: Optional[PublishedConstants] = None,
) -> CoefficientMap:
    _require_valid(spec)
    sc = series_coefficients(spec, FormulaMode.AS_PUBLISHED, published, means)
    match metric:
        case errata.BIAS1:
            return _published_bias1(spec, sc, means)
        case "mse1":
            return _published_mse1(spec, sc, means)
        case errata.MSE2:
            match spec:
                case T1():
                    return _published_mse2_t1(spec, sc)
                case T2():
                    return _published_mse2_t2(spec)
                case T3():
                    return _published_mse2_t3(spec, sc, means)
                case T4():
                    return _published_mse2_t4(spec, sc)
                case T5():
                    return _published_mse2_t5(spec, sc)
    raise ConfigurationError(f"unknown metric {metric!r}", module="approximation")


def coefficient_map(
    spec: EstimatorSpec,
    metric: str,
    mode: str = FormulaMode.RE_DERIVED,
    means: Optional[Means] = None,
    published: Optional[PublishedConstants] = None,
) -> CoefficientMap:
    if FormulaMode(mode) == FormulaMode.AS_PUBLISHED:
        return published_map(spec, metric, means, published)
    return rederived_map(spec, metric, means)


def significant_terms(coefficients: Mapping[Index, float]) -> CoefficientMap:
    scale = max((abs(c) for c in coefficients.values()), default=0.0)
    cutoff = COEFFICIENT_RTOL * scale
    return {k: c for k, c in coefficients.items() if abs(c) > cutoff}


def contract(coefficients: Mapping[Index, float], v: VTable) -> float:
    """``sum coefficient * V[index]``; only indices with a nonzero coefficient are needed."""
    terms = significant_terms(coefficients)
    missing = [idx for idx in terms if idx not in v]
    if missing:
        raise MissingVTermError(missing)
    return math.fsum(coef * v[idx] for idx, coef in terms.items())


def _require_means(means: Optional[Means], where: str) -> tuple[float, float]:
    if means is None:
        raise ConfigurationError(f"{where} needs the population means", module="approximation")
    return means.xbar, means.zbar


def _resolve_means(v: VTable, means: Optional[Means]) -> Means:
    return means if means is not None else v.require_means()


# Bias and MSE


@dataclass(frozen=True)
class ApproxResult:
    estimator: str
    order: int
    mode: str
    mse: float
    bias: Optional[float] = None
    inputs: Mapping[str, int] = field(default_factory=dict)


def first_order_bias(
    spec: EstimatorSpec,
    v: VTable,
    means: Optional[Means] = None,
    mode: str = FormulaMode.RE_DERIVED,
    published: Optional[PublishedConstants] = None,
) -> float:
    means = _resolve_means(v, means)
    bracket = contract(coefficient_map(spec, errata.BIAS1, mode, means, published), v)
    return means.ybar * bracket


def first_order_mse(
    spec: EstimatorSpec,
    v: VTable,
    means: Optional[Means] = None,
    mode: str = FormulaMode.RE_DERIVED,
    published: Optional[PublishedConstants] = None,
) -> float:
    means = _resolve_means(v, means)
    return means.ybar**2 * contract(coefficient_map(spec, "mse1", mode, means, published), v)


def second_order_mse(
    spec: EstimatorSpec,
    v: VTable,
    mode: Optional[str] = None,
    published: Optional[PublishedConstants] = None,
    means: Optional[Means] = None,
) -> float:
    mode = FormulaMode(mode or app_settings.RATIOLAB_FORMULA_MODE)
    means = _resolve_means(v, means)
    value = means.ybar**2 * contract(coefficient_map(spec, errata.MSE2, mode, means, published), v)
    if value < 0:
        logger.warning("second_order_mse: %s mode=%s is negative (%s)", describe(spec), mode, value)
    return value


def approximate(
    spec: EstimatorSpec,
    v: VTable,
    order: int,
    mode: Optional[str] = None,
    published: Optional[PublishedConstants] = None,
    means: Optional[Means] = None,
) -> ApproxResult:
    """
    Bias and MSE of an estimator to the given order, with the provenance of
    every V term the formula read

    :param spec: estimator and its parameters
    :type spec: EstimatorSpec
    :param v: V table
    :type v: VTable
    :param order: 1 for first-order bias and MSE, 2 for second-order MSE
    :type order: int
    :param mode: a ``FormulaMode`` value; defaults to ``RATIOLAB_FORMULA_MODE``
    :type mode: str
    :param published: constants the printed forms use but never define
    :type published: PublishedConstants
    :param means: population means; taken from ``v`` when omitted
    :type means: Means
    :return: value, order, mode and a provenance count of the inputs
    :rtype: ApproxResult
    :raises MissingVTermError: when ``v`` lacks a term the formula needs
    :raises MissingPublishedConstantError: when an as-published form needs an undefined symbol
    """
    mode = FormulaMode(mode or app_settings.RATIOLAB_FORMULA_MODE)
    means = _resolve_means(v, means)
    if order == 1:
        mse = first_order_mse(spec, v, means, mode, published)
        bias = first_order_bias(spec, v, means, mode, published)
        used = set(coefficient_map(spec, "mse1", mode, means, published)) | set(
            coefficient_map(spec, errata.BIAS1, mode, means, published)
        )
    elif order == 2:
        mse = second_order_mse(spec, v, mode, published, means)
        bias = None
        used = set(significant_terms(coefficient_map(spec, errata.MSE2, mode, means, published)))
    else:
        raise ConfigurationError(f"approximation order must be 1 or 2 (got {order})", module="approximation")
    return ApproxResult(
        estimator=describe(spec),
        order=order,
        mode=mode,
        mse=mse,
        bias=bias,
        inputs=v.provenance_summary(used),
    )


@dataclass(frozen=True)
class Discrepancy:
    index: Index
    published: float
    rederived: float
    errata: tuple[str, ...]

    @property
    def name(self) -> str:
        return "V%d%d%d" % self.index


def compare_modes(
    spec: EstimatorSpec,
    metric: str = errata.MSE2,
    means: Optional[Means] = None,
    published: Optional[PublishedConstants] = None,
    rtol: float = 1e-9,
) -> list[Discrepancy]:
    """Term-by-term differences between the printed and the re-derived map."""
    printed = published_map(spec, metric, means, published)
    derived = rederived_map(spec, metric, means)
    scale = max((abs(c) for c in (*printed.values(), *derived.values())), default=1.0)
    found = []
    for idx in sorted(set(printed) | set(derived), key=index_order):
        p, r = printed.get(idx, 0.0), derived.get(idx, 0.0)
        if abs(p - r) > rtol * max(scale, 1.0):
            found.append(Discrepancy(idx, p, r, tuple(errata.ids_for(spec.family.value, metric, idx))))
    unexplained = [d.name for d in found if not d.errata]
    if unexplained:
        logger.warning("compare_modes: %s %s has discrepancies outside the errata ledger: %s", describe(spec), metric, unexplained)
    return found


# Optimal parameters


@dataclass(frozen=True)
class Optimum:
    spec: EstimatorSpec
    method: str
    non_unique: bool = False


def _det_is_zero(det: float, scale: float) -> bool:
    return abs(det) <= SINGULAR_RTOL * max(scale, np.finfo(float).tiny)


def _solve_t1(v: VTable, allow_degenerate: bool) -> tuple[float, float, bool]:
    A = np.array([[v[(0, 2, 0)], v[(0, 1, 1)]], [v[(0, 1, 1)], v[(0, 0, 2)]]])
    b = np.array([v[(1, 1, 0)], v[(1, 0, 1)]])
    det = A[0, 0] * A[1, 1] - A[0, 1] ** 2
    if _det_is_zero(det, abs(A[0, 0] * A[1, 1]) + A[0, 1] ** 2):
        if not allow_degenerate:
            raise SingularSystemError("singular system: V020 * V002 - V011^2 is zero", module="approximation")
        solution, *_ = np.linalg.lstsq(A, b, rcond=None)
        logger.warning("optimal_parameters: degenerate t1 quadratic, minimum-norm optimum %s", solution)
        return float(solution[0]), float(solution[1]), True
    solution = np.linalg.solve(A, b)
    return float(solution[0]), float(solution[1]), False


def _solve_weight(numerator: float, denominator: float, scale: float, allow_degenerate: bool, where: str) -> tuple[float, bool]:
    """Minimiser ``s`` of a one-parameter quadratic ``denominator * s^2 - 2 numerator * s``."""
    if _det_is_zero(denominator, scale):
        if allow_degenerate and _det_is_zero(numerator, scale):
            logger.warning("optimal_parameters: flat direction for %s, using equal weights", where)
            return 0.5, True
        raise SingularSystemError(f"singular system for {where}: denominator is zero", module="approximation")
    return numerator / denominator, False


def _published_t1(v: VTable) -> tuple[float, float]:
    V200, V020, V002 = v[(2, 0, 0)], v[(0, 2, 0)], v[(0, 0, 2)]
    if min(V200, V020, V002) <= 0:
        raise SingularSystemError("correlations need positive V200, V020 and V002", module="approximation")
    rho_yx = v[(1, 1, 0)] / math.sqrt(V200 * V020)
    rho_yz = v[(1, 0, 1)] / math.sqrt(V200 * V002)
    rho_xz = v[(0, 1, 1)] / math.sqrt(V020 * V002)
    denom = 1 - rho_xz**2
    if _det_is_zero(denom, 1.0):
        raise SingularSystemError("singular system: rho_xz^2 = 1", module="approximation")
    alpha1 = (rho_yx - rho_yz * rho_xz) / denom * math.sqrt(V200 / V020)
    alpha2 = (rho_yz - rho_yx * rho_xz) / denom * math.sqrt(V200 / V002)
    return alpha1, alpha2


def _t3_weight_from_share(s: float, means: Means) -> float:
    # s = w1 Xbar / (w1 Xbar + w2 Zbar)
    denom = means.xbar * (1 - s) + s * means.zbar
    if denom == 0:
        raise SingularSystemError("t3 weight share has no finite weight", module="approximation")
    return s * means.zbar / denom


def _optimal_t3(v: VTable, means: Means, template: T3, method: str, allow_degenerate: bool) -> tuple[T3, bool]:
    a = template.alpha
    X, Z = means.xbar, means.zbar
    V020, V002, V011, V110, V101 = (v[_idx(c)] for c in ("020", "002", "011", "110", "101"))
    if method == OptimizationMethod.PUBLISHED_FORMULA:
        lam = 1.0 / (template.w1 * X + template.w2 * Z)
        num = X * V110 - Z * V101 + Z**2 * V002 - X * Z * V011
        den = X**2 * V020 + a * lam * Z**2 * V002 - 2 * X * Z * V011
        if _det_is_zero(den, X**2 * abs(V020) + Z**2 * abs(V002)):
            raise SingularSystemError("singular system for t3: published denominator is zero", module="approximation")
        w1 = num / den
        return replace(template, w1=w1, w2=1 - w1), False
    if a == 0:
        if allow_degenerate:
            return template, True
        raise SingularSystemError("t3 with alpha = 0 does not depend on the weights", module="approximation")
    share, flat = _solve_weight(
        (V110 - V101) / a + V002 - V011, V020 + V002 - 2 * V011, abs(V020) + abs(V002), allow_degenerate, "t3"
    )
    w1 = _t3_weight_from_share(share, means) if not flat else template.w1
    return replace(template, w1=w1, w2=1 - w1), flat


def optimal_parameters(
    family: Union[str, Family],
    v: VTable,
    means: Optional[Means] = None,
    method: str = OptimizationMethod.QUADRATIC_SOLVE,
    *,
    template: Optional[EstimatorSpec] = None,
    allow_degenerate: bool = False,
) -> Optimum:
    """Optimum of the first-order MSE for one family.

    Parameters the family does not optimise (t3's alpha; t5's deltas, c and
    d) come from ``template``.
    """
    family = Family(family)
    method = OptimizationMethod(method)
    template = template or SPEC_TYPES[family]()
    if template.family != family:
        raise ConfigurationError(f"template {describe(template)} is not a {family.value} spec", module="approximation")
    V = v.__getitem__
    non_unique = False

    match family:
        case Family.T1 | Family.T4:
            if method == OptimizationMethod.PUBLISHED_FORMULA and family == Family.T1:
                a1, a2 = _published_t1(v)
            elif method == OptimizationMethod.PUBLISHED_FORMULA:
                det = V((0, 0, 2)) * V((0, 2, 0)) - V((0, 1, 1)) ** 2
                if _det_is_zero(det, abs(V((0, 0, 2)) * V((0, 2, 0))) + V((0, 1, 1)) ** 2):
                    raise SingularSystemError("singular system: V002 * V020 - V011^2 is zero", module="approximation")
                a1 = (V((1, 1, 0)) * V((0, 0, 2)) - V((1, 0, 1)) * V((0, 1, 1))) / det
                a2 = (V((0, 2, 0)) * V((1, 0, 1)) - V((1, 1, 0)) * V((0, 1, 1))) / det
            else:
                a1, a2, non_unique = _solve_t1(v, allow_degenerate)
            spec = T1(alpha1=a1, alpha2=a2) if family == Family.T1 else T4(beta1=2 * a1, beta2=2 * a2)
        case Family.T2:
            V020, V002 = V((0, 2, 0)), V((0, 0, 2))
            cross = V((0, 1, 2)) if method == OptimizationMethod.PUBLISHED_FORMULA else V((0, 1, 1))
            lam, non_unique = _solve_weight(
                V002 - V((1, 0, 1)) + V((1, 1, 0)) - cross, V020 + V002 - 2 * cross, abs(V020) + abs(V002), allow_degenerate, "t2"
            )
            spec = T2(lambda1=lam, lambda2=1 - lam)
        case Family.T3:
            means = _resolve_means(v, means)
            spec, non_unique = _optimal_t3(v, means, template, method, allow_degenerate)
        case Family.T5:
            d1e, d2 = template.delta1 * template.eta1, template.delta2
            V020, V002, V011, V110 = V((0, 2, 0)), V((0, 0, 2)), V((0, 1, 1)), V((1, 1, 0))
            if method == OptimizationMethod.PUBLISHED_FORMULA:
                num = d1e * V110 + d2**2 * V002 - d2 * V((1, 0, 2)) - d1e * d2 * V011
                den = d1e**2 * V110 + d2**2 * V002 - 2 * d1e * d2 * V011
            else:
                num = d1e * V110 - d2 * V((1, 0, 1)) + d2**2 * V002 - d1e * d2 * V011
                den = d1e**2 * V020 + d2**2 * V002 - 2 * d1e * d2 * V011
            k1, non_unique = _solve_weight(num, den, d1e**2 * abs(V020) + d2**2 * abs(V002), allow_degenerate, "t5")
            spec = replace(template, k1=k1, k2=1 - k1)

    logger.debug("optimal_parameters: %s method=%s non_unique=%s", describe(spec), method, non_unique)
    return Optimum(spec=spec, method=method, non_unique=non_unique)


def optimize_t3_alpha(
    v: VTable,
    means: Optional[Means] = None,
    bounds: tuple[float, float] = T3_ALPHA_BOUNDS,
    tol: float = T3_ALPHA_TOL,
) -> Optimum:
    """Bounded line search over t3's alpha with the weights solved exactly at each alpha."""
    means = _resolve_means(v, means)

    def objective(alpha: float) -> float:
        try:
            spec = optimal_parameters(Family.T3, v, means, template=T3(alpha=alpha)).spec
            return first_order_mse(spec, v, means)
        except (SingularSystemError, NumericalError, InvalidSpecError):
            return math.inf

    result = minimize_scalar(objective, bounds=bounds, method="bounded", options={"xatol": tol})
    best = optimal_parameters(Family.T3, v, means, template=T3(alpha=float(result.x))).spec
    logger.info("optimize_t3_alpha: %s mse=%s evaluations=%s", describe(best), result.fun, result.nfev)
    return Optimum(spec=best, method=OptimizationMethod.QUADRATIC_SOLVE)


def regression_min_mse(v: VTable, means: Optional[Means] = None) -> float:
    means = _resolve_means(v, means)
    V200, V020, V002 = v[(2, 0, 0)], v[(0, 2, 0)], v[(0, 0, 2)]
    V110, V101, V011 = v[(1, 1, 0)], v[(1, 0, 1)], v[(0, 1, 1)]
    det = V020 * V002 - V011**2
    if _det_is_zero(det, abs(V020 * V002) + V011**2):
        raise SingularSystemError("singular system: V020 * V002 - V011^2 is zero", module="approximation")
    explained = (V110**2 * V002 + V101**2 * V020 - 2 * V110 * V101 * V011) / det
    return means.ybar**2 * (V200 - explained)


@dataclass(frozen=True)
class GridOptimum:
    alpha1: float
    alpha2: float
    mse: float
    step: float


def grid_search_t1(
    v: VTable,
    lo: float = -5.0,
    hi: float = 5.0,
    points: int = 201,
    means: Optional[Means] = None,
) -> GridOptimum:
    """First argmin, in row-major (alpha1, alpha2) order, of the t1 first-order MSE on a square grid."""
    grid = np.linspace(lo, hi, points)
    a1, a2 = np.meshgrid(grid, grid, indexing="ij")
    V = v.__getitem__
    bracket = (
        V((2, 0, 0)) + a1**2 * V((0, 2, 0)) + a2**2 * V((0, 0, 2))
        - 2 * a1 * V((1, 1, 0)) - 2 * a2 * V((1, 0, 1)) + 2 * a1 * a2 * V((0, 1, 1))
    )
    flat = int(np.argmin(bracket))
    i, j = divmod(flat, points)
    scale = means.ybar**2 if means is not None else (v.means.ybar**2 if v.means is not None else 1.0)
    return GridOptimum(alpha1=float(grid[i]), alpha2=float(grid[j]), mse=float(bracket[i, j]) * scale, step=float(grid[1] - grid[0]))
