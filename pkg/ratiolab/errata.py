"""Registry of suspected defects in the published formulas and value list.

ERRATA.md is the human-readable copy of this table. Report footnotes and the
mode comparison resolve a (family, metric, V-index) discrepancy to an entry
through ``entries_for``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

logger = logging.getLogger(__name__)

Index = tuple[int, int, int]

# metric tags used in the affected sets
BIAS1 = "bias1"
MSE2 = "mse2"
OPTIMUM = "optimum"
MOMENTS = "moments"
FIXTURE = "fixture"
ESTIMATOR = "estimator"

_ALL_FOURTH_ORDER_TERMS: tuple[Index, ...] = (
    (2, 1, 0), (2, 0, 1), (1, 2, 0), (1, 0, 2), (0, 2, 1), (0, 1, 2), (1, 1, 1),
    (0, 3, 0), (0, 0, 3), (2, 2, 0), (2, 0, 2), (0, 2, 2), (1, 3, 0), (1, 0, 3),
    (0, 3, 1), (0, 1, 3), (1, 2, 1), (1, 1, 2), (2, 1, 1), (0, 4, 0), (0, 0, 4),
)


@dataclass(frozen=True)
class Erratum:
    id: str
    location: str
    printed: str
    rederived: str
    test: str
    affected: frozenset[tuple[str, str, Optional[Index]]] = field(default_factory=frozenset)

    def covers(self, family: str, metric: str, index: Optional[Index] = None) -> bool:
        return (family, metric, index) in self.affected or (family, metric, None) in self.affected


def _cells(family: str, metric: str, indices: Iterable[Optional[Index]]) -> set:
    return {(family, metric, idx) for idx in indices}


ERRATA: tuple[Erratum, ...] = (
    Erratum(
        id="E01",
        location="moment identities, definition of C_pqr",
        printed="C_pqr = sum (X - Xbar)^p (Y - Ybar)^q (Z - Zbar)^r",
        rederived="C_pqr = sum (y - Ybar)^p (x - Xbar)^q (z - Zbar)^r; every usage (V200 = L1 C200 / Ybar^2) is y-first",
        test="test_moments.ClosedFormMatchesEnumerationTest",
        affected=frozenset({("*", MOMENTS, None)}),
    ),
    Erratum(
        id="E02",
        location="moment identities (i)-(xvi)",
        printed="V = L * C / (mean powers) with C a sum over N units",
        rederived="V = L * (C / N) / (mean powers); the identities hold for the mean moments",
        test="test_moments.ClosedFormMatchesEnumerationTest",
        affected=frozenset({("*", MOMENTS, None)}),
    ),
    Erratum(
        id="E03",
        location="first-order bias of t1",
        printed="+ alpha2 V102",
        rederived="- alpha2 V101",
        test="test_approximation.FirstOrderBiasTest.test_t1_bias_matches_enumeration",
        affected=frozenset(_cells("t1", BIAS1, [(1, 0, 2), (1, 0, 1)])),
    ),
    Erratum(
        id="E04",
        location="first-order bias of t2",
        printed="weights written w1, w2 and a stray + alpha1 alpha2 V011 term",
        rederived="lambda1 V020 + lambda2 V002 - lambda1 V110 - lambda2 V101, no V011 term",
        test="test_approximation.FirstOrderBiasTest.test_rederived_bias_is_series_contraction",
        affected=frozenset(_cells("t2", BIAS1, [(0, 1, 1)])),
    ),
    Erratum(
        id="E05",
        location="first-order bias of t3",
        printed="-alpha lambda (w1 Xbar V110 - w2 V101)",
        rederived="-alpha lambda (w1 Xbar V110 + w2 Zbar V101)",
        test="test_approximation.FirstOrderBiasTest.test_rederived_bias_is_series_contraction",
        affected=frozenset(_cells("t3", BIAS1, [(1, 0, 1)])),
    ),
    Erratum(
        id="E06",
        location="first-order bias of t4",
        printed="no V011 term",
        rederived="+ beta1 beta2 / 4 V011 from the cross term of the exponential",
        test="test_approximation.FirstOrderBiasTest.test_rederived_bias_is_series_contraction",
        affected=frozenset(_cells("t4", BIAS1, [(0, 1, 1)])),
    ),
    Erratum(
        id="E07",
        location="first-order expansion and bias of t5",
        printed="+ alpha1 alpha2 e1 e2 and + alpha1 alpha2 V011 (alpha symbols belong to t1)",
        rederived="no e1 e2 term at second degree: k1 and k2 parts are additive",
        test="test_approximation.FirstOrderBiasTest.test_rederived_bias_is_series_contraction",
        affected=frozenset(_cells("t5", BIAS1, [(0, 1, 1)])),
    ),
    Erratum(
        id="E08",
        location="optimum weights of t2",
        printed="lambda1* = (V002 - V101 + V110 - V012) / (V020 + V002 - 2 V012)",
        rederived="lambda1* = (V002 - V101 + V110 - V011) / (V020 + V002 - 2 V011)",
        test="test_approximation.OptimalParametersTest.test_t2_published_uses_third_order_term",
        affected=frozenset(_cells("t2", OPTIMUM, [None])),
    ),
    Erratum(
        id="E09",
        location="optimum weights of t3",
        printed="w1* denominator carries alpha lambda on the Zbar^2 V002 term; lambda itself depends on w1",
        rederived="s = w1 Xbar lambda solves s (V020 + V002 - 2 V011) = (V110 - V101) / alpha + V002 - V011",
        test="test_approximation.OptimalParametersTest.test_t3_quadratic_solve_is_stationary",
        affected=frozenset(_cells("t3", OPTIMUM, [None])),
    ),
    Erratum(
        id="E10",
        location="optimum weights of t5",
        printed="numerator - delta2 V102; denominator delta1^2 eta1^2 V110",
        rederived="numerator - delta2 V101; denominator delta1^2 eta1^2 V020",
        test="test_approximation.OptimalParametersTest.test_t5_quadratic_solve_is_stationary",
        affected=frozenset(_cells("t5", OPTIMUM, [None])),
    ),
    Erratum(
        id="E11",
        location="sign of N1 in the t5 expansion",
        printed="- k2 N1 e2^2 at first order but + k2 N1 e2^2 in the fourth-degree expansion",
        rederived="2 - (1 + e2)^delta2 contributes - N1 e2^2 with N1 = delta2 (delta2 - 1) / 2",
        test="test_approximation.SeriesCoefficientTest.test_t5_rederived_binomial_coefficients",
        affected=frozenset(_cells("t5", MSE2, [(1, 0, 2), (2, 0, 2)])),
    ),
    Erratum(
        id="E12",
        location="second-order MSE of t1",
        printed="2 S1 V102; -2 alpha1^2 alpha2 V021 + 2 alpha2 (R2 + alpha1 R1) V021; "
        "-2 S1 alpha1 V012 - 2 alpha1 (S2 - alpha2 S1) V012; no V003, V031, V013 terms; "
        "(alpha1^2 alpha2^2 + 2 R1 S1) V022; 6 M1 alpha1 in the V121 term; -4 alpha1 (S1 + alpha2^2) V112",
        rederived="(2 S1 + 2 alpha2^2) V102; -(2 alpha1^2 alpha2 + 2 alpha2 R1) V021; "
        "-(2 alpha1 S1 + 2 alpha1 alpha2^2) V012; -2 alpha2 S1 V003; "
        "(4 alpha1 alpha2 R1 + 2 alpha2 R2) V031; (4 alpha1 alpha2 S1 + 2 alpha1 S2) V013; "
        "(alpha1^2 alpha2^2 + 2 R1 S1 + 2 alpha1^2 S1 + 2 alpha2^2 R1) V022; "
        "-(6 alpha2 R1 + 4 alpha1^2 alpha2) V121; -(6 alpha1 S1 + 4 alpha1 alpha2^2) V112",
        test="test_approximation.CompareModesTest.test_discrepancies_are_in_ledger",
        affected=frozenset(
            _cells(
                "t1",
                MSE2,
                [(1, 0, 2), (0, 2, 1), (0, 1, 2), (0, 0, 3), (0, 2, 2), (1, 2, 1), (1, 1, 2), (0, 3, 1), (0, 1, 3)],
            )
        ),
    ),
    Erratum(
        id="E13",
        location="t1 expansion written in terms of e's",
        printed="t1 = Ybar (1 + e0) (1 + e1)^-alpha1 (1 + e1)^-alpha2",
        rederived="t1 = Ybar (1 + e0) (1 + e1)^-alpha1 (1 + e2)^-alpha2",
        test="test_approximation.TaylorExpansionTest.test_t1_first_order_linearisation",
        affected=frozenset(_cells("t1", MSE2, [None])),
    ),
    Erratum(
        id="E14",
        location="second-order MSE of t2",
        printed="2 lambda2 (-V101 - V201 + V202): the + V102 and - V103 terms of the lambda2 block are missing",
        rederived="(2 lambda2 + 2 lambda2^2) V102 and -(2 lambda2 + 4 lambda2^2) V103",
        test="test_approximation.CompareModesTest.test_t2_discrepancies",
        affected=frozenset(_cells("t2", MSE2, [(1, 0, 2), (1, 0, 3)])),
    ),
    Erratum(
        id="E15",
        location="second-order MSE of t3",
        printed="symbols A1, A2 and theta never defined; w1^2 Xbar1 (not squared); "
        "2 V120 inside the w2 block; V002 where V004 is expected; V012 twice",
        rederived="(1 + u)^-alpha with u = theta (w1 Xbar e1 + w2 Zbar e2), theta = 1 / (w1 Xbar + w2 Zbar), "
        "expanded by the generalised binomial series",
        test="test_approximation.SecondOrderMseTest.test_t3_published_needs_constants",
        affected=frozenset(_cells("t3", MSE2, [None])),
    ),
    Erratum(
        id="E16",
        location="second-order MSE of t4",
        printed="symbol S never defined (V031, V013, V211 terms); no - beta2 V101 term; "
        "coefficients of every third- and fourth-order term differ from the series",
        rederived="(1 + e0) exp(beta1 u1 + beta2 u2) with u = -e / (2 + e), expanded to degree four",
        test="test_approximation.CompareModesTest.test_discrepancies_are_in_ledger",
        affected=frozenset(_cells("t4", MSE2, [(1, 0, 1), *_ALL_FOURTH_ORDER_TERMS])),
    ),
    Erratum(
        id="E17",
        location="second-order MSE of t5",
        printed="M2, M3, N2, N3 used but never defined; k1^2 block uses V022 and V040 - 2 V030 where the "
        "expansion gives V220 and V120; k2^2 block uses N1 V030",
        rederived="M_j and N_j are binomial coefficients of (1 - eta1 e1)^delta1 and (1 + e2)^delta2",
        test="test_approximation.SecondOrderMseTest.test_t5_published_needs_constants",
        affected=frozenset(_cells("t5", MSE2, [None])),
    ),
    Erratum(
        id="E18",
        location="value list for the head-measurement data",
        printed="V020 listed twice (0.000244833 and 0.000284171)",
        rederived="second V020 read as V002",
        test="test_fixtures.VFixtureTest.test_literal_fixture_warns_about_duplicate",
        affected=frozenset({("*", FIXTURE, (0, 2, 0)), ("*", FIXTURE, (0, 0, 2))}),
    ),
    Erratum(
        id="E19",
        location="value list for the head-measurement data",
        printed="V201= -0.0000002.77",
        rederived="V201 = -0.000000277 in the corrected fixture; no value in the literal one",
        test="test_fixtures.VFixtureTest.test_literal_fixture_reports_malformed_line",
        affected=frozenset({("*", FIXTURE, (2, 0, 1))}),
    ),
    Erratum(
        id="E20",
        location="value list for the head-measurement data",
        printed="V031=0.3893411, V013=0.380025",
        rederived="kept verbatim; four to six orders of magnitude above every neighbouring term",
        test="test_commands.RatioReportCommandTest.test_fixture_report_shows_printed_table",
        affected=frozenset({("*", FIXTURE, (0, 3, 1)), ("*", FIXTURE, (0, 1, 3))}),
    ),
    Erratum(
        id="E21",
        location="value list for the head-measurement data",
        printed="no V130 value although the second-order forms of t1, t2, t3 and t4 use it",
        rederived="cells needing V130 report the missing term",
        test="test_report.RunReportTest.test_missing_term_is_reported_per_cell",
        affected=frozenset({("*", FIXTURE, (1, 3, 0))}),
    ),
    Erratum(
        id="E22",
        location="definition of t3",
        printed="auxiliaries written x1, x2 with means X1, X2",
        rederived="x1 is x and x2 is z",
        test="test_estimators.EvaluateTest.test_t3_auxiliaries_map_to_x_and_z",
        affected=frozenset({("t3", ESTIMATOR, None)}),
    ),
)

_BY_ID = {entry.id: entry for entry in ERRATA}


def get(erratum_id: str) -> Erratum:
    return _BY_ID[erratum_id]


def entries_for(family: str, metric: str, index: Optional[Index] = None) -> list[Erratum]:
    """Ledger entries that explain a discrepancy at ``(family, metric, index)``."""
    found = [
        entry
        for entry in ERRATA
        if entry.covers(family, metric, index) or entry.covers("*", metric, index)
    ]
    logger.debug("entries_for: family=%s metric=%s index=%s hits=%s", family, metric, index, [e.id for e in found])
    return found


def ids_for(family: str, metric: str, index: Optional[Index] = None) -> list[str]:
    return [entry.id for entry in entries_for(family, metric, index)]
