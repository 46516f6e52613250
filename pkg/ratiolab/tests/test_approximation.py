"""
Taylor approximation and optimum tests
"""

import math

import numpy as np

# Django
from django.test import SimpleTestCase

from .. import errata
from ..approximation import (
    FormulaMode,
    OptimizationMethod,
    PublishedConstants,
    approximate,
    compare_modes,
    first_order_bias,
    first_order_mse,
    grid_search_t1,
    optimal_parameters,
    optimize_t3_alpha,
    regression_min_mse,
    second_order_mse,
    series_coefficients,
    taylor_expand_estimator,
)
from ..estimators import T1, T2, T3, T4, T5, Family, make_spec
from ..exceptions import ConfigurationError, MissingPublishedConstantError, MissingVTermError, SingularSystemError
from ..fixtures import load_population, load_v_fixture
from ..moments import VPolicy, VTable, build_v_table
from ..population import Means
from ..simulation import enumerate_exact
from .utils import (
    CORRECTED_FIXTURE,
    EXAMPLE_SPECS,
    HEADS_CSV,
    LITERAL_FIXTURE,
    random_population,
    random_quadratic_table,
    rel_close,
    zero_table,
)

# values for the symbols the printed second-order forms leave undefined
ALL_CONSTANTS = PublishedConstants(
    {"A1": 1.0, "A2": 1.0, "theta": 0.01, "S": 0.5, "M2": 0.0, "M3": 0.0, "N2": 0.0, "N3": 0.0, "alpha1": 0.3, "alpha2": 0.4}
)

SAMPLE_SPECS = (
    T1(alpha1=0.6, alpha2=0.3),
    T2(lambda1=0.3, lambda2=0.7),
    T3(w1=0.4, w2=0.6, alpha=1.5),
    T4(beta1=1.2, beta2=0.6),
    T5(k1=0.6, k2=0.4, delta1=-1, delta2=1, c=3.0, d=1.0),
)


class TaylorExpansionTest(SimpleTestCase):
    def test_t1_first_order_linearisation(self):
        series = taylor_expand_estimator(T1(alpha1=0.7, alpha2=-0.4), 1)
        self.assertEqual(set(series), {(1, 0, 0), (0, 1, 0), (0, 0, 1)})
        self.assertAlmostEqual(series[(1, 0, 0)], 1.0, places=14)
        self.assertAlmostEqual(series[(0, 1, 0)], -0.7, places=14)
        self.assertAlmostEqual(series[(0, 0, 1)], 0.4, places=14)

    def test_order_range(self):
        for order in (0, 5):
            with self.assertRaises(ConfigurationError):
                taylor_expand_estimator(T1(), order)

    def test_classical_ratio_estimator(self):
        series = taylor_expand_estimator(T1(alpha1=1.0, alpha2=0.0), 2)
        self.assertAlmostEqual(series[(0, 2, 0)], 1.0)
        self.assertAlmostEqual(series[(1, 1, 0)], -1.0)

    def test_t5_linear_in_x_when_delta1_is_one(self):
        series = taylor_expand_estimator(T5(k1=0.6, k2=0.4, delta1=1, delta2=-1), 4)
        for j in (2, 3, 4):
            self.assertEqual(series[(0, j, 0)], 0.0)
        self.assertAlmostEqual(series[(0, 1, 0)], -0.6)

    def test_t3_needs_means(self):
        with self.assertRaises(ConfigurationError):
            taylor_expand_estimator(T3(), 2)
        series = taylor_expand_estimator(T3(w1=1.0, w2=0.0, alpha=1.0), 2, Means(10.0, 8.0, 6.0))
        # w1 = 1 reduces to the classical ratio estimator on x
        self.assertAlmostEqual(series[(0, 2, 0)], 1.0)
        self.assertEqual(series[(0, 0, 2)], 0.0)

    def test_t4_leading_terms(self):
        series = taylor_expand_estimator(T4(beta1=1.2, beta2=0.6), 2)
        self.assertAlmostEqual(series[(0, 1, 0)], -0.6)
        self.assertAlmostEqual(series[(0, 2, 0)], 1.2 / 4 + 1.2**2 / 8)
        self.assertAlmostEqual(series[(0, 1, 1)], 1.2 * 0.6 / 4)


class SeriesCoefficientTest(SimpleTestCase):
    def test_t1_rising_factorials(self):
        sc = series_coefficients(T1(alpha1=2.0, alpha2=0.5))
        self.assertAlmostEqual(sc["R1"], 3.0)
        self.assertAlmostEqual(sc["R2"], 4.0)
        self.assertAlmostEqual(sc["S1"], 0.375)

    def test_t5_rederived_binomial_coefficients(self):
        spec = T5(k1=0.6, k2=0.4, delta1=-1, delta2=-1, c=3.0, d=1.0)
        sc = series_coefficients(spec, FormulaMode.RE_DERIVED)
        self.assertAlmostEqual(sc["eta1"], 0.5)
        self.assertAlmostEqual(sc["M1"], 0.25)
        self.assertAlmostEqual(sc["M2"], -0.125)
        self.assertAlmostEqual(sc["M3"], 0.0625)
        self.assertAlmostEqual(sc["N1"], 1.0)
        self.assertAlmostEqual(sc["N2"], -1.0)
        self.assertAlmostEqual(sc["N3"], 1.0)
        series = taylor_expand_estimator(spec, 4)
        # 2 - (1 + e2)^d2 contributes -N1 e2^2, (1 - eta1 e1)^d1 contributes -M2 e1^3
        self.assertAlmostEqual(series[(0, 0, 2)], -0.4 * sc["N1"])
        self.assertAlmostEqual(series[(0, 3, 0)], -0.6 * sc["M2"])

    def test_published_mode_takes_supplied_constants(self):
        spec = T5()
        self.assertNotIn("M2", series_coefficients(spec, FormulaMode.AS_PUBLISHED).values)
        sc = series_coefficients(spec, FormulaMode.AS_PUBLISHED, PublishedConstants({"M2": 0.25}))
        self.assertEqual(sc["M2"], 0.25)

    def test_unknown_constant_rejected(self):
        with self.assertRaises(ConfigurationError):
            PublishedConstants({"Q": 1.0})


class FirstOrderBiasTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls) -> None:
        super().setUpClass()
        cls.pop = load_population(HEADS_CSV)
        cls.v = build_v_table(cls.pop, 5, VPolicy.CLOSED_FORM_ALL)

    def test_t1_bias_matches_enumeration(self):
        spec = T1(alpha1=0.6, alpha2=0.3)
        exact = enumerate_exact(self.pop, spec, 5).bias
        rederived = first_order_bias(spec, self.v)
        published = first_order_bias(spec, self.v, mode=FormulaMode.AS_PUBLISHED)
        self.assertLess(abs(rederived - exact), 0.1 * abs(published - rederived))
        self.assertLess(abs(rederived - exact), abs(published - exact))

    def test_classical_ratio_bias(self):
        bias = first_order_bias(T1(alpha1=1.0, alpha2=0.0), self.v)
        expected = self.pop.means.ybar * (self.v[(0, 2, 0)] - self.v[(1, 1, 0)])
        self.assertAlmostEqual(bias, expected, places=12)

    def test_rederived_bias_is_series_contraction(self):
        means = self.pop.means
        for spec in SAMPLE_SPECS:
            series = taylor_expand_estimator(spec, 2, means)
            expected = means.ybar * math.fsum(c * self.v[k] for k, c in series.items() if sum(k) == 2)
            self.assertAlmostEqual(first_order_bias(spec, self.v), expected, places=12)
            for found in compare_modes(spec, errata.BIAS1, means, ALL_CONSTANTS):
                self.assertTrue(found.errata, f"{spec.family}: {found.name} has no ledger entry")

    def test_bias_discrepancies(self):
        means = self.pop.means
        found = {d.name: d.errata for d in compare_modes(T1(alpha1=0.6, alpha2=0.3), errata.BIAS1, means)}
        self.assertEqual(found, {"V101": ("E03",), "V102": ("E03",)})
        t4 = {d.name for d in compare_modes(T4(beta1=1.2, beta2=0.6), errata.BIAS1, means)}
        self.assertEqual(t4, {"V011"})

    def test_zero_cases(self):
        v = zero_table()
        for spec in SAMPLE_SPECS:
            self.assertEqual(first_order_bias(spec, v), 0.0)
        self.assertEqual(first_order_bias(T1(alpha1=0.0, alpha2=0.0), self.v), 0.0)

    def test_published_t2_needs_constants(self):
        with self.assertRaises(MissingPublishedConstantError) as cm:
            first_order_bias(T2(), self.v, mode=FormulaMode.AS_PUBLISHED)
        self.assertEqual(cm.exception.symbols, ("alpha1", "alpha2"))


class FirstOrderMseTest(SimpleTestCase):
    def test_t4_matches_t1_at_half_parameters(self):
        rng = np.random.default_rng(41)
        for _ in range(10):
            v, _ = random_quadratic_table(rng, spread=0.9)
            a1, a2 = rng.uniform(-2, 2, 2)
            rel_close(self, first_order_mse(T4(beta1=2 * a1, beta2=2 * a2), v), first_order_mse(T1(alpha1=a1, alpha2=a2), v), 1e-12)

    def test_modes_agree_at_first_order(self):
        v, _ = random_quadratic_table(np.random.default_rng(42))
        for spec in SAMPLE_SPECS:
            rel_close(
                self,
                first_order_mse(spec, v, mode=FormulaMode.AS_PUBLISHED),
                first_order_mse(spec, v),
                1e-12,
            )

    def test_missing_term(self):
        v = VTable.from_values({(2, 0, 0): 1e-4}, means=Means(1.0, 1.0, 1.0))
        with self.assertRaises(MissingVTermError):
            first_order_mse(T1(), v)


class SecondOrderMseTest(SimpleTestCase):
    def test_only_leading_term(self):
        v = zero_table(V200=2e-4)
        expected = 10.0**2 * 2e-4
        for spec in SAMPLE_SPECS:
            for mode in FormulaMode:
                self.assertAlmostEqual(second_order_mse(spec, v, mode, ALL_CONSTANTS), expected, places=12)

    def test_t3_published_needs_constants(self):
        v = zero_table(V200=2e-4)
        with self.assertRaises(MissingPublishedConstantError) as cm:
            second_order_mse(T3(), v, FormulaMode.AS_PUBLISHED)
        self.assertEqual(cm.exception.symbols, ("A1", "A2", "theta"))
        self.assertEqual(cm.exception.exit_code, 4)
        self.assertTrue(math.isfinite(second_order_mse(T3(), v, FormulaMode.AS_PUBLISHED, ALL_CONSTANTS)))

    def test_t5_published_needs_constants(self):
        v = zero_table(V200=2e-4)
        with self.assertRaises(MissingPublishedConstantError) as cm:
            second_order_mse(T5(), v, FormulaMode.AS_PUBLISHED)
        self.assertEqual(cm.exception.symbols, ("M2", "N2"))
        with self.assertRaises(MissingPublishedConstantError):
            second_order_mse(T4(), v, FormulaMode.AS_PUBLISHED)

    def test_missing_fourth_order_term(self):
        v = load_v_fixture(LITERAL_FIXTURE, strict=False)
        with self.assertRaises(MissingVTermError) as cm:
            second_order_mse(T1(alpha1=0.6, alpha2=0.3), v, FormulaMode.RE_DERIVED)
        self.assertIn((1, 3, 0), cm.exception.indices)

    def test_approximate_reports_provenance(self):
        pop = random_population(np.random.default_rng(9), 9)
        v = build_v_table(pop, 3)
        result = approximate(T1(alpha1=0.6, alpha2=0.3), v, 2, FormulaMode.RE_DERIVED)
        self.assertEqual(set(result.inputs), {"closed-form", "enumerated"})
        self.assertIsNone(result.bias)
        first = approximate(T1(alpha1=0.6, alpha2=0.3), v, 1, FormulaMode.RE_DERIVED)
        self.assertEqual(first.inputs, {"closed-form": 6})
        with self.assertRaises(ConfigurationError):
            approximate(T1(), v, 3)


class AccuracyOrderingTest(SimpleTestCase):
    """
    Second-order approximations against the enumeration-exact MSE
    """

    def test_second_order_is_closer(self):
        rng = np.random.default_rng(7)
        closer = total = 0
        for _ in range(12):
            N = int(rng.integers(8, 13))
            n = int(0.4 * N)
            pop = random_population(rng, N)
            v = build_v_table(pop, n, VPolicy.CLOSED_FORM_ALL)
            for family, params in EXAMPLE_SPECS.items():
                spec = make_spec(family, **params)
                exact = enumerate_exact(pop, spec, n).mse
                first = first_order_mse(spec, v)
                second = second_order_mse(spec, v, FormulaMode.RE_DERIVED)
                closer += abs(second - exact) < abs(first - exact)
                total += 1
        self.assertGreaterEqual(closer, 0.8 * total)

    def test_classical_ratio_estimator(self):
        pop = random_population(np.random.default_rng(8), 8)
        v = build_v_table(pop, 3, VPolicy.CLOSED_FORM_ALL)
        spec = T1(alpha1=1.0, alpha2=0.0)
        exact = enumerate_exact(pop, spec, 3).mse
        self.assertLess(
            abs(second_order_mse(spec, v, FormulaMode.RE_DERIVED) - exact), abs(first_order_mse(spec, v) - exact)
        )


class CompareModesTest(SimpleTestCase):
    def setUp(self):
        self.means = Means(183.84, 185.72, 151.12)

    def test_discrepancies_are_in_ledger(self):
        for spec in SAMPLE_SPECS:
            for found in compare_modes(spec, errata.MSE2, self.means, ALL_CONSTANTS):
                self.assertTrue(found.errata, f"{spec.family}: {found.name} has no ledger entry")

    def test_t1_discrepancies(self):
        found = {d.index for d in compare_modes(T1(alpha1=0.6, alpha2=0.3), errata.MSE2, self.means)}
        expected = {(1, 0, 2), (0, 2, 1), (0, 1, 2), (0, 0, 3), (0, 2, 2), (1, 2, 1), (1, 1, 2), (0, 3, 1), (0, 1, 3)}
        self.assertEqual(found, expected)

    def test_t2_discrepancies(self):
        found = compare_modes(T2(lambda1=0.3, lambda2=0.7), errata.MSE2, self.means)
        self.assertEqual([d.name for d in found], ["V102", "V103"])
        self.assertEqual(found[0].errata, ("E14",))

    def test_t4_differs_at_v101(self):
        found = {d.index for d in compare_modes(T4(beta1=1.2, beta2=0.6), errata.MSE2, self.means, ALL_CONSTANTS)}
        self.assertIn((1, 0, 1), found)
        self.assertFalse({idx for idx in found if sum(idx) == 2} - {(1, 0, 1)})


STATIONARY_TABLE = zero_table(V200=3e-4, V020=2e-4, V002=2.5e-4, V011=1e-4, V110=1.5e-4, V101=1.2e-4)


class OptimalParametersTest(SimpleTestCase):
    def test_t1_single_auxiliary_reduction(self):
        v = zero_table(V200=3e-4, V020=2e-4, V002=1e-4, V110=1.5e-4)
        for method in OptimizationMethod:
            spec = optimal_parameters(Family.T1, v, method=method).spec
            self.assertAlmostEqual(spec.alpha2, 0.0, places=12)
            self.assertAlmostEqual(spec.alpha1, 0.75, places=12)

    def test_t1_methods_agree(self):
        v, alpha = random_quadratic_table(np.random.default_rng(3), spread=0.9)
        for method in OptimizationMethod:
            spec = optimal_parameters(Family.T1, v, method=method).spec
            np.testing.assert_allclose([spec.alpha1, spec.alpha2], alpha, rtol=1e-9, atol=1e-12)

    def test_singular(self):
        v = zero_table(V200=3e-4, V020=2e-4, V002=2e-4, V011=2e-4, V110=1e-4, V101=1e-4)
        for method in OptimizationMethod:
            with self.assertRaises(SingularSystemError):
                optimal_parameters(Family.T1, v, method=method)
        degenerate = optimal_parameters(Family.T1, v, allow_degenerate=True)
        self.assertTrue(degenerate.non_unique)

    def test_t2_flat_direction(self):
        v = zero_table(V200=3e-4, V020=2e-4, V002=2e-4, V011=2e-4, V110=1e-4, V101=1e-4)
        with self.assertRaises(SingularSystemError):
            optimal_parameters(Family.T2, v)
        optimum = optimal_parameters(Family.T2, v, allow_degenerate=True)
        self.assertTrue(optimum.non_unique)
        self.assertEqual(optimum.spec, T2(lambda1=0.5, lambda2=0.5))

    def test_t4_is_twice_t1(self):
        v, alpha = random_quadratic_table(np.random.default_rng(4))
        for method in OptimizationMethod:
            spec = optimal_parameters(Family.T4, v, method=method).spec
            np.testing.assert_allclose([spec.beta1, spec.beta2], 2 * alpha, rtol=1e-9)

    def test_t2_published_uses_third_order_term(self):
        v = zero_table(V200=3e-4, V020=2e-4, V002=2.5e-4, V011=1e-4, V110=1.5e-4, V101=1.2e-4, V012=3e-5)
        published = optimal_parameters(Family.T2, v, method=OptimizationMethod.PUBLISHED_FORMULA).spec
        quadratic = optimal_parameters(Family.T2, v).spec
        self.assertAlmostEqual(published.lambda1, (2.5e-4 - 1.2e-4 + 1.5e-4 - 3e-5) / (2e-4 + 2.5e-4 - 6e-5))
        self.assertAlmostEqual(quadratic.lambda1, (2.5e-4 - 1.2e-4 + 1.5e-4 - 1e-4) / (2e-4 + 2.5e-4 - 2e-4))
        self.assertNotAlmostEqual(published.lambda1, quadratic.lambda1)
        self.assertEqual(errata.ids_for("t2", errata.OPTIMUM), ["E08"])

    def _assert_stationary(self, make, v, optimum: float, h: float = 1e-5) -> None:
        best = first_order_mse(make(optimum), v)
        rng = np.random.default_rng(0)
        for step in rng.uniform(-1e-3, 1e-3, 20):
            self.assertLessEqual(best, first_order_mse(make(optimum + step), v) + 1e-15 * best)
        slope = (first_order_mse(make(optimum + h), v) - first_order_mse(make(optimum - h), v)) / (2 * h)
        self.assertLess(abs(slope), 1e-6 * best)

    def test_t3_quadratic_solve_is_stationary(self):
        v = STATIONARY_TABLE
        template = T3(alpha=1.5)
        w1 = optimal_parameters(Family.T3, v, template=template).spec.w1
        self._assert_stationary(lambda w: T3(w1=w, w2=1 - w, alpha=1.5), v, w1)
        published = optimal_parameters(Family.T3, v, method=OptimizationMethod.PUBLISHED_FORMULA, template=template)
        self.assertNotAlmostEqual(published.spec.w1, w1)

    def test_t5_quadratic_solve_is_stationary(self):
        v = STATIONARY_TABLE
        template = T5(delta1=1, delta2=-1, c=3.0, d=1.0)
        k1 = optimal_parameters(Family.T5, v, template=template).spec.k1
        self._assert_stationary(lambda k: T5(k1=k, k2=1 - k, delta1=1, delta2=-1, c=3.0, d=1.0), v, k1)

    def test_t3_alpha_line_search(self):
        v, _ = random_quadratic_table(np.random.default_rng(12))
        best = optimize_t3_alpha(v)
        mse = first_order_mse(best.spec, v)
        for alpha in (-3.0, -1.0, 0.5, 1.0, 2.5):
            other = optimal_parameters(Family.T3, v, template=T3(alpha=alpha)).spec
            self.assertLessEqual(mse, first_order_mse(other, v) * (1 + 1e-9))

    def test_template_family_must_match(self):
        with self.assertRaises(ConfigurationError):
            optimal_parameters(Family.T1, zero_table(), template=T2())


class OptimumEquivalenceTest(SimpleTestCase):
    """
    t1, t4 and the regression benchmark share one first-order minimum
    """

    def test_minimum_mse_equivalence(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            v, _ = random_quadratic_table(rng, spread=0.9)
            regression = regression_min_mse(v)
            t1 = first_order_mse(optimal_parameters(Family.T1, v).spec, v)
            t4 = first_order_mse(optimal_parameters(Family.T4, v).spec, v)
            rel_close(self, t1, regression, 1e-9)
            rel_close(self, t4, regression, 1e-9)

    def test_grid_search_within_one_cell(self):
        rng = np.random.default_rng(77)
        for _ in range(5):
            v, _ = random_quadratic_table(rng)
            spec = optimal_parameters(Family.T1, v).spec
            grid = grid_search_t1(v)
            self.assertLessEqual(abs(grid.alpha1 - spec.alpha1), grid.step + 1e-12)
            self.assertLessEqual(abs(grid.alpha2 - spec.alpha2), grid.step + 1e-12)
            self.assertGreaterEqual(grid.mse, regression_min_mse(v) * (1 - 1e-12))

    def test_perturbations_do_not_improve(self):
        rng = np.random.default_rng(99)
        v, _ = random_quadratic_table(rng, spread=0.9)
        spec = optimal_parameters(Family.T1, v).spec
        best = first_order_mse(spec, v)
        for angle in rng.uniform(0, 2 * math.pi, 100):
            moved = T1(alpha1=spec.alpha1 + 1e-3 * math.cos(angle), alpha2=spec.alpha2 + 1e-3 * math.sin(angle))
            self.assertLessEqual(best, first_order_mse(moved, v))


class RegressionBenchmarkTest(SimpleTestCase):
    def test_no_auxiliary_information(self):
        v = zero_table(V200=3e-4, V020=2e-4, V002=1e-4, V011=5e-5)
        self.assertAlmostEqual(regression_min_mse(v), 100.0 * 3e-4, places=12)

    def test_single_auxiliary(self):
        v = zero_table(V200=3e-4, V020=2e-4, V002=1e-4, V110=1.5e-4)
        self.assertAlmostEqual(regression_min_mse(v), 100.0 * (3e-4 - 1.5e-4**2 / 2e-4), places=12)

    def test_lower_bound(self):
        rng = np.random.default_rng(13)
        v, _ = random_quadratic_table(rng, spread=0.9)
        floor = regression_min_mse(v)
        for a1, a2 in rng.uniform(-3, 3, (20, 2)):
            self.assertLessEqual(floor, first_order_mse(T1(alpha1=a1, alpha2=a2), v) * (1 + 1e-12))

    def test_singular(self):
        with self.assertRaises(SingularSystemError):
            regression_min_mse(zero_table(V200=3e-4))


class PublishedValuesTest(SimpleTestCase):
    """
    First-order MSEs on the printed head-measurement value list
    """

    def test_t1_and_t4_agree(self):
        for path in (CORRECTED_FIXTURE, LITERAL_FIXTURE):
            v = load_v_fixture(path, strict=False)
            t1 = first_order_mse(optimal_parameters(Family.T1, v, method=OptimizationMethod.PUBLISHED_FORMULA).spec, v)
            t4 = first_order_mse(optimal_parameters(Family.T4, v, method=OptimizationMethod.PUBLISHED_FORMULA).spec, v)
            self.assertLessEqual(abs(t1 - t4), 1e-6 * t1)
            self.assertGreaterEqual(t1, 4.0)
            self.assertLessEqual(t1, 4.7)
            self.assertAlmostEqual(t1, 4.14, delta=0.02)
            rel_close(self, regression_min_mse(v), t1, 1e-9)

    def test_grid_search(self):
        v = load_v_fixture(CORRECTED_FIXTURE)
        spec = optimal_parameters(Family.T1, v).spec
        grid = grid_search_t1(v)
        # the auxiliary block is correlated (about 0.73), so allow two cells
        self.assertLessEqual(abs(grid.alpha1 - spec.alpha1), 2 * grid.step)
        self.assertLessEqual(abs(grid.alpha2 - spec.alpha2), 2 * grid.step)
