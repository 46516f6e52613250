"""
Oracle tests: SRSWOR draws, enumeration and Monte Carlo
"""

from collections import Counter

import numpy as np

# Django
from django.test import SimpleTestCase

from ..estimators import T1, T2, T4, T5, Family, make_spec
from ..exceptions import BudgetExceededError, ConfigurationError, EvaluationError, InvalidSpecError
from ..moments import VPolicy, build_v_table
from ..population import Population
from ..simulation import (
    RNG_ALGORITHM,
    OracleMethod,
    draw_subsets,
    enumerate_exact,
    iter_subset_chunks,
    monte_carlo,
    srswor_sample,
    subset_count,
)
from .utils import EXAMPLE_SPECS, random_population, rel_close


class EnumerateExactTest(SimpleTestCase):
    def test_hand_example(self):
        # y = x, so the ratio estimator returns Xbar on every subset
        pop = Population.from_columns([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
        result = enumerate_exact(pop, T2(lambda1=1.0, lambda2=0.0), 2)
        self.assertEqual(result.subsets, 6)
        self.assertEqual(result.method, OracleMethod.ENUMERATION)
        self.assertAlmostEqual(result.bias, 0.0, places=14)
        self.assertAlmostEqual(result.mse, 0.0, places=14)

    def test_sample_mean_mse_is_v200(self):
        rng = np.random.default_rng(31)
        for N, n in ((7, 3), (10, 4), (12, 2)):
            pop = random_population(rng, N)
            result = enumerate_exact(pop, T5(k1=0.5, k2=0.5, delta1=0, delta2=0), n)
            v = build_v_table(pop, n, VPolicy.CLOSED_FORM_ALL, indices=[(2, 0, 0)])
            rel_close(self, result.mse, pop.means.ybar**2 * v[(2, 0, 0)], 1e-12)
            self.assertLess(abs(result.bias), 1e-12 * pop.means.ybar)

    def test_census_has_zero_error(self):
        pop = random_population(np.random.default_rng(4), 6)
        result = enumerate_exact(pop, T4(beta1=1.0, beta2=0.5), 6)
        self.assertEqual(result.subsets, 1)
        self.assertLess(result.mse, 1e-24 * pop.means.ybar**2)

    def test_chunking_does_not_change_result(self):
        pop = random_population(np.random.default_rng(9), 9)
        spec = T1(alpha1=0.6, alpha2=0.3)
        whole = enumerate_exact(pop, spec, 4)
        chunked = enumerate_exact(pop, spec, 4, chunk=7)
        self.assertEqual(whole.subsets, chunked.subsets)
        rel_close(self, chunked.mse, whole.mse, 1e-12)

    def test_budget(self):
        pop = random_population(np.random.default_rng(5), 12)
        with self.assertRaises(BudgetExceededError) as cm:
            enumerate_exact(pop, T1(), 6, budget=100)
        self.assertEqual(cm.exception.exit_code, 4)

    def test_undefined_subset_is_reported(self):
        pop = Population.from_columns([1.0, 2.0, 3.0], [-4.0, 1.0, 6.0], [1.0, 2.0, 3.0])
        with self.assertRaises(EvaluationError) as cm:
            enumerate_exact(pop, T1(alpha1=0.5, alpha2=0.0), 2)
        self.assertEqual(cm.exception.subset, (0, 1))

    def test_invalid_spec(self):
        pop = random_population(np.random.default_rng(5), 6)
        with self.assertRaises(InvalidSpecError):
            enumerate_exact(pop, T2(lambda1=0.2, lambda2=0.2), 2)

    def test_sample_size_range(self):
        pop = random_population(np.random.default_rng(5), 6)
        for n in (0, 7):
            with self.assertRaises(ConfigurationError):
                enumerate_exact(pop, T1(), n)


class MonteCarloTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls) -> None:
        super().setUpClass()
        cls.pop = random_population(np.random.default_rng(17), 12)
        cls.spec = T1(alpha1=0.6, alpha2=0.3)

    def test_agrees_with_enumeration(self):
        exact = enumerate_exact(self.pop, self.spec, 4)
        mc = monte_carlo(self.pop, self.spec, 4, 20_000, seed=3)
        self.assertLess(abs(mc.mse - exact.mse), 4 * mc.mse_se)
        self.assertLess(abs(mc.bias - exact.bias), 4 * mc.bias_se)
        self.assertEqual(mc.replications, 20_000)
        self.assertEqual(mc.rng, RNG_ALGORITHM)
        self.assertEqual(mc.subsets, subset_count(12, 4))

    def test_every_family_within_three_standard_errors(self):
        rng = np.random.default_rng(2024)
        for case in range(5):
            pop = random_population(rng, 12)
            for family in Family:
                spec = make_spec(family.value, **EXAMPLE_SPECS.get(family.value, {}))
                with self.subTest(population=case, family=family.value):
                    exact = enumerate_exact(pop, spec, 4)
                    mc = monte_carlo(pop, spec, 4, 100_000, seed=case + 1)
                    self.assertEqual(mc.failures, 0)
                    self.assertLess(abs(mc.mse - exact.mse), 3 * mc.mse_se)
                    self.assertLess(abs(mc.bias - exact.bias), 3 * mc.bias_se)

    def test_worker_count_does_not_change_result(self):
        results = [monte_carlo(self.pop, self.spec, 5, 3_000, seed=11, workers=w) for w in (1, 2, 8)]
        self.assertEqual(results[0], results[1])
        self.assertEqual(results[0], results[2])

    def test_seed_changes_result(self):
        a = monte_carlo(self.pop, self.spec, 5, 500, seed=1)
        b = monte_carlo(self.pop, self.spec, 5, 500, seed=2)
        self.assertNotEqual(a.mse, b.mse)

    def test_seed_required(self):
        with self.assertRaises(ConfigurationError):
            monte_carlo(self.pop, self.spec, 4, 100, seed=None)

    def test_replications_required(self):
        with self.assertRaises(ConfigurationError):
            monte_carlo(self.pop, self.spec, 4, 0, seed=1)

    def test_undefined_replications_are_excluded(self):
        pop = Population.from_columns([1.0, 2.0, 3.0], [-4.0, 1.0, 6.0], [1.0, 2.0, 3.0])
        result = monte_carlo(pop, T1(alpha1=0.5, alpha2=0.0), 2, 300, seed=8)
        self.assertGreater(result.failures, 0)
        self.assertLess(result.failures, 300)


class SubsetDrawTest(SimpleTestCase):
    def test_srswor_inclusion_frequencies(self):
        rng = np.random.default_rng(0)
        counts = Counter()
        draws = 20_000
        for _ in range(draws):
            sample = srswor_sample(rng, 10, 2)
            self.assertEqual(len(set(sample)), 2)
            counts.update(sample)
        for unit in range(10):
            self.assertAlmostEqual(counts[unit] / draws, 0.2, delta=0.01)

    def test_sharded_draws(self):
        blocks = draw_subsets(5, 10, 3, 1_000, shards=7)
        self.assertEqual(len(blocks), 7)
        idx = np.concatenate(blocks)
        self.assertEqual(idx.shape, (1_000, 3))
        self.assertTrue(np.all(np.diff(idx, axis=1) > 0))
        frequencies = np.bincount(idx.ravel(), minlength=10) / 1_000
        for f in frequencies:
            self.assertAlmostEqual(f, 0.3, delta=0.06)

    def test_every_subset_once(self):
        rows = np.concatenate(list(iter_subset_chunks(7, 3, chunk=4)))
        self.assertEqual(rows.shape, (subset_count(7, 3), 3))
        self.assertEqual(len({tuple(r) for r in rows.tolist()}), 35)

    def test_sample_size_checked(self):
        with self.assertRaises(ConfigurationError):
            srswor_sample(np.random.default_rng(0), 3, 4)
