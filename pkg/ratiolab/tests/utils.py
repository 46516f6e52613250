"""Helpers shared by the test modules"""

from pathlib import Path

import numpy as np

from ..moments import ALL_INDICES, VTable
from ..population import Means, Population

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
HEADS_CSV = DATA_DIR / "heads25.csv"
LITERAL_FIXTURE = DATA_DIR / "heads25_literal.txt"
CORRECTED_FIXTURE = DATA_DIR / "heads25_corrected.txt"

EXAMPLE_SPECS = {
    "t1": {"alpha1": 0.6, "alpha2": 0.3},
    "t2": {"lambda1": 0.5, "lambda2": 0.5},
    "t4": {"beta1": 1.2, "beta2": 0.6},
    "t5": {"k1": 0.6, "k2": 0.4, "delta1": 1, "delta2": 1, "c": 2.0, "d": 1.0},
}


def random_population(rng: np.random.Generator, N: int, low: float = 5.0, high: float = 15.0) -> Population:
    """Positive, correlated y, x, z; every value lies in [low - 1, high + 1]."""
    base = rng.uniform(low, high, N)
    return Population.from_columns(
        base + rng.uniform(-1.0, 1.0, N),
        base * rng.uniform(0.9, 1.1, N),
        0.5 * base + rng.uniform(0.5, 1.5, N),
    )


def small_population() -> Population:
    return Population.from_columns(
        [10.0, 12.0, 9.0, 14.0, 11.0, 13.0, 8.0, 15.0],
        [20.0, 23.0, 19.0, 26.0, 21.0, 25.0, 17.0, 28.0],
        [5.0, 6.5, 4.0, 7.0, 6.0, 6.0, 4.5, 8.0],
    )


def zero_table(means: Means = Means(10.0, 8.0, 6.0), **values: float) -> VTable:
    """Every index through degree four set to zero except the ``Vpqr=...`` keywords."""
    entries = {idx: 0.0 for idx in ALL_INDICES}
    for name, value in values.items():
        entries[(int(name[1]), int(name[2]), int(name[3]))] = value
    return VTable.from_values(entries, N=20, n=5, means=means)


def random_quadratic_table(rng: np.random.Generator, spread: float = 0.3) -> tuple[VTable, np.ndarray]:
    """Second-order table whose t1 optimum is a known point inside [-2, 2]^2.

    The auxiliary block has equal variances and |correlation| <= ``spread``.
    """
    scale = rng.uniform(1e-4, 1e-3)
    rho = rng.uniform(-spread, spread)
    A = scale * np.array([[1.0, rho], [rho, 1.0]])
    alpha = rng.uniform(-2.0, 2.0, 2)
    b = A @ alpha
    residual = rng.uniform(0.1, 1.0) * scale
    table = VTable.from_values(
        {
            (2, 0, 0): float(alpha @ b + residual),
            (0, 2, 0): float(A[0, 0]),
            (0, 0, 2): float(A[1, 1]),
            (0, 1, 1): float(A[0, 1]),
            (1, 1, 0): float(b[0]),
            (1, 0, 1): float(b[1]),
        },
        means=Means(rng.uniform(50, 150), rng.uniform(50, 150), rng.uniform(50, 150)),
    )
    return table, alpha


def rel_close(testcase, actual: float, expected: float, rtol: float, scale: float = 0.0, msg=None) -> None:
    testcase.assertLessEqual(abs(actual - expected), rtol * max(abs(expected), scale), msg=msg)
