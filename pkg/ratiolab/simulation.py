"""Ground-truth oracle: SRSWOR sampling, exact enumeration and Monte Carlo.

Monte Carlo replications are split over a fixed number of shards. Shard ``i``
draws from ``SeedSequence(seed).spawn(shards)[i]`` and shards are merged in
index order, so a fixed seed gives bit-identical results for any worker count.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from django.db import models

from . import app_settings
from .estimators import EstimatorSpec, describe, evaluate_many, validate_spec
from .exceptions import BudgetExceededError, ConfigurationError, EvaluationError, InvalidSpecError, NumericalError
from .population import Population

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64/SeedSequence.spawn"

# rows of random keys generated at once per shard (bounded memory for large N)
_KEY_CELLS = 1 << 22


class OracleMethod(models.TextChoices):
    ENUMERATION = "enumeration", "Enumeration"
    MONTE_CARLO = "monte-carlo", "Monte Carlo"


@dataclass(frozen=True)
class SimResult:
    estimator: str
    n: int
    method: str
    bias: float
    mse: float
    subsets: int
    replications: Optional[int] = None
    bias_se: Optional[float] = None
    mse_se: Optional[float] = None
    seed: Optional[int] = None
    rng: Optional[str] = None
    failures: int = 0


def _check_size(N: int, n: int) -> None:
    if n < 1:
        raise ConfigurationError(f"sample size must be at least 1 (got {n})", module="simulation")
    if n > N:
        raise ConfigurationError(f"sample size {n} exceeds population size {N}", module="simulation")


def subset_count(N: int, n: int) -> int:
    return math.comb(N, n)


def srswor_sample(rng: np.random.Generator, N: int, n: int) -> tuple[int, ...]:
    _check_size(N, n)
    picked = rng.choice(N, size=n, replace=False)
    return tuple(sorted(int(i) for i in picked))


def iter_subset_chunks(N: int, n: int, chunk: Optional[int] = None) -> Iterator[np.ndarray]:
    """Every size-n subset exactly once, lexicographic, as ``(rows, n)`` index blocks."""
    _check_size(N, n)
    chunk = chunk or app_settings.RATIOLAB_ENUMERATION_CHUNK
    combos = itertools.combinations(range(N), n)
    while True:
        flat = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos, chunk)),
            dtype=np.intp,
        )
        if flat.size == 0:
            return
        yield flat.reshape(-1, n)


def _shard_sizes(reps: int, shards: int) -> list[int]:
    base, extra = divmod(reps, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def _draw_shard(seed_seq: np.random.SeedSequence, N: int, n: int, count: int) -> np.ndarray:
    # random-key sort: every size-n subset is equally likely
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    block = max(1, _KEY_CELLS // N)
    parts = []
    remaining = count
    while remaining > 0:
        rows = min(block, remaining)
        keys = rng.random((rows, N))
        parts.append(np.sort(np.argsort(keys, axis=1, kind="stable")[:, :n], axis=1))
        remaining -= rows
    if not parts:
        return np.empty((0, n), dtype=np.intp)
    return np.concatenate(parts)


def draw_subsets(
    seed: int,
    N: int,
    n: int,
    reps: int,
    *,
    shards: Optional[int] = None,
    workers: Optional[int] = None,
) -> list[np.ndarray]:
    """Index blocks of ``reps`` SRSWOR draws, one block per shard in shard order."""
    _check_size(N, n)
    shards = shards or app_settings.RATIOLAB_MC_SHARDS
    workers = workers or app_settings.RATIOLAB_WORKERS
    children = np.random.SeedSequence(seed).spawn(shards)
    sizes = _shard_sizes(reps, shards)
    logger.debug("draw_subsets: N=%s n=%s reps=%s shards=%s workers=%s", N, n, reps, shards, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda args: _draw_shard(args[0], N, n, args[1]), zip(children, sizes)))


def _sample_means(pop: Population, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return pop.y[idx].mean(axis=1), pop.x[idx].mean(axis=1), pop.z[idx].mean(axis=1)


def _require_valid(spec: EstimatorSpec) -> None:
    violations = validate_spec(spec)
    if violations:
        raise InvalidSpecError(violations)


def enumerate_exact(
    pop: Population,
    spec: EstimatorSpec,
    n: int,
    budget: Optional[int] = None,
    *,
    chunk: Optional[int] = None,
) -> SimResult:
    """
    Exact bias and MSE of an estimator over every size-n subset

    :param pop: population
    :type pop: Population
    :param spec: estimator and its parameters
    :type spec: EstimatorSpec
    :param n: sample size
    :type n: int
    :param budget: largest subset count allowed; defaults to ``RATIOLAB_ENUMERATION_BUDGET``
    :type budget: int
    :param chunk: subsets evaluated per block
    :type chunk: int
    :return: bias and MSE with the subset count
    :rtype: SimResult
    :raises BudgetExceededError: when C(N, n) exceeds the budget
    :raises EvaluationError: naming the first subset the estimator is undefined on
    """
    _require_valid(spec)
    _check_size(pop.N, n)
    budget = budget or app_settings.RATIOLAB_ENUMERATION_BUDGET
    count = subset_count(pop.N, n)
    if count > budget:
        raise BudgetExceededError(count, budget)

    means = pop.means
    total = 0.0
    total_sq = 0.0
    visited = 0
    for idx in iter_subset_chunks(pop.N, n, chunk):
        ybar, xbar, zbar = _sample_means(pop, idx)
        values, bad = evaluate_many(spec, ybar, xbar, zbar, means)
        if bad.any():
            row = int(np.argmax(bad))
            subset = tuple(int(i) for i in idx[row])
            logger.error("enumerate_exact: %s undefined on subset=%s", describe(spec), subset)
            raise EvaluationError(f"{describe(spec)} is undefined on subset {subset}", subset=subset, module="simulation")
        dev = values - means.ybar
        total += float(np.sum(dev))
        total_sq += float(np.sum(dev * dev))
        visited += idx.shape[0]
        logger.debug("enumerate_exact: visited=%s of %s", visited, count)

    result = SimResult(
        estimator=describe(spec),
        n=n,
        method=OracleMethod.ENUMERATION,
        bias=total / visited,
        mse=total_sq / visited,
        subsets=visited,
    )
    logger.info("enumerate_exact: %s n=%s subsets=%s bias=%s mse=%s", result.estimator, n, visited, result.bias, result.mse)
    return result


def monte_carlo(
    pop: Population,
    spec: EstimatorSpec,
    n: int,
    reps: int,
    seed: Optional[int],
    *,
    workers: Optional[int] = None,
    shards: Optional[int] = None,
) -> SimResult:
    """
    Seeded Monte Carlo bias and MSE with standard errors

    Replications are split over a fixed number of seed shards, so the result
    is the same for any worker count.

    :param pop: population
    :type pop: Population
    :param spec: estimator and its parameters
    :type spec: EstimatorSpec
    :param n: sample size
    :type n: int
    :param reps: replications
    :type reps: int
    :param seed: root seed
    :type seed: int
    :param workers: worker threads
    :type workers: int
    :param shards: seed shards; defaults to ``RATIOLAB_MC_SHARDS``
    :type shards: int
    :return: bias, MSE, their standard errors and the count of undefined replications
    :rtype: SimResult
    """
    _require_valid(spec)
    _check_size(pop.N, n)
    if reps < 1:
        raise ConfigurationError(f"Monte Carlo needs at least one replication (got {reps})", module="simulation")
    if seed is None:
        raise ConfigurationError("Monte Carlo needs a seed", module="simulation")

    means = pop.means
    deviations = []
    failures = 0
    for idx in draw_subsets(seed, pop.N, n, reps, shards=shards, workers=workers):
        if idx.shape[0] == 0:
            continue
        ybar, xbar, zbar = _sample_means(pop, idx)
        values, bad = evaluate_many(spec, ybar, xbar, zbar, means)
        failures += int(bad.sum())
        deviations.append(values[~bad] - means.ybar)

    dev = np.concatenate(deviations) if deviations else np.empty(0)
    if failures:
        logger.warning("monte_carlo: %s excluded %s of %s replications", describe(spec), failures, reps)
    if dev.size == 0:
        raise NumericalError(f"{describe(spec)} was undefined on every replication", module="simulation")

    sq = dev * dev
    m = dev.size
    bias_se = float(np.std(dev, ddof=1) / math.sqrt(m)) if m > 1 else None
    mse_se = float(np.std(sq, ddof=1) / math.sqrt(m)) if m > 1 else None
    result = SimResult(
        estimator=describe(spec),
        n=n,
        method=OracleMethod.MONTE_CARLO,
        bias=float(np.mean(dev)),
        mse=float(np.mean(sq)),
        subsets=subset_count(pop.N, n),
        replications=reps,
        bias_se=bias_se,
        mse_se=mse_se,
        seed=seed,
        rng=RNG_ALGORITHM,
        failures=failures,
    )
    logger.info("monte_carlo: %s n=%s reps=%s bias=%s mse=%s", result.estimator, n, reps, result.bias, result.mse)
    return result
