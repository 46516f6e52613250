"""Exact population statistics and SRSWOR expectation terms.

Index triples are ordered (y, x, z): ``C[p, q, r]`` is the sum over units of
``(y - Ybar)**p * (x - Xbar)**q * (z - Zbar)**r`` and ``V[p, q, r]`` is
``E[e0**p * e1**q * e2**r]``. The SRSWOR identities are exact when written in
the mean moments ``C / N``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Optional

import numpy as np

from django.db import models

from . import app_settings
from .exceptions import ConfigurationError, MissingVTermError, ZeroMeanError
from .population import Means, Population, population_means
from .simulation import draw_subsets, iter_subset_chunks, subset_count

logger = logging.getLogger(__name__)

Index = tuple[int, int, int]

MAX_ORDER = 4

def index_order(index: Index) -> tuple:
    """Sort key: by total degree, then y-power, x-power, z-power descending."""
    return (sum(index), tuple(-i for i in index))


ALL_INDICES: tuple[Index, ...] = tuple(
    sorted(
        (idx for idx in itertools.product(range(MAX_ORDER + 1), repeat=3) if 1 <= sum(idx) <= MAX_ORDER),
        key=index_order,
    )
)

LISTED_INDICES: frozenset[Index] = frozenset(
    {
        (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (0, 1, 1), (1, 0, 1),
        (2, 1, 0), (2, 0, 1), (0, 2, 1), (1, 2, 0), (0, 1, 2), (1, 0, 2), (0, 3, 0),
        (0, 3, 1), (0, 1, 3), (1, 3, 0),
    }
)

# the three ways to split four factors into two pairs
_PAIRINGS = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))

# provenance tag of MomentTable records; the sums come straight from raw data
MOMENT_PROVENANCE = "population"


class Provenance(models.TextChoices):
    CLOSED_FORM = "closed-form", "Closed form"
    ENUMERATED = "enumerated", "Enumerated"
    MONTE_CARLO = "monte-carlo", "Monte Carlo"
    LITERAL_FIXTURE = "literal-fixture", "Literal fixture"


class VPolicy(models.TextChoices):
    CLOSED_FORM_WHERE_LISTED = "closed-form-where-listed", "Closed form where listed"
    ENUMERATE_EVERYTHING = "enumerate-everything", "Enumerate everything"
    CLOSED_FORM_ALL = "closed-form-all", "Closed form for every index"


def v_name(index: Index) -> str:
    return "V%d%d%d" % index


def central_moment(pop: Population, p: int, q: int, r: int) -> float:
    if min(p, q, r) < 0:
        raise ConfigurationError(f"negative moment order ({p}, {q}, {r})", module="moments")
    means = population_means(pop)
    dy = pop.y - means.ybar
    dx = pop.x - means.xbar
    dz = pop.z - means.zbar
    return float(np.sum(dy**p * dx**q * dz**r))


@dataclass(frozen=True)
class MomentTable:
    N: int
    values: Mapping[Index, float]

    def __getitem__(self, index: Index) -> float:
        return self.values[tuple(index)]

    def mean(self, index: Index) -> float:
        return self.values[tuple(index)] / self.N

    def to_records(self) -> list[str]:
        """``p q r value provenance`` lines of the sums ``C[p, q, r]``, lowest degree first."""
        return [
            f"{p} {q} {r} {self.values[(p, q, r)]!r} {MOMENT_PROVENANCE}"
            for p, q, r in sorted((idx for idx in self.values if sum(idx) > 0), key=index_order)
        ]


def moment_table(pop: Population, max_order: int = MAX_ORDER) -> MomentTable:
    means = population_means(pop)
    devs = (pop.y - means.ybar, pop.x - means.xbar, pop.z - means.zbar)
    values: dict[Index, float] = {}
    for idx in itertools.product(range(max_order + 1), repeat=3):
        if sum(idx) <= max_order:
            values[idx] = float(np.sum(devs[0] ** idx[0] * devs[1] ** idx[1] * devs[2] ** idx[2]))
    logger.debug("moment_table: N=%s entries=%s", pop.N, len(values))
    return MomentTable(N=pop.N, values=MappingProxyType(values))


@dataclass(frozen=True)
class LCoefficients:
    N: int
    n: int
    L1: Fraction
    L2: Optional[Fraction]
    L3: Optional[Fraction]
    L4: Optional[Fraction]

    def for_degree(self, degree: int) -> tuple[Fraction, ...]:
        needed = {2: (self.L1,), 3: (self.L2,), 4: (self.L3, self.L4)}[degree]
        if any(v is None for v in needed):
            raise ConfigurationError(
                f"degree-{degree} terms need N >= {degree} (N={self.N}, n={self.n})", module="moments"
            )
        return needed


def l_coefficients(N: int, n: int, order: int = MAX_ORDER) -> LCoefficients:
    if not 1 <= n <= N:
        raise ConfigurationError(f"need 1 <= n <= N (N={N}, n={n})", module="moments")
    if n == N:
        zero = Fraction(0)
        return LCoefficients(N, n, zero, zero, zero, zero)
    if order >= 3 and N < 3:
        raise ConfigurationError(f"third-order terms need N >= 3 (N={N})", module="moments")
    if order >= 4 and N < 4:
        raise ConfigurationError(f"fourth-order terms need N >= 4 (N={N})", module="moments")

    L1 = Fraction(N - n, (N - 1) * n)
    L2 = L3 = L4 = None
    if N >= 3:
        L2 = Fraction((N - n) * (N - 2 * n), (N - 1) * (N - 2) * n**2)
    if N >= 4:
        denom = (N - 1) * (N - 2) * (N - 3) * n**3
        L3 = Fraction((N - n) * (N * N + N - 6 * n * N + 6 * n * n), denom)
        L4 = Fraction(N * (N - n) * (N - n - 1) * (n - 1), denom)
    return LCoefficients(N, n, L1, L2, L3, L4)


def _normaliser(means: Means, index: Index) -> float:
    p, q, r = index
    means.require_nonzero(p, q, r)
    return means.ybar**p * means.xbar**q * means.zbar**r


def v_extended(moments: MomentTable, L: LCoefficients, means: Means, index: Index) -> float:
    """Closed-form V for any index up to degree four (multilinear SRSWOR formula)."""
    index = tuple(index)
    degree = sum(index)
    if degree > MAX_ORDER or min(index) < 0:
        raise ConfigurationError(f"{v_name(index)} is outside the supported range", module="moments")
    if degree == 0:
        return 1.0
    norm = _normaliser(means, index)
    if degree == 1 or L.n == L.N:
        return 0.0
    if degree == 2:
        (l1,) = L.for_degree(2)
        return float(l1) * moments.mean(index) / norm
    if degree == 3:
        (l2,) = L.for_degree(3)
        return float(l2) * moments.mean(index) / norm

    l3, l4 = L.for_degree(4)
    factors = [0] * index[0] + [1] * index[1] + [2] * index[2]

    def pair(a: int, b: int) -> Index:
        out = [0, 0, 0]
        out[factors[a]] += 1
        out[factors[b]] += 1
        return tuple(out)

    products = sum(moments.mean(pair(*first)) * moments.mean(pair(*second)) for first, second in _PAIRINGS)
    return (float(l3) * moments.mean(index) + float(l4) * products) / norm


def v_closed_form(moments: MomentTable, L: LCoefficients, means: Means, index: Index) -> float:
    index = tuple(index)
    if index not in LISTED_INDICES:
        raise ConfigurationError(f"{v_name(index)} has no printed closed form; use v_exact", module="moments")
    return v_extended(moments, L, means, index)


class VEntry(NamedTuple):
    value: float
    provenance: str
    stderr: Optional[float] = None


@dataclass(frozen=True, eq=False)
class RelativeErrors:
    """Relative errors (e0, e1, e2) of every enumerated or simulated sample."""

    e0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    method: str
    seed: Optional[int] = None

    @property
    def count(self) -> int:
        return int(self.e0.shape[0])

    def expectation(self, index: Index) -> VEntry:
        p, q, r = index
        if self.method == Provenance.ENUMERATED and p + q + r == 1:
            # E(e) = 0 exactly over all subsets
            return VEntry(0.0, self.method)
        prod = self.e0**p * self.e1**q * self.e2**r
        value = float(np.mean(prod))
        stderr = None
        if self.method == Provenance.MONTE_CARLO and self.count > 1:
            stderr = float(np.std(prod, ddof=1) / math.sqrt(self.count))
        return VEntry(value, self.method, stderr)


def relative_errors(
    pop: Population,
    n: int,
    *,
    budget: Optional[int] = None,
    reps: Optional[int] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> RelativeErrors:
    means = population_means(pop)
    means.require_nonzero()
    if not 1 <= n <= pop.N:
        raise ConfigurationError(f"need 1 <= n <= N (N={pop.N}, n={n})", module="moments")
    budget = budget or app_settings.RATIOLAB_ENUMERATION_BUDGET
    count = subset_count(pop.N, n)

    if n == pop.N:
        zero = np.zeros(1)
        return RelativeErrors(zero, zero, zero, Provenance.ENUMERATED)

    if count <= budget:
        logger.debug("relative_errors: enumerating %s subsets", count)
        blocks = list(iter_subset_chunks(pop.N, n))
        method = Provenance.ENUMERATED
    else:
        reps = reps or app_settings.RATIOLAB_MC_REPLICATIONS
        seed = seed if seed is not None else app_settings.RATIOLAB_SEED
        if seed is None:
            raise ConfigurationError(
                f"{count} subsets exceed the budget {budget}; Monte Carlo fallback needs a seed", module="moments"
            )
        logger.info("relative_errors: %s subsets over budget %s, Monte Carlo reps=%s seed=%s", count, budget, reps, seed)
        blocks = draw_subsets(seed, pop.N, n, reps, workers=workers)
        method = Provenance.MONTE_CARLO

    def rel(column: np.ndarray, mean: float) -> np.ndarray:
        return np.concatenate([(column[idx].mean(axis=1) - mean) / mean for idx in blocks if idx.size])

    return RelativeErrors(
        e0=rel(pop.y, means.ybar),
        e1=rel(pop.x, means.xbar),
        e2=rel(pop.z, means.zbar),
        method=method,
        seed=seed if method == Provenance.MONTE_CARLO else None,
    )


def v_exact(
    pop: Population,
    n: int,
    index: Index,
    budget: Optional[int] = None,
    *,
    reps: Optional[int] = None,
    seed: Optional[int] = None,
) -> VEntry:
    return relative_errors(pop, n, budget=budget, reps=reps, seed=seed).expectation(tuple(index))


@dataclass(frozen=True)
class VTable:
    entries: Mapping[Index, VEntry]
    N: Optional[int] = None
    n: Optional[int] = None
    means: Optional[Means] = None
    warnings: tuple[str, ...] = ()
    candidates: Mapping[Index, tuple[float, ...]] = field(default_factory=dict)

    @classmethod
    def from_values(
        cls,
        values: Mapping[Index, float],
        provenance: str = Provenance.LITERAL_FIXTURE,
        **kwargs,
    ) -> "VTable":
        entries = {tuple(k): VEntry(float(v), provenance) for k, v in values.items()}
        return cls(entries=MappingProxyType(entries), **kwargs)

    def __contains__(self, index: object) -> bool:
        return tuple(index) == (0, 0, 0) or tuple(index) in self.entries

    def __getitem__(self, index: Index) -> float:
        index = tuple(index)
        if index == (0, 0, 0):
            return 1.0
        try:
            return self.entries[index].value
        except KeyError:
            raise MissingVTermError([index], module="moments") from None

    def provenance(self, index: Index) -> str:
        return self.entries[tuple(index)].provenance

    def require(self, indices: Iterable[Index]) -> None:
        missing = [idx for idx in indices if idx not in self]
        if missing:
            raise MissingVTermError(missing)

    def require_means(self) -> Means:
        if self.means is None:
            raise ConfigurationError("V table carries no population means (Ybar, Xbar, Zbar)", module="moments")
        return self.means

    def provenance_summary(self, indices: Optional[Iterable[Index]] = None) -> dict[str, int]:
        keys = self.entries.keys() if indices is None else [i for i in indices if i in self.entries]
        summary: dict[str, int] = {}
        for idx in keys:
            prov = self.entries[idx].provenance
            summary[prov] = summary.get(prov, 0) + 1
        return dict(sorted(summary.items()))

    def to_records(self) -> list[str]:
        """``p q r value provenance`` lines, lowest degree first."""
        return [
            f"{p} {q} {r} {entry.value!r} {entry.provenance}"
            for (p, q, r), entry in sorted(self.entries.items(), key=lambda item: index_order(item[0]))
        ]


def build_v_table(
    pop: Population,
    n: int,
    policy: Optional[str] = None,
    *,
    budget: Optional[int] = None,
    reps: Optional[int] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    indices: Iterable[Index] = ALL_INDICES,
) -> VTable:
    """
    Build the V table of a population for samples of size n

    Each entry carries its provenance: ``closed-form`` for the SRSWOR
    identities, ``enumerated`` or ``monte-carlo`` for values taken from the
    sampling distribution itself.

    :param pop: population
    :type pop: Population
    :param n: sample size
    :type n: int
    :param policy: a ``VPolicy`` value; defaults to ``RATIOLAB_V_POLICY``
    :type policy: str
    :param budget: largest subset count enumerated before falling back to Monte Carlo
    :type budget: int
    :param reps: Monte Carlo replications
    :type reps: int
    :param seed: Monte Carlo seed; required once the budget is exceeded
    :type seed: int
    :param workers: Monte Carlo worker threads
    :type workers: int
    :param indices: V indices to fill
    :type indices: iterable of (p, q, r)
    :return: the table
    :rtype: VTable
    :raises ZeroMeanError: when a population mean is zero
    :raises ConfigurationError: when Monte Carlo is needed and no seed is set
    """
    policy = VPolicy(policy or app_settings.RATIOLAB_V_POLICY)
    means = population_means(pop)
    if means.ybar == 0 or means.xbar == 0 or means.zbar == 0:
        raise ZeroMeanError("V terms need nonzero population means", module="moments")
    indices = tuple(tuple(i) for i in indices)
    logger.debug("build_v_table: N=%s n=%s policy=%s indices=%s", pop.N, n, policy, len(indices))

    moments = L = None
    if policy != VPolicy.ENUMERATE_EVERYTHING:
        moments = moment_table(pop)
        L = l_coefficients(pop.N, n, order=max(sum(i) for i in indices) if indices else 2)

    oracle: Optional[RelativeErrors] = None
    entries: dict[Index, VEntry] = {}
    for idx in indices:
        if policy == VPolicy.CLOSED_FORM_ALL or (policy == VPolicy.CLOSED_FORM_WHERE_LISTED and idx in LISTED_INDICES):
            entries[idx] = VEntry(v_extended(moments, L, means, idx), Provenance.CLOSED_FORM)
            continue
        if oracle is None:
            oracle = relative_errors(pop, n, budget=budget, reps=reps, seed=seed, workers=workers)
        entries[idx] = oracle.expectation(idx)

    table = VTable(entries=MappingProxyType(entries), N=pop.N, n=n, means=means)
    logger.info("build_v_table: N=%s n=%s provenance=%s", pop.N, n, table.provenance_summary())
    return table
