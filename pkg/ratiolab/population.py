"""Finite population of (y, x, z) units"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import InputFormatError, ZeroMeanError

logger = logging.getLogger(__name__)

COLUMNS = ("y", "x", "z")


class Means(NamedTuple):
    ybar: float
    xbar: float
    zbar: float

    def require_nonzero(self, p: int = 1, q: int = 1, r: int = 1, *, module: str = "moments") -> None:
        for power, name, value in ((p, "Y", self.ybar), (q, "X", self.xbar), (r, "Z", self.zbar)):
            if power and value == 0:
                raise ZeroMeanError(f"population mean of {name} is zero; relative errors are undefined", module=module)


@dataclass(frozen=True, eq=False)
class Population:
    """The N units of the study variable y and the auxiliaries x and z.

    Columns are stored as read-only float arrays; build one with
    ``Population.from_columns``.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        lengths = set()
        for name in COLUMNS:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise InputFormatError(f"column {name} must be one-dimensional", module="moments")
            if not np.all(np.isfinite(arr)):
                raise InputFormatError(f"column {name} holds non-finite values", module="moments")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            lengths.add(arr.shape[0])
        if len(lengths) != 1:
            raise InputFormatError(f"columns differ in length: {sorted(lengths)}", module="moments")
        if self.N < 1:
            raise InputFormatError("empty population", module="moments")

    @classmethod
    def from_columns(cls, y: Sequence[float], x: Sequence[float], z: Sequence[float]) -> "Population":
        return cls(y=np.asarray(y, dtype=float), x=np.asarray(x, dtype=float), z=np.asarray(z, dtype=float))

    @property
    def N(self) -> int:
        return int(self.y.shape[0])

    @property
    def means(self) -> Means:
        return population_means(self)

    def column(self, i: int) -> np.ndarray:
        return (self.y, self.x, self.z)[i]

    def scaled(self, cy: float = 1.0, cx: float = 1.0, cz: float = 1.0) -> "Population":
        return Population(y=self.y * cy, x=self.x * cx, z=self.z * cz)


def population_means(pop: Population) -> Means:
    if pop.N < 1:
        raise InputFormatError("empty population", module="moments")
    means = Means(float(np.mean(pop.y)), float(np.mean(pop.x)), float(np.mean(pop.z)))
    logger.debug("population_means: N=%s means=%s", pop.N, means)
    return means
