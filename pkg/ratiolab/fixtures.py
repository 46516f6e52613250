"""Loaders for population CSV files and literal V-value fixtures"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from types import MappingProxyType
from typing import Optional, Union

import pandas as pd

from .exceptions import FixtureFormatError, PopulationFormatError
from .moments import Index, Means, Provenance, VTable, v_name
from .population import COLUMNS, Population

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DECIMAL = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")
V_LINE = re.compile(r"^V(\d)(\d)(\d)\s*=\s*(.*?)\s*$")
META_LINE = re.compile(r"^(Ybar|Xbar|Zbar|N|n)\s*=\s*(.*?)\s*$")
# pandas tokenizer message; its line numbers count the header as line 1
FIELD_COUNT = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")

# fourth-order entries this many times larger than the largest variance are flagged
MAGNITUDE_RATIO = 100.0


def load_population(path: PathLike) -> Population:
    """
    Read a strict ``y,x,z`` CSV: one decimal number per cell, one unit per row

    The header is read as an ordinary line so that every row, the first data
    row included, must have exactly as many fields as the header.

    :param path: CSV file
    :type path: str or Path
    :return: the population
    :rtype: Population
    :raises PopulationFormatError: on a missing file, a wrong header, a row
        with the wrong number of fields or a cell that is not a decimal number
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise PopulationFormatError(f"population file not found: {path}")
    except pd.errors.EmptyDataError:
        raise PopulationFormatError(f"{path} is empty")
    except pd.errors.ParserError as e:
        if m := FIELD_COUNT.search(str(e)):
            expected, line_no, saw = (int(g) for g in m.groups())
            if expected != len(COLUMNS):
                raise PopulationFormatError(f"expected header y,x,z (header has {expected} fields)")
            raise PopulationFormatError(f"row {line_no - 1}: expected {expected} fields, got {saw}", row=line_no - 1)
        raise PopulationFormatError(f"{path}: {e}")

    header = [str(c).strip() for c in frame.iloc[0]]
    if header != list(COLUMNS):
        if sorted(header) == sorted(COLUMNS):
            raise PopulationFormatError("column order must be y,x,z")
        raise PopulationFormatError(f"expected header y,x,z (got {','.join(header)})")
    rows = frame.iloc[1:]
    if rows.empty:
        raise PopulationFormatError(f"{path} holds no data rows")

    for row_no, row in enumerate(rows.itertuples(index=False), start=1):
        for column, cell in zip(COLUMNS, row):
            if not isinstance(cell, str):
                raise PopulationFormatError(
                    f"row {row_no}: expected {len(COLUMNS)} fields, got fewer", row=row_no, column=column
                )
            if not DECIMAL.match(cell.strip()):
                raise PopulationFormatError(
                    f"row {row_no}, column {column}: not a decimal number: {cell!r}", row=row_no, column=column
                )

    pop = Population.from_columns(*(rows[i].str.strip().astype(float).to_numpy() for i in range(len(COLUMNS))))
    logger.info("load_population: path=%s N=%s means=%s", path, pop.N, pop.means)
    return pop


def mirror_index(index: Index) -> Index:
    """Same term with the roles of x and z swapped."""
    p, q, r = index
    return (p, r, q)


def _magnitude_warnings(values: dict[Index, float]) -> list[str]:
    variances = [abs(values[i]) for i in ((2, 0, 0), (0, 2, 0), (0, 0, 2)) if i in values]
    if not variances or max(variances) == 0:
        return []
    limit = MAGNITUDE_RATIO * max(variances)
    return [
        f"{v_name(idx)} = {value!r} is more than {MAGNITUDE_RATIO:g} times the largest variance term"
        for idx, value in values.items()
        if sum(idx) == 4 and abs(value) > limit
    ]


def load_v_fixture(path: PathLike, strict: bool = True) -> VTable:
    """Literal ``Vpqr = value`` list; ``#`` starts a comment.

    Duplicated indices keep the first value and record every candidate; an
    index listed exactly twice whose x/z mirror is absent gives its second
    value to the mirror (the printed list repeats V020 where V002 belongs). A
    malformed line raises in strict mode and is skipped with a warning
    otherwise.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FixtureFormatError(f"fixture file not found: {path}")

    values: dict[Index, float] = {}
    candidates: dict[Index, list[float]] = {}
    meta: dict[str, str] = {}
    warnings: list[str] = []

    def reject(message: str, raw: str, lineno: int) -> None:
        if strict:
            raise FixtureFormatError(f"line {lineno}: {message}: {raw!r}", line=raw, lineno=lineno)
        warnings.append(f"line {lineno}: {message}, skipped: {raw!r}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        raw = raw.rstrip("\r")
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := META_LINE.match(line):
            key, value = m.groups()
            if not DECIMAL.match(value) or (key in ("N", "n") and not value.isdigit()):
                reject(f"malformed {key} value", raw, lineno)
                continue
            meta[key] = value
            continue
        m = V_LINE.match(line)
        if not m:
            reject("expected 'Vpqr = value'", raw, lineno)
            continue
        index = (int(m.group(1)), int(m.group(2)), int(m.group(3)))
        if sum(index) > 4:
            reject(f"{v_name(index)} is above fourth order", raw, lineno)
            continue
        if not DECIMAL.match(m.group(4)):
            reject("malformed value", raw, lineno)
            continue
        value = float(m.group(4))
        candidates.setdefault(index, []).append(value)
        values.setdefault(index, value)

    if not values:
        raise FixtureFormatError(f"{path} holds no V entries")

    for index, found in list(candidates.items()):
        if len(found) < 2:
            continue
        listed = ", ".join(repr(v) for v in found)
        mirror = mirror_index(index)
        if len(found) == 2 and mirror != index and mirror not in candidates:
            values[mirror] = found[1]
            warnings.append(
                f"{v_name(index)} listed 2 times ({listed}); keeping {found[0]!r}, reading {found[1]!r} as {v_name(mirror)}"
            )
        else:
            warnings.append(f"{v_name(index)} listed {len(found)} times ({listed}); keeping {found[0]!r}")
    warnings.extend(_magnitude_warnings(values))
    for message in warnings:
        logger.warning("load_v_fixture: %s: %s", path.name, message)

    means: Optional[Means] = None
    if all(k in meta for k in ("Ybar", "Xbar", "Zbar")):
        means = Means(float(meta["Ybar"]), float(meta["Xbar"]), float(meta["Zbar"]))

    table = VTable.from_values(
        values,
        provenance=Provenance.LITERAL_FIXTURE,
        N=int(meta["N"]) if "N" in meta else None,
        n=int(meta["n"]) if "n" in meta else None,
        means=means,
        warnings=tuple(warnings),
        candidates=MappingProxyType({k: tuple(v) for k, v in candidates.items() if len(v) > 1}),
    )
    logger.info("load_v_fixture: path=%s entries=%s warnings=%s", path, len(values), len(warnings))
    return table
