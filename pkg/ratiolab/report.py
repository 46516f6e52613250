"""Run configuration and the MSE report.

A run reads either a raw population (``data``) or a literal V-value fixture
(``fixture``), picks estimator parameters, and reports first-order,
second-order and oracle values. Every cell carries the provenance of the
numbers it was computed from.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import pandas as pd

from django.db import models

from . import app_settings, errata
from .approximation import (
    FormulaMode,
    OptimizationMethod,
    PublishedConstants,
    coefficient_map,
    compare_modes,
    first_order_bias,
    first_order_mse,
    grid_search_t1,
    optimal_parameters,
    optimize_t3_alpha,
    regression_min_mse,
    second_order_mse,
    significant_terms,
)
from .estimators import T1, EstimatorSpec, Family, describe, make_spec, spec_params
from .exceptions import ConfigurationError, MissingPublishedConstantError, MissingVTermError, RatioLabError
from .fixtures import load_population, load_v_fixture
from .moments import Means, MomentTable, VPolicy, VTable, build_v_table, moment_table
from .population import Population
from .simulation import SimResult, enumerate_exact, monte_carlo, subset_count

logger = logging.getLogger(__name__)

# published first- and second-order MSEs for the head-measurement data (N = 25, n = 7)
PRINTED_SOURCE = (25, 7)
PRINTED_MSE1 = {Family.T1: 4.508, Family.T2: 4.508, Family.T3: 4.508, Family.T4: 4.508, Family.T5: 4.508}
PRINTED_MSE2 = {
    Family.T1: 16156.644,
    Family.T2: 27204.321,
    Family.T3: 17679.890,
    Family.T4: 20928.689,
    Family.T5: 275.926,
}

CONFIG_KEYS = (
    "data", "fixture", "n", "estimators", "params", "mode", "reps", "seed", "budget", "out", "policy", "workers",
    "dump_v", "dump_moments",
)
PUBLISHED_PREFIX = "published."

# relative gap beyond which two optima or two first-order MSEs are reported as different
AGREEMENT_RTOL = 1e-6


class ReportMode(models.TextChoices):
    AS_PUBLISHED = "as-published", "As published"
    RE_DERIVED = "re-derived", "Re-derived"
    BOTH = "both", "Both"


class ParamPolicy(models.TextChoices):
    EXPLICIT = "explicit", "Explicit values"
    OPTIMAL_PUBLISHED = "optimal-published", "Optimal via published formula"
    OPTIMAL_QUADRATIC = "optimal-quadratic", "Optimal via quadratic solve"
    OPTIMAL_SEARCH = "optimal-search", "Optimal via numerical search"


POLICY_METHODS = {
    ParamPolicy.OPTIMAL_PUBLISHED: OptimizationMethod.PUBLISHED_FORMULA,
    ParamPolicy.OPTIMAL_QUADRATIC: OptimizationMethod.QUADRATIC_SOLVE,
}


# Configuration


def parse_params(text: Optional[str]) -> tuple[str, dict[str, dict[str, float]]]:
    """``policy;family:key=value,key=value;...`` with every part optional.

    >>> parse_params("optimal-published;t5:delta1=1,delta2=1")
    ('optimal-published', {'t5': {'delta1': 1.0, 'delta2': 1.0}})
    """
    policy = ParamPolicy.OPTIMAL_QUADRATIC
    overrides: dict[str, dict[str, float]] = {}
    for part in (p.strip() for p in (text or "").split(";")):
        if not part:
            continue
        if ":" not in part:
            try:
                policy = ParamPolicy(part)
            except ValueError:
                raise ConfigurationError(f"unknown parameter policy {part!r}", module="cli")
            continue
        family, _, assignments = part.partition(":")
        try:
            family = Family(family.strip().lower()).value
        except ValueError:
            raise ConfigurationError(f"unknown estimator family {family!r} in params", module="cli")
        values = overrides.setdefault(family, {})
        for item in filter(None, (a.strip() for a in assignments.split(","))):
            key, sep, raw = item.partition("=")
            try:
                values[key.strip()] = float(raw)
            except ValueError:
                sep = ""
            if not sep:
                raise ConfigurationError(f"malformed parameter {item!r} for {family}", module="cli")
    return str(policy), overrides


def parse_config_file(path: Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}", module="cli")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'", module="cli")
        if key not in CONFIG_KEYS and not key.startswith(PUBLISHED_PREFIX):
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}", module="cli")
        values[key] = value
    return values


def _as_int(key: str, value: Any) -> Optional[int]:
    if value is None or value == "":
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key} must be an integer (got {value!r})", module="cli")


@dataclass(frozen=True)
class RunConfig:
    data: Optional[Path] = None
    fixture: Optional[Path] = None
    n: Optional[int] = None
    estimators: tuple[str, ...] = tuple(f.value for f in Family)
    params: str = ParamPolicy.OPTIMAL_QUADRATIC
    overrides: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    mode: str = ReportMode.RE_DERIVED
    reps: Optional[int] = None
    seed: Optional[int] = None
    budget: Optional[int] = None
    out: Optional[Path] = None
    policy: str = VPolicy.CLOSED_FORM_WHERE_LISTED
    workers: Optional[int] = None
    dump_v: Optional[Path] = None
    dump_moments: Optional[Path] = None
    published: PublishedConstants = field(default_factory=PublishedConstants)

    @classmethod
    def from_values(cls, values: Mapping[str, Any]) -> "RunConfig":
        """Build from config-file and flag values (flags already merged over file keys)."""
        estimators = values.get("estimators") or ",".join(f.value for f in Family)
        if isinstance(estimators, str):
            estimators = [e.strip().lower() for e in estimators.split(",") if e.strip()]
        try:
            estimators = tuple(Family(e).value for e in estimators)
        except ValueError as e:
            raise ConfigurationError(f"unknown estimator: {e}", module="cli")
        policy, overrides = parse_params(values.get("params"))
        published = PublishedConstants(
            {
                key[len(PUBLISHED_PREFIX):]: _published_value(key, value)
                for key, value in values.items()
                if key.startswith(PUBLISHED_PREFIX)
            }
        )
        try:
            mode = ReportMode(values.get("mode") or app_settings.RATIOLAB_FORMULA_MODE)
            v_policy = VPolicy(values.get("policy") or app_settings.RATIOLAB_V_POLICY)
        except ValueError as e:
            raise ConfigurationError(str(e), module="cli")
        config = cls(
            data=Path(values["data"]) if values.get("data") else None,
            fixture=Path(values["fixture"]) if values.get("fixture") else None,
            n=_as_int("n", values.get("n")),
            estimators=estimators,
            params=policy,
            overrides=overrides,
            mode=mode,
            reps=_as_int("reps", values.get("reps")),
            seed=_as_int("seed", values.get("seed")),
            budget=_as_int("budget", values.get("budget")),
            out=Path(values["out"]) if values.get("out") else None,
            policy=v_policy,
            workers=_as_int("workers", values.get("workers")),
            dump_v=Path(values["dump_v"]) if values.get("dump_v") else None,
            dump_moments=Path(values["dump_moments"]) if values.get("dump_moments") else None,
            published=published,
        )
        config.validate()
        return config

    def validate(self) -> None:
        if (self.data is None) == (self.fixture is None):
            raise ConfigurationError("give exactly one of --data or --fixture", module="cli")
        if not self.estimators:
            raise ConfigurationError("select at least one estimator", module="cli")
        if self.n is not None and self.n < 1:
            raise ConfigurationError(f"n must be at least 1 (got {self.n})", module="cli")
        if self.fixture is not None and (self.reps is not None or self.seed is not None):
            raise ConfigurationError(
                "fixture mode has no raw data; enumeration and Monte Carlo (--reps, --seed) are unavailable",
                module="cli",
            )
        if self.data is not None and self.n is None:
            raise ConfigurationError("--n is required with --data", module="cli")
        if self.reps is not None and self.reps < 1:
            raise ConfigurationError(f"reps must be at least 1 (got {self.reps})", module="cli")
        if self.fixture is not None and self.dump_moments is not None:
            raise ConfigurationError("fixture mode has no raw data; --dump-moments needs --data", module="cli")

    @property
    def modes(self) -> tuple[str, ...]:
        if self.mode == ReportMode.BOTH:
            return (FormulaMode.AS_PUBLISHED, FormulaMode.RE_DERIVED)
        return (FormulaMode(self.mode),)


def _published_value(key: str, value: Any) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key} must be a number (got {value!r})", module="cli")


# Report


@dataclass(frozen=True)
class Cell:
    estimator: str
    metric: str
    mode: str
    value: Optional[float]
    provenance: str
    note: Optional[str] = None

    def render(self) -> str:
        if self.value is None:
            return f"n/a [{self.note}]"
        return f"{self.value:.6g} [{self.provenance}]"

    def as_record(self) -> dict[str, Any]:
        record = {f.name: getattr(self, f.name) for f in fields(self)}
        if record["note"] is None:
            del record["note"]
        return record


@dataclass
class ReportRow:
    family: str
    spec: Optional[EstimatorSpec]
    cells: list[Cell] = field(default_factory=list)
    alternative: Optional[EstimatorSpec] = None

    @property
    def label(self) -> str:
        return describe(self.spec) if self.spec is not None else self.family


@dataclass
class MseReport:
    source: str
    N: Optional[int]
    n: Optional[int]
    rows: list[ReportRow] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    footnotes: list[str] = field(default_factory=list)
    oracle: dict[str, SimResult] = field(default_factory=dict)
    v_table: Optional[VTable] = None
    moments: Optional[MomentTable] = None

    @property
    def cells(self) -> list[Cell]:
        return [cell for row in self.rows for cell in row.cells]

    def records(self) -> list[dict[str, Any]]:
        return [cell.as_record() for cell in self.cells]


def _provenance(v: VTable, coefficients: Mapping) -> str:
    summary = v.provenance_summary(significant_terms(coefficients))
    return "+".join(summary) or "closed-form"


def _formula_cell(
    row: ReportRow,
    metric: str,
    mode: str,
    v: VTable,
    means: Optional[Means],
    published: PublishedConstants,
    compute,
) -> Cell:
    spec = row.spec
    try:
        coefficients = coefficient_map(spec, metric, mode, means, published)
        value = compute()
    except MissingVTermError as e:
        names = ", ".join("V%d%d%d" % idx for idx in e.indices)
        return Cell(row.family, metric, mode, None, "none", note=f"missing {names}")
    except MissingPublishedConstantError as e:
        return Cell(row.family, metric, mode, None, "none", note=f"needs published.{', published.'.join(e.symbols)}")
    return Cell(row.family, metric, mode, value, _provenance(v, coefficients))


def _choose_spec(family: str, config: RunConfig, v: VTable, means: Optional[Means]) -> tuple[EstimatorSpec, Optional[EstimatorSpec]]:
    template = make_spec(family, **config.overrides.get(family, {}))
    if config.params == ParamPolicy.EXPLICIT:
        return template, None
    if config.params == ParamPolicy.OPTIMAL_SEARCH:
        return _searched_spec(family, v, means, template), None
    method = POLICY_METHODS[ParamPolicy(config.params)]
    chosen = optimal_parameters(family, v, means, method, template=template).spec
    other_method = next(m for m in OptimizationMethod if m != method)
    try:
        other = optimal_parameters(family, v, means, other_method, template=template).spec
    except RatioLabError:
        return chosen, None
    differs = any(
        abs(a - b) > AGREEMENT_RTOL * max(1.0, abs(a))
        for a, b in zip(spec_params(chosen).values(), spec_params(other).values())
    )
    return chosen, other if differs else None


def _searched_spec(family: str, v: VTable, means: Optional[Means], template: EstimatorSpec) -> EstimatorSpec:
    # t1 on a grid and t3's alpha by line search; other families use the quadratic solve
    if family == Family.T1:
        grid = grid_search_t1(v, means=means)
        return T1(alpha1=grid.alpha1, alpha2=grid.alpha2)
    if family == Family.T3:
        return optimize_t3_alpha(v, means).spec
    return optimal_parameters(family, v, means, OptimizationMethod.QUADRATIC_SOLVE, template=template).spec


def _oracle(pop: Population, spec: EstimatorSpec, config: RunConfig, n: int) -> SimResult:
    budget = config.budget or app_settings.RATIOLAB_ENUMERATION_BUDGET
    if subset_count(pop.N, n) <= budget:
        return enumerate_exact(pop, spec, n, budget)
    seed = config.seed if config.seed is not None else app_settings.RATIOLAB_SEED
    if seed is None:
        raise ConfigurationError(
            f"{subset_count(pop.N, n)} subsets exceed the budget {budget}; Monte Carlo needs --seed", module="cli"
        )
    reps = config.reps or app_settings.RATIOLAB_MC_REPLICATIONS
    return monte_carlo(pop, spec, n, reps, seed, workers=config.workers)


def _load_source(config: RunConfig) -> tuple[VTable, Optional[Population], Optional[int], list[str]]:
    if config.fixture is not None:
        v = load_v_fixture(config.fixture, strict=False)
        return v, None, config.n or v.n, list(v.warnings)
    pop = load_population(config.data)
    if config.n > pop.N:
        raise ConfigurationError(f"sample size {config.n} exceeds population size {pop.N}", module="cli")
    v = build_v_table(
        pop,
        config.n,
        config.policy,
        budget=config.budget,
        reps=config.reps,
        seed=config.seed,
        workers=config.workers,
    )
    return v, pop, config.n, []


def run_report(config: RunConfig) -> MseReport:
    """
    Load the configured source, choose parameters and fill the report

    A cell whose formula cannot be evaluated (a missing V term, an undefined
    published symbol) is kept with no value and a note; the rest of the row
    is still computed.

    :param config: validated run configuration
    :type config: RunConfig
    :return: rows of cells, warnings, footnotes, oracle results and the V table
    :rtype: MseReport
    :raises InputFormatError: when the population CSV or fixture is malformed
    :raises NumericalError: when an optimum is singular or an estimator is undefined
    :raises ConfigurationError: when the run cannot be carried out as configured
    """
    config.validate()
    v, pop, n, warnings = _load_source(config)
    means = pop.means if pop is not None else v.require_means()
    source = str(config.fixture or config.data)
    report = MseReport(source=source, N=pop.N if pop is not None else v.N, n=n, warnings=warnings, v_table=v)
    if pop is not None and config.dump_moments is not None:
        report.moments = moment_table(pop)
    show_printed = config.fixture is not None and (v.N, v.n) == PRINTED_SOURCE
    logger.info("run_report: source=%s N=%s n=%s estimators=%s", source, report.N, n, ",".join(config.estimators))

    regression: Optional[float] = None
    try:
        regression = regression_min_mse(v, means)
    except RatioLabError as e:
        report.warnings.append(f"regression benchmark unavailable: {e.message}")

    for family in config.estimators:
        spec, alternative = _choose_spec(family, config, v, means)
        row = ReportRow(family=family, spec=spec, alternative=alternative)
        report.rows.append(row)
        if alternative is not None:
            report.footnotes.append(
                f"{family}: published formula and quadratic solve disagree; other optimum {describe(alternative)}"
                f" [{', '.join(errata.ids_for(family, errata.OPTIMUM)) or 'no ledger entry'}]"
            )

        mse1 = _formula_cell(
            row, "mse1", FormulaMode.RE_DERIVED, v, means, config.published,
            lambda: first_order_mse(spec, v, means),
        )
        row.cells.append(mse1)
        for mode in config.modes:
            row.cells.append(
                _formula_cell(
                    row, errata.BIAS1, mode, v, means, config.published,
                    lambda mode=mode: first_order_bias(spec, v, means, mode, config.published),
                )
            )
        for mode in config.modes:
            row.cells.append(
                _formula_cell(
                    row, errata.MSE2, mode, v, means, config.published,
                    lambda mode=mode: second_order_mse(spec, v, mode, config.published, means),
                )
            )
        if regression is not None and mse1.value is not None:
            row.cells.append(Cell(family, "regression_excess", "-", mse1.value - regression, mse1.provenance))
        if pop is not None:
            result = _oracle(pop, spec, config, n)
            report.oracle[family] = result
            tag = "enumerated" if result.method == "enumeration" else "monte-carlo"
            row.cells.append(Cell(family, "oracle_mse", result.method, result.mse, tag))
            row.cells.append(Cell(family, "oracle_bias", result.method, result.bias, tag))
            if result.failures:
                report.warnings.append(f"{family}: {result.failures} Monte Carlo replications were undefined and excluded")
        if show_printed:
            row.cells.append(Cell(family, "printed_mse1", "-", PRINTED_MSE1[Family(family)], "literal-fixture"))
            row.cells.append(Cell(family, "printed_mse2", "-", PRINTED_MSE2[Family(family)], "literal-fixture"))
            for cell in [c for c in row.cells if c.metric == errata.MSE2 and c.value is not None]:
                row.cells.append(
                    Cell(family, "printed_mse2_delta", cell.mode, cell.value - PRINTED_MSE2[Family(family)], cell.provenance)
                )
        if config.mode == ReportMode.BOTH:
            report.footnotes.extend(_mode_footnotes(spec, means, config.published))

    if regression is not None:
        report.rows.append(
            ReportRow(
                family="regression",
                spec=None,
                cells=[Cell("regression", "mse1", "-", regression, _provenance(v, _regression_terms()))],
            )
        )
    report.warnings.extend(_first_order_agreement(report, config.params))
    return report


def _regression_terms() -> dict:
    return {idx: 1.0 for idx in ((2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1))}


def _mode_footnotes(spec: EstimatorSpec, means: Means, published: PublishedConstants) -> list[str]:
    family = spec.family.value
    try:
        found = compare_modes(spec, errata.MSE2, means, published)
    except MissingPublishedConstantError as e:
        return [f"{family}: as-published second-order form not comparable ({e.message})"]
    if not found:
        return []
    terms = ", ".join(d.name for d in found)
    ids = sorted({i for d in found for i in d.errata})
    return [f"{family}: second-order forms differ at {terms} [{', '.join(ids) or 'no ledger entry'}]"]


def _first_order_agreement(report: MseReport, params: str) -> list[str]:
    values = {
        row.family: cell.value
        for row in report.rows
        if row.spec is not None
        for cell in row.cells
        if cell.metric == "mse1" and cell.value is not None
    }
    if Family.T1.value not in values:
        return []
    common = values[Family.T1.value]
    messages = []
    for family, value in values.items():
        if abs(value - common) > AGREEMENT_RTOL * max(1.0, abs(common)):
            if params == ParamPolicy.OPTIMAL_PUBLISHED:
                ids = ", ".join(errata.ids_for(family, errata.OPTIMUM)) or "no ledger entry"
            elif params == ParamPolicy.OPTIMAL_SEARCH:
                ids = "search tolerance"
            else:
                ids = "constrained optimum"
            messages.append(f"{family}: first-order MSE {value:.6g} differs from t1 {common:.6g} [{ids}]")
    return messages


# Rendering

COLUMN_ORDER = (
    ("mse1", None, "MSE1"),
    ("bias1", FormulaMode.AS_PUBLISHED, "bias1 published"),
    ("bias1", FormulaMode.RE_DERIVED, "bias1 re-derived"),
    ("mse2", FormulaMode.AS_PUBLISHED, "MSE2 published"),
    ("mse2", FormulaMode.RE_DERIVED, "MSE2 re-derived"),
    ("regression_excess", None, "excess over regression"),
    ("oracle_mse", None, "oracle MSE"),
    ("oracle_bias", None, "oracle bias"),
    ("printed_mse1", None, "printed MSE1"),
    ("printed_mse2", None, "printed MSE2"),
    ("printed_mse2_delta", FormulaMode.AS_PUBLISHED, "delta published"),
    ("printed_mse2_delta", FormulaMode.RE_DERIVED, "delta re-derived"),
)


def report_frame(report: MseReport) -> pd.DataFrame:
    rows = []
    for row in report.rows:
        out = {"estimator": row.label}
        for metric, mode, title in COLUMN_ORDER:
            for cell in row.cells:
                if cell.metric == metric and (mode is None or cell.mode == mode):
                    out[title] = cell.render()
        rows.append(out)
    frame = pd.DataFrame(rows)
    columns = ["estimator"] + [title for _, _, title in COLUMN_ORDER if title in frame.columns]
    return frame[columns].fillna("")


def render_text(report: MseReport) -> str:
    header = f"source: {report.source}  N={report.N if report.N is not None else '?'}  n={report.n if report.n is not None else '?'}"
    lines = [header, "", report_frame(report).to_string(index=False)]
    if report.footnotes:
        lines += ["", "notes:"] + [f"  {i}. {note}" for i, note in enumerate(report.footnotes, start=1)]
    if report.warnings:
        lines += ["", "warnings:"] + [f"  - {warning}" for warning in report.warnings]
    return "\n".join(lines) + "\n"


def write_records(report: MseReport, path: Path) -> int:
    records = report.records()
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    logger.info("write_records: path=%s records=%s", path, len(records))
    return len(records)


def write_table_records(table: Union[VTable, MomentTable], path: Path) -> int:
    """
    Write a V table or moment table as ``p q r value provenance`` lines

    :param table: table to dump
    :type table: VTable or MomentTable
    :param path: output file, overwritten
    :type path: Path
    :return: number of lines written
    :rtype: int
    """
    lines = table.to_records()
    Path(path).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    logger.info("write_table_records: path=%s records=%s", path, len(lines))
    return len(lines)
