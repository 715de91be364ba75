"""Worker-year panel container, CSV ingestion, risk merge, sample filter and
the within / between / first-difference transforms used by the estimators.

Datasets are never modified in place. Every transform returns a new object,
so a dataset can be shared freely between estimator runs.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import (
    ConfigurationError,
    IntegrityError,
    MergeError,
    SchemaError,
    UndefinedInputError,
)

WORKER = "worker_id"
PERIOD = "year"
INDUSTRY = "industry"
OUTCOME = "log_wage"
RISK = "risk"
KEYS = (WORKER, PERIOD, INDUSTRY)

ROLES = ("outcome", "risk", "control", "instrument", "proxy", "id", "weight")

# Fatal accidents per 10,000 workers by one-digit industry group and survey year.
INDUSTRY_FATAL_RISK = {
    "Agriculture, Forestry and Fisheries": {2009: 19.6, 2006: 11.4, 2004: 14.2},
    "Mining": {2009: 22.0, 2006: 37.2, 2004: 8.8},
    "Manufacturing": {2009: 6.4, 2006: 8.2, 2004: 10.4},
    "Electricity, Gas and Water": {2009: 34.2, 2006: 0.0, 2004: 253.4},
    "Construction": {2009: 22.6, 2006: 25.3, 2004: 23.0},
    "Trade": {2009: 5.2, 2006: 9.1, 2004: 2.1},
    "Transportation, Storage & Communication": {2009: 29.1, 2006: 35.4, 2004: 23.3},
    "Services": {2009: 7.0, 2006: 7.9, 2004: 3.6},
}


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8")
    return source


@dataclass(frozen=True)
class PanelSchema:
    """Column mapping for a panel CSV.

    ``roles`` maps variable names to one of :data:`ROLES`; columns not
    listed are registered as controls. Columns in ``exclude`` are skipped.
    """

    worker_id: str = WORKER
    period: str = PERIOD
    industry: str = INDUSTRY
    outcome: str = OUTCOME
    roles: Mapping[str, str] = field(default_factory=dict)
    dummies: tuple = ()
    exclude: tuple = ()

    def __post_init__(self):
        bad = {k: v for k, v in self.roles.items() if v not in ROLES}
        if bad:
            raise ConfigurationError(f"unknown variable role(s): {bad}")


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Long-format worker-year observations.

    Rows are kept sorted by ``(worker_id, year)``. Key columns are
    ``worker_id``, ``year`` (int) and ``industry`` (str); ``log_wage`` is the
    outcome. Every other column is a registered numeric variable whose role
    is recorded in ``roles``. Missing values are allowed until the sample
    filter removes them; estimators refuse columns that still contain NaN.
    """

    frame: pd.DataFrame
    roles: Mapping[str, str]
    dummies: frozenset = frozenset()

    def __post_init__(self):
        frame = self.frame
        for col in KEYS + (OUTCOME,):
            if col not in frame.columns:
                raise SchemaError(col)
        frame = frame.copy()
        frame[WORKER] = frame[WORKER].astype(str)
        frame[INDUSTRY] = frame[INDUSTRY].astype(str)
        frame[PERIOD] = frame[PERIOD].astype(np.int64)
        dup = frame.duplicated([WORKER, PERIOD], keep="first")
        if dup.any():
            row = frame.loc[dup.idxmax()]
            raise IntegrityError(
                f"duplicate (worker_id, year) pair ({row[WORKER]}, {row[PERIOD]})"
            )
        frame = frame.sort_values([WORKER, PERIOD], kind="mergesort").reset_index(drop=True)
        roles = dict(self.roles)
        roles.setdefault(OUTCOME, "outcome")
        for col in frame.columns:
            if col not in KEYS:
                roles.setdefault(col, "control")
        for name in list(roles):
            if name not in frame.columns:
                raise SchemaError(name, f"registered variable {name!r} has no column")
        for name in self.dummies:
            if name not in frame.columns:
                raise SchemaError(name, f"dummy variable {name!r} has no column")
            vals = frame[name].to_numpy(dtype=float)
            vals = vals[~np.isnan(vals)]
            if not np.isin(vals, (0.0, 1.0)).all():
                raise IntegrityError(f"dummy variable {name!r} takes values outside {{0, 1}}")
        if "hours" in frame.columns:
            hours = frame["hours"].to_numpy(dtype=float)
            if (hours[~np.isnan(hours)] <= 0).any():
                raise IntegrityError("monthly hours must be positive")
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "dummies", frozenset(self.dummies))

    @classmethod
    def from_frame(cls, frame, roles=None, dummies=()):
        return cls(frame, roles or {}, frozenset(dummies))

    def __len__(self):
        return len(self.frame)

    @property
    def n_obs(self):
        return len(self.frame)

    @property
    def n_workers(self):
        return len(self.group_sizes)

    @property
    def periods(self):
        return sorted(self.frame[PERIOD].unique().tolist())

    @property
    def variables(self):
        return [c for c in self.frame.columns if c not in KEYS]

    @cached_property
    def worker_codes(self):
        """Integer group code per row, 0..N-1 in sorted worker order."""
        codes, _ = pd.factorize(self.frame[WORKER], sort=False)
        return codes

    @cached_property
    def group_sizes(self):
        return np.bincount(self.worker_codes)

    @cached_property
    def positions(self):
        """Worker id -> row positions, sorted by period."""
        out = {}
        for pos, wid in enumerate(self.frame[WORKER]):
            out.setdefault(wid, []).append(pos)
        return out

    def column(self, name):
        if name not in self.frame.columns or name in (WORKER, INDUSTRY):
            raise ConfigurationError(f"variable {name!r} is not registered in the dataset")
        return self.frame[name].to_numpy(dtype=float)

    def matrix(self, names):
        if not names:
            return np.empty((self.n_obs, 0))
        return np.column_stack([self.column(n) for n in names])

    def with_columns(self, values, roles=None):
        """Return a copy with columns added or replaced."""
        frame = self.frame.copy()
        for name, arr in values.items():
            frame[name] = arr
        new_roles = dict(self.roles)
        new_roles.update(roles or {})
        return PanelDataset(frame, new_roles, self.dummies)

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return PanelDataset(self.frame.loc[mask].reset_index(drop=True), self.roles, self.dummies)


def _parse_floats(text):
    """Exact decimal parse; anything unparseable or infinite becomes NaN."""
    text = text.str.strip()
    ok = pd.to_numeric(text, errors="coerce").notna().to_numpy()
    out = np.full(len(text), np.nan)
    out[ok] = text[ok].astype(float).to_numpy()
    out[~np.isfinite(out)] = np.nan
    return out


def load_panel(source, schema=None):
    """Read a header-bearing, comma-separated panel table.

    Numeric parse failures in variable columns become NaN; rows are only
    removed later by :func:`apply_filter`.
    """
    schema = schema or PanelSchema()
    fh = _open_text(source)
    try:
        raw = pd.read_csv(fh, dtype=str, keep_default_na=False, skipinitialspace=True)
    finally:
        if fh is not source:
            fh.close()
    raw.columns = [c.strip() for c in raw.columns]
    for col in (schema.worker_id, schema.period, schema.industry, schema.outcome):
        if col not in raw.columns:
            raise SchemaError(col)
    rename = {
        schema.worker_id: WORKER,
        schema.period: PERIOD,
        schema.industry: INDUSTRY,
        schema.outcome: OUTCOME,
    }
    missing = [v for v in list(schema.roles) + list(schema.dummies) if v not in raw.columns]
    if missing:
        raise SchemaError(missing[0])
    raw = raw[[c for c in raw.columns if c not in schema.exclude or c in rename]]
    frame = raw.rename(columns=rename)

    years = pd.to_numeric(frame[PERIOD].str.strip(), errors="coerce")
    if years.isna().any():
        bad = int(np.flatnonzero(years.isna().to_numpy())[0])
        raise IntegrityError(f"row {bad + 1}: unparseable period {frame[PERIOD].iloc[bad]!r}")
    frame[PERIOD] = years.astype(np.int64)
    frame[WORKER] = frame[WORKER].str.strip()
    frame[INDUSTRY] = frame[INDUSTRY].str.strip()
    for col in frame.columns:
        if col in KEYS:
            continue
        frame[col] = _parse_floats(frame[col])

    roles = {OUTCOME: "outcome"}
    for name, role in schema.roles.items():
        roles[rename.get(name, name)] = role
    return PanelDataset(frame, roles, frozenset(schema.dummies))


@dataclass(frozen=True)
class RiskTable:
    """Fatal risk per 10,000 workers keyed by ``(industry, year)``."""

    entries: Mapping[tuple, float]

    def __post_init__(self):
        entries = {}
        for (industry, year), value in self.entries.items():
            value = float(value)
            if not np.isfinite(value) or value < 0:
                raise IntegrityError(f"fatal risk for ({industry}, {year}) must be >= 0, got {value}")
            entries[(str(industry), int(year))] = value
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_nested(cls, table=INDUSTRY_FATAL_RISK):
        return cls({(j, t): v for j, row in table.items() for t, v in row.items()})

    def lookup(self, industry, year):
        return self.entries[(str(industry), int(year))]

    def __contains__(self, key):
        industry, year = key
        return (str(industry), int(year)) in self.entries


def load_risk_table(source):
    """Read ``industry, year, fatal_risk_per_10000`` rows."""
    fh = _open_text(source)
    try:
        reader = csv.DictReader(fh, skipinitialspace=True)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for col in ("industry", "year", "fatal_risk_per_10000"):
            if col not in header:
                raise SchemaError(col)
        entries = {}
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): (v or "").strip() for k, v in row.items()}
            try:
                key = (row["industry"], int(row["year"]))
                value = float(row["fatal_risk_per_10000"])
            except ValueError as exc:
                raise IntegrityError(f"risk table line {lineno}: {exc}") from None
            if key in entries:
                raise IntegrityError(f"risk table has duplicate entry {key}")
            entries[key] = value
    finally:
        if fh is not source:
            fh.close()
    return RiskTable(entries)


def write_risk_table(table, dest):
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(["industry", "year", "fatal_risk_per_10000"])
    for (industry, year), value in table.entries.items():
        writer.writerow([industry, year, repr(value)])


@dataclass(frozen=True)
class MergeReport:
    n_dropped: int = 0
    unmatched: tuple = ()


def merge_risk(panel, risks, drop_unmatched=False, name=RISK):
    """Attach the industry-by-year fatal risk to every observation.

    Returns the merged dataset and a :class:`MergeReport`. Without
    ``drop_unmatched`` any missing cell raises :class:`MergeError` listing
    every unmatched pair.
    """
    keys = list(zip(panel.frame[INDUSTRY], panel.frame[PERIOD]))
    values = np.array([risks.entries.get((j, int(t)), np.nan) for j, t in keys])
    miss = np.isnan(values)
    unmatched = tuple(sorted({(j, int(t)) for (j, t), m in zip(keys, miss) if m}))
    if unmatched and not drop_unmatched:
        raise MergeError(unmatched)
    merged = panel.with_columns({name: values}, roles={name: "risk"})
    if unmatched:
        merged = merged.subset(~miss)
    return merged, MergeReport(int(miss.sum()), unmatched)


@dataclass(frozen=True)
class SampleFilter:
    """Row-level sample restrictions, applied in field order.

    ``min_age`` is inclusive, so the default 20 keeps workers strictly
    over 19. Set it to None to disable the age rule.
    """

    min_age: int | None = 20
    require_salaried: bool = True
    exclude_disabled: bool = True
    drop_missing: bool = True
    age_var: str = "age"
    salaried_var: str = "salaried"
    disabled_var: str = "disabled"


def apply_filter(panel, rules):
    """Apply ``rules`` and report how many rows each rule removed.

    Each dropped row is charged to the first rule that rejects it. The
    report only lists rules that removed at least one row.
    """
    n = panel.n_obs
    keep = np.ones(n, dtype=bool)
    report = {}

    def need(var, rule):
        if var not in panel.frame.columns:
            raise ConfigurationError(f"filter rule {rule!r} needs unregistered variable {var!r}")
        return panel.column(var)

    checks = []
    if rules.min_age is not None:
        age = need(rules.age_var, "min_age")
        checks.append(("min_age", age < rules.min_age))
    if rules.require_salaried:
        sal = need(rules.salaried_var, "require_salaried")
        checks.append(("require_salaried", sal == 0))
    if rules.exclude_disabled:
        dis = need(rules.disabled_var, "exclude_disabled")
        checks.append(("exclude_disabled", dis == 1))
    if rules.drop_missing:
        missing = panel.frame.drop(columns=list(KEYS)).isna().any(axis=1).to_numpy()
        checks.append(("drop_missing", missing))

    for rule, reject in checks:
        hit = keep & reject
        if hit.any():
            report[rule] = int(hit.sum())
        keep &= ~reject
    if keep.all():
        return panel, {}
    return panel.subset(keep), report


def format_drop_report(report):
    return "".join(f"{rule}: {count}\n" for rule, count in report.items())


def _group_means(values, codes, sizes):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.bincount(codes, weights=values, minlength=len(sizes)) / sizes
    out = np.empty((len(sizes), values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(codes, weights=values[:, c], minlength=len(sizes)) / sizes
    return out


def demean(values, codes, sizes):
    """Subtract per-group means from a vector or from each matrix column."""
    means = _group_means(values, codes, sizes)
    return np.asarray(values, dtype=float) - means[codes]


def within_transform(panel, names):
    """Replace each listed variable by its deviation from the worker mean."""
    codes, sizes = panel.worker_codes, panel.group_sizes
    return panel.with_columns({v: demean(panel.column(v), codes, sizes) for v in names})


def between_means(panel, names):
    """One row per worker holding time-means of ``names`` and ``n_periods``."""
    codes, sizes = panel.worker_codes, panel.group_sizes
    data = {v: _group_means(panel.column(v), codes, sizes) for v in names}
    first = np.r_[0, np.cumsum(sizes)[:-1]]
    out = pd.DataFrame({WORKER: panel.frame[WORKER].to_numpy()[first], **data})
    out["n_periods"] = sizes
    return out


def first_differences(panel, names):
    """Differences between adjacent observed waves within each worker.

    Waves are treated as consecutive regardless of the calendar gap, so a
    worker seen in 2004, 2006 and 2009 contributes two rows.
    """
    codes = panel.worker_codes
    same = codes[1:] == codes[:-1]
    idx = np.flatnonzero(same) + 1
    years = panel.frame[PERIOD].to_numpy()
    out = pd.DataFrame(
        {
            WORKER: panel.frame[WORKER].to_numpy()[idx],
            PERIOD: years[idx],
            "prev_year": years[idx - 1],
        }
    )
    for v in names:
        x = panel.column(v)
        out[v] = x[idx] - x[idx - 1]
    return out


def weighted_average_risk(panel, name=RISK):
    """Observation-weighted mean of the merged risk column."""
    if panel.n_obs == 0:
        raise UndefinedInputError("weighted average risk of an empty panel")
    return float(np.mean(panel.column(name)))


def write_panel(panel, dest):
    """Write a dataset back to CSV in canonical column order."""
    text = io.StringIO()
    panel.frame.to_csv(text, index=False, lineterminator="\n", float_format="%.17g")
    dest.write(text.getvalue())
