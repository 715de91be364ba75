"""Value of a statistical life from a semi-log risk coefficient.

With log wages and risk measured per ``risk_denominator`` workers,

    VSL = alpha1 * annual_earnings * risk_denominator

and the confidence interval is the coefficient interval mapped through
the same linear scale.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

from .errors import ConfigurationError, ReportError
from .estimators import critical_value

WAGE_PERIODS = ("hourly", "monthly", "annual")
PANEL_ORDER = ("pooled_ols", "between", "within", "first_difference", "re_gls", "re_mle")
ESTIMATOR_LABELS = {
    "pooled_ols": "Pooled OLS",
    "between": "Between",
    "within": "Within",
    "first_difference": "First difference",
    "re_gls": "RE GLS",
    "re_mle": "RE MLE",
    "two_sls": "2SLS",
}


@dataclass(frozen=True)
class WageStats:
    """Wage level and annualization convention.

    ``hours_per_week`` and ``weeks_per_year`` only matter for hourly wages.
    """

    mean_wage: float
    wage_period: str = "monthly"
    hours_per_week: float = 40.0
    weeks_per_year: float = 52.0
    risk_denominator: float = 10_000.0

    def __post_init__(self):
        if self.wage_period not in WAGE_PERIODS:
            raise ConfigurationError(f"wage_period must be one of {WAGE_PERIODS}, got {self.wage_period!r}")
        for name in ("mean_wage", "hours_per_week", "weeks_per_year", "risk_denominator"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be a positive number, got {v!r}")


def annual_earnings(stats):
    if stats.wage_period == "hourly":
        return stats.mean_wage * stats.hours_per_week * stats.weeks_per_year
    if stats.wage_period == "monthly":
        return stats.mean_wage * 12.0
    return float(stats.mean_wage)


@dataclass(frozen=True)
class VslEstimate:
    point: float
    ci_low: float
    ci_high: float
    level: float
    half_range: float
    convention: dict
    source: str = ""


def vsl_scale(stats):
    """Currency per unit of the risk coefficient."""
    return annual_earnings(stats) * stats.risk_denominator


def compute_vsl(alpha1, se_alpha1, stats, level=0.95, df=None, source=""):
    """VSL point estimate and interval.

    ``df`` switches the critical value from normal to Student t.
    """
    if se_alpha1 < 0:
        raise ValueError(f"standard error must be non-negative, got {se_alpha1}")
    scale = vsl_scale(stats)
    z = critical_value(level, df)
    point = alpha1 * scale
    # half-range from the SE directly; differencing the bounds cancels badly when se << alpha1
    half = z * se_alpha1 * scale
    convention = asdict(stats)
    convention["annual_earnings"] = annual_earnings(stats)
    convention["critical_value"] = z
    return VslEstimate(point, point - half, point + half, level, half, convention, source)


@dataclass(frozen=True)
class VslRow:
    model: str
    estimator: str
    display_scale: float
    coef_display: float
    se_display: float
    vsl: float
    ci_low: float
    ci_high: float
    half_range: float
    n_obs: int
    level: float


def vsl_report(results, stats, display_scale=1000.0, level=0.95, order="input"):
    """One row per estimate.

    ``results`` is a sequence of ``EstimateResult`` or ``(name, result)``
    pairs. ``display_scale`` multiplies the printed coefficient and SE only.
    ``order="panel"`` sorts panel estimators into the usual column order.
    """
    items = [(r.estimator, r) if not isinstance(r, tuple) else r for r in results]
    if order == "panel":
        rank = {e: i for i, e in enumerate(PANEL_ORDER)}
        items = sorted(items, key=lambda it: rank.get(it[1].estimator, len(rank)))
    rows = []
    for name, res in items:
        try:
            a, s = res.risk_coef, res.risk_se
        except KeyError:
            raise ReportError(f"estimate {name!r} ({res.estimator}) has no risk coefficient") from None
        v = compute_vsl(a, s, stats, level, source=res.estimator)
        rows.append(VslRow(name, res.estimator, display_scale, a * display_scale, s * display_scale,
                           v.point, v.ci_low, v.ci_high, v.half_range, res.n_obs, level))
    return rows


CSV_FIELDS = ("model", "estimator", "display_scale", "coef_display", "se_display", "vsl",
              "ci_low", "ci_high", "half_range", "n_obs", "level")
CONVENTION_FIELDS = ("mean_wage", "wage_period", "hours_per_week", "weeks_per_year",
                     "risk_denominator", "annual_earnings")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_vsl_csv(rows, stats, dest):
    """Full-precision CSV, convention columns repeated on every row."""
    conv = asdict(stats)
    conv["annual_earnings"] = annual_earnings(stats)
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(CSV_FIELDS + CONVENTION_FIELDS)
    for row in rows:
        d = asdict(row)
        writer.writerow([_fmt(d[f]) for f in CSV_FIELDS] + [_fmt(conv[f]) for f in CONVENTION_FIELDS])


def _money(v):
    return f"{v:,.0f}"


def format_vsl_table(rows, stats=None, title=None):
    """Side-by-side plain-text table, one column per estimate."""
    if not rows:
        return (title + "\n" if title else "") + "(no estimates)\n"
    scale = rows[0].display_scale
    scale_txt = f"{scale:g}"
    labels = [
        f"Risk coefficient x {scale_txt}",
        "",
        "VSL",
        f"{round(rows[0].level * 100):d}% confidence interval",
        "Variation range",
        "Observations",
    ]
    cols = []
    for r in rows:
        cols.append([
            r.model,
            f"{r.coef_display:.4f}",
            f"({r.se_display:.4f})",
            _money(r.vsl),
            f"[{_money(r.ci_low)} | {_money(r.ci_high)}]",
            _money(r.half_range),
            f"{r.n_obs:,d}",
        ])
    head = [""] + labels
    widths = [max(len(s) for s in head)] + [max(len(s) for s in c) for c in cols]
    lines = []
    if title:
        lines.append(title)
    table = [[""] + [c[0] for c in cols]] + [[lab] + [c[i + 1] for c in cols] for i, lab in enumerate(labels)]
    rule = "-" * (sum(widths) + 3 * (len(widths) - 1))
    for i, line in enumerate(table):
        cells = [line[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(line[1:], widths[1:])]
        lines.append("   ".join(cells).rstrip())
        if i == 0:
            lines.append(rule)
    lines.append(rule)
    if stats is not None:
        lines.append(
            f"VSL = coefficient x annual earnings ({annual_earnings(stats):,.2f}) x {stats.risk_denominator:g}; "
            f"mean {stats.wage_period} wage {stats.mean_wage:,.2f}"
        )
    return "\n".join(lines) + "\n"
