"""Instrumental-variable estimation of the risk premium.

Risk is instrumented by family-structure variables (marital status,
children under six, spouse schooling, spouse illness, spouse works).
Includes first-stage strength diagnostics, the Anderson-Rubin test, its
grid-inverted confidence set, and a fractionally resampled AR test.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError, PreconditionError
from .estimators import (
    INTERCEPT,
    EstimateResult,
    ModelSpec,
    _clusters,
    _r_squared,
    pooled_ols,
)
from .ols import covariance_matrix, solve_ols

FAMILY_INSTRUMENTS = ("married", "children_under6", "spouse_schooling", "spouse_ill", "spouse_works")
REJECT_LEVELS = (0.01, 0.05, 0.10)


@dataclass(frozen=True)
class IvSpec:
    base: ModelSpec
    instruments: tuple = FAMILY_INSTRUMENTS
    endogenous: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "instruments", tuple(self.instruments))
        if self.endogenous is None:
            object.__setattr__(self, "endogenous", self.base.risk_var)
        if self.endogenous != self.base.risk_var:
            raise ConfigurationError("the endogenous variable must be the risk variable of the base spec")
        if not self.instruments:
            raise PreconditionError("at least one excluded instrument is required")
        clash = set(self.instruments) & (set(self.base.controls) | {self.endogenous, self.base.outcome})
        if clash:
            raise ConfigurationError(f"instruments overlap regressors: {sorted(clash)}")
        if len(set(self.instruments)) != len(self.instruments):
            raise ConfigurationError("duplicate instruments")


@dataclass(frozen=True)
class _IvData:
    y: np.ndarray
    d: np.ndarray  # endogenous regressor
    W: np.ndarray  # intercept and controls
    Z: np.ndarray  # excluded instruments
    w_names: list
    z_names: list
    dropped: tuple

    @property
    def n(self):
        return len(self.y)


def _iv_data(panel, spec):
    base = spec.base
    base.validate(panel)
    for name in spec.instruments:
        if name not in panel.frame.columns:
            raise ConfigurationError(f"instrument {name!r} is not registered in the dataset")
        if np.isnan(panel.column(name)).any():
            raise ConfigurationError(f"instrument {name!r} has missing values")
    w_names = ([INTERCEPT] if base.include_intercept else []) + list(base.controls)
    W = np.column_stack([np.ones(panel.n_obs) if v == INTERCEPT else panel.column(v) for v in w_names]) \
        if w_names else np.empty((panel.n_obs, 0))
    keep, dropped = [], []
    for name in spec.instruments:
        x = panel.column(name)
        (dropped if np.ptp(x) == 0 else keep).append(name)
    if dropped:
        warnings.warn(f"dropping zero-variance instruments {dropped}", RuntimeWarning, stacklevel=3)
    if not keep:
        raise PreconditionError("every instrument has zero variance")
    Z = np.column_stack([panel.column(v) for v in keep])
    return _IvData(panel.column(base.outcome), panel.column(spec.endogenous), W, Z,
                   w_names, keep, tuple(dropped))


def _regressor_order(spec):
    return spec.base.regressors()


def two_sls(panel, spec):
    """Two-stage least squares.

    The risk column is replaced by its projection on the controls and
    instruments. Residuals for the covariance use the original regressors.
    """
    data = _iv_data(panel, spec)
    names = _regressor_order(spec)
    full = np.column_stack([data.W, data.Z])
    first = solve_ols(data.d, full, data.w_names + data.z_names, stage="first")
    d_hat = full @ first.params
    cols = {v: data.W[:, i] for i, v in enumerate(data.w_names)}
    X = np.column_stack([data.d if v == spec.endogenous else cols[v] for v in names])
    Xhat = np.column_stack([d_hat if v == spec.endogenous else cols[v] for v in names])
    second = solve_ols(data.y, Xhat, names, stage="second")
    resid = data.y - X @ second.params
    n, k = X.shape
    cov = covariance_matrix(Xhat, resid, spec.base.covariance, bread=second.bread,
                            df_resid=n - k, clusters=_clusters(panel, spec.base))
    notes = tuple(f"dropped zero-variance instrument {v}" for v in data.dropped)
    return EstimateResult(
        estimator="two_sls",
        names=tuple(names),
        params=second.params,
        cov=cov,
        n_obs=n,
        n_groups=panel.n_workers,
        df_resid=n - k,
        risk_name=spec.endogenous,
        covariance_type=spec.base.covariance,
        sigma2_u=float(resid @ resid) / (n - k),
        r_squared=_r_squared(data.y, resid),
        notes=notes,
        extra={"instruments": tuple(data.z_names)},
    )


@dataclass(frozen=True, eq=False)
class FirstStage:
    result: EstimateResult
    f_stat: float
    f_pvalue: float
    df1: int
    df2: int
    partial_r2: float


def first_stage_diagnostics(panel, spec):
    """First-stage regression and the excluded-instrument F test.

    The F statistic is the homoskedastic test of joint nullity of the
    excluded instruments; partial R2 is their incremental R2 given the
    controls.
    """
    data = _iv_data(panel, spec)
    names = data.w_names + data.z_names
    full = np.column_stack([data.W, data.Z])
    unres = solve_ols(data.d, full, names, stage="first")
    rss_u = unres.rss
    if data.W.shape[1]:
        rss_r = solve_ols(data.d, data.W, data.w_names, stage="first").rss
    else:
        rss_r = float(data.d @ data.d)
    n, k = full.shape
    q = data.Z.shape[1]
    df2 = n - k
    cov = covariance_matrix(full, unres.resid, spec.base.covariance, bread=unres.bread,
                            df_resid=df2, clusters=_clusters(panel, spec.base))
    result = EstimateResult(
        estimator="first_stage", names=tuple(names), params=unres.params, cov=cov,
        n_obs=n, n_groups=panel.n_workers, df_resid=df2, risk_name=data.z_names[0],
        covariance_type=spec.base.covariance, sigma2_u=rss_u / df2,
        r_squared=_r_squared(data.d, unres.resid),
    )
    scale = max(rss_r, 1e-300)
    if rss_u <= 1e-14 * scale:
        f_stat, pval = math.inf, 0.0
    else:
        f_stat = ((rss_r - rss_u) / q) / (rss_u / df2)
        pval = float(stats.f.sf(f_stat, q, df2))
    partial = (rss_r - rss_u) / rss_r if rss_r > 0 else 0.0
    return FirstStage(result, float(f_stat), pval, q, df2, float(min(max(partial, 0.0), 1.0)))


@dataclass(frozen=True, eq=False)
class TestResult:
    statistic: float
    distribution: str
    df: tuple
    p_value: float
    reject_at: dict
    replicates: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    warnings: tuple = ()

    __test__ = False  # not a pytest class

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "distribution": self.distribution,
            "df": list(self.df),
            "p_value": self.p_value,
            "reject_at": {str(k): v for k, v in self.reject_at.items()},
            "config": self.config,
            "warnings": list(self.warnings),
            "n_replicates": None if self.replicates is None else int(len(self.replicates)),
        }


def _rejections(p):
    return {lvl: bool(p < lvl) for lvl in REJECT_LEVELS}


def _wald_ar(y_star, W, Z):
    """Instrument coefficients, their classical covariance and the AR F."""
    X = np.column_stack([W, Z])
    sol = solve_ols(y_star, X, stage="anderson-rubin")
    n, k = X.shape
    q = Z.shape[1]
    s2 = sol.rss / (n - k)
    g = sol.params[-q:]
    V = s2 * sol.bread[-q:, -q:]
    stat = float(g @ np.linalg.solve(V, g)) / q
    return g, V, stat


def ar_statistic(y, d, W, Z, alpha1_null):
    """Anderson-Rubin F statistic for ``H0: alpha1 = alpha1_null``."""
    return _wald_ar(y - alpha1_null * d, W, Z)[2]


def anderson_rubin_test(panel, spec, alpha1_null):
    """Regress ``y - alpha1_null * risk`` on controls and instruments and
    F-test the instruments, ``df = (q, n - k_full)``."""
    data = _iv_data(panel, spec)
    stat = ar_statistic(data.y, data.d, data.W, data.Z, alpha1_null)
    q = data.Z.shape[1]
    df2 = data.n - data.W.shape[1] - q
    if df2 <= 0:
        raise PreconditionError(f"Anderson-Rubin test has no residual degrees of freedom (n={data.n})")
    p = float(stats.f.sf(stat, q, df2))
    return TestResult(
        statistic=stat,
        distribution=f"F({q}, {df2})",
        df=(q, df2),
        p_value=p,
        reject_at=_rejections(p),
        config={"alpha1_null": alpha1_null, "instruments": list(data.z_names)},
        warnings=tuple(f"dropped zero-variance instrument {v}" for v in data.dropped),
    )


@dataclass(frozen=True, eq=False)
class ArConfidenceSet:
    grid: np.ndarray
    statistics: np.ndarray
    accepted: np.ndarray
    level: float

    @property
    def lower(self):
        return float(self.grid[self.accepted].min()) if self.accepted.any() else math.nan

    @property
    def upper(self):
        return float(self.grid[self.accepted].max()) if self.accepted.any() else math.nan

    @property
    def open_ended(self):
        """True when the set touches either grid edge."""
        return bool(self.accepted[0] or self.accepted[-1])


def ar_curve(y, d, W, Z, grid):
    """AR statistic over a grid of null values, evaluated as a ratio of
    quadratics in the null value."""
    full = np.column_stack([W, Z])
    n, k = full.shape
    q = Z.shape[1]
    if W.shape[1]:
        ry_r = solve_ols(y, W).resid
        rd_r = solve_ols(d, W).resid
    else:
        ry_r, rd_r = y, d
    ry_u = solve_ols(y, full).resid
    rd_u = solve_ols(d, full).resid
    a = np.asarray(grid, dtype=float)[:, None]
    rss_r = ((ry_r - a * rd_r) ** 2).sum(axis=1)
    rss_u = ((ry_u - a * rd_u) ** 2).sum(axis=1)
    return ((rss_r - rss_u) / q) / (rss_u / (n - k))


def ar_confidence_set(panel, spec, level=0.95, grid=None, width=10.0, points=401):
    """Invert the AR test over a grid, by default the 2SLS estimate plus or
    minus ``width`` standard errors."""
    data = _iv_data(panel, spec)
    if grid is None:
        fit = two_sls(panel, spec)
        b, s = fit.risk_coef, fit.risk_se
        grid = np.linspace(b - width * s, b + width * s, points)
    grid = np.asarray(grid, dtype=float)
    stat = ar_curve(data.y, data.d, data.W, data.Z, grid)
    q = data.Z.shape[1]
    df2 = data.n - data.W.shape[1] - q
    crit = stats.f.ppf(level, q, df2)
    return ArConfidenceSet(grid, stat, stat <= crit, level)


def frar_test(panel, spec, alpha1_null, fraction=0.5, replicates=499, seed=0,
              recentering="coefficient", level=0.05):
    """Fractionally resampled Anderson-Rubin test.

    Each replicate draws ``floor(fraction * n)`` rows without replacement
    and recomputes the AR statistic; the raw statistics are kept in
    ``replicates``. With ``recentering="coefficient"`` the decision uses the
    subsample instrument coefficients centred on the full-sample ones,

        (g_s - g)' V_s^-1 (g_s - g) / ((1 - fraction) q),

    whose spread mimics the null distribution of the full-sample statistic.
    ``recentering="none"`` compares against the raw replicates. The p-value
    is ``(1 + #{R_b >= AR}) / (B + 1)``. Replicate ``b`` uses the ``b``-th
    child of ``SeedSequence(seed)``, so results do not depend on evaluation
    order.
    """
    if not 0 < fraction <= 1:
        raise PreconditionError(f"fraction must lie in (0, 1], got {fraction}")
    if recentering not in ("coefficient", "none"):
        raise ConfigurationError(f"unknown recentering rule {recentering!r}")
    data = _iv_data(panel, spec)
    n = data.n
    q = data.Z.shape[1]
    k_full = data.W.shape[1] + q
    m = int(math.floor(fraction * n))
    if m < k_full + 10:
        raise PreconditionError(f"subsample size {m} is below k_full + 10 = {k_full + 10}")
    notes = [f"dropped zero-variance instrument {v}" for v in data.dropped]
    if replicates < 100:
        notes.append(f"only {replicates} replicates; at least 100 recommended")
    rule = recentering
    if fraction == 1 and rule == "coefficient":
        notes.append("fraction = 1: recentred statistics undefined, using raw replicates")
        rule = "none"

    y_star = data.y - alpha1_null * data.d
    g_full, _, stat = _wald_ar(y_star, data.W, data.Z)
    raw = np.empty(replicates)
    centred = np.empty(replicates)
    children = np.random.SeedSequence(seed).spawn(replicates)
    for b, child in enumerate(children):
        idx = np.sort(np.random.default_rng(child).choice(n, size=m, replace=False))
        g, V, s = _wald_ar(y_star[idx], data.W[idx], data.Z[idx])
        raw[b] = s
        if rule == "coefficient":
            diff = g - g_full
            centred[b] = float(diff @ np.linalg.solve(V, diff)) / ((1 - fraction) * q)
    ref = centred if rule == "coefficient" else raw
    p = (1 + int((ref >= stat).sum())) / (replicates + 1)
    return TestResult(
        statistic=stat,
        distribution="empirical",
        df=(q, n - k_full),
        p_value=float(p),
        reject_at=_rejections(p),
        replicates=raw,
        config={
            "alpha1_null": alpha1_null,
            "fraction": fraction,
            "replicates": replicates,
            "seed": seed,
            "recentering": rule,
            "subsample_size": m,
            "critical_value": float(np.quantile(ref, 1 - level)),
            "level": level,
            "instruments": list(data.z_names),
            "construction": "parameterized resampled AR; not a reproduction of a published procedure",
        },
        warnings=tuple(notes),
    )


def write_replicates(result, dest):
    """Single-column CSV of resampled statistics."""
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(["ar_statistic"])
    for v in result.replicates:
        writer.writerow([repr(float(v))])


@dataclass(frozen=True, eq=False)
class CrossSectionColumns:
    linear: EstimateResult
    iv: EstimateResult
    proxy: EstimateResult

    def columns(self):
        return [("linear", self.linear), ("iv", self.iv), ("proxy", self.proxy)]


def estimate_table4(panel, base, instruments=FAMILY_INSTRUMENTS, proxy="risk_willingness"):
    """The three cross-sectional columns: OLS, Garen 2SLS, and OLS with the
    risk-attitude proxy added to the controls."""
    if proxy in base.controls:
        raise ConfigurationError(f"proxy {proxy!r} already among the controls")
    base = base.replace(estimator="pooled_ols")
    linear = pooled_ols(panel, base)
    iv = two_sls(panel, IvSpec(base, tuple(instruments)))
    prox = pooled_ols(panel, base.replace(controls=base.controls + (proxy,)))
    return CrossSectionColumns(linear, iv, prox)
