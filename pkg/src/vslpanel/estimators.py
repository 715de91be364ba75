"""Linear estimators for the hedonic log-wage equation.

    log_wage_it = a_i + alpha1 * risk_jt + X_it beta + u_it

Pooled OLS, between, within, first difference, random-effects GLS
(Swamy-Arora components) and random-effects maximum likelihood.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import panel as pn
from .errors import (
    ConfigurationError,
    ConvergenceError,
    InsufficientDataError,
)
from .ols import COVARIANCE_TYPES, covariance_matrix, solve_ols

ESTIMATORS = ("pooled_ols", "between", "within", "first_difference", "re_gls", "re_mle")
INTERCEPT = "const"


@dataclass(frozen=True)
class ModelSpec:
    """One regression of ``outcome`` on the risk variable and controls.

    ``covariance`` is ``classical``, ``robust`` (HC1) or ``cluster``; the
    cluster flavor needs ``cluster_by``, which may name a registered
    variable, ``worker_id``, ``industry``, ``year`` or ``industry_year``.
    """

    risk_var: str = pn.RISK
    controls: tuple = ()
    outcome: str = pn.OUTCOME
    include_intercept: bool = True
    estimator: str = "pooled_ols"
    covariance: str = "classical"
    cluster_by: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.covariance not in COVARIANCE_TYPES:
            raise ConfigurationError(f"unknown covariance flavor {self.covariance!r}")
        if self.covariance == "cluster" and not self.cluster_by:
            raise ConfigurationError("cluster covariance needs cluster_by")
        if self.risk_var in self.controls:
            raise ConfigurationError(f"risk variable {self.risk_var!r} also listed as a control")
        if len(set(self.controls)) != len(self.controls):
            raise ConfigurationError("duplicate control variables")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)

    def regressors(self, intercept=None):
        intercept = self.include_intercept if intercept is None else intercept
        return ([INTERCEPT] if intercept else []) + [self.risk_var] + list(self.controls)

    def validate(self, panel):
        for name in [self.outcome, self.risk_var, *self.controls]:
            if name not in panel.frame.columns or name in (pn.WORKER, pn.INDUSTRY):
                raise ConfigurationError(f"variable {name!r} is not registered in the dataset")
            if np.isnan(panel.column(name)).any():
                raise ConfigurationError(f"variable {name!r} has missing values; apply the sample filter first")


@dataclass(frozen=True, eq=False)
class EstimateResult:
    estimator: str
    names: tuple
    params: np.ndarray
    cov: np.ndarray
    n_obs: int
    n_groups: int
    df_resid: int
    risk_name: str = pn.RISK
    covariance_type: str = "classical"
    sigma2_u: float = math.nan
    sigma2_alpha: float | None = None
    log_likelihood: float | None = None
    r_squared: float = math.nan
    notes: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def coefficients(self):
        return dict(zip(self.names, self.params.tolist()))

    @property
    def std_errors(self):
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def tvalues(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.params / self.std_errors

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"{self.estimator} result has no coefficient {name!r}") from None

    def coef(self, name):
        return float(self.params[self.index(name)])

    def se(self, name):
        return float(self.std_errors[self.index(name)])

    @property
    def risk_coef(self):
        return self.coef(self.risk_name)

    @property
    def risk_se(self):
        return self.se(self.risk_name)

    def conf_int(self, level=0.95, df=None):
        crit = critical_value(level, df)
        se = self.std_errors
        return np.column_stack([self.params - crit * se, self.params + crit * se])

    def to_dict(self):
        return {
            "estimator": self.estimator,
            "names": list(self.names),
            "params": self.params.tolist(),
            "cov": self.cov.tolist(),
            "n_obs": int(self.n_obs),
            "n_groups": int(self.n_groups),
            "df_resid": int(self.df_resid),
            "risk_name": self.risk_name,
            "covariance_type": self.covariance_type,
            "sigma2_u": _num(self.sigma2_u),
            "sigma2_alpha": _num(self.sigma2_alpha),
            "log_likelihood": _num(self.log_likelihood),
            "r_squared": _num(self.r_squared),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d):
        def back(v):
            return math.nan if v == "nan" else v

        return cls(
            estimator=d["estimator"],
            names=tuple(d["names"]),
            params=np.asarray(d["params"], dtype=float),
            cov=np.asarray(d["cov"], dtype=float).reshape(len(d["names"]), len(d["names"])),
            n_obs=int(d["n_obs"]),
            n_groups=int(d["n_groups"]),
            df_resid=int(d["df_resid"]),
            risk_name=d["risk_name"],
            covariance_type=d.get("covariance_type", "classical"),
            sigma2_u=back(d.get("sigma2_u", math.nan)),
            sigma2_alpha=back(d.get("sigma2_alpha")),
            log_likelihood=back(d.get("log_likelihood")),
            r_squared=back(d.get("r_squared", math.nan)),
            notes=tuple(d.get("notes", ())),
        )


def _num(v):
    if v is None:
        return None
    v = float(v)
    return "nan" if math.isnan(v) else v


def critical_value(level=0.95, df=None):
    """Two-sided critical value: normal by default, Student t given ``df``."""
    if not 0 < level < 1:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    q = 0.5 + level / 2
    return float(stats.norm.ppf(q) if df is None else stats.t.ppf(q, df))


def _r_squared(y, resid):
    tss = float(((y - y.mean()) ** 2).sum())
    if tss <= 0:
        return 0.0
    return 1.0 - float(resid @ resid) / tss


def cluster_labels(panel, name):
    frame = panel.frame
    if name == "industry_year":
        return (frame[pn.INDUSTRY] + "|" + frame[pn.PERIOD].astype(str)).to_numpy()
    if name in frame.columns:
        return frame[name].to_numpy()
    raise ConfigurationError(f"cluster variable {name!r} is not registered in the dataset")


def _fit(estimator, y, X, names, spec, *, n_groups, df_resid=None, clusters=None, notes=(),
         sigma2_u=None, **fields):
    sol = solve_ols(y, X, names)
    n, k = X.shape
    if df_resid is None:
        df_resid = n - k
    if df_resid < 0:
        raise InsufficientDataError(f"{estimator}: negative residual degrees of freedom ({n} rows, {k} parameters)")
    if df_resid == 0:
        # exact fit: coefficients are identified, their sampling variance is not
        cov = np.full((k, k), np.nan)
        notes = tuple(notes) + ("no residual degrees of freedom; covariance undefined",)
        if sigma2_u is None:
            sigma2_u = math.nan
    else:
        cov = covariance_matrix(X, sol.resid, spec.covariance, bread=sol.bread,
                                df_resid=df_resid, clusters=clusters)
    if sigma2_u is None:
        sigma2_u = sol.rss / df_resid
    return EstimateResult(
        estimator=estimator,
        names=tuple(names),
        params=sol.params,
        cov=cov,
        n_obs=n,
        n_groups=n_groups,
        df_resid=df_resid,
        risk_name=spec.risk_var,
        covariance_type=spec.covariance,
        sigma2_u=sigma2_u,
        r_squared=_r_squared(np.asarray(y, float), sol.resid),
        notes=tuple(notes),
        **fields,
    ), sol


def _clusters(panel, spec):
    return cluster_labels(panel, spec.cluster_by) if spec.covariance == "cluster" else None


def _xy(panel, spec, intercept=None):
    names = spec.regressors(intercept)
    cols = [np.ones(panel.n_obs) if v == INTERCEPT else panel.column(v) for v in names]
    X = np.column_stack(cols) if cols else np.empty((panel.n_obs, 0))
    return panel.column(spec.outcome), X, names


def pooled_ols(panel, spec):
    """OLS on the stacked worker-years, ignoring individual effects."""
    spec.validate(panel)
    y, X, names = _xy(panel, spec)
    return _fit("pooled_ols", y, X, names, spec, n_groups=panel.n_workers,
                clusters=_clusters(panel, spec))[0]


def between_estimator(panel, spec):
    """OLS on per-worker time means; one observation per worker."""
    spec.validate(panel)
    if panel.n_workers < 2:
        raise InsufficientDataError("between estimator needs at least two workers")
    names = spec.regressors()
    vars_ = [spec.outcome] + [v for v in names if v != INTERCEPT]
    means = pn.between_means(panel, vars_)
    G = len(means)
    X = np.column_stack([np.ones(G) if v == INTERCEPT else means[v].to_numpy() for v in names])
    clusters = None
    if spec.covariance == "cluster":
        first = np.r_[0, np.cumsum(panel.group_sizes)[:-1]]
        clusters = cluster_labels(panel, spec.cluster_by)[first]
    return _fit("between", means[spec.outcome].to_numpy(), X, names, spec,
                n_groups=G, clusters=clusters)[0]


def within_estimator(panel, spec):
    """OLS on worker-demeaned data; individual effects are absorbed.

    No intercept is estimated. Residual degrees of freedom subtract the
    number of workers.
    """
    spec.validate(panel)
    if (panel.group_sizes >= 2).sum() == 0:
        raise InsufficientDataError("within estimator needs a worker observed at least twice")
    codes, sizes = panel.worker_codes, panel.group_sizes
    y, X, names = _xy(panel, spec, intercept=False)
    yd = pn.demean(y, codes, sizes)
    Xd = pn.demean(X, codes, sizes)
    G = len(sizes)
    df = panel.n_obs - G - X.shape[1]
    return _fit("within", yd, Xd, names, spec, n_groups=G, df_resid=df,
                clusters=_clusters(panel, spec))[0]


def first_difference_estimator(panel, spec):
    """OLS on adjacent-wave differences, without an intercept."""
    spec.validate(panel)
    names = spec.regressors(intercept=False)
    diffs = pn.first_differences(panel, [spec.outcome] + names)
    if len(diffs) == 0:
        raise InsufficientDataError("first difference estimator found no adjacent pairs")
    X = diffs[names].to_numpy(dtype=float)
    clusters = None
    if spec.covariance == "cluster":
        codes = panel.worker_codes
        idx = np.flatnonzero(codes[1:] == codes[:-1]) + 1
        clusters = cluster_labels(panel, spec.cluster_by)[idx]
    return _fit("first_difference", diffs[spec.outcome].to_numpy(), X, names, spec,
                n_groups=diffs[pn.WORKER].nunique(), clusters=clusters)[0]


@dataclass(frozen=True, eq=False)
class VarianceComponents:
    sigma2_u: float
    sigma2_alpha: float
    group_sizes: np.ndarray
    truncated: bool = False

    @property
    def theta(self):
        return quasi_demean_weights(self.sigma2_u, self.sigma2_alpha, self.group_sizes)


def quasi_demean_weights(sigma2_u, sigma2_alpha, sizes):
    """``1 - sqrt(s2_u / (T_i s2_alpha + s2_u))`` for every group size."""
    sizes = np.asarray(sizes, dtype=float)
    denom = sizes * sigma2_alpha + sigma2_u
    if sigma2_u == 0:
        return np.where(denom > 0, 1.0, 0.0)
    return 1.0 - np.sqrt(sigma2_u / denom)


def swamy_arora(within_resid, k_within, between_resid, k_between, sizes):
    """Moment estimates of the idiosyncratic and individual-effect variances.

    ``sigma2_u`` is the within residual variance with ``n - N - k_within``
    degrees of freedom. ``sigma2_alpha`` is the between residual variance
    net of ``sigma2_u`` times the average of ``1 / T_i``, truncated at zero.
    """
    sizes = np.asarray(sizes)
    n, G = int(sizes.sum()), len(sizes)
    df_w = n - G - k_within
    df_b = G - k_between
    if df_w <= 0 or df_b <= 0:
        raise InsufficientDataError(
            f"variance components need positive degrees of freedom (within {df_w}, between {df_b})"
        )
    within_resid = np.asarray(within_resid, float)
    between_resid = np.asarray(between_resid, float)
    s2_u = float(within_resid @ within_resid) / df_w
    s2_b = float(between_resid @ between_resid) / df_b
    s2_a = s2_b - s2_u * float(np.mean(1.0 / sizes))
    truncated = s2_a < 0
    if truncated:
        warnings.warn("negative individual-effect variance truncated to zero", RuntimeWarning, stacklevel=3)
        s2_a = 0.0
    return VarianceComponents(s2_u, s2_a, sizes, truncated)


def estimate_variance_components(panel, spec):
    """Swamy-Arora components from within and between residuals.

    Regressors with no within-worker variation are left out of the within
    regression so that time-invariant controls remain usable in RE models.
    """
    spec.validate(panel)
    codes, sizes = panel.worker_codes, panel.group_sizes
    y, X, names = _xy(panel, spec, intercept=False)
    yd = pn.demean(y, codes, sizes)
    Xd = pn.demean(X, codes, sizes)
    scale = np.abs(X).max(axis=0) if X.size else np.zeros(0)
    varying = np.sqrt((Xd ** 2).sum(axis=0)) > 1e-10 * np.maximum(scale, 1.0) * math.sqrt(panel.n_obs)
    w = solve_ols(yd, Xd[:, varying], [n for n, v in zip(names, varying) if v])
    bspec = spec.replace(estimator="between", covariance="classical", cluster_by=None)
    bnames = bspec.regressors()
    means = pn.between_means(panel, [spec.outcome] + [v for v in bnames if v != INTERCEPT])
    Xb = np.column_stack([np.ones(len(means)) if v == INTERCEPT else means[v].to_numpy() for v in bnames])
    b = solve_ols(means[spec.outcome].to_numpy(), Xb, bnames)
    return swamy_arora(w.resid, int(varying.sum()), b.resid, Xb.shape[1], sizes)


def _quasi_demean(values, codes, sizes, theta_rows):
    means = pn._group_means(values, codes, sizes)[codes]
    if np.ndim(values) == 1:
        return values - theta_rows * means
    return values - theta_rows[:, None] * means


def re_gls(panel, spec, theta=None):
    """Random-effects GLS by OLS on quasi-demeaned data.

    ``theta`` overrides the estimated weights (scalar or one per worker).
    With theta = 0 this is pooled OLS; with theta = 1 it is the within
    estimator and the intercept, no longer identified, is dropped.
    """
    spec.validate(panel)
    codes, sizes = panel.worker_codes, panel.group_sizes
    comps = None
    if theta is None:
        comps = estimate_variance_components(panel, spec)
        theta = comps.theta
    theta = np.broadcast_to(np.asarray(theta, dtype=float), sizes.shape)
    notes = []
    intercept = spec.include_intercept
    if intercept and np.all(theta == 1.0):
        intercept = False
        notes.append("intercept dropped: theta = 1")
    if comps is not None and comps.truncated:
        notes.append("sigma2_alpha truncated at zero")
    y, X, names = _xy(panel, spec, intercept=intercept)
    th = theta[codes]
    ys = _quasi_demean(y, codes, sizes, th)
    Xs = _quasi_demean(X, codes, sizes, th)
    result, _ = _fit(
        "re_gls", ys, Xs, names, spec,
        n_groups=len(sizes), clusters=_clusters(panel, spec), notes=notes,
        sigma2_u=comps.sigma2_u if comps else None,
        sigma2_alpha=comps.sigma2_alpha if comps else None,
        extra={"theta": theta.copy()},
    )
    return result


def re_loglike(y, X, codes, sizes, beta, sigma2_alpha, sigma2_u):
    """One-way error-components Gaussian log-likelihood in closed form."""
    e = np.asarray(y, float) - np.asarray(X, float) @ np.asarray(beta, float)
    S = np.bincount(codes, weights=e, minlength=len(sizes))
    Q = np.bincount(codes, weights=e * e, minlength=len(sizes))
    T = sizes.astype(float)
    a = sigma2_u + T * sigma2_alpha
    W = Q - S ** 2 / T
    quad = W / sigma2_u + S ** 2 / (T * a)
    logdet = (T - 1) * math.log(sigma2_u) + np.log(a)
    return float(-0.5 * (T.sum() * math.log(2 * math.pi) + logdet.sum() + quad.sum()))


def re_score(y, X, codes, sizes, beta, sigma2_alpha, sigma2_u):
    """Gradient of :func:`re_loglike` in (beta, sigma2_alpha, sigma2_u)."""
    e = np.asarray(y, float) - X @ beta
    S = np.bincount(codes, weights=e, minlength=len(sizes))
    Q = np.bincount(codes, weights=e * e, minlength=len(sizes))
    T = sizes.astype(float)
    a = sigma2_u + T * sigma2_alpha
    W = Q - S ** 2 / T
    sinv_e = (e - (sigma2_alpha / a)[codes] * S[codes]) / sigma2_u
    g_beta = X.T @ sinv_e
    g_alpha = -0.5 * float((T / a - S ** 2 / a ** 2).sum())
    g_u = -0.5 * float(((T - 1) / sigma2_u + 1 / a - W / sigma2_u ** 2 - S ** 2 / (T * a ** 2)).sum())
    return g_beta, g_alpha, g_u


class _Profile:
    """Log-likelihood concentrated on psi = sigma2_alpha / sigma2_u."""

    def __init__(self, y, X, names, codes, sizes):
        self.y, self.X, self.names = y, X, names
        self.codes, self.sizes = codes, sizes
        self.n = len(y)
        self.evals = 0

    def solve(self, psi):
        self.evals += 1
        T = self.sizes.astype(float)
        th = (1.0 - np.sqrt(1.0 / (1.0 + T * psi)))[self.codes]
        ys = _quasi_demean(self.y, self.codes, self.sizes, th)
        Xs = _quasi_demean(self.X, self.codes, self.sizes, th)
        sol = solve_ols(ys, Xs, self.names)
        e = self.y - self.X @ sol.params
        S = np.bincount(self.codes, weights=e, minlength=len(self.sizes))
        return sol, Xs, S, sol.rss

    def loglike(self, psi):
        _, _, _, Q = self.solve(psi)
        T = self.sizes.astype(float)
        return -0.5 * (self.n * math.log(2 * math.pi) + self.n * math.log(Q / self.n)
                       + np.log1p(T * psi).sum() + self.n)

    def slope(self, psi):
        """d loglike / d psi via the envelope theorem."""
        _, _, S, Q = self.solve(psi)
        T = self.sizes.astype(float)
        return -0.5 * (-self.n * float((S ** 2 / (1 + T * psi) ** 2).sum()) / Q
                       + float((T / (1 + T * psi)).sum()))


def re_mle(panel, spec, max_iter=500, gtol=1e-6):
    """Random-effects maximum likelihood.

    The likelihood is maximized over (beta, log sigma2_alpha, log
    sigma2_u). Beta and sigma2_u have closed forms given the variance
    ratio, so the search is a one-dimensional root find in the log ratio,
    started from the Swamy-Arora estimate. The reported gradient norm is the
    score in log-variance coordinates divided by the number of observations;
    at the sigma2_alpha = 0 boundary only the feasible direction counts.
    """
    spec.validate(panel)
    codes, sizes = panel.worker_codes, panel.group_sizes
    y, X, names = _xy(panel, spec)
    prof = _Profile(y, X, names, codes, sizes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            comps = estimate_variance_components(panel, spec)
            psi_sa = comps.sigma2_alpha / comps.sigma2_u if comps.sigma2_u > 0 else 0.0
        except InsufficientDataError:
            comps, psi_sa = None, 0.0

    candidates = [0.0]
    if psi_sa > 0:
        candidates.append(psi_sa)
    if prof.slope(0.0) > 0 or psi_sa > 0:
        root = _find_root(prof, psi_sa, max_iter)
        if root is not None:
            candidates.append(root)
    lls = [prof.loglike(p) for p in candidates]
    psi = candidates[int(np.argmax(lls))]

    sol, Xs, S, Q = prof.solve(psi)
    s2_u = Q / prof.n
    s2_a = psi * s2_u
    beta = sol.params
    ll = re_loglike(y, X, codes, sizes, beta, s2_a, s2_u)
    g_beta, g_a, g_u = re_score(y, X, codes, sizes, beta, s2_a, s2_u)
    grad = list(g_beta) + [g_u * s2_u]
    if psi > 0:
        grad.append(g_a * s2_a)
    elif g_a > 0:
        grad.append(g_a)
    gnorm = float(np.linalg.norm(grad)) / prof.n
    best = {"params": dict(zip(names, beta.tolist())), "sigma2_alpha": s2_a, "sigma2_u": s2_u,
            "log_likelihood": ll}
    if not np.isfinite(gnorm) or gnorm > gtol or prof.evals > max_iter:
        raise ConvergenceError("random-effects MLE did not converge", best=best, gradient_norm=gnorm)

    if spec.covariance == "classical":
        cov = covariance_matrix(Xs, sol.resid, "classical", bread=sol.bread, sigma2=s2_u)
    else:
        cov = covariance_matrix(Xs, sol.resid, spec.covariance, bread=sol.bread,
                                clusters=_clusters(panel, spec))
    notes = ("sigma2_alpha at boundary 0",) if psi == 0 else ()
    return EstimateResult(
        estimator="re_mle",
        names=tuple(names),
        params=beta,
        cov=cov,
        n_obs=prof.n,
        n_groups=len(sizes),
        df_resid=prof.n - len(names),
        risk_name=spec.risk_var,
        covariance_type=spec.covariance,
        sigma2_u=s2_u,
        sigma2_alpha=s2_a,
        log_likelihood=ll,
        r_squared=_r_squared(y, y - X @ beta),
        notes=notes,
        extra={"gradient_norm": gnorm, "evaluations": prof.evals,
               "theta": quasi_demean_weights(s2_u, s2_a, sizes)},
    )


def _find_root(prof, psi0, max_iter):
    """Bracket and solve slope(psi) = 0 in log psi; None if the optimum is psi = 0."""
    t = math.log(psi0) if psi0 > 0 else math.log(1e-2)
    f = lambda s: prof.slope(math.exp(s))  # noqa: E731
    ft = f(t)
    step = math.log(4.0)
    lo = hi = t
    for _ in range(60):
        if ft > 0:
            lo, hi = hi, hi + step
            if f(hi) <= 0:
                break
        else:
            hi, lo = lo, lo - step
            if lo < math.log(1e-14):
                return None
            if f(lo) > 0:
                break
    else:
        return None
    if not (f(lo) > 0 >= f(hi)):
        return None
    t_star = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=8 * np.finfo(float).eps, maxiter=max_iter)
    return math.exp(t_star)


ESTIMATOR_FUNCS = {
    "pooled_ols": pooled_ols,
    "between": between_estimator,
    "within": within_estimator,
    "first_difference": first_difference_estimator,
    "re_gls": re_gls,
    "re_mle": re_mle,
}


def estimate(panel, spec):
    """Dispatch on ``spec.estimator``."""
    return ESTIMATOR_FUNCS[spec.estimator](panel, spec)
