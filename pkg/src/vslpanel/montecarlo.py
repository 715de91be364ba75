"""Synthetic labor markets with endogenous job risk, and replication studies.

Workers carry a latent taste for risk ``nu``. It raises the chance of
sorting into a dangerous industry (loading ``preference_loading``) and,
through ``preference_wage_loading``, the wage itself, so risk and wages are
jointly determined. Family-structure instruments shift industry choice but
not wages. An observed 0-10 risk-attitude score is a noisy, rounded copy of
``nu`` with correlation ``proxy_fidelity``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd

from . import panel as pn
from .errors import ConfigurationError, EstimationError, ReportError, StudyError
from .estimators import ModelSpec, critical_value, estimate
from .iv import IvSpec, two_sls

CONTROL_CATALOG = ("education", "age", "age_sq", "hours", "public", "contract", "union", "gender")
INSTRUMENTS = ("married", "children_under6", "spouse_schooling", "spouse_ill", "spouse_works")
PROXY = "risk_willingness"
DUMMIES = ("public", "contract", "union", "gender", "married", "spouse_ill", "spouse_works",
           "salaried", "disabled")

DEFAULT_BETA = {
    "education": 0.08,
    "age": 0.04,
    "age_sq": -0.0004,
    "hours": 0.005,
    "public": 0.05,
    "contract": 0.15,
    "union": 0.05,
}
DEFAULT_LOADINGS = {
    "married": 0.6,
    "children_under6": 0.5,
    "spouse_schooling": 0.05,
    "spouse_ill": 0.3,
    "spouse_works": -0.4,
}
# one-digit industry fatality rates, 2009 wave, ascending
BASE_RISK_LEVELS = (5.2, 6.4, 7.0, 19.6, 22.0, 22.6, 29.1, 34.2)


@dataclass(frozen=True)
class RiskModel:
    instrument_loadings: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_LOADINGS))
    preference_loading: float = 1.0
    noise_sd: float = 1.0


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process.

    Risk is an increasing function of the index
    ``instruments . loadings + preference_loading * nu + noise_sd * e_it``.
    By default it is cut into ``n_industries`` equal-share bins per period,
    each bin (industry) carrying one fatality rate; with
    ``continuous_risk`` the index is mapped affinely instead.
    """

    n_workers: int = 2000
    periods: tuple = (2009,)
    true_alpha1: float = 0.002
    true_beta: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_BETA))
    intercept: float = 5.0
    sigma_alpha: float = 0.0
    sigma_u: float = 0.5
    risk_model: RiskModel = field(default_factory=RiskModel)
    preference_wage_loading: float = 0.0
    proxy_fidelity: float = 1.0
    proxy_scale: float = 10.0 / 7.0
    n_industries: int = 8
    continuous_risk: bool = False
    level_jitter: float = 0.25
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(int(p) for p in self.periods))
        if not self.periods:
            raise ConfigurationError("periods must be non-empty")
        if len(set(self.periods)) != len(self.periods):
            raise ConfigurationError("periods must be distinct")
        if self.n_workers < 2:
            raise ConfigurationError("n_workers must be at least 2")
        if self.n_industries < 1:
            raise ConfigurationError("n_industries must be at least 1")
        for name in ("sigma_alpha", "sigma_u", "level_jitter"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.risk_model.noise_sd < 0:
            raise ConfigurationError("risk noise_sd must be non-negative")
        if not -1.0 <= self.proxy_fidelity <= 1.0:
            raise ConfigurationError(
                f"proxy_fidelity {self.proxy_fidelity} is not a feasible correlation (|rho| <= 1)"
            )
        if self.proxy_scale <= 0:
            raise ConfigurationError("proxy_scale must be positive")
        bad = set(self.true_beta) - set(CONTROL_CATALOG)
        if bad:
            raise ConfigurationError(f"no generator for control(s) {sorted(bad)}; known: {CONTROL_CATALOG}")
        bad = set(self.risk_model.instrument_loadings) - set(INSTRUMENTS)
        if bad:
            raise ConfigurationError(f"unknown instrument(s) {sorted(bad)}; known: {INSTRUMENTS}")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)

    @property
    def controls(self):
        return tuple(self.true_beta)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Latent draws, row-aligned with the generated panel."""

    nu: np.ndarray
    alpha_i: np.ndarray
    u: np.ndarray
    risk_index: np.ndarray
    proxy_latent: np.ndarray
    risk_table: pn.RiskTable | None
    config: DgpConfig


def _seed_seq(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def replicate_seed(master_seed, r):
    """Child seed for replicate ``r``, keyed by index only."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(int(r),))


def generate_garen_panel(config, seed=None):
    """Draw one synthetic panel.

    Returns ``(PanelDataset, GroundTruth)``. ``seed`` overrides
    ``config.seed`` and may be a ``SeedSequence``.
    """
    rng = np.random.default_rng(_seed_seq(config.seed if seed is None else seed))
    N = config.n_workers
    periods = sorted(config.periods)
    T = len(periods)
    n = N * T
    w = np.repeat(np.arange(N), T)
    t = np.tile(np.asarray(periods), N)
    t_off = t - periods[0]

    nu = rng.standard_normal(N)
    alpha_i = config.sigma_alpha * rng.standard_normal(N)

    married = rng.binomial(1, 0.63, N).astype(float)
    kids = rng.binomial(2, 0.065, N).astype(float)
    spouse_school = married * np.clip(np.round(rng.normal(9.35, 3.5, N)), 0, 24)
    spouse_ill = rng.binomial(1, 0.58, N).astype(float)
    spouse_works = rng.binomial(1, 0.29, N).astype(float)
    inst = {
        "married": married,
        "children_under6": kids,
        "spouse_schooling": spouse_school,
        "spouse_ill": spouse_ill,
        "spouse_works": spouse_works,
    }

    education = np.clip(np.round(rng.normal(10.74, 4.2, N)), 0, 25)
    base_age = rng.integers(20, 65, N)
    public = rng.binomial(1, 0.13, N).astype(float)
    union = rng.binomial(1, 0.17, N).astype(float)
    gender = rng.binomial(1, 0.60, N).astype(float)
    age = (base_age[w] + t_off).astype(float)
    hours = np.clip(np.round(rng.normal(45.0, 13.0, n)), 2, 126)
    contract = rng.binomial(1, 0.67, n).astype(float)
    controls = {
        "education": education[w],
        "age": age,
        "age_sq": age ** 2,
        "hours": hours,
        "public": public[w],
        "contract": contract,
        "union": union[w],
        "gender": gender[w],
    }

    rm = config.risk_model
    shift = np.zeros(N)
    for name, load in rm.instrument_loadings.items():
        shift += load * (inst[name] - inst[name].mean())
    index = shift[w] + rm.preference_loading * nu[w] + rm.noise_sd * rng.standard_normal(n)

    J = config.n_industries
    if J == len(BASE_RISK_LEVELS):
        base_levels = np.asarray(BASE_RISK_LEVELS)
    else:
        base_levels = np.linspace(2.0, 34.0, J)
    risk = np.empty(n)
    industry = np.empty(n, dtype=object)
    entries = {}
    for period in periods:
        rows = np.flatnonzero(t == period)
        levels = np.sort(base_levels * np.exp(config.level_jitter * rng.standard_normal(J)))
        if config.continuous_risk:
            z = index[rows]
            sd = z.std() if z.std() > 0 else 1.0
            risk[rows] = base_levels.mean() + base_levels.std() * (z - z.mean()) / sd
            industry[rows] = "continuous"
            continue
        ranks = np.argsort(np.argsort(index[rows], kind="stable"), kind="stable")
        bins = (ranks * J) // len(rows)
        risk[rows] = levels[bins]
        industry[rows] = np.array([f"ind{b + 1}" for b in range(J)], dtype=object)[bins]
        for b in range(J):
            entries[(f"ind{b + 1}", period)] = float(levels[b])

    u = config.sigma_u * rng.standard_normal(n)
    log_wage = config.intercept + alpha_i[w] + config.true_alpha1 * risk + config.preference_wage_loading * nu[w] + u
    for name, beta in config.true_beta.items():
        log_wage = log_wage + beta * controls[name]

    rho = config.proxy_fidelity
    latent = rho * nu + math.sqrt(max(0.0, 1.0 - rho * rho)) * rng.standard_normal(N)
    proxy = np.clip(np.round(5.0 + config.proxy_scale * latent), 0, 10)

    frame = pd.DataFrame({
        pn.WORKER: w,
        pn.PERIOD: t,
        pn.INDUSTRY: industry,
        pn.OUTCOME: log_wage,
        pn.RISK: risk,
        **controls,
        **{k: v[w] for k, v in inst.items()},
        PROXY: proxy[w],
        "salaried": np.ones(n),
        "disabled": np.zeros(n),
    })
    roles = {pn.RISK: "risk", PROXY: "proxy", **{k: "instrument" for k in INSTRUMENTS}}
    # ids are zero-padded so lexical and numeric worker order agree
    width = len(str(N - 1))
    frame[pn.WORKER] = [f"{i:0{width}d}" for i in w]
    data = pn.PanelDataset(frame, roles, frozenset(DUMMIES))
    truth = GroundTruth(
        nu=nu[w], alpha_i=alpha_i[w], u=u, risk_index=index, proxy_latent=latent[w],
        risk_table=None if config.continuous_risk else pn.RiskTable(entries), config=config,
    )
    return data, truth


@dataclass(frozen=True)
class StudySpec:
    name: str
    model: ModelSpec | IvSpec

    @property
    def kind(self):
        return "two_sls" if isinstance(self.model, IvSpec) else self.model.estimator


def fit_spec(panel, spec):
    if isinstance(spec.model, IvSpec):
        return two_sls(panel, spec.model)
    return estimate(panel, spec.model)


@dataclass(frozen=True, eq=False)
class SpecSummary:
    name: str
    kind: str
    estimates: np.ndarray
    std_errors: np.ndarray
    covered: np.ndarray
    replicate_ids: np.ndarray
    failures: tuple
    true_value: float
    level: float

    @property
    def n_ok(self):
        return len(self.estimates)

    @property
    def n_failed(self):
        return len(self.failures)

    @property
    def mean(self):
        return float(np.mean(self.estimates))

    @property
    def bias(self):
        return self.mean - self.true_value

    @property
    def variance(self):
        return float(np.var(self.estimates))

    @property
    def sd(self):
        return math.sqrt(self.variance)

    @property
    def rmse(self):
        return math.sqrt(float(np.mean((self.estimates - self.true_value) ** 2)))

    @property
    def mc_se(self):
        """Monte Carlo standard error of the mean estimate."""
        if self.n_ok < 2:
            return math.nan
        return float(np.std(self.estimates, ddof=1)) / math.sqrt(self.n_ok)

    @property
    def coverage(self):
        return float(np.mean(self.covered))

    @property
    def mean_half_range(self):
        return float(np.mean(critical_value(self.level) * self.std_errors))

    @property
    def mean_se(self):
        return float(np.mean(self.std_errors))

    def within_mc_se(self, k=3.0):
        return abs(self.bias) <= k * self.mc_se

    METRICS = ("n_ok", "n_failed", "mean", "bias", "sd", "rmse", "mc_se", "coverage",
               "mean_half_range", "mean_se")


@dataclass(frozen=True, eq=False)
class McReport:
    config: DgpConfig
    replications: int
    seed: int
    level: float
    summaries: dict

    def __getitem__(self, name):
        return self.summaries[name]

    def write_csv(self, dest):
        """One row per spec x metric, full precision."""
        writer = csv.writer(dest, lineterminator="\n")
        writer.writerow(["spec", "estimator", "metric", "value"])
        for name, s in self.summaries.items():
            for metric in SpecSummary.METRICS:
                v = getattr(s, metric)
                writer.writerow([name, s.kind, metric, repr(float(v)) if isinstance(v, float) else v])

    def write_replicates(self, dest):
        writer = csv.writer(dest, lineterminator="\n")
        writer.writerow(["spec", "replicate", "estimate", "std_error", "covered"])
        for name, s in self.summaries.items():
            for r, b, se, c in zip(s.replicate_ids, s.estimates, s.std_errors, s.covered):
                writer.writerow([name, int(r), repr(float(b)), repr(float(se)), int(bool(c))])

    def summary_text(self):
        cfg = self.config
        lines = [
            f"Monte Carlo study: R = {self.replications}, master seed = {self.seed}",
            f"DGP: N = {cfg.n_workers}, periods = {list(cfg.periods)}, true alpha1 = {cfg.true_alpha1}, "
            f"lambda = {cfg.risk_model.preference_loading}, gamma = {cfg.preference_wage_loading}, "
            f"rho = {cfg.proxy_fidelity}",
            "",
            f"{'spec':<14}{'estimator':<18}{'mean':>12}{'bias':>12}{'sd':>12}{'rmse':>12}"
            f"{'bias/mcse':>11}{'cover':>8}{'half-rng':>12}{'fail':>6}",
        ]
        for name, s in self.summaries.items():
            ratio = s.bias / s.mc_se if s.mc_se and s.mc_se > 0 else math.nan
            lines.append(
                f"{name:<14}{s.kind:<18}{s.mean:>12.6f}{s.bias:>12.6f}{s.sd:>12.6f}{s.rmse:>12.6f}"
                f"{ratio:>11.2f}{s.coverage:>8.3f}{s.mean_half_range:>12.6f}{s.n_failed:>6d}"
            )
        return "\n".join(lines) + "\n"


def _one_replicate(args):
    config, specs, r, level = args
    data, _ = generate_garen_panel(config, seed=replicate_seed(config.seed, r))
    crit = critical_value(level)
    out = []
    for spec in specs:
        try:
            res = fit_spec(data, spec)
            b = res.risk_coef
            se = res.risk_se
            out.append((b, se, abs(b - config.true_alpha1) <= crit * se, None))
        except EstimationError as exc:
            out.append((math.nan, math.nan, False, f"{type(exc).__name__}: {exc}"))
    return r, out


def run_study(config, specs, replications, level=0.95, max_workers=None):
    """Estimate every spec on ``replications`` independent panels.

    Replicate ``r`` is generated from ``replicate_seed(config.seed, r)``, so
    the report does not depend on spec order or on how replicates are
    scheduled across ``max_workers`` processes. Estimator failures are
    recorded per spec; more than 10% failures raises :class:`StudyError`.
    """
    if replications < 2:
        raise ConfigurationError("a study needs at least 2 replications")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigurationError("spec names must be unique")
    jobs = [(config, tuple(specs), r, level) for r in range(replications)]
    if max_workers and max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_one_replicate, jobs, chunksize=max(1, replications // (4 * max_workers))))
    else:
        results = [_one_replicate(j) for j in jobs]
    results.sort(key=lambda item: item[0])

    summaries = {}
    for i, spec in enumerate(specs):
        rows = [(r, out[i]) for r, out in results]
        ok = [(r, o) for r, o in rows if o[3] is None]
        failures = tuple((r, o[3]) for r, o in rows if o[3] is not None)
        if len(failures) > 0.10 * replications:
            raise StudyError(spec.name, len(failures), replications)
        summaries[spec.name] = SpecSummary(
            name=spec.name,
            kind=spec.kind,
            estimates=np.array([o[0] for _, o in ok]),
            std_errors=np.array([o[1] for _, o in ok]),
            covered=np.array([o[2] for _, o in ok], dtype=bool),
            replicate_ids=np.array([r for r, _ in ok], dtype=int),
            failures=failures,
            true_value=config.true_alpha1,
            level=level,
        )
    return McReport(config, replications, config.seed, level, summaries)


@dataclass(frozen=True)
class WidthRatio:
    iv_spec: str
    proxy_spec: str
    iv_half_range: float
    proxy_half_range: float

    @property
    def ratio(self):
        return self.proxy_half_range / self.iv_half_range


def summarize_interval_widths(report, iv="iv", proxy="proxy"):
    """Mean CI half-range of the proxy spec relative to the IV spec."""
    for name in (iv, proxy):
        if name not in report.summaries:
            raise ReportError(f"study has no spec named {name!r}")
    return WidthRatio(iv, proxy, report[iv].mean_half_range, report[proxy].mean_half_range)


def config_echo(config):
    d = asdict(config)
    d["periods"] = list(config.periods)
    return d
