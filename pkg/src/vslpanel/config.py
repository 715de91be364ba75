"""Plain-text key-value files: model specs for ``estimate`` and study
configs for ``simulate``.

Both are INI-style. A model file holds one ``[model NAME]`` block per
regression plus optional ``[data]`` and ``[filter]`` blocks::

    [filter]
    min_age = 20

    [model pooled]
    estimator = pooled_ols
    controls = education, age, age_sq
    covariance = robust

    [model family_iv]
    estimator = two_sls
    controls = education, age, age_sq
    instruments = married, children_under6

A study file holds ``[dgp]``, ``[risk_model]``, ``[beta]``, ``[study]`` and
one ``[spec NAME]`` block per estimator, using the same keys.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from . import panel as pn
from .errors import ConfigurationError
from .estimators import ModelSpec
from .iv import IvSpec
from .montecarlo import DEFAULT_LOADINGS, DgpConfig, RiskModel, StudySpec
from .vsl import WageStats

MODEL_KEYS = {"estimator", "outcome", "risk", "controls", "intercept", "covariance", "cluster_by",
              "instruments", "endogenous", "ar_null", "frar_fraction", "frar_replicates",
              "frar_recentering", "ar_confidence_set"}


def _parser(source):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
            with open(source, encoding="utf-8") as fh:
                cp.read_file(fh)
        elif isinstance(source, str):
            cp.read_string(source)
        else:
            cp.read_file(source)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse config: {exc}") from None
    return cp


def parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def parse_list(text):
    return tuple(p for p in (s.strip() for s in str(text).replace("\n", ",").split(",")) if p)


def _float(sec, key, default=None):
    if key not in sec:
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigurationError(f"[{sec.name}] {key} is not a number: {sec[key]!r}") from None


def _int(sec, key, default=None):
    if key not in sec:
        return default
    try:
        return int(sec[key])
    except ValueError:
        raise ConfigurationError(f"[{sec.name}] {key} is not an integer: {sec[key]!r}") from None


@dataclass(frozen=True)
class ModelEntry:
    name: str
    spec: ModelSpec | IvSpec
    options: dict = field(default_factory=dict)


def model_from_section(name, sec):
    unknown = set(sec) - MODEL_KEYS
    if unknown:
        raise ConfigurationError(f"[{sec.name}] unknown key(s): {sorted(unknown)}")
    estimator = sec.get("estimator", "pooled_ols").strip()
    base = ModelSpec(
        risk_var=sec.get("risk", pn.RISK).strip(),
        controls=parse_list(sec.get("controls", "")),
        outcome=sec.get("outcome", pn.OUTCOME).strip(),
        include_intercept=parse_bool(sec.get("intercept", "true")),
        estimator="pooled_ols" if estimator == "two_sls" else estimator,
        covariance=sec.get("covariance", "classical").strip(),
        cluster_by=(sec.get("cluster_by") or None),
    )
    options = {}
    if estimator == "two_sls":
        spec = IvSpec(base, parse_list(sec.get("instruments", "")), sec.get("endogenous") or None)
        if "ar_null" in sec:
            options["ar_null"] = _float(sec, "ar_null")
        options["frar_fraction"] = _float(sec, "frar_fraction", 0.5)
        options["frar_replicates"] = _int(sec, "frar_replicates", 0)
        options["frar_recentering"] = sec.get("frar_recentering", "coefficient").strip()
        options["ar_confidence_set"] = parse_bool(sec.get("ar_confidence_set", "false"))
    else:
        if "instruments" in sec:
            raise ConfigurationError(f"[{sec.name}] instruments given but estimator is {estimator}")
        spec = base
    return ModelEntry(name, spec, options)


def _blocks(cp, prefix):
    for section in cp.sections():
        head, _, name = section.partition(" ")
        if head == prefix:
            if not name.strip():
                raise ConfigurationError(f"[{section}] needs a name")
            yield name.strip(), cp[section]


@dataclass(frozen=True)
class ModelFile:
    models: tuple
    schema: pn.PanelSchema
    sample_filter: pn.SampleFilter | None
    drop_unmatched: bool = False


def load_model_file(source):
    cp = _parser(source)
    models = tuple(model_from_section(n, s) for n, s in _blocks(cp, "model"))
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigurationError("model names must be unique")

    schema = pn.PanelSchema()
    drop_unmatched = False
    if cp.has_section("data"):
        sec = cp["data"]
        roles = {}
        for role in ("instrument", "proxy", "control", "weight", "id"):
            for v in parse_list(sec.get(role + "s", sec.get(role, ""))):
                roles[v] = role
        schema = pn.PanelSchema(
            worker_id=sec.get("worker_id", pn.WORKER),
            period=sec.get("period", pn.PERIOD),
            industry=sec.get("industry", pn.INDUSTRY),
            outcome=sec.get("outcome", pn.OUTCOME),
            roles=roles,
            dummies=parse_list(sec.get("dummies", "")),
            exclude=parse_list(sec.get("exclude", "")),
        )
        drop_unmatched = parse_bool(sec.get("drop_unmatched", "false"))

    flt = None
    if cp.has_section("filter"):
        sec = cp["filter"]
        min_age = sec.get("min_age", "20").strip()
        flt = pn.SampleFilter(
            min_age=None if min_age.lower() == "none" else int(min_age),
            require_salaried=parse_bool(sec.get("require_salaried", "true")),
            exclude_disabled=parse_bool(sec.get("exclude_disabled", "true")),
            drop_missing=parse_bool(sec.get("drop_missing", "true")),
            age_var=sec.get("age_var", "age"),
            salaried_var=sec.get("salaried_var", "salaried"),
            disabled_var=sec.get("disabled_var", "disabled"),
        )
    return ModelFile(models, schema, flt, drop_unmatched)


def parse_convention(text, default_mean_wage=None):
    """``key=value`` pairs separated by commas, e.g.
    ``wage_period=monthly,mean_wage=573.73``."""
    fields = {}
    for part in parse_list(text or ""):
        key, sep, value = part.partition("=")
        if not sep:
            raise ConfigurationError(f"convention entry {part!r} is not key=value")
        fields[key.strip()] = value.strip()
    allowed = {"mean_wage", "wage_period", "hours_per_week", "weeks_per_year", "risk_denominator"}
    bad = set(fields) - allowed
    if bad:
        raise ConfigurationError(f"unknown convention key(s) {sorted(bad)}")
    kwargs = {}
    for key, value in fields.items():
        if key == "wage_period":
            kwargs[key] = value
        else:
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise ConfigurationError(f"convention {key} is not a number: {value!r}") from None
    if "mean_wage" not in kwargs:
        if default_mean_wage is None:
            raise ConfigurationError("convention needs mean_wage")
        kwargs["mean_wage"] = float(default_mean_wage)
    return WageStats(**kwargs)


@dataclass(frozen=True)
class StudyConfig:
    dgp: DgpConfig
    specs: tuple
    replications: int
    level: float = 0.95


def load_study_config(source):
    cp = _parser(source)
    if not cp.has_section("dgp"):
        raise ConfigurationError("study config needs a [dgp] section")
    d = cp["dgp"]
    known = {"n_workers", "periods", "true_alpha1", "intercept", "sigma_alpha", "sigma_u",
             "preference_wage_loading", "proxy_fidelity", "proxy_scale", "n_industries",
             "continuous_risk", "level_jitter", "seed"}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"[dgp] unknown key(s): {sorted(unknown)}")
    kwargs = {}
    for key in ("true_alpha1", "intercept", "sigma_alpha", "sigma_u", "preference_wage_loading",
                "proxy_fidelity", "proxy_scale", "level_jitter"):
        v = _float(d, key)
        if v is not None:
            kwargs[key] = v
    for key in ("n_workers", "n_industries", "seed"):
        v = _int(d, key)
        if v is not None:
            kwargs[key] = v
    if "periods" in d:
        try:
            kwargs["periods"] = tuple(int(p) for p in parse_list(d["periods"]))
        except ValueError:
            raise ConfigurationError(f"[dgp] periods must be integers: {d['periods']!r}") from None
    if "continuous_risk" in d:
        kwargs["continuous_risk"] = parse_bool(d["continuous_risk"])

    if cp.has_section("risk_model"):
        r = cp["risk_model"]
        loadings = dict(DEFAULT_LOADINGS)
        explicit = {k.split(".", 1)[1]: float(v) for k, v in r.items() if k.startswith("loading.")}
        if explicit:
            loadings = explicit
        scale = _float(r, "instrument_scale", 1.0)
        loadings = {k: v * scale for k, v in loadings.items()}
        kwargs["risk_model"] = RiskModel(
            instrument_loadings=loadings,
            preference_loading=_float(r, "preference_loading", 1.0),
            noise_sd=_float(r, "noise_sd", 1.0),
        )
    if cp.has_section("beta"):
        kwargs["true_beta"] = {k: float(v) for k, v in cp["beta"].items()}
    dgp = DgpConfig(**kwargs)

    study = cp["study"] if cp.has_section("study") else {}
    replications = int(study.get("replications", 100))
    level = float(study.get("level", 0.95))
    specs = []
    for name, sec in _blocks(cp, "spec"):
        entry = model_from_section(name, sec)
        specs.append(StudySpec(name, entry.spec))
    if not specs:
        raise ConfigurationError("study config defines no [spec NAME] blocks")
    return StudyConfig(dgp, tuple(specs), replications, level)
