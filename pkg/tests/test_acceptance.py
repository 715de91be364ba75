"""Acceptance criteria. Each test prints one PASS/FAIL line; the lines are
repeated in the terminal summary."""

import math
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from helpers import cross_section, make_panel, random_panel
from oracles import (
    indirect_least_squares,
    loop_demean,
    loop_differences,
    loop_means,
    mvn_loglike,
    normal_equations,
)
from vslpanel import estimators as est
from vslpanel import iv
from vslpanel import montecarlo as mc
from vslpanel.config import load_study_config
from vslpanel.estimators import ModelSpec
from vslpanel.iv import IvSpec
from vslpanel.vsl import WageStats, annual_earnings, compute_vsl

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "scripts" / "configs"
DATA = ROOT / "src" / "vslpanel" / "data"


def rel_err(got, want):
    got, want = np.asarray(got, float), np.asarray(want, float)
    return float(np.max(np.abs(got - want)) / max(np.max(np.abs(want)), 1e-300))


def design(p, names):
    return np.column_stack([np.ones(p.n_obs) if n == "const" else p.column(n) for n in names])


# 1 -------------------------------------------------------------------------

def _oracle_instance(rng):
    n_controls = int(rng.integers(0, 3))  # k <= 4 with intercept and risk
    p = random_panel(rng, n_workers=int(rng.integers(8, 16)), max_T=3, min_T=1, n_controls=n_controls)
    while (p.group_sizes >= 2).sum() < 3:
        p = random_panel(rng, n_workers=int(rng.integers(8, 16)), max_T=3, min_T=1, n_controls=n_controls)
    spec = ModelSpec(controls=tuple(f"x{c}" for c in range(n_controls)))
    ids, years = p.frame.worker_id.tolist(), p.frame.year.tolist()
    y = p.column("log_wage")
    errs = {}

    res = est.pooled_ols(p, spec)
    errs["pooled_ols"] = rel_err(res.params, normal_equations(y, design(p, res.names)))
    res = est.between_estimator(p, spec)
    X = design(p, res.names)
    errs["between"] = rel_err(res.params, normal_equations(loop_means(y, ids), loop_means(X, ids)))
    res = est.within_estimator(p, spec)
    X = design(p, res.names)
    errs["within"] = rel_err(res.params, normal_equations(loop_demean(y, ids), loop_demean(X, ids)))
    res = est.first_difference_estimator(p, spec)
    X = design(p, res.names)
    errs["first_difference"] = rel_err(res.params, normal_equations(loop_differences(y, ids, years),
                                                                   loop_differences(X, ids, years)))
    cs, ivspec = cross_section(rng, n=int(rng.integers(10, 51)), q=1, n_controls=n_controls or 1)
    res = iv.two_sls(cs, ivspec)
    W = design(cs, ["const", *ivspec.base.controls])
    Z = np.column_stack([W[:, :1], cs.column("z0"), W[:, 1:]])
    X = np.column_stack([W[:, :1], cs.column("risk"), W[:, 1:]])
    errs["two_sls"] = rel_err(res.params, indirect_least_squares(cs.column("log_wage"), X, Z))
    assert p.n_obs <= 50 and len(spec.regressors()) <= 4
    return errs


def test_criterion_1_oracle_equivalence(record_criterion):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = {}
    for _ in range(200):
        for name, e in _oracle_instance(rng).items():
            worst[name] = max(worst.get(name, 0.0), e)
    elapsed = time.perf_counter() - start
    ok = all(e <= 1e-8 for e in worst.values()) and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    assert record_criterion("1 oracle equivalence (200 instances, 1e-8)", ok, detail), detail


# 2 -------------------------------------------------------------------------

def test_criterion_2_algebraic_identities(record_criterion):
    rng = np.random.default_rng(202)
    worst = {"fd=within": 0.0, "gls0=pooled": 0.0, "gls1=within": 0.0, "2sls=ols": 0.0, "scale": 0.0}
    for _ in range(50):
        p = random_panel(rng, n_workers=20, max_T=2, balanced=True)
        spec = ModelSpec(controls=("x0", "x1"))
        worst["fd=within"] = max(worst["fd=within"], rel_err(
            est.first_difference_estimator(p, spec).params, est.within_estimator(p, spec).params))

        q = random_panel(rng, n_workers=20, max_T=4)
        worst["gls0=pooled"] = max(worst["gls0=pooled"], rel_err(
            est.re_gls(q, spec, theta=0.0).params, est.pooled_ols(q, spec).params))
        worst["gls1=within"] = max(worst["gls1=within"], rel_err(
            est.re_gls(q, spec, theta=1.0).params, est.within_estimator(q, spec).params))

        c = q.with_columns({"zself": q.column("risk")})
        worst["2sls=ols"] = max(worst["2sls=ols"], rel_err(
            iv.two_sls(c, IvSpec(spec, ("zself",))).params, est.pooled_ols(c, spec).params))

        r = random_panel(rng, n_workers=30, max_T=3, min_T=2)
        r_scaled = r.with_columns({"risk": 1000.0 * r.column("risk")})
        for name in est.ESTIMATORS:
            s = spec.replace(estimator=name, covariance="robust")
            a, b = est.estimate(r, s), est.estimate(r_scaled, s)
            factor = np.where(np.array(a.names) == "risk", 1000.0, 1.0)
            worst["scale"] = max(worst["scale"], rel_err(b.params * factor, a.params),
                                 rel_err(b.std_errors * factor, a.std_errors))
        cs, ivs = cross_section(rng, n=60, q=2)
        cs2 = cs.with_columns({"risk": 1000.0 * cs.column("risk")})
        a, b = iv.two_sls(cs, ivs), iv.two_sls(cs2, ivs)
        factor = np.where(np.array(a.names) == "risk", 1000.0, 1.0)
        worst["scale"] = max(worst["scale"], rel_err(b.params * factor, a.params),
                             rel_err(b.std_errors * factor, a.std_errors))
    ok = all(v <= 1e-10 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record_criterion("2 algebraic identities (1e-10)", ok, detail), detail


# 3 -------------------------------------------------------------------------

def test_criterion_3_re_mle(record_criterion):
    cfg = mc.DgpConfig(n_workers=2000, periods=(2004, 2006, 2009), true_alpha1=0.02,
                       sigma_alpha=1.0, sigma_u=1.0, seed=303)
    spec = ModelSpec(controls=("age", "hours", "contract", "education"))
    start = time.perf_counter()
    oracle_gap, dominance_gap, gnorm = 0.0, -math.inf, 0.0
    draws = {"alpha1": [], "sigma2_alpha": [], "sigma2_u": []}
    for r in range(100):
        p, _ = mc.generate_garen_panel(cfg, seed=mc.replicate_seed(cfg.seed, r))
        res = est.re_mle(p, spec)
        X, y = design(p, res.names), p.column("log_wage")
        oracle = mvn_loglike(y, X, p.frame.worker_id.tolist(), res.params, res.sigma2_alpha, res.sigma2_u)
        oracle_gap = max(oracle_gap, abs(oracle - res.log_likelihood))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            gls = est.re_gls(p, spec)
        ll_gls = est.re_loglike(y, X, p.worker_codes, p.group_sizes, gls.params, gls.sigma2_alpha, gls.sigma2_u)
        dominance_gap = max(dominance_gap, ll_gls - res.log_likelihood)
        gnorm = max(gnorm, res.extra["gradient_norm"])
        draws["alpha1"].append(res.risk_coef)
        draws["sigma2_alpha"].append(res.sigma2_alpha)
        draws["sigma2_u"].append(res.sigma2_u)
    elapsed = time.perf_counter() - start
    truth = {"alpha1": 0.02, "sigma2_alpha": 1.0, "sigma2_u": 1.0}
    recovery = {k: abs(np.mean(v) / truth[k] - 1) for k, v in draws.items()}
    ok = (oracle_gap <= 1e-8 and dominance_gap <= 1e-8 and all(v <= 0.10 for v in recovery.values())
          and elapsed < 120)
    detail = (f"density gap {oracle_gap:.1e}, max(ll_gls - ll_mle) {dominance_gap:.1e}, "
              + ", ".join(f"{k} off {100 * v:.2f}%" for k, v in recovery.items())
              + f", max grad {gnorm:.1e}; {elapsed:.1f}s")
    assert record_criterion("3 RE-MLE oracle, dominance, recovery", ok, detail), detail


# 4 -------------------------------------------------------------------------

def test_criterion_4_endogeneity(record_criterion):
    study = load_study_config(CONFIGS / "endogenous.ini")
    cfg = study.dgp
    assert study.replications == 500 and cfg.n_workers == 5000
    lam_gamma = cfg.risk_model.preference_loading * cfg.preference_wage_loading
    start = time.perf_counter()
    rep = mc.run_study(cfg, study.specs, study.replications)
    elapsed = time.perf_counter() - start
    z = {n: s.bias / s.mc_se for n, s in rep.summaries.items()}
    ok = (lam_gamma > 0 and np.sign(rep["ols"].bias) == np.sign(lam_gamma) and abs(z["ols"]) > 3
          and abs(z["iv"]) <= 3 and abs(z["proxy"]) <= 3 and elapsed < 300)
    detail = ", ".join(f"{n} bias/mcse {v:+.2f}" for n, v in z.items()) + f"; {elapsed:.0f}s"
    assert record_criterion("4 endogeneity mechanism (R=500, N=5000)", ok, detail), detail


# 5 -------------------------------------------------------------------------

def test_criterion_5_interval_width(record_criterion):
    study = load_study_config(CONFIGS / "weak_instruments.ini")
    assert study.replications == 300
    p, _ = mc.generate_garen_panel(study.dgp)
    ivspec = next(s.model for s in study.specs if s.name == "iv")
    partial = iv.first_stage_diagnostics(p, ivspec).partial_r2
    rep = mc.run_study(study.dgp, study.specs, study.replications)
    ratio = mc.summarize_interval_widths(rep).ratio
    ok = ratio <= 0.5
    detail = f"proxy/IV half-range {ratio:.3f}, first-stage partial R2 {partial:.3f}"
    assert record_criterion("5 interval-width mechanism (R=300)", ok, detail), detail


# 6 -------------------------------------------------------------------------

def test_criterion_6_inference_calibration(record_criterion):
    rng = np.random.default_rng(606)
    rejections = 0
    for _ in range(1000):
        p, spec = cross_section(rng, n=100, q=2, alpha1=0.5, endog=0.5)
        rejections += iv.anderson_rubin_test(p, spec, 0.5).p_value < 0.05
    ar_size = rejections / 1000

    covered = {"robust": 0, "classical": 0}
    n = 1000
    for r in range(500):
        x = rng.exponential(1.0, n)
        y = 1.0 + 0.5 * x + np.sqrt(x) * rng.standard_normal(n)
        p = make_panel([f"{i:04d}" for i in range(n)], [2009] * n, y, risk=x)
        for flavor in covered:
            res = est.pooled_ols(p, ModelSpec(covariance=flavor))
            lo, hi = res.conf_int()[1]
            covered[flavor] += lo <= 0.5 <= hi
    hc1_cov = covered["robust"] / 500
    classical_cov = covered["classical"] / 500

    p, spec = cross_section(rng, n=150, q=2)
    full = iv.anderson_rubin_test(p, spec, 0.3).statistic
    fr = iv.frar_test(p, spec, 0.3, fraction=1.0, replicates=100, seed=1)
    degenerate = bool(np.all(fr.replicates == full))

    ok = 0.03 <= ar_size <= 0.07 and 0.92 <= hc1_cov <= 0.98 and degenerate
    detail = (f"AR size {ar_size:.3f}, HC1 coverage {hc1_cov:.3f} (classical {classical_cov:.3f}), "
              f"FRAR f=1 exact {degenerate}")
    assert record_criterion("6 inference calibration", ok, detail), detail


# 7 -------------------------------------------------------------------------

def test_criterion_7_vsl_identities(record_criterion):
    rng = np.random.default_rng(707)
    worst = {"linearity": 0.0, "units": 0.0, "half_range": 0.0}
    for _ in range(1000):
        a, s = rng.normal(0, 0.01), rng.uniform(0, 0.01)
        c = rng.uniform(0.1, 100)
        stats = WageStats(rng.uniform(100, 5000), str(rng.choice(["hourly", "monthly", "annual"])))
        base = compute_vsl(a, s, stats)
        scale = annual_earnings(stats) * stats.risk_denominator
        tol_unit = max(abs(base.point), base.half_range, 1.0)
        scaled = compute_vsl(c * a, c * s, stats)
        per1k = compute_vsl(10 * a, 10 * s, WageStats(stats.mean_wage, stats.wage_period, risk_denominator=1000))
        for f in ("point", "ci_low", "ci_high", "half_range"):
            worst["linearity"] = max(worst["linearity"],
                                     abs(getattr(scaled, f) - c * getattr(base, f)) / (c * tol_unit))
            worst["units"] = max(worst["units"], abs(getattr(per1k, f) - getattr(base, f)) / tol_unit)
        worst["half_range"] = max(worst["half_range"],
                                  abs(base.half_range - 1.959963984540054 * s * scale) / tol_unit,
                                  abs(base.half_range - (base.ci_high - base.ci_low) / 2) / tol_unit)
    printed = round((849_869 - 580_204) / 2 + 1e-9)
    ok = all(v <= 1e-10 for v in worst.values()) and printed == 134_833
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; printed half-range {printed:,}"
    assert record_criterion("7 VSL identities", ok, detail), detail


# 8 -------------------------------------------------------------------------

def _cli(*args):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "vslpanel", *map(str, args)], capture_output=True, text=True)
    return proc, time.perf_counter() - start


def _snapshot(path):
    return {p.name: p.read_bytes() for p in sorted(Path(path).iterdir())}


def test_criterion_8_end_to_end_determinism(record_criterion, tmp_path):
    runs, times = [], []
    for tag in ("a", "b"):
        proc, t = _cli("estimate", "--panel", DATA / "sample_panel.csv", "--risk", DATA / "industry_risk.csv",
                       "--spec", DATA / "sample_models.ini", "--out", tmp_path / f"est_{tag}", "--seed", 1)
        assert proc.returncode == 0, proc.stderr
        times.append(t)
        proc, _ = _cli("simulate", "--config", CONFIGS / "smoke.ini", "--out", tmp_path / f"sim_{tag}",
                       "--seed", 1)
        assert proc.returncode == 0, proc.stderr
        runs.append((_snapshot(tmp_path / f"est_{tag}"), _snapshot(tmp_path / f"sim_{tag}")))
    identical = runs[0] == runs[1]
    ok = identical and max(times) < 5
    detail = f"byte-identical {identical}, fixture run {max(times):.2f}s"
    assert record_criterion("8 end-to-end determinism", ok, detail), detail
