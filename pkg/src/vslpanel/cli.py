"""Command-line front end.

    vslpanel estimate --panel P.csv --risk R.csv --spec models.ini --out DIR
    vslpanel simulate --config study.ini --out DIR [--seed N]
    vslpanel report   --inputs DIR1/results.json DIR2/results.json [--out table.txt]

Every failure is reported as ``<stage>: <message>`` with exit status 1.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import panel as pn
from .config import load_model_file, load_study_config, parse_convention
from .errors import ReportError, VslPanelError
from .estimators import EstimateResult, estimate
from .iv import (
    IvSpec,
    anderson_rubin_test,
    ar_confidence_set,
    first_stage_diagnostics,
    frar_test,
    two_sls,
    write_replicates,
)
from .montecarlo import config_echo, run_study, summarize_interval_widths
from .vsl import WageStats, format_vsl_table, vsl_report, write_vsl_csv

log = logging.getLogger("vslpanel")


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        super().__init__(f"{stage}: {exc}")


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is None or isinstance(exc, StageError):
            return False
        if isinstance(exc, (VslPanelError, OSError, ValueError, KeyError)):
            raise StageError(self.name, exc) from exc
        return False


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _coef_rows(name, res, level=0.95):
    ci = res.conf_int(level)
    se = res.std_errors
    t = res.tvalues
    for i, term in enumerate(res.names):
        yield [name, res.estimator, term, repr(float(res.params[i])), repr(float(se[i])),
               repr(float(t[i])), repr(float(ci[i, 0])), repr(float(ci[i, 1])),
               res.n_obs, res.n_groups, res.covariance_type]


def coefficients_csv(named_results, level=0.95):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "estimator", "term", "estimate", "std_error", "t_stat", "ci_low", "ci_high",
                "n_obs", "n_groups", "covariance"])
    for name, res in named_results:
        for row in _coef_rows(name, res, level):
            w.writerow(row)
    return buf.getvalue()


def format_coefficients(name, res, level=0.95):
    ci = res.conf_int(level)
    lines = [f"Model {name} [{res.estimator}, {res.covariance_type} covariance]",
             f"  n_obs = {res.n_obs}, n_groups = {res.n_groups}, R2 = {res.r_squared:.4f}"]
    if res.sigma2_alpha is not None and not math.isnan(res.sigma2_alpha):
        lines.append(f"  sigma2_u = {res.sigma2_u:.6g}, sigma2_alpha = {res.sigma2_alpha:.6g}")
    if res.log_likelihood is not None:
        lines.append(f"  log-likelihood = {res.log_likelihood:.6f}")
    lines.append(f"  {'term':<18}{'estimate':>14}{'std.err':>14}{'t':>9}{'ci_low':>14}{'ci_high':>14}")
    for i, term in enumerate(res.names):
        lines.append(f"  {term:<18}{res.params[i]:>14.6g}{res.std_errors[i]:>14.6g}{res.tvalues[i]:>9.3f}"
                     f"{ci[i, 0]:>14.6g}{ci[i, 1]:>14.6g}")
    for note in res.notes:
        lines.append(f"  note: {note}")
    return "\n".join(lines) + "\n"


def cmd_estimate(args):
    with _Stage("load"):
        model_file = load_model_file(args.spec)
        for path in (args.panel, args.risk):
            if not Path(path).is_file():
                raise FileNotFoundError(f"no such file: {path}")
        data = pn.load_panel(args.panel, model_file.schema)
        risks = pn.load_risk_table(args.risk)
    with _Stage("merge"):
        data, merge_report = pn.merge_risk(data, risks, drop_unmatched=model_file.drop_unmatched)
    with _Stage("filter"):
        drops = {}
        if model_file.sample_filter is not None:
            data, drops = pn.apply_filter(data, model_file.sample_filter)
    with _Stage("estimate"):
        if data.n_obs == 0:
            raise ValueError("no observations left after filtering")
        named, tests, extra_files = [], [], {}
        for entry in model_file.models:
            spec = entry.spec
            with warnings.catch_warnings(record=True):
                warnings.simplefilter("always")
                if isinstance(spec, IvSpec):
                    res = two_sls(data, spec)
                    fs = first_stage_diagnostics(data, spec)
                    tests.append({"model": entry.name, "test": "first_stage_F", "statistic": fs.f_stat,
                                  "p_value": fs.f_pvalue, "df": [fs.df1, fs.df2],
                                  "partial_r2": fs.partial_r2})
                    opts = entry.options
                    if "ar_null" in opts:
                        ar = anderson_rubin_test(data, spec, opts["ar_null"])
                        tests.append({"model": entry.name, "test": "anderson_rubin", **ar.to_dict()})
                        if opts.get("frar_replicates"):
                            fr = frar_test(data, spec, opts["ar_null"], fraction=opts["frar_fraction"],
                                           replicates=opts["frar_replicates"], seed=args.seed,
                                           recentering=opts["frar_recentering"])
                            tests.append({"model": entry.name, "test": "frar", **fr.to_dict()})
                            buf = io.StringIO()
                            write_replicates(fr, buf)
                            extra_files[f"{entry.name}_frar_replicates.csv"] = buf.getvalue()
                    if opts.get("ar_confidence_set"):
                        cs = ar_confidence_set(data, spec)
                        tests.append({"model": entry.name, "test": "ar_confidence_set", "level": cs.level,
                                      "lower": cs.lower, "upper": cs.upper, "open_ended": cs.open_ended})
                else:
                    res = estimate(data, spec)
            named.append((entry.name, res))
    with _Stage("report"):
        mean_wage = float(np.mean(np.exp(data.column(pn.OUTCOME))))
        stats = parse_convention(args.convention, default_mean_wage=mean_wage)
        rows = vsl_report(named, stats, display_scale=args.display_scale)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "coefficients.csv", coefficients_csv(named))
        buf = io.StringIO()
        write_vsl_csv(rows, stats, buf)
        _write(out / "vsl.csv", buf.getvalue())
        for fname, text in extra_files.items():
            _write(out / fname, text)
        text = [format_vsl_table(rows, stats, title="Wage-fatal risk trade-off")]
        if drops:
            text.append("Sample filter drops:\n" + pn.format_drop_report(drops))
        if merge_report.n_dropped:
            text.append(f"Risk merge dropped {merge_report.n_dropped} rows for {list(merge_report.unmatched)}\n")
        text.extend(format_coefficients(n, r) for n, r in named)
        for t in tests:
            text.append(f"{t['model']} {t['test']}: " + ", ".join(
                f"{k} = {v}" for k, v in t.items() if k not in ("model", "test", "config")) + "\n")
        _write(out / "report.txt", "\n".join(text))
        payload = {
            "convention": {**stats.__dict__},
            "display_scale": args.display_scale,
            "seed": args.seed,
            "n_obs": data.n_obs,
            "drop_report": drops,
            "merge_dropped": merge_report.n_dropped,
            "models": [{"name": n, "result": r.to_dict()} for n, r in named],
            "tests": tests,
        }
        _write(out / "results.json", json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    log.info("wrote %d model(s) to %s", len(named), out)
    return 0


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def cmd_simulate(args):
    with _Stage("load"):
        study = load_study_config(args.config)
    dgp = study.dgp
    if args.seed is not None:
        dgp = dgp.replace(seed=args.seed)
    reps = args.replications or study.replications
    with _Stage("simulate"):
        report = run_study(dgp, list(study.specs), reps, level=study.level, max_workers=args.max_workers)
    with _Stage("report"):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        report.write_csv(buf)
        _write(out / "mc_report.csv", buf.getvalue())
        buf = io.StringIO()
        report.write_replicates(buf)
        _write(out / "mc_replicates.csv", buf.getvalue())
        summary = report.summary_text()
        names = set(report.summaries)
        if {"iv", "proxy"} <= names:
            wr = summarize_interval_widths(report)
            summary += (f"\nproxy / IV mean CI half-range: {wr.proxy_half_range:.6g} / "
                        f"{wr.iv_half_range:.6g} = {wr.ratio:.4f}\n")
        _write(out / "mc_summary.txt", summary)
        _write(out / "mc_config.json", json.dumps(
            {"dgp": config_echo(dgp), "replications": reps, "level": study.level, "seed": dgp.seed},
            indent=2, sort_keys=True) + "\n")
    sys.stdout.write(summary)
    return 0


def _load_results(path):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        stats = WageStats(**payload["convention"])
        models = [(m["name"], EstimateResult.from_dict(m["result"])) for m in payload["models"]]
    except (OSError, ValueError, KeyError, TypeError, VslPanelError) as exc:
        raise ReportError(f"malformed estimate output {path}: {exc}") from None
    return stats, models


def cmd_report(args):
    with _Stage("report"):
        blocks = []
        rows = []
        stats = None
        for path in args.inputs or []:
            st, models = _load_results(path)
            if stats is not None and st != stats:
                blocks.append(f"note: {path} uses a different wage convention\n")
            stats = stats or st
            rows.extend(vsl_report(models, st, display_scale=args.display_scale, level=args.level))
        table = format_vsl_table(rows, stats, title=args.title)
        text = table + "".join(blocks)
        if args.out:
            _write(args.out, text)
        else:
            sys.stdout.write(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="vslpanel", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate wage-risk models from CSV data")
    e.add_argument("--panel", required=True)
    e.add_argument("--risk", required=True)
    e.add_argument("--spec", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--convention", default="wage_period=monthly",
                   help="comma-separated key=value WageStats fields; mean_wage defaults to the sample mean")
    e.add_argument("--display-scale", type=float, default=1000.0)
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="run a Monte Carlo study")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--replications", type=int, default=None)
    s.add_argument("--max-workers", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="side-by-side table from estimate outputs")
    r.add_argument("--inputs", nargs="*", default=[])
    r.add_argument("--out", default=None)
    r.add_argument("--display-scale", type=float, default=1000.0)
    r.add_argument("--level", type=float, default=0.95)
    r.add_argument("--title", default=None)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
