"""Run the Monte Carlo study configs in scripts/configs and print summaries.

Usage::

    python scripts/run_studies.py                 # every config
    python scripts/run_studies.py endogenous      # one or more by name
    python scripts/run_studies.py --replications 50 --workers 4 weak_instruments

For configs that define both an ``iv`` and a ``proxy`` spec the ratio of
mean CI half-ranges is printed as well.
"""

import argparse
import sys
import time
from pathlib import Path

from vslpanel.config import load_study_config
from vslpanel.montecarlo import run_study, summarize_interval_widths

CONFIGS = Path(__file__).resolve().parent / "configs"


def main(argv=None):
    available = sorted(p.stem for p in CONFIGS.glob("*.ini"))
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help=f"configs to run (default: all of {available})")
    ap.add_argument("--replications", type=int, help="override the configured replication count")
    ap.add_argument("--workers", type=int, default=1, help="worker processes")
    args = ap.parse_args(argv)

    names = args.names or available
    unknown = sorted(set(names) - set(available))
    if unknown:
        ap.error(f"unknown config(s) {unknown}; available: {available}")

    for name in names:
        study = load_study_config(CONFIGS / f"{name}.ini")
        reps = args.replications or study.replications
        t0 = time.perf_counter()
        report = run_study(study.dgp, study.specs, reps, level=study.level, max_workers=args.workers)
        print(f"== {name} ({time.perf_counter() - t0:.1f}s)")
        print(report.summary_text(), end="")
        if {"iv", "proxy"} <= set(report.summaries):
            w = summarize_interval_widths(report)
            print(f"proxy / iv mean half-range: {w.ratio:.3f}")
        print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
