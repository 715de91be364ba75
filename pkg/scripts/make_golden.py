"""Write the golden pooled-OLS coefficients for the bundled sample panel.

The values come from the test oracle (hand parsing plus normal equations),
not from the package, so the CLI golden-file test checks the whole
estimate pipeline against an independent computation.
"""

import csv
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import sample_pooled_oracle  # noqa: E402

DATA = ROOT / "src" / "vslpanel" / "data"
CONTROLS = ("education", "age", "hours", "contract")


def main():
    names, beta, se, n = sample_pooled_oracle(DATA / "sample_panel.csv", DATA / "industry_risk.csv", CONTROLS)
    dest = ROOT / "tests" / "golden" / "sample_pooled_oracle.csv"
    dest.parent.mkdir(exist_ok=True)
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "estimate", "std_error", "n_obs"])
        for t, b, s in zip(names, beta, se):
            w.writerow([t, repr(float(b)), repr(float(s)), n])
    print(f"wrote {dest}")


if __name__ == "__main__":
    main()
