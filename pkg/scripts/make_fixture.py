"""Regenerate the bundled sample panel and risk table in src/vslpanel/data.

The panel has 10 workers observed in the 2004, 2006 and 2009 waves. One
worker is 19 in 2004 and one wage is unreadable, so the default sample
filter drops two rows.
"""

from pathlib import Path

import numpy as np
import pandas as pd

from vslpanel.panel import INDUSTRY_FATAL_RISK, RiskTable, write_risk_table

DATA = Path(__file__).resolve().parents[1] / "src" / "vslpanel" / "data"
WAVES = (2004, 2006, 2009)


def main(seed=20090101):
    rng = np.random.default_rng(seed)
    industries = list(INDUSTRY_FATAL_RISK)
    rows = []
    for i in range(10):
        base_age = 19 if i == 3 else int(rng.integers(22, 60))
        educ = int(rng.integers(4, 18))
        gender = int(rng.integers(0, 2))
        married = int(rng.random() < 0.63)
        taste = rng.standard_normal()
        alpha = 0.3 * rng.standard_normal()
        for t in WAVES:
            j = industries[int(np.clip(np.round(3.5 + 1.5 * taste + rng.standard_normal()), 0, 7))]
            risk = INDUSTRY_FATAL_RISK[j][t]
            age = base_age + (t - WAVES[0])
            hours = int(np.clip(np.round(rng.normal(45, 8)), 10, 90))
            contract = int(rng.random() < 0.67)
            lw = (4.2 + alpha + 0.002 * risk + 0.07 * educ + 0.03 * age - 0.0003 * age ** 2
                  + 0.004 * hours + 0.12 * contract + 0.05 * taste + 0.3 * rng.standard_normal())
            rows.append({
                "worker_id": 101 + i,
                "year": t,
                "industry": j,
                "log_wage": f"{lw:.6f}",
                "age": age,
                "education": educ,
                "hours": hours,
                "public": int(rng.random() < 0.13),
                "contract": contract,
                "union": int(rng.random() < 0.17),
                "gender": gender,
                "salaried": 1,
                "disabled": 0,
                "married": married,
                "children_under6": int(rng.binomial(2, 0.065)),
                "spouse_schooling": married * int(rng.integers(0, 18)),
                "spouse_ill": int(rng.random() < 0.58),
                "spouse_works": married * int(rng.random() < 0.45),
                "risk_willingness": int(np.clip(np.round(5.6 + 2.5 * taste), 0, 10)),
            })
    frame = pd.DataFrame(rows)
    frame.loc[16, "log_wage"] = "n/a"
    DATA.mkdir(parents=True, exist_ok=True)
    frame.to_csv(DATA / "sample_panel.csv", index=False, lineterminator="\n")
    with open(DATA / "industry_risk.csv", "w", newline="", encoding="utf-8") as fh:
        write_risk_table(RiskTable.from_nested(), fh)


if __name__ == "__main__":
    main()
