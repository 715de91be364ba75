import math

import numpy as np
import pandas as pd

from vslpanel.estimators import ModelSpec
from vslpanel.iv import IvSpec
from vslpanel.panel import PanelDataset

WAVES = (2004, 2006, 2009, 2012)


def make_panel(ids, years, log_wage, industry=None, **columns):
    n = len(ids)
    frame = pd.DataFrame({
        "worker_id": list(ids),
        "year": list(years),
        "industry": list(industry) if industry is not None else ["j1"] * n,
        "log_wage": np.asarray(log_wage, float),
    })
    for name, values in columns.items():
        frame[name] = np.asarray(values, float)
    return PanelDataset.from_frame(frame)


def random_panel(rng, n_workers=8, max_T=3, n_controls=2, balanced=False, time_varying=True,
                 alpha_sd=1.0, min_T=1):
    """Random unbalanced panel with worker ids sorted the same way the
    package sorts them (zero-padded strings)."""
    ids, years = [], []
    for i in range(n_workers):
        T = max_T if balanced else int(rng.integers(min_T, max_T + 1))
        ys = sorted(rng.choice(WAVES[:max(max_T, 1)], size=T, replace=False).tolist())
        ids += [f"w{i:03d}"] * T
        years += ys
    n = len(ids)
    effects = {w: alpha_sd * rng.standard_normal() for w in set(ids)}
    a = np.array([effects[w] for w in ids])
    risk = rng.normal(10, 4, n) + 0.5 * a
    controls = {f"x{c}": rng.standard_normal(n) for c in range(n_controls)}
    y = 1.0 + 0.02 * risk + sum(0.3 * v for v in controls.values()) + a + rng.standard_normal(n)
    return make_panel(ids, years, y, risk=risk, **controls)


def cross_section(rng, n=200, q=2, strength=1.0, alpha1=0.5, endog=0.5, n_controls=1):
    """y = 1 + alpha1 d + W b + e with d = Z pi + v and corr(v, e) = endog."""
    Z = rng.standard_normal((n, q))
    W = rng.standard_normal((n, n_controls))
    v = rng.standard_normal(n)
    e = endog * v + math.sqrt(1 - endog ** 2) * rng.standard_normal(n)
    d = strength * Z.sum(axis=1) + 0.5 * W.sum(axis=1) + v
    y = 1.0 + alpha1 * d + W @ np.full(n_controls, 0.3) + e
    cols = {f"z{j}": Z[:, j] for j in range(q)}
    cols.update({f"c{j}": W[:, j] for j in range(n_controls)})
    p = make_panel([f"{i:05d}" for i in range(n)], [2009] * n, y, risk=d, **cols)
    spec = IvSpec(ModelSpec(controls=tuple(f"c{j}" for j in range(n_controls))),
                  tuple(f"z{j}" for j in range(q)))
    return p, spec
