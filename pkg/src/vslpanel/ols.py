"""Least-squares kernel and sandwich covariance estimators.

All estimators in the package reduce to an OLS problem on some transformed
design. The solve uses a column-pivoted QR factorization; age and age
squared in the same design make the normal equations badly conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg

from .errors import ConfigurationError, DegenerateClusterError, SingularityError

COVARIANCE_TYPES = ("classical", "robust", "cluster")


@dataclass(frozen=True)
class OlsSolution:
    params: np.ndarray
    resid: np.ndarray
    bread: np.ndarray  # (X'X)^-1

    @property
    def rss(self):
        return float(self.resid @ self.resid)


def _names(X, names):
    if names is None:
        return [f"x{i}" for i in range(X.shape[1])]
    return list(names)


def qr_solve(X, y, names=None, stage=None):
    """Solve ``min ||y - X b||`` by pivoted QR.

    Returns the coefficients and ``(X'X)^-1``. Raises
    :class:`SingularityError` naming a dependent column when ``X`` does not
    have full column rank.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = _names(X, names)
    if k == 0:
        return np.zeros(0), np.zeros((0, 0))
    norms = np.sqrt((X * X).sum(axis=0))
    scale = norms.max() if norms.size else 0.0
    for j in range(k):
        if norms[j] <= 1e-12 * max(scale, 1.0) or norms[j] == 0.0:
            raise SingularityError(names[j], stage)
    if n < k:
        raise SingularityError(names[n], stage)
    # column equilibration keeps the rank test meaningful across units
    Xs = X / norms
    Q, R, piv = linalg.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, k) * np.finfo(float).eps * diag[0] * 10
    rank = int((diag > tol).sum())
    if rank < k:
        raise SingularityError(names[piv[rank]], stage)
    z = linalg.solve_triangular(R, Q.T @ y)
    Rinv = linalg.solve_triangular(R, np.eye(k))
    params = np.empty(k)
    params[piv] = z
    params /= norms
    inv_s = np.empty((k, k))
    inv_s[np.ix_(piv, piv)] = Rinv @ Rinv.T
    bread = inv_s / np.outer(norms, norms)
    return params, bread


def solve_ols(y, X, names=None, stage=None):
    """Ordinary least squares; see :func:`qr_solve` for the error contract."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"design has {X.shape[0]} rows but outcome has {y.shape[0]}")
    params, bread = qr_solve(X, y, names, stage)
    resid = y - X @ params
    return OlsSolution(params, resid, bread)


def cluster_codes(labels):
    codes, uniques = pd.factorize(pd.Series(labels), sort=True)
    return codes, len(uniques)


def covariance_matrix(design, resid, flavor="classical", bread=None, df_resid=None,
                      clusters=None, sigma2=None):
    """Covariance of least-squares coefficients.

    Parameters
    ----------
    design : ndarray (n, k)
        Regressors entering the score. For 2SLS this is the fitted design.
    resid : ndarray (n,)
        Residuals; for 2SLS computed with the original regressors.
    flavor : {"classical", "robust", "cluster"}
        ``robust`` is HC1, scaled by ``n / df_resid``. ``cluster`` sums
        scores within clusters and scales by ``G/(G-1) * (n-1)/(n-k)``.
    bread : ndarray, optional
        ``(X'X)^-1``; computed from ``design`` when omitted.
    df_resid : int, optional
        Residual degrees of freedom, default ``n - k``. The within
        estimator passes ``n - N - k``.
    sigma2 : float, optional
        Error variance for the classical flavor; defaults to RSS / df_resid.
    """
    X = np.asarray(design, dtype=float)
    e = np.asarray(resid, dtype=float)
    n, k = X.shape
    if bread is None:
        _, bread = qr_solve(X, np.zeros(n))
    if df_resid is None:
        df_resid = n - k
    if flavor == "classical":
        if sigma2 is None:
            sigma2 = float(e @ e) / df_resid if df_resid > 0 else np.nan
        cov = sigma2 * bread
    elif flavor == "robust":
        Xe = X * e[:, None]
        meat = Xe.T @ Xe
        cov = (n / df_resid) * bread @ meat @ bread
    elif flavor == "cluster":
        if clusters is None:
            raise ConfigurationError("cluster covariance requested without cluster labels")
        codes, G = cluster_codes(clusters)
        if G < 2:
            raise DegenerateClusterError(f"cluster-robust covariance needs >= 2 clusters, got {G}")
        scores = np.zeros((G, k))
        np.add.at(scores, codes, X * e[:, None])
        meat = scores.T @ scores
        scale = G / (G - 1) * (n - 1) / (n - k)
        cov = scale * bread @ meat @ bread
    else:
        raise ConfigurationError(f"unknown covariance flavor {flavor!r}")
    return (cov + cov.T) / 2
