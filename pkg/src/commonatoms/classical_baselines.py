"""Frequentist companions for the two-step analysis: Kaplan-Meier curves,
the two-sample logrank test and the least-squares treatment effect."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from ._special import norm_sf
from .conjugate_kernels import student_t_cdf

__all__ = ["KmCurve", "km_estimate", "logrank_test", "ols_effect", "chi2_1_sf", "write_km_csv"]


@dataclass
class KmCurve:
    """Product-limit estimate at the distinct event times.

    ``var`` is the Greenwood variance of S(t); ``lo``/``hi`` are pointwise
    intervals built on the log scale and clamped to [0, 1].
    """

    time: np.ndarray
    surv: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    var: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __call__(self, t) -> np.ndarray:
        """Right-continuous step function S(t)."""
        idx = np.searchsorted(self.time, np.asarray(t, float), side="right") - 1
        if self.surv.size == 0:
            return np.ones(np.shape(idx))
        return np.where(idx >= 0, self.surv[np.maximum(idx, 0)], 1.0)


def _check_surv(times, status):
    times = np.asarray(times, dtype=float)
    status = np.asarray(status).astype(int)
    if times.shape != status.shape:
        raise ValueError("times and status must have the same length")
    if np.any(~(times > 0)):
        raise ValueError("survival times must be positive")
    if np.any((status != 0) & (status != 1)):
        raise ValueError("status must be 0 (censored) or 1 (event)")
    return times, status


def km_estimate(times, status, level: float = 0.95) -> KmCurve:
    """Kaplan-Meier estimator with Greenwood variance.

    Parameters
    ----------
    times : array_like
        Positive follow-up times.
    status : array_like
        1 for an event, 0 for a right-censored time.
    level : float
        Coverage of the pointwise interval exp(log S +/- z * se(log S)).
    """
    times, status = _check_surv(times, status)
    ut = np.unique(times[status == 1])
    n_risk = np.array([(times >= t).sum() for t in ut], dtype=float)
    d = np.array([((times == t) & (status == 1)).sum() for t in ut], dtype=float)
    surv = np.cumprod(1.0 - d / n_risk)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.cumsum(np.where(n_risk > d, d / (n_risk * (n_risk - d)), np.inf))
        var = surv ** 2 * g
        z = ndtri(0.5 + level / 2)
        se_log = np.sqrt(g)
        lo = np.where(surv > 0, surv * np.exp(-z * se_log), 0.0)
        hi = np.where(surv > 0, surv * np.exp(z * se_log), 0.0)
    var = np.where(surv > 0, var, 0.0)
    return KmCurve(ut, surv, n_risk.astype(int), d.astype(int), var,
                   np.clip(np.nan_to_num(lo), 0, 1), np.clip(np.nan_to_num(hi, nan=1.0), 0, 1))


def chi2_1_sf(x: float) -> float:
    """Upper tail of the chi-square distribution with one degree of freedom."""
    if x <= 0:
        return 1.0
    return 2.0 * norm_sf(math.sqrt(x))


def logrank_test(group, times, status) -> dict:
    """Two-sample logrank test.

    At each distinct event time the observed events in the first group are
    compared with their expectation under a common hazard, with the
    hypergeometric variance (ties included). The statistic is
    (O - E)^2 / V on one degree of freedom.

    Parameters
    ----------
    group : array_like
        Two distinct labels; the first sorted label is the reference for
        O and E.
    """
    times, status = _check_surv(times, status)
    group = np.asarray(group)
    labels = np.unique(group)
    if labels.size != 2:
        raise ValueError("logrank test needs exactly two groups")
    if status.sum() == 0:
        raise ValueError("logrank test needs at least one event")
    g1 = group == labels[0]
    O = E = V = 0.0
    for t in np.unique(times[status == 1]):
        at = times >= t
        n = at.sum()
        n1 = (at & g1).sum()
        ev = (times == t) & (status == 1)
        d = ev.sum()
        d1 = (ev & g1).sum()
        O += d1
        E += d * n1 / n
        if n > 1:
            V += d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1)
    stat = (O - E) ** 2 / V if V > 0 else 0.0
    return {"statistic": float(stat), "p_value": float(chi2_1_sf(stat)), "observed": float(O),
            "expected": float(E), "variance": float(V), "reference_group": labels[0].item()
            if hasattr(labels[0], "item") else labels[0]}


def ols_effect(y, z, X=None, names=None) -> dict:
    """Least-squares coefficient of the treatment indicator ``z``.

    Fits ``y ~ 1 + z (+ X)`` by a QR decomposition and returns the
    coefficient with its homoskedastic standard error, t statistic and
    two-sided p-value.

    Raises
    ------
    ValueError
        If the design is rank deficient; the message names the collinear
        columns.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    cols = [np.ones_like(y), z]
    cn = ["intercept", "treatment"]
    if X is not None:
        X = np.asarray(X, dtype=float).reshape(y.size, -1)
        cols += list(X.T)
        cn += list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    A = np.column_stack(cols)
    n, d = A.shape
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    tol = max(n, d) * np.finfo(float).eps * (diag.max() if diag.size else 1.0)
    if np.any(diag <= tol):
        bad = [cn[j] for j in np.flatnonzero(diag <= tol)]
        raise ValueError(f"design is rank deficient; collinear column(s): {', '.join(bad)}")
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - A @ coef
    dof = n - d
    s2 = resid @ resid / dof if dof > 0 else float("nan")
    Rinv = np.linalg.solve(R, np.eye(d))
    cov = s2 * (Rinv @ Rinv.T)
    se = math.sqrt(cov[1, 1]) if dof > 0 else float("nan")
    delta = float(coef[1])
    if se > 0:
        t = delta / se
        p = float(2.0 * student_t_cdf(-abs(t), dof))
    else:
        t = math.copysign(math.inf, delta) if delta != 0 else float("nan")
        p = 0.0 if delta != 0 else 1.0
    return {"delta": delta, "se": float(se), "t": float(t), "p_value": p, "dof": int(dof),
            "coef": coef.tolist(), "columns": cn, "residuals": resid}


def write_km_csv(curve: KmCurve, path) -> None:
    """Columns t, S, lo, hi, at_risk."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "S", "lo", "hi", "at_risk"])
        for row in zip(curve.time, curve.surv, curve.lo, curve.hi, curve.at_risk):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])),
                        repr(float(row[3])), int(row[4])])
