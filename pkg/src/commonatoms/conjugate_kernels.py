"""Conjugate predictive densities and Student-t utilities.

The covariate kernels are independent per column: a multinomial likelihood
with a Dirichlet prior for categorical columns and a normal likelihood with a
normal-inverse-gamma (NIG) prior for continuous columns. Cluster members only
contribute the cells they actually observe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from . import _special as sp

__all__ = [
    "KernelHyper",
    "ClusterSuffStats",
    "nig_posterior",
    "cat_predictive",
    "cont_predictive",
    "cont_log_predictive",
    "psi_X",
    "student_t_cdf",
    "student_t_pdf",
    "student_t_logpdf",
    "student_t_ppf",
    "sample_truncated_t",
]


@dataclass
class KernelHyper:
    """Hyperparameters of the per-covariate base measures.

    Parameters
    ----------
    cat_conc : list of ndarray
        Dirichlet concentration vector per categorical column.
    m, kappa, a, b : float
        NIG location, precision scale, shape and rate shared by all
        continuous columns.
    """

    cat_conc: list = field(default_factory=list)
    m: float = 0.0
    kappa: float = 1.0
    a: float = 31.0
    b: float = 1.0

    def __post_init__(self):
        self.cat_conc = [np.asarray(c, dtype=float) for c in self.cat_conc]
        for c in self.cat_conc:
            if c.ndim != 1 or c.size < 2 or np.any(c <= 0):
                raise ValueError("Dirichlet concentrations must be positive with >= 2 levels")
        if not (self.kappa > 0 and self.a > 0 and self.b > 0):
            raise ValueError("NIG hyperparameters kappa, a, b must be positive")

    @classmethod
    def default(cls, num_levels: Sequence[int], n_continuous: int, b: float = 1.0):
        """Uniform Dirichlet priors and a_X = (#continuous + 30)."""
        return cls(cat_conc=[np.ones(int(L)) for L in num_levels],
                   m=0.0, kappa=1.0, a=float(n_continuous + 30), b=float(b))


@njit(cache=True)
def nig_posterior(n, s1, s2, m, kappa, a, b):
    """Standard NIG update from count, sum and sum of squares.

    Returns
    -------
    (m_n, kappa_n, a_n, b_n)
    """
    kn = kappa + n
    mn = (kappa * m + s1) / kn
    an = a + 0.5 * n
    # b_n = b + 0.5 * (sum (x - xbar)^2 + kappa n (xbar - m)^2 / kn), written
    # in terms of raw sums
    q = s2 + kappa * m * m - kn * mn * mn
    if q < 0.0:
        q = 0.0
    bn = b + 0.5 * q
    return mn, kn, an, bn


@njit(cache=True)
def cont_log_predictive(x, n, s1, s2, m, kappa, a, b):
    """Log posterior-predictive density of a NIG-normal cluster at x."""
    mn, kn, an, bn = nig_posterior(n, s1, s2, m, kappa, a, b)
    df = 2.0 * an
    scale2 = bn * (kn + 1.0) / (an * kn)
    t = (x - mn) / math.sqrt(scale2)
    return sp.t_logpdf_std(t, df) - 0.5 * math.log(scale2)


class ClusterSuffStats:
    """Pooled sufficient statistics of one cluster for every covariate.

    Categorical columns keep level counts; continuous columns keep
    (count, sum, sum of squares) over members that observe the column.
    """

    def __init__(self, num_levels: Sequence[int], n_continuous: int):
        self.num_levels = [int(L) for L in num_levels]
        self.cat_counts = [np.zeros(L, dtype=np.int64) for L in self.num_levels]
        self.cont_n = np.zeros(n_continuous, dtype=np.int64)
        self.cont_s1 = np.zeros(n_continuous)
        self.cont_s2 = np.zeros(n_continuous)

    def _update(self, cat_row, cont_row, sign):
        for l, v in enumerate(cat_row):
            if v is None or v < 0:
                continue
            if v >= self.num_levels[l]:
                raise ValueError(f"level {v} out of range for categorical column {l}")
            self.cat_counts[l][v] += sign
        for l, x in enumerate(cont_row):
            if x is None or not np.isfinite(x):
                continue
            self.cont_n[l] += sign
            if self.cont_n[l] == 0:
                # exact reset avoids carrying rounding residue in empty clusters
                self.cont_s1[l] = 0.0
                self.cont_s2[l] = 0.0
            else:
                self.cont_s1[l] += sign * x
                self.cont_s2[l] += sign * x * x

    def add(self, cat_row, cont_row):
        """Insert a member given its categorical levels (-1 = missing) and
        continuous values (NaN = missing)."""
        self._update(cat_row, cont_row, +1)

    def remove(self, cat_row, cont_row):
        self._update(cat_row, cont_row, -1)
        if any(np.any(c < 0) for c in self.cat_counts) or np.any(self.cont_n < 0):
            raise ValueError("removed a member that was never added")

    @classmethod
    def from_rows(cls, num_levels, n_continuous, cat_rows, cont_rows):
        st = cls(num_levels, n_continuous)
        for cr, xr in zip(cat_rows, cont_rows):
            st.add(cr, xr)
        return st


def cat_predictive(level: int, counts, conc) -> float:
    """Dirichlet-multinomial predictive probability of ``level``."""
    counts = np.asarray(counts, dtype=float)
    conc = np.asarray(conc, dtype=float)
    if not 0 <= level < counts.size:
        raise ValueError(f"level {level} out of range [0, {counts.size})")
    return float((counts[level] + conc[level]) / (counts.sum() + conc.sum()))


def cont_predictive(x: float, n: int, s1: float, s2: float, hyper: KernelHyper) -> float:
    """Student-t posterior-predictive density of a continuous covariate.

    Parameters
    ----------
    x : float
        Point at which to evaluate.
    n, s1, s2 : int, float, float
        Count, sum and sum of squares of the cluster's observed values.
    hyper : KernelHyper
        Supplies the NIG prior (m, kappa, a, b).
    """
    return math.exp(cont_log_predictive(float(x), float(n), float(s1), float(s2),
                                        hyper.m, hyper.kappa, hyper.a, hyper.b))


def psi_X(cat_row, cont_row, stats: ClusterSuffStats, hyper: KernelHyper) -> float:
    """Product of per-covariate predictives over the row's observed cells.

    ``stats`` must not include the row being scored.
    """
    logp = 0.0
    for l, v in enumerate(cat_row):
        if v is None or v < 0:
            continue
        logp += math.log(cat_predictive(int(v), stats.cat_counts[l], hyper.cat_conc[l]))
    for l, x in enumerate(cont_row):
        if x is None or not np.isfinite(x):
            continue
        logp += cont_log_predictive(float(x), float(stats.cont_n[l]), stats.cont_s1[l],
                                    stats.cont_s2[l], hyper.m, hyper.kappa, hyper.a, hyper.b)
    return math.exp(logp)


# -- Student-t -------------------------------------------------------------

def _check_t(df, scale):
    if np.any(np.asarray(df) <= 0) or np.any(np.asarray(scale) <= 0):
        raise ValueError("Student-t requires df > 0 and scale > 0")


@njit(cache=True)
def _cdf_arr(z, df):
    out = np.empty(z.size)
    for i in range(z.size):
        out[i] = sp.t_cdf_std(z[i], df[i])
    return out


@njit(cache=True)
def _logpdf_arr(z, df):
    out = np.empty(z.size)
    for i in range(z.size):
        out[i] = sp.t_logpdf_std(z[i], df[i])
    return out


@njit(cache=True)
def _ppf_arr(p, df):
    out = np.empty(p.size)
    for i in range(p.size):
        out[i] = sp.t_ppf_std(p[i], df[i])
    return out


def _bcast(*args):
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
    return arrs[0].shape, [np.ascontiguousarray(a).ravel() for a in arrs]


def _unwrap(shape, out):
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


def student_t_cdf(x, df, loc=0.0, scale=1.0):
    """CDF of the location-scale Student-t, via the incomplete beta function."""
    _check_t(df, scale)
    shape, (x, df, loc, scale) = _bcast(x, df, loc, scale)
    return _unwrap(shape, _cdf_arr((x - loc) / scale, df))


def student_t_logpdf(x, df, loc=0.0, scale=1.0):
    _check_t(df, scale)
    shape, (x, df, loc, scale) = _bcast(x, df, loc, scale)
    return _unwrap(shape, _logpdf_arr((x - loc) / scale, df) - np.log(scale))


def student_t_pdf(x, df, loc=0.0, scale=1.0):
    return np.exp(student_t_logpdf(x, df, loc, scale))


def student_t_ppf(p, df, loc=0.0, scale=1.0):
    """Quantile function, inverting the CDF by bracketed Newton iteration."""
    _check_t(df, scale)
    shape, (p, df, loc, scale) = _bcast(p, df, loc, scale)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return _unwrap(shape, loc + scale * _ppf_arr(p, df))


def sample_truncated_t(df, loc, scale, lower, upper, rng: np.random.Generator, size=None):
    """Inverse-CDF draws from a Student-t truncated to ``(lower, upper)``.

    Raises
    ------
    ValueError
        If ``lower >= upper`` or the interval carries less than 1e-300 mass.
    """
    _check_t(df, scale)
    if not lower < upper:
        raise ValueError(f"empty truncation interval ({lower}, {upper})")
    lo = (lower - loc) / scale
    hi = (upper - loc) / scale
    logmass = sp.t_interval_logmass(lo, hi, float(df))
    if logmass < math.log(1e-300):
        raise ValueError(
            f"truncation interval ({lower}, {upper}) has vanishing mass "
            f"(log mass {logmass:.1f}) under t(df={df}, loc={loc}, scale={scale})")
    n = 1 if size is None else int(np.prod(size))
    u = rng.random(n)
    out = np.empty(n)
    for i in range(n):
        out[i] = sp.sample_trunc_t(float(df), loc, scale, lower, upper, u[i])[0]
    if size is None:
        return float(out[0])
    return out.reshape(size)
