"""Scalar special functions compiled with numba.

Everything here works on plain floats so it can be called from inside the
Gibbs sweep kernels. The public, vectorised wrappers live in
:mod:`commonatoms.conjugate_kernels`.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_FPMIN = 1e-300
_EPS = 1e-15
_MAXIT = 20000
LOG_2PI = math.log(2.0 * math.pi)
SQRT2 = math.sqrt(2.0)
LGAMMA_HALF = math.lgamma(0.5)


@njit(cache=True)
def digamma(x):
    """Digamma for x > 0 via upward recurrence and the asymptotic series."""
    if x <= 0.0:
        return np.nan
    r = 0.0
    while x < 10.0:
        r -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    t = f * (-1.0 / 12.0 + f * (1.0 / 120.0 + f * (-1.0 / 252.0 + f * (
        1.0 / 240.0 + f * (-1.0 / 132.0)))))
    return r + math.log(x) - 0.5 / x + t


@njit(cache=True)
def _betacf(a, b, x):
    # Modified Lentz evaluation of the incomplete beta continued fraction.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < _EPS:
            break
    return h


@njit(cache=True)
def betainc(a, b, x, y):
    """Regularized incomplete beta I_x(a, b) with ``y = 1 - x`` supplied.

    Passing the complement separately avoids cancellation when x is close
    to one, which is the common case for Student-t tails with large df.
    """
    return betainc_lb(a, b, x, y, math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))


@njit(cache=True)
def betainc_lb(a, b, x, y, lnorm):
    """:func:`betainc` with ``lnorm = -log B(a, b)`` precomputed."""
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    lbt = lnorm + a * math.log(x) + b * math.log(y)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, y) / b


@njit(cache=True)
def t_logpdf_std(t, df):
    """Log density of the standard Student-t."""
    return (math.lgamma(0.5 * (df + 1.0)) - math.lgamma(0.5 * df)
            - 0.5 * math.log(df * math.pi)
            - 0.5 * (df + 1.0) * math.log1p(t * t / df))


@njit(cache=True)
def t_lnorm(df):
    """-log B(df/2, 1/2), the normalizer shared by both t-cdf branches."""
    return math.lgamma(0.5 * df + 0.5) - math.lgamma(0.5 * df) - LGAMMA_HALF


@njit(cache=True)
def t_cdf_std(t, df):
    """CDF of the standard Student-t, accurate in the lower tail."""
    return t_cdf_std_ln(t, df, t_lnorm(df))


@njit(cache=True)
def t_cdf_std_ln(t, df, lnorm):
    if t == -np.inf:
        return 0.0
    if t == np.inf:
        return 1.0
    t2 = t * t
    if t2 < 1.0:
        # central region: I_{t^2/(df+t^2)}(1/2, df/2)
        z = t2 / (df + t2)
        half = 0.5 * betainc_lb(0.5, 0.5 * df, z, df / (df + t2), lnorm)
        return 0.5 + half if t > 0 else 0.5 - half
    tail = 0.5 * betainc_lb(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2), lnorm)
    return 1.0 - tail if t > 0 else tail


@njit(cache=True)
def t_sf_std(t, df):
    return t_cdf_std(-t, df)


@njit(cache=True)
def _t_lower_inv(q, df):
    # Solve cdf(t) = q for q in (0, 0.5]; the root is <= 0.
    if q >= 0.5:
        return 0.0
    ln = t_lnorm(df)
    cpdf = math.lgamma(0.5 * (df + 1.0)) - math.lgamma(0.5 * df) - 0.5 * math.log(df * math.pi)
    lo = -1.0
    while t_cdf_std_ln(lo, df, ln) > q:
        lo *= 2.0
        if lo < -1e300:
            return -np.inf
    hi = 0.0 if lo == -1.0 else 0.5 * lo
    lq = math.log(q)
    x = 0.5 * (lo + hi)
    for _ in range(300):
        F = t_cdf_std_ln(x, df, ln)
        g = math.log(F) - lq if F > 0.0 else -np.inf
        if g > 0.0:
            hi = x
        else:
            lo = x
        # Newton step on log F, kept inside the bracket
        lpdf = cpdf - 0.5 * (df + 1.0) * math.log1p(x * x / df)
        r = math.exp(lpdf - math.log(F)) if F > 0.0 else 0.0
        if r > 0.0:
            xn = x - g / r
        else:
            xn = 0.5 * (lo + hi)
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-13 * (1.0 + abs(x)):
            return xn
        x = xn
    return x


@njit(cache=True)
def t_ppf_std(p, df):
    """Quantile of the standard Student-t by bracketed Newton iteration."""
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    if p <= 0.5:
        return _t_lower_inv(p, df)
    return -_t_lower_inv(1.0 - p, df)


@njit(cache=True)
def t_interval_logmass(lo, hi, df):
    """log(F(hi) - F(lo)) for the standard t, using whichever tail is safe."""
    return t_interval_logmass_ln(lo, hi, df, t_lnorm(df))


@njit(cache=True)
def t_interval_logmass_ln(lo, hi, df, ln):
    if hi <= 0.0:
        m = t_cdf_std_ln(hi, df, ln) - t_cdf_std_ln(lo, df, ln)
    elif lo >= 0.0:
        m = t_cdf_std_ln(-lo, df, ln) - t_cdf_std_ln(-hi, df, ln)
    else:
        m = 1.0 - t_cdf_std_ln(lo, df, ln) - t_cdf_std_ln(-hi, df, ln)
    if m <= 0.0:
        return -np.inf
    return math.log(m)


@njit(cache=True)
def sample_trunc_t_std(df, lo, hi, u):
    """Inverse-CDF draw from the standard t truncated to (lo, hi).

    ``u`` is a uniform variate. Returns ``(value, flag)`` where flag is 1 if
    the interval mass underflowed and a tail approximation was used instead.
    """
    flag = 0
    ln = t_lnorm(df)
    x = 0.0
    if hi <= 0.0:
        Fl = t_cdf_std_ln(lo, df, ln)
        Fh = t_cdf_std_ln(hi, df, ln)
        mass = Fh - Fl
        if mass > 1e-300:
            x = t_ppf_std(Fl + u * mass, df)
        else:
            flag = 1
    elif lo >= 0.0:
        Sl = t_cdf_std_ln(-lo, df, ln)
        Sh = t_cdf_std_ln(-hi, df, ln)
        mass = Sl - Sh
        if mass > 1e-300:
            x = -t_ppf_std(Sh + u * mass, df)
        else:
            flag = 1
    else:
        Fl = t_cdf_std_ln(lo, df, ln)
        mass = 1.0 - Fl - t_cdf_std_ln(-hi, df, ln)
        p = Fl + u * mass
        x = t_ppf_std(p, df)
    if flag == 1:
        # Pareto approximation of the t tail beyond the bound nearest to
        # the centre: P(T > x | T > L) ~ (x / L)^-df.
        if lo >= 0.0:
            x = max(lo, 1e-300) * (1.0 - u) ** (-1.0 / df)
            if x >= hi:
                x = lo + u * (hi - lo) if hi < np.inf else lo * (1.0 + 1e-12)
        else:
            x = min(hi, -1e-300) * (1.0 - u) ** (-1.0 / df)
            if x <= lo:
                x = lo + u * (hi - lo) if lo > -np.inf else hi * (1.0 + 1e-12)
    if x <= lo:
        x = np.nextafter(lo, np.inf)
    if x >= hi:
        x = np.nextafter(hi, -np.inf)
    return x, flag


@njit(cache=True)
def norm_cdf(z):
    return 0.5 * math.erfc(-z / SQRT2)


@njit(cache=True)
def norm_sf(z):
    return 0.5 * math.erfc(z / SQRT2)


@njit(cache=True)
def sample_trunc_t(df, loc, scale, lower, upper, u):
    """Location-scale version of :func:`sample_trunc_t_std`, clamped so the
    result lies strictly inside ``(lower, upper)`` on the original scale."""
    z, flag = sample_trunc_t_std(df, (lower - loc) / scale, (upper - loc) / scale, u)
    x = loc + scale * z
    if x <= lower:
        x = np.nextafter(lower, np.inf)
    if x >= upper:
        x = np.nextafter(upper, -np.inf)
    return x, flag
