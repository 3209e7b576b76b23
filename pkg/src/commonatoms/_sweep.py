"""Numba kernels for one Gibbs sweep of the common-atoms sampler.

State is kept in flat arrays grouped into tuples. Rows ``0..n1-1`` belong
to the treatment arm (arm index 0) and the remaining rows to the RWD (arm
index 1). Tuples are unpacked once per step; per-row helpers take plain
arrays because passing large tuples through calls is slow in numba.

Tuple layouts
-------------
D (data):   arm, xcat, conc, csum, xcon, yobs, ylo, yhi, cens, lg_x, lg_y
S (stats):  c, ylat, ccnt, ctot, lnum, lden, qn, qs1, qs2, qm, qis, qc, qh,
            nn, ys1, ys2, ym, yis, yc, yh, ylb
P (params): hyp = [mu0, b0, alpha1, alpha2], mu, sig2, pi
H (hmc):    eps[3], da[3, 5], acc[3, 3]

Cached arrays hold each cluster's Student-t predictive in the form
``c - h * log1p((x - m)^2 * is)``: ``qm, qis, qc, qh`` for continuous
covariates and ``ym, yis, yc, yh`` for responses. ``ylb`` holds
-log B(df/2, 1/2) for the censored-row cdf terms.

``par`` holds the scalar configuration, indexed by the constants below.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._special import LGAMMA_HALF, digamma, sample_trunc_t, t_interval_logmass_ln

# indices into ``par``
K_, KAPPA0, A0, M_MU, S2_MU, M_B, S2_B, MU_A, S2_A, M_X, K_X, A_X, B_X, \
    USE_X, USE_Y, EXACT, NLEAP = range(17)
N_PAR = 17
N_STATS = 21

# hmc blocks
HMC_MU0B, HMC_A1, HMC_A2 = 0, 1, 2
# dual averaging constants (Hoffman and Gelman, 2014)
DA_GAMMA, DA_T0, DA_KAPPA = 0.05, 10.0, 0.75
# each trajectory uses eps * U(1 - JITTER, 1 + JITTER) to avoid periodic paths
JITTER = 0.1
# diag counters
DG_TRUNC, DG_NONFINITE = 0, 1

LOG_PI = math.log(math.pi)


# -- cluster caches ----------------------------------------------------------

@njit(cache=True, inline='always')
def _nig_cache(n, s1, s2, m, kap, a, b, lgt):
    # Student-t predictive written as c - h * log1p((x - mean)^2 * is)
    kn = kap + n
    mn = (kap * m + s1) / kn
    an = a + 0.5 * n
    q = s2 + kap * m * m - kn * mn * mn
    if q < 0.0:
        q = 0.0
    bn = b + 0.5 * q
    df = 2.0 * an
    scale2 = bn * (kn + 1.0) / (an * kn)
    return mn, 1.0 / (df * scale2), lgt - 0.5 * (LOG_PI + math.log(df * scale2)), an + 0.5


@njit(cache=True, inline='always')
def _refresh_cont(j, l, qn, qs1, qs2, qm, qis, qc, qh, par, lg_x):
    n = qn[j, l]
    m, i, c, h = _nig_cache(n, qs1[j, l], qs2[j, l], par[M_X], par[K_X], par[A_X], par[B_X],
                            lg_x[n])
    qm[j, l] = m
    qis[j, l] = i
    qc[j, l] = c
    qh[j, l] = h


@njit(cache=True, inline='always')
def _refresh_resp(s, j, nn, ys1, ys2, ym, yis, yc, yh, ylb, hyp, par, lg_y):
    if par[USE_Y] == 0.0:
        n = 0
        m, i, c, h = _nig_cache(0.0, 0.0, 0.0, hyp[0], par[KAPPA0], par[A0], hyp[1], lg_y[0])
    else:
        n = nn[s, j]
        m, i, c, h = _nig_cache(n, ys1[s, j], ys2[s, j], hyp[0], par[KAPPA0], par[A0], hyp[1],
                                lg_y[n])
    ym[s, j] = m
    yis[s, j] = i
    yc[s, j] = c
    yh[s, j] = h
    ylb[s, j] = lg_y[n] - LGAMMA_HALF


@njit(cache=True)
def refresh_all(D, S, P, par):
    """Recompute every cached predictive constant from the raw statistics."""
    conc, csum, lg_x, lg_y = D[2], D[3], D[9], D[10]
    ccnt, ctot, lnum, lden = S[2], S[3], S[4], S[5]
    qn, qs1, qs2, qm, qis, qc, qh = S[6], S[7], S[8], S[9], S[10], S[11], S[12]
    nn, ys1, ys2, ym, yis, yc, yh, ylb = S[13], S[14], S[15], S[16], S[17], S[18], S[19], S[20]
    hyp = P[0]
    k = ccnt.shape[0]
    for j in range(k):
        for l in range(ccnt.shape[1]):
            lden[j, l] = math.log(ctot[j, l] + csum[l])
            for v in range(ccnt.shape[2]):
                if conc[l, v] > 0.0:
                    lnum[j, l, v] = math.log(ccnt[j, l, v] + conc[l, v])
        for l in range(qn.shape[1]):
            _refresh_cont(j, l, qn, qs1, qs2, qm, qis, qc, qh, par, lg_x)
        for s in range(2):
            _refresh_resp(s, j, nn, ys1, ys2, ym, yis, yc, yh, ylb, hyp, par, lg_y)


@njit(cache=True)
def rebuild_stats(D, S, P, par):
    """Recount all sufficient statistics from assignments and latent outcomes."""
    arm, xcat, xcon = D[0], D[1], D[4]
    c, ylat = S[0], S[1]
    ccnt, ctot, qn, qs1, qs2, nn, ys1, ys2 = S[2], S[3], S[6], S[7], S[8], S[13], S[14], S[15]
    ccnt[:] = 0
    ctot[:] = 0
    qn[:] = 0
    qs1[:] = 0.0
    qs2[:] = 0.0
    nn[:] = 0
    ys1[:] = 0.0
    ys2[:] = 0.0
    for i in range(c.size):
        j = c[i]
        for l in range(xcat.shape[1]):
            v = xcat[i, l]
            if v >= 0:
                ccnt[j, l, v] += 1
                ctot[j, l] += 1
        for l in range(xcon.shape[1]):
            x = xcon[i, l]
            if not np.isnan(x):
                qn[j, l] += 1
                qs1[j, l] += x
                qs2[j, l] += x * x
        s = arm[i]
        nn[s, j] += 1
        ys1[s, j] += ylat[i]
        ys2[s, j] += ylat[i] * ylat[i]
    refresh_all(D, S, P, par)


# -- per-row helpers on plain arrays -----------------------------------------

@njit(cache=True, inline='always')
def _cov_update(i, j, sign, xcat, conc, csum, xcon, lg_x, ccnt, ctot, lnum, lden,
                qn, qs1, qs2, qm, qis, qc, qh, par):
    for l in range(xcat.shape[1]):
        v = xcat[i, l]
        if v >= 0:
            ccnt[j, l, v] += sign
            ctot[j, l] += sign
            lnum[j, l, v] = math.log(ccnt[j, l, v] + conc[l, v])
            lden[j, l] = math.log(ctot[j, l] + csum[l])
    for l in range(xcon.shape[1]):
        x = xcon[i, l]
        if not np.isnan(x):
            qn[j, l] += sign
            if qn[j, l] == 0:
                # exact reset so empty clusters carry no rounding residue
                qs1[j, l] = 0.0
                qs2[j, l] = 0.0
            else:
                qs1[j, l] += sign * x
                qs2[j, l] += sign * x * x
            _refresh_cont(j, l, qn, qs1, qs2, qm, qis, qc, qh, par, lg_x)


@njit(cache=True, inline='always')
def _resp_update(s, j, sign, y, nn, ys1, ys2, ym, yis, yc, yh, ylb, hyp, par, lg_y):
    nn[s, j] += sign
    if nn[s, j] == 0:
        ys1[s, j] = 0.0
        ys2[s, j] = 0.0
    else:
        ys1[s, j] += sign * y
        ys2[s, j] += sign * y * y
    _refresh_resp(s, j, nn, ys1, ys2, ym, yis, yc, yh, ylb, hyp, par, lg_y)


@njit(cache=True, inline='always')
def _log_psi_x(i, j, xcat, xcon, lnum, lden, qm, qis, qc, qh):
    lp = 0.0
    for l in range(xcat.shape[1]):
        v = xcat[i, l]
        if v >= 0:
            lp += lnum[j, l, v] - lden[j, l]
    for l in range(xcon.shape[1]):
        x = xcon[i, l]
        if not np.isnan(x):
            d = x - qm[j, l]
            lp += qc[j, l] - qh[j, l] * math.log1p(d * d * qis[j, l])
    return lp


@njit(cache=True, inline='always')
def _log_psi_y(i, s, j, yobs, ylo, yhi, cens, ym, yis, yc, yh, ylb):
    if cens[i]:
        df = 2.0 * (yh[s, j] - 0.5)
        scale = math.sqrt(1.0 / (yis[s, j] * df))
        loc = ym[s, j]
        return t_interval_logmass_ln((ylo[i] - loc) / scale, (yhi[i] - loc) / scale, df,
                                     ylb[s, j])
    d = yobs[i] - ym[s, j]
    return yc[s, j] - yh[s, j] * math.log1p(d * d * yis[s, j])


@njit(cache=True, inline='always')
def _draw_latent(lo, hi, s, j, ym, yis, yh, u, diag):
    # Ytilde from the leave-one-out predictive of (s, j) truncated to
    # (lo, hi); the row must not be counted in (s, j).
    df = 2.0 * (yh[s, j] - 0.5)
    x, flag = sample_trunc_t(df, ym[s, j], math.sqrt(1.0 / (yis[s, j] * df)), lo, hi, u)
    diag[DG_TRUNC] += flag
    return x


@njit(cache=True)
def _categorical(logp, m, u):
    mx = -np.inf
    for j in range(m):
        if logp[j] > mx:
            mx = logp[j]
    tot = 0.0
    for j in range(m):
        if logp[j] > -np.inf:
            logp[j] = math.exp(logp[j] - mx)
        else:
            logp[j] = 0.0
        tot += logp[j]
    u = u * tot
    acc = 0.0
    last = -1
    for j in range(m):
        if logp[j] > 0.0:
            last = j
            acc += logp[j]
            if u < acc:
                return j
    return last


@njit(cache=True)
def lgamma_ratio(x, n):
    """log Gamma(x + n) - log Gamma(x) for x > 0, stable for very large x."""
    if n == 0:
        return 0.0
    if x < 1e5:
        return math.lgamma(x + n) - math.lgamma(x)
    # Stirling difference written without cancellation
    xn = x + n
    return ((x - 0.5) * math.log1p(n / x) + n * math.log(xn) - n
            + (1.0 / xn - 1.0 / x) / 12.0)


@njit(cache=True)
def _log_f(alpha1, K, nn):
    # log prod_{j: n1j>0} Gamma(alpha1/K + n1j) / Gamma(alpha1/K)
    if K == 0:
        return 0.0
    a = alpha1 / K
    out = 0.0
    for j in range(nn.shape[1]):
        if nn[0, j] > 0:
            out += lgamma_ratio(a, nn[0, j])
    return out


# -- Step 1 ------------------------------------------------------------------

@njit(cache=True)
def step1_impute(D, S, P, par, rng, diag):
    """Redraw the latent outcome of every censored row."""
    arm, ylo, yhi, cens, lg_y = D[0], D[6], D[7], D[8], D[10]
    c, ylat = S[0], S[1]
    nn, ys1, ys2, ym, yis, yc, yh, ylb = S[13], S[14], S[15], S[16], S[17], S[18], S[19], S[20]
    hyp = P[0]
    if par[USE_Y] == 0.0:
        return
    for i in range(c.size):
        if not cens[i]:
            continue
        s = arm[i]
        j = c[i]
        _resp_update(s, j, -1, ylat[i], nn, ys1, ys2, ym, yis, yc, yh, ylb, hyp, par, lg_y)
        ylat[i] = _draw_latent(ylo[i], yhi[i], s, j, ym, yis, yh, rng.random(), diag)
        _resp_update(s, j, 1, ylat[i], nn, ys1, ys2, ym, yis, yc, yh, ylb, hyp, par, lg_y)


# -- Step 2 ------------------------------------------------------------------

@njit(cache=True)
def _update_rows(arm_sel, D, S, P, par, rng, diag, probe, logp_out):
    """Membership updates for every row of one arm.

    Treatment rows choose among clusters holding RWD rows. With
    ``par[EXACT]`` set, RWD rows include the factor of p(c1 | c2, alpha1)
    that depends on the number of RWD-occupied clusters. A censored row's
    latent outcome is redrawn in its new cluster, so (c_i, Ytilde_i) move
    as a block.

    With ``probe >= 0`` nothing is sampled: the unnormalized log full
    conditional of row ``probe`` is written to ``logp_out`` and the
    assignment is left unchanged.
    """
    arm, xcat, conc, csum, xcon = D[0], D[1], D[2], D[3], D[4]
    yobs, ylo, yhi, cens, lg_x, lg_y = D[5], D[6], D[7], D[8], D[9], D[10]
    c, ylat, ccnt, ctot, lnum, lden = S[0], S[1], S[2], S[3], S[4], S[5]
    qn, qs1, qs2, qm, qis, qc, qh = S[6], S[7], S[8], S[9], S[10], S[11], S[12]
    nn, ys1, ys2, ym, yis, yc, yh, ylb = S[13], S[14], S[15], S[16], S[17], S[18], S[19], S[20]
    hyp = P[0]
    alpha1, alpha2 = hyp[2], hyp[3]
    use_x = par[USE_X] != 0.0
    use_y = par[USE_Y] != 0.0
    exact = par[EXACT] != 0.0
    k = nn.shape[1]
    logp = np.empty(k)
    lo_i = 0 if probe < 0 else probe
    hi_i = c.size if probe < 0 else probe + 1
    for i in range(lo_i, hi_i):
        if arm[i] != arm_sel:
            continue
        j0 = c[i]
        if arm_sel == 1 and nn[0, j0] > 0 and nn[1, j0] == 1:
            # sole RWD member of a treatment-occupied cluster stays put
            if probe >= 0:
                logp_out[:] = -np.inf
                logp_out[j0] = 0.0
            continue
        _cov_update(i, j0, -1, xcat, conc, csum, xcon, lg_x, ccnt, ctot, lnum, lden,
                    qn, qs1, qs2, qm, qis, qc, qh, par)
        _resp_update(arm_sel, j0, -1, ylat[i], nn, ys1, ys2, ym, yis, yc, yh, ylb, hyp, par,
                     lg_y)
        K = 0
        for j in range(k):
            if nn[1, j] > 0:
                K += 1
        if arm_sel == 0:
            for j in range(k):
                if nn[1, j] == 0:
                    logp[j] = -np.inf
                else:
                    logp[j] = math.log(nn[0, j] + alpha1 / K)
        else:
            f_same = 0.0
            f_new = 0.0
            if exact:
                f_same = _log_f(alpha1, K, nn)
                f_new = _log_f(alpha1, K + 1, nn)
            for j in range(k):
                logp[j] = math.log(nn[1, j] + alpha2 / k) + (f_new if nn[1, j] == 0 else f_same)
        for j in range(k):
            if logp[j] == -np.inf:
                continue
            if use_x:
                logp[j] += _log_psi_x(i, j, xcat, xcon, lnum, lden, qm, qis, qc, qh)
            if use_y:
                logp[j] += _log_psi_y(i, arm_sel, j, yobs, ylo, yhi, cens, ym, yis, yc, yh, ylb)
        if probe >= 0:
            logp_out[:] = logp
            j = j0
        else:
            j = _categorical(logp, k, rng.random())
            if cens[i] and use_y:
                ylat[i] = _draw_latent(ylo[i], yhi[i], arm_sel, j, ym, yis, yh, rng.random(),
                                       diag)
            c[i] = j
        _cov_update(i, j, 1, xcat, conc, csum, xcon, lg_x, ccnt, ctot, lnum, lden,
                    qn, qs1, qs2, qm, qis, qc, qh, par)
        _resp_update(arm_sel, j, 1, ylat[i], nn, ys1, ys2, ym, yis, yc, yh, ylb, hyp, par, lg_y)


@njit(cache=True)
def step2_update_c1(D, S, P, par, rng, diag):
    _update_rows(0, D, S, P, par, rng, diag, -1, np.empty(0))


@njit(cache=True)
def step2_update_c2(D, S, P, par, rng, diag):
    _update_rows(1, D, S, P, par, rng, diag, -1, np.empty(0))


@njit(cache=True)
def conditional_log(row, D, S, P, par, rng, diag, logp_out):
    """Unnormalized log full conditional of ``row`` over all clusters."""
    _update_rows(D[0][row], D, S, P, par, rng, diag, row, logp_out)


# -- Step 3 ------------------------------------------------------------------

@njit(cache=True)
def logpost_mu0b(mu0, bt, nn, ys1, ys2, par, grad):
    """Log posterior of (mu0, log b0) with the cluster parameters integrated
    out. Writes the gradient into ``grad`` and returns the log density."""
    kap, a0 = par[KAPPA0], par[A0]
    d0 = mu0 - par[M_MU]
    d1 = bt - par[M_B]
    lp = -0.5 * d0 * d0 / par[S2_MU] - 0.5 * d1 * d1 / par[S2_B]
    g0 = -d0 / par[S2_MU]
    g1 = -d1 / par[S2_B]
    b0 = math.exp(bt)
    if par[USE_Y] != 0.0:
        for s in range(2):
            for j in range(nn.shape[1]):
                n = nn[s, j]
                if n == 0:
                    continue
                s1 = ys1[s, j]
                kn = kap + n
                q = ys2[s, j] + kap * mu0 * mu0 - (kap * mu0 + s1) ** 2 / kn
                if q < 0.0:
                    q = 0.0
                bn = b0 + 0.5 * q
                an = a0 + 0.5 * n
                lp += a0 * bt - an * math.log(bn)
                g0 -= an / bn * kap * (n * mu0 - s1) / kn
                g1 += a0 - an * b0 / bn
    grad[0] = g0
    grad[1] = g1
    return lp


@njit(cache=True)
def logpost_logalpha(eta, counts, K, n, mu_a, s2_a):
    """Log posterior of eta = log(alpha) under a symmetric Dirichlet(alpha/K)
    allocation prior; returns (value, gradient)."""
    a = math.exp(eta)
    aK = a / K
    lp = -lgamma_ratio(a, n)
    g = digamma(a) - digamma(a + n)
    da = digamma(aK)
    for j in range(counts.size):
        if counts[j] > 0:
            lp += lgamma_ratio(aK, counts[j])
            g += (digamma(aK + counts[j]) - da) / K
    d = eta - mu_a
    return lp - 0.5 * d * d / s2_a, a * g - d / s2_a


@njit(cache=True)
def _da_update(eps, da, b, accept_prob):
    # da row: mu, log_eps_bar, H_bar, m, target acceptance
    da[b, 3] += 1.0
    m = da[b, 3]
    w = 1.0 / (m + DA_T0)
    da[b, 2] = (1.0 - w) * da[b, 2] + w * (da[b, 4] - accept_prob)
    log_eps = da[b, 0] - math.sqrt(m) / DA_GAMMA * da[b, 2]
    if log_eps > 2.0:
        log_eps = 2.0
    if log_eps < -12.0:
        log_eps = -12.0
    x = m ** (-DA_KAPPA)
    da[b, 1] = x * log_eps + (1.0 - x) * da[b, 1]
    eps[b] = math.exp(log_eps)


@njit(cache=True)
def _record(H, b, accept_prob, accepted, dH, adapt):
    acc = H[2]
    acc[b, 0] += accepted
    acc[b, 1] += 1.0
    if abs(dH) < 0.2:
        acc[b, 2] += 1.0
    if adapt:
        _da_update(H[0], H[1], b, accept_prob)


@njit(cache=True)
def step3_update_mu0_b0(S, P, par, H, rng, diag, adapt):
    """One HMC transition on (mu0, log b0)."""
    nn, ys1, ys2 = S[13], S[14], S[15]
    hyp = P[0]
    eps = H[0][HMC_MU0B] * (1.0 + JITTER * (2.0 * rng.random() - 1.0))
    L = int(par[NLEAP])
    g = np.empty(2)
    x0 = hyp[0]
    x1 = math.log(hyp[1])
    lp0 = logpost_mu0b(x0, x1, nn, ys1, ys2, par, g)
    p0 = rng.standard_normal()
    p1 = rng.standard_normal()
    h0 = -lp0 + 0.5 * (p0 * p0 + p1 * p1)
    q0 = p0 + 0.5 * eps * g[0]
    q1 = p1 + 0.5 * eps * g[1]
    ok = True
    lp1 = lp0
    dH = np.inf
    for step in range(L):
        x0 += eps * q0
        x1 += eps * q1
        lp1 = logpost_mu0b(x0, x1, nn, ys1, ys2, par, g)
        if not (np.isfinite(lp1) and np.isfinite(g[0]) and np.isfinite(g[1])):
            ok = False
            break
        if step < L - 1:
            q0 += eps * g[0]
            q1 += eps * g[1]
    if ok:
        q0 += 0.5 * eps * g[0]
        q1 += 0.5 * eps * g[1]
        dH = (-lp1 + 0.5 * (q0 * q0 + q1 * q1)) - h0
        ok = np.isfinite(dH)
    if not ok:
        diag[DG_NONFINITE] += 1
        _record(H, HMC_MU0B, 0.0, 0.0, np.inf, adapt)
        return False
    ap = 1.0 if dH <= 0.0 else math.exp(-dH)
    accepted = rng.random() < ap
    if accepted:
        hyp[0] = x0
        hyp[1] = math.exp(x1)
    _record(H, HMC_MU0B, ap, 1.0 if accepted else 0.0, dH, adapt)
    return accepted


@njit(cache=True)
def hmc_logalpha(eta, counts, K, n, mu_a, s2_a, eps, L, rng):
    """HMC move on log(alpha); returns (eta', accept_prob, accepted, dH)."""
    eps = eps * (1.0 + JITTER * (2.0 * rng.random() - 1.0))
    lp0, g = logpost_logalpha(eta, counts, K, n, mu_a, s2_a)
    p = rng.standard_normal()
    h0 = -lp0 + 0.5 * p * p
    x = eta
    pn = p + 0.5 * eps * g
    lp1 = lp0
    for step in range(L):
        x += eps * pn
        lp1, g = logpost_logalpha(x, counts, K, n, mu_a, s2_a)
        if not (np.isfinite(lp1) and np.isfinite(g)):
            return eta, 0.0, False, np.inf
        if step < L - 1:
            pn += eps * g
    pn += 0.5 * eps * g
    dH = (-lp1 + 0.5 * pn * pn) - h0
    if not np.isfinite(dH):
        return eta, 0.0, False, np.inf
    ap = 1.0 if dH <= 0.0 else math.exp(-dH)
    if rng.random() < ap:
        return x, ap, True, dH
    return eta, ap, False, dH


# -- Step 4 ------------------------------------------------------------------

@njit(cache=True)
def _log_gamma_draw(shape, rng):
    # log of a Gamma(shape, 1) variate, stable for small shapes
    if shape < 1.0:
        g = rng.standard_gamma(shape + 1.0)
        return math.log(g) + math.log(rng.random()) / shape
    return math.log(rng.standard_gamma(shape))


@njit(cache=True)
def _dirichlet_into(out, shapes, mask, rng):
    mx = -np.inf
    for j in range(out.size):
        if mask[j]:
            out[j] = _log_gamma_draw(shapes[j], rng)
            if out[j] > mx:
                mx = out[j]
    tot = 0.0
    for j in range(out.size):
        if mask[j]:
            out[j] = math.exp(out[j] - mx)
            tot += out[j]
        else:
            out[j] = 0.0
    for j in range(out.size):
        out[j] /= tot


@njit(cache=True)
def step4_update_params_weights(S, P, par, rng):
    """Draw (mu, sigma2) for every (arm, cluster) and the weights pi1, pi2."""
    nn, ys1, ys2 = S[13], S[14], S[15]
    hyp, mu, sig2, pi = P[0], P[1], P[2], P[3]
    k = nn.shape[1]
    for s in range(2):
        for j in range(k):
            n = nn[s, j] if par[USE_Y] != 0.0 else 0
            s1 = ys1[s, j] if n > 0 else 0.0
            s2 = ys2[s, j] if n > 0 else 0.0
            kn = par[KAPPA0] + n
            mn = (par[KAPPA0] * hyp[0] + s1) / kn
            an = par[A0] + 0.5 * n
            q = s2 + par[KAPPA0] * hyp[0] * hyp[0] - kn * mn * mn
            if q < 0.0:
                q = 0.0
            bn = hyp[1] + 0.5 * q
            v = bn / rng.standard_gamma(an)
            sig2[s, j] = v
            mu[s, j] = mn + math.sqrt(v / kn) * rng.standard_normal()
    K = 0
    for j in range(k):
        if nn[1, j] > 0:
            K += 1
    shapes = np.empty(k)
    mask = np.ones(k, dtype=np.bool_)
    for j in range(k):
        shapes[j] = nn[1, j] + hyp[3] / k
    _dirichlet_into(pi[1], shapes, mask, rng)
    for j in range(k):
        mask[j] = nn[1, j] > 0
        shapes[j] = nn[0, j] + hyp[2] / K
    _dirichlet_into(pi[0], shapes, mask, rng)


# -- Step 5 ------------------------------------------------------------------

@njit(cache=True)
def step5_update_alphas(S, P, par, H, rng, adapt):
    nn = S[13]
    hyp = P[0]
    eps = H[0]
    k = nn.shape[1]
    L = int(par[NLEAP])
    K = 0
    n1 = 0
    n2 = 0
    c1 = np.zeros(k)
    c2 = np.zeros(k)
    for j in range(k):
        if nn[1, j] > 0:
            K += 1
        n1 += nn[0, j]
        n2 += nn[1, j]
        c1[j] = nn[0, j]
        c2[j] = nn[1, j]
    eta, ap, accd, dH = hmc_logalpha(math.log(hyp[2]), c1, K, n1, par[MU_A], par[S2_A],
                                     eps[HMC_A1], L, rng)
    hyp[2] = math.exp(eta)
    _record(H, HMC_A1, ap, 1.0 if accd else 0.0, dH, adapt)
    eta, ap, accd, dH = hmc_logalpha(math.log(hyp[3]), c2, k, n2, par[MU_A], par[S2_A],
                                     eps[HMC_A2], L, rng)
    hyp[3] = math.exp(eta)
    _record(H, HMC_A2, ap, 1.0 if accd else 0.0, dH, adapt)


# -- full sweep and audit ----------------------------------------------------

@njit(cache=True)
def sweep(D, S, P, par, H, rng, diag, adapt):
    refresh_all(D, S, P, par)
    step1_impute(D, S, P, par, rng, diag)
    step2_update_c1(D, S, P, par, rng, diag)
    step2_update_c2(D, S, P, par, rng, diag)
    step3_update_mu0_b0(S, P, par, H, rng, diag, adapt)
    step4_update_params_weights(S, P, par, rng)
    step5_update_alphas(S, P, par, H, rng, adapt)


@njit(cache=True)
def run_sweeps(D, S, P, par, H, rng, diag, n_sweeps, adapt, occ_trace, offset):
    """Run several sweeps, writing the RWD occupied-cluster count per sweep."""
    nn = S[13]
    for t in range(n_sweeps):
        sweep(D, S, P, par, H, rng, diag, adapt)
        K = 0
        for j in range(nn.shape[1]):
            if nn[1, j] > 0:
                K += 1
        occ_trace[offset + t] = K


@njit(cache=True)
def audit(D, S, P):
    """Return 0 if all state invariants hold, otherwise an error code.

    1 occupancy recount mismatch, 2 support constraint, 3 pi1 off support,
    4 weights not normalized, 5 nonpositive variance, 6 latent outside its
    censoring interval, 7 assignment out of range.
    """
    arm, ylo, yhi, cens = D[0], D[6], D[7], D[8]
    c, ylat, nn = S[0], S[1], S[13]
    pi, sig2 = P[3], P[2]
    k = nn.shape[1]
    cnt = np.zeros((2, k), dtype=np.int64)
    for i in range(c.size):
        if c[i] < 0 or c[i] >= k:
            return 7
        cnt[arm[i], c[i]] += 1
    for s in range(2):
        for j in range(k):
            if cnt[s, j] != nn[s, j]:
                return 1
    for j in range(k):
        if nn[0, j] > 0 and nn[1, j] == 0:
            return 2
        if nn[1, j] == 0 and pi[0, j] != 0.0:
            return 3
    for s in range(2):
        tot = 0.0
        for j in range(k):
            tot += pi[s, j]
            if sig2[s, j] <= 0.0:
                return 5
        if abs(tot - 1.0) > 1e-12:
            return 4
    for i in range(c.size):
        if cens[i] and not (ylo[i] < ylat[i] < yhi[i]):
            return 6
    return 0
