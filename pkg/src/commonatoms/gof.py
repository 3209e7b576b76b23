"""Goodness of fit through probability integral transforms.

With theta drawn from its posterior, U_i = H(y_i | theta_{c_i}) is uniform
for each observed record. A censored record contributes
U_i = H(l_i) + gamma_i (H(u_i) - H(l_i)) with gamma_i ~ Unif(0, 1), which
is uniform when censoring is independent of the outcome. Right censoring
is the case u_i = inf. The interval form is our generalization.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .cam_gibbs import GibbsState, PosteriorChain
from .data_model import CensoredOutcome, StudyData

__all__ = ["GofSample", "compute_u", "ks_uniform", "gof_sample", "qq_export"]


def _outcomes(data) -> CensoredOutcome:
    if isinstance(data, StudyData):
        if not data.has_outcome:
            raise ValueError("study has no outcomes")
        return CensoredOutcome.concat([data.treatment.outcome, data.rwd.outcome])
    return data


def compute_u(draw: GibbsState, outcomes, rng: np.random.Generator) -> np.ndarray:
    """U values for treatment rows followed by RWD rows.

    Parameters
    ----------
    draw : GibbsState
        Supplies assignments and per-arm cluster parameters.
    outcomes : CensoredOutcome or StudyData
        Rows ordered treatment first, then RWD.
    rng : Generator
        Source of the uniform randomization for censored rows.
    """
    out = _outcomes(outcomes)
    n1 = draw.c1.size
    c = np.r_[draw.c1, draw.c2]
    if c.size != len(out):
        raise ValueError("draw and outcomes disagree on the number of records")
    arm = np.r_[np.zeros(n1, int), np.ones(draw.c2.size, int)]
    mu = draw.mu[arm, c]
    sd = np.sqrt(draw.sigma2[arm, c])
    u = np.empty(c.size)
    obs = out.observed
    u[obs] = ndtr((out.y[obs] - mu[obs]) / sd[obs])
    cen = ~obs
    if cen.any():
        hl = ndtr((out.lower[cen] - mu[cen]) / sd[cen])
        hu = ndtr((out.upper[cen] - mu[cen]) / sd[cen])
        u[cen] = hl + rng.random(int(cen.sum())) * (hu - hl)
    return np.clip(u, 0.0, 1.0)


def _ks_pvalue(d: float, n: int) -> float:
    # asymptotic Kolmogorov series with Stephens' small-sample correction
    sn = math.sqrt(n)
    lam = (sn + 0.12 + 0.11 / sn) * d
    if lam < 0.2:
        return 1.0
    s = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        s += term
        if abs(term) < 1e-12:
            break
    return min(1.0, max(0.0, s))


def ks_uniform(u) -> dict:
    """One-sample Kolmogorov-Smirnov test against Unif(0, 1)."""
    u = np.sort(np.asarray(u, dtype=float).ravel())
    n = u.size
    if n == 0:
        raise ValueError("KS test needs at least one value")
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))
    return {"statistic": d, "p_value": _ks_pvalue(d, n), "n": int(n)}


@dataclass
class GofSample:
    """U values for a set of draws (rows) and records (columns)."""

    u: np.ndarray
    draws: np.ndarray
    ks: list

    def pooled_ks(self) -> dict:
        return ks_uniform(self.u)


def gof_sample(chain: PosteriorChain, study, rng: np.random.Generator,
               draws=None) -> GofSample:
    """U values for selected stored draws (default: all)."""
    idx = np.arange(len(chain)) if draws is None else np.atleast_1d(np.asarray(draws, int))
    out = _outcomes(study)
    U = np.vstack([compute_u(chain.draw(m), out, rng) for m in idx])
    return GofSample(U, idx, [ks_uniform(row) for row in U])


def qq_export(sample: GofSample, path) -> None:
    """Long-format CSV: draw, i, theoretical (i - 0.5) / n, empirical sorted U."""
    if sample.u.size == 0:
        raise ValueError("empty GOF sample")
    n = sample.u.shape[1]
    theo = (np.arange(1, n + 1) - 0.5) / n
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["draw", "i", "theoretical", "empirical"])
        for m, row in zip(sample.draws, sample.u):
            for i, (t, e) in enumerate(zip(theo, np.sort(row))):
                w.writerow([int(m), i + 1, repr(float(t)), repr(float(e))])


def qq_deviation(u) -> float:
    """Largest gap between the sorted U and the plotting positions (i - 0.5) / n."""
    u = np.sort(np.asarray(u, float))
    n = u.size
    return float(np.max(np.abs(u - (np.arange(1, n + 1) - 0.5) / n)))
