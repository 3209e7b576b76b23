"""Hand-built chains for tests that need exact posterior draws."""

from __future__ import annotations

import numpy as np

from commonatoms.cam_gibbs import PosteriorChain


def make_chain(c1, c2, pi1, mu=None, sigma2=None, k=None):
    """Chain from per-draw assignments and treatment weights.

    ``c1``, ``c2`` are (M, n) label arrays and ``pi1`` is (M, k). Counts
    are recomputed from the labels; pi2 is uniform.
    """
    c1 = np.atleast_2d(np.asarray(c1, np.int64))
    c2 = np.atleast_2d(np.asarray(c2, np.int64))
    pi1 = np.atleast_2d(np.asarray(pi1, float))
    M = pi1.shape[0]
    k = k or pi1.shape[1]
    n = np.zeros((M, 2, k), np.int64)
    for m in range(M):
        n[m, 0] = np.bincount(c1[m], minlength=k)
        n[m, 1] = np.bincount(c2[m], minlength=k)
    mu = np.zeros((M, 2, k)) if mu is None else np.broadcast_to(mu, (M, 2, k)).copy()
    sigma2 = np.ones((M, 2, k)) if sigma2 is None else np.broadcast_to(sigma2, (M, 2, k)).copy()
    return PosteriorChain(c1=c1, c2=c2, pi1=pi1, pi2=np.full((M, k), 1.0 / k), mu=mu,
                          sigma2=sigma2, alpha=np.ones((M, 2)), mu0=np.zeros(M),
                          b0=np.ones(M), n=n)


def make_state(c1, c2, mu, sigma2, pi1=None):
    """GibbsState with the given assignments and (2, k) cluster parameters."""
    from commonatoms.cam_gibbs import GibbsState

    c1 = np.asarray(c1, np.int64)
    c2 = np.asarray(c2, np.int64)
    mu = np.asarray(mu, float)
    k = mu.shape[1]
    n = np.vstack([np.bincount(c1, minlength=k), np.bincount(c2, minlength=k)])
    pi1 = np.full(k, 1.0 / k) if pi1 is None else np.asarray(pi1, float)
    return GibbsState(c1, c2, np.zeros(0), mu, np.asarray(sigma2, float), pi1,
                      np.full(k, 1.0 / k), 1.0, 1.0, 0.0, 1.0, n)
