"""Density-free importance weights for RWD rows and resampling of a
synthetic control arm.

Each stored posterior draw gives RWD row i the weight
pi1[c2_i] / n2[c2_i]: the treatment arm's mass on the row's cluster shared
equally among the cluster's RWD members. Averaging over draws and
normalizing gives the resampling probabilities.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cam_gibbs import PosteriorChain
from .data_model import MixedDataset

__all__ = ["ImportanceWeightSet", "compute_weights", "rao_blackwell_pi1", "resample", "diagnostics",
           "write_weights_csv", "read_weights_csv"]


@dataclass
class ImportanceWeightSet:
    """Normalized weights over RWD rows.

    Attributes
    ----------
    w : ndarray
        Nonnegative weights summing to one.
    n_draws : int
        Number of posterior draws averaged.
    source, row_index : ndarray, optional
        Provenance of each RWD row.
    """

    w: np.ndarray
    n_draws: int
    source: np.ndarray | None = None
    row_index: np.ndarray | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 1 or self.w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(self.w < 0) or not np.all(np.isfinite(self.w)):
            raise ValueError("weights must be finite and nonnegative")
        tot = self.w.sum()
        if tot <= 0:
            raise ValueError("weights sum to zero")
        self.w = self.w / tot

    @property
    def n(self) -> int:
        return self.w.size


def rao_blackwell_pi1(chain: PosteriorChain) -> np.ndarray:
    """Conditional means E[pi1 | c, alpha1] per draw.

    Given the assignments, pi1 is Dirichlet on the K RWD-occupied clusters
    with shapes n1_j + alpha1 / K, so its mean is
    (n1_j + alpha1 / K) / (n1 + alpha1) on that support and 0 elsewhere.
    """
    occ = chain.n[:, 1, :] > 0
    K = occ.sum(axis=1, keepdims=True)
    a1 = chain.alpha[:, :1]
    n1 = chain.n[:, 0, :]
    num = np.where(occ, n1 + a1 / K, 0.0)
    return num / (n1.sum(axis=1, keepdims=True) + a1)


def compute_weights(chain: PosteriorChain, rwd: MixedDataset | None = None,
                    rao_blackwell: bool = False) -> ImportanceWeightSet:
    """Average pi1[c2_i] / n2[c2_i] over the stored draws and normalize.

    Parameters
    ----------
    chain : PosteriorChain
    rwd : MixedDataset, optional
        Supplies provenance for the weights.
    rao_blackwell : bool
        Replace each drawn pi1 by its conditional mean given the
        assignments (see :func:`rao_blackwell_pi1`).
    """
    if len(chain) == 0:
        raise ValueError("chain has no draws")
    c2 = chain.c2
    pi1 = rao_blackwell_pi1(chain) if rao_blackwell else chain.pi1
    p = np.take_along_axis(pi1, c2, axis=1)
    cnt = np.take_along_axis(chain.n[:, 1, :], c2, axis=1)
    if np.any(cnt < 1):
        raise ValueError("a draw has an RWD row in a cluster with zero RWD count")
    w = (p / cnt).mean(axis=0)
    return ImportanceWeightSet(w, len(chain), None if rwd is None else rwd.source,
                               None if rwd is None else rwd.row_index)


def resample(weights: ImportanceWeightSet, size: int, rng: np.random.Generator,
             rwd: MixedDataset | None = None):
    """Draw ``size`` RWD rows with replacement with probabilities ``w``.

    Returns
    -------
    idx : ndarray
        Row indices into the RWD.
    synthetic : MixedDataset or None
        The resampled rows (with provenance) when ``rwd`` is given.
    """
    if size < 1:
        raise ValueError("resample size must be >= 1")
    cdf = np.cumsum(weights.w)
    u = rng.random(size) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), weights.n - 1)
    synthetic = rwd.subset(idx) if rwd is not None else None
    return idx, synthetic


def diagnostics(weights: ImportanceWeightSet, size: int | None = None) -> dict:
    """Effective sample size 1 / sum(w^2), largest weight and entropy."""
    w = weights.w
    ess = 1.0 / float(np.sum(w * w))
    nz = w[w > 0]
    out = {"ess": ess, "max_weight": float(w.max()),
           "entropy": float(-np.sum(nz * np.log(nz))), "n": int(w.size),
           "n_draws": int(weights.n_draws)}
    if size is not None:
        out["requested_size"] = int(size)
        out["ess_below_size"] = bool(ess < size)
    return out


def write_weights_csv(weights: ImportanceWeightSet, path) -> None:
    """Columns row, source, row_index, weight."""
    src = weights.source if weights.source is not None else ["rwd"] * weights.n
    ridx = weights.row_index if weights.row_index is not None else range(weights.n)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "source", "row_index", "weight"])
        for i, (s, r, x) in enumerate(zip(src, ridx, weights.w)):
            w.writerow([i, s, int(r), repr(float(x))])


def read_weights_csv(path) -> ImportanceWeightSet:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no weights")
    w = np.array([float(r["weight"]) for r in rows])
    if not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
        raise ValueError(f"{path}: weights sum to {w.sum()}, expected 1")
    return ImportanceWeightSet(w, 0, np.array([r["source"] for r in rows], dtype=object),
                               np.array([int(r["row_index"]) for r in rows]))
