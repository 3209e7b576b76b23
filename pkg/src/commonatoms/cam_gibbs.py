"""Gibbs sampler for the common-atoms mixture with a cluster-specific
response model.

The RWD arm uses a degree-k weak-limit Dirichlet prior; the treatment arm
puts its weights only on clusters that currently hold RWD rows. Covariate
atoms are shared by both arms and integrated out; the response model has
arm-specific normal parameters with a normal-inverse-gamma prior whose
hyperparameters (mu0, b0) and the concentrations (alpha1, alpha2) are
updated by Hamiltonian Monte Carlo.

Typical use::

    cfg = ChainConfig(seed=1)
    chain = run_chain(study, cfg)
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _sweep as sw
from .conjugate_kernels import KernelHyper
from .data_model import StudyData

logger = logging.getLogger(__name__)

__all__ = [
    "ResponseHyper",
    "ChainConfig",
    "GibbsState",
    "GibbsSampler",
    "PosteriorChain",
    "InvariantViolation",
    "init_state",
    "run_chain",
    "geweke_z",
    "lognormal_params",
]


class InvariantViolation(RuntimeError):
    """A sampler bookkeeping invariant failed; indicates a bug."""


_AUDIT_MESSAGES = {
    1: "occupancy counts disagree with a recount from assignments",
    2: "support constraint violated: treatment row in a cluster with no RWD rows",
    3: "pi1 has mass on a cluster with no RWD rows",
    4: "cluster weights do not sum to one",
    5: "nonpositive cluster variance",
    6: "latent outcome outside its censoring interval",
    7: "cluster index out of range",
}


def lognormal_params(mean: float, var: float) -> tuple[float, float]:
    """(mu, sigma^2) of the log-normal with the given mean and variance."""
    s2 = math.log1p(var / mean ** 2)
    return math.log(mean) - 0.5 * s2, s2


_MB, _S2B = lognormal_params(5.0, 20.0)
_MA, _S2A = lognormal_params(1.0, 10.0)


@dataclass
class ResponseHyper:
    """Prior of the response model.

    ``m_mu=None`` means the grand mean of the observed log outcomes.
    """

    kappa0: float = 1.0
    a0: float = 10.0
    m_mu: float | None = None
    s2_mu: float = 1.0
    m_b: float = _MB
    s2_b: float = _S2B
    mu_alpha: float = _MA
    s2_alpha: float = _S2A


@dataclass
class ChainConfig:
    """Settings of one MCMC run."""

    k: int = 15
    iters: int = 6000
    burn_in: int = 1000
    thin: int = 5
    seed: int | None = None
    leapfrog_steps: int = 10
    step_size: float = 0.1
    adapt_target: float = 0.9
    a_x: float | None = None  # None: number of continuous covariates + 30
    b_x: float = 1.0
    kappa_x: float = 1.0
    m_x: float = 0.0
    cat_conc: float = 1.0
    response: ResponseHyper = field(default_factory=ResponseHyper)
    use_covariates: bool = True
    use_response: bool = True
    exact_support_correction: bool = True
    rebuild_every: int = 500
    audit_every: int = 100

    def __post_init__(self):
        if isinstance(self.response, dict):
            self.response = ResponseHyper(**self.response)
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= self.burn_in < self.iters:
            raise ValueError("need 0 <= burn_in < iters")
        if self.k < 2:
            raise ValueError("k must be >= 2")

    @property
    def n_draws(self) -> int:
        return (self.iters - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class GibbsState:
    """Snapshot of the sampler state (arm index 0 = treatment, 1 = RWD)."""

    c1: np.ndarray
    c2: np.ndarray
    y_latent: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    alpha1: float
    alpha2: float
    mu0: float
    b0: float
    n: np.ndarray

    @property
    def k(self) -> int:
        return self.pi2.size

    @property
    def k_n2(self) -> int:
        return int(np.count_nonzero(self.n[1]))


class GibbsSampler:
    """Mutable sampler state bound to one study.

    The step methods run the individual updates in place; :meth:`sweep`
    runs them in the order 1 to 5.
    """

    def __init__(self, study: StudyData, cfg: ChainConfig, rng: np.random.Generator):
        self.study = study
        self.cfg = cfg
        self.rng = rng
        self.n1, self.n2 = study.n1, study.n2
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("both arms need at least one row")
        schema = study.schema
        k = cfg.k
        N = self.n1 + self.n2
        arm = np.r_[np.zeros(self.n1, np.int64), np.ones(self.n2, np.int64)]
        xcat = np.ascontiguousarray(np.vstack([study.treatment.cat, study.rwd.cat]), np.int64)
        xcon = np.ascontiguousarray(np.vstack([study.treatment.cont, study.rwd.cont]), float)
        levels = schema.num_levels
        pc, pq = len(levels), xcon.shape[1]
        Lmax = max(levels) if levels else 1
        conc = np.zeros((pc, Lmax))
        for l, L in enumerate(levels):
            conc[l, :L] = cfg.cat_conc
        csum = conc.sum(axis=1)
        self.use_y = bool(cfg.use_response and study.has_outcome)
        if study.has_outcome:
            out = [study.treatment.outcome, study.rwd.outcome]
            yobs = np.concatenate([o.y for o in out])
            ylo = np.concatenate([o.lower for o in out])
            yhi = np.concatenate([o.upper for o in out])
            obs = np.concatenate([o.observed for o in out])
        else:
            yobs = np.zeros(N)
            ylo = np.zeros(N)
            yhi = np.zeros(N)
            obs = np.ones(N, bool)
        cens = ~obs if self.use_y else np.zeros(N, bool)
        rh = cfg.response
        if rh.m_mu is not None:
            m_mu = rh.m_mu
        elif self.use_y and obs.any():
            m_mu = float(np.mean(yobs[obs]))
        else:
            m_mu = 0.0
        self.m_mu = m_mu
        a_x = cfg.a_x if cfg.a_x is not None else pq + 30.0
        self.a_x = a_x
        ns = np.arange(N + 2) * 0.5
        lg_x = np.array([math.lgamma(a_x + h + 0.5) - math.lgamma(a_x + h) for h in ns])
        lg_y = np.array([math.lgamma(rh.a0 + h + 0.5) - math.lgamma(rh.a0 + h) for h in ns])

        par = np.zeros(sw.N_PAR)
        par[sw.K_] = k
        par[sw.KAPPA0] = rh.kappa0
        par[sw.A0] = rh.a0
        par[sw.M_MU] = m_mu
        par[sw.S2_MU] = rh.s2_mu
        par[sw.M_B] = rh.m_b
        par[sw.S2_B] = rh.s2_b
        par[sw.MU_A] = rh.mu_alpha
        par[sw.S2_A] = rh.s2_alpha
        par[sw.M_X] = cfg.m_x
        par[sw.K_X] = cfg.kappa_x
        par[sw.A_X] = a_x
        par[sw.B_X] = cfg.b_x
        par[sw.USE_X] = float(cfg.use_covariates)
        par[sw.USE_Y] = float(self.use_y)
        par[sw.EXACT] = float(cfg.exact_support_correction)
        par[sw.NLEAP] = cfg.leapfrog_steps
        self.par = par

        self.D = (arm, xcat, conc, csum, xcon, yobs.copy(), ylo, yhi, cens.astype(np.bool_),
                  lg_x, lg_y)
        self.S = (np.zeros(N, np.int64), yobs.copy(),
                  np.zeros((k, pc, Lmax), np.int64), np.zeros((k, pc), np.int64),
                  np.zeros((k, pc, Lmax)), np.zeros((k, pc)),
                  np.zeros((k, pq), np.int64), np.zeros((k, pq)), np.zeros((k, pq)),
                  np.zeros((k, pq)), np.zeros((k, pq)), np.zeros((k, pq)), np.zeros((k, pq)),
                  np.zeros((2, k), np.int64), np.zeros((2, k)), np.zeros((2, k)),
                  np.zeros((2, k)), np.zeros((2, k)), np.zeros((2, k)), np.zeros((2, k)),
                  np.zeros((2, k)))
        hyp = np.array([m_mu, math.exp(rh.m_b + 0.5 * rh.s2_b), 1.0, 1.0])
        self.P = (hyp, np.zeros((2, k)), np.ones((2, k)), np.zeros((2, k)))
        eps = np.full(3, float(cfg.step_size))
        da = np.zeros((3, 5))
        da[:, 0] = np.log(10.0 * eps)
        da[:, 1] = np.log(eps)
        da[:, 4] = cfg.adapt_target
        self.H = (eps, da, np.zeros((3, 3)))
        self.diag = np.zeros(2, np.int64)
        self._initialize()

    # -- initialization ----------------------------------------------------
    def _embedding(self) -> np.ndarray:
        xcat, xcon = self.D[1], self.D[4]
        cols = []
        for l, L in enumerate(self.study.schema.num_levels):
            oh = np.zeros((xcat.shape[0], L))
            ok = xcat[:, l] >= 0
            oh[np.flatnonzero(ok), xcat[ok, l]] = 1.0
            cols.append(oh)
        if xcon.shape[1]:
            ok = ~np.isnan(xcon)
            cnt = np.maximum(ok.sum(axis=0), 1)
            x0 = np.where(ok, xcon, 0.0)
            mu = x0.sum(axis=0) / cnt
            sd = np.sqrt((np.where(ok, xcon - mu, 0.0) ** 2).sum(axis=0) / cnt)
            sd = np.where(sd > 0, sd, 1.0)
            z = (xcon - mu) / sd
            cols.append(np.where(np.isnan(z), 0.0, z))
        if not cols:
            return np.zeros((xcat.shape[0], 1))
        return np.hstack(cols)

    def _initialize(self):
        rng, k = self.rng, self.cfg.k
        E = self._embedding()
        E1, E2 = E[: self.n1], E[self.n1:]
        g = min(k, self.n2)
        lab, cent = _kmeans(E2, g, rng)
        used = np.unique(lab)
        d = ((E1[:, None, :] - cent[None, used, :]) ** 2).sum(axis=2)
        lab1 = used[np.argmin(d, axis=1)]
        c = self.S[0]
        c[: self.n1] = lab1
        c[self.n1:] = lab
        yobs, ylo, yhi, cens = self.D[5], self.D[6], self.D[7], self.D[8]
        ylat = self.S[1]
        for i in np.flatnonzero(cens):
            lo, hi = ylo[i], yhi[i]
            if np.isfinite(lo) and np.isfinite(hi):
                ylat[i] = 0.5 * (lo + hi)
            elif np.isfinite(lo):
                ylat[i] = lo + 0.5
            elif np.isfinite(hi):
                ylat[i] = hi - 0.5
            else:
                ylat[i] = self.m_mu
        sw.rebuild_stats(self.D, self.S, self.P, self.par)
        sw.step4_update_params_weights(self.S, self.P, self.par, rng)
        self.check()

    # -- steps ---------------------------------------------------------------
    def step1_impute(self):
        sw.refresh_all(self.D, self.S, self.P, self.par)
        sw.step1_impute(self.D, self.S, self.P, self.par, self.rng, self.diag)

    def step2_update_c1(self):
        sw.refresh_all(self.D, self.S, self.P, self.par)
        sw.step2_update_c1(self.D, self.S, self.P, self.par, self.rng, self.diag)

    def step2_update_c2(self):
        sw.refresh_all(self.D, self.S, self.P, self.par)
        sw.step2_update_c2(self.D, self.S, self.P, self.par, self.rng, self.diag)

    def step3_update_mu0_b0(self, adapt: bool = False) -> bool:
        return bool(sw.step3_update_mu0_b0(self.S, self.P, self.par, self.H, self.rng,
                                           self.diag, adapt))

    def step4_update_params_weights(self):
        sw.step4_update_params_weights(self.S, self.P, self.par, self.rng)

    def step5_update_alphas(self, adapt: bool = False):
        sw.step5_update_alphas(self.S, self.P, self.par, self.H, self.rng, adapt)

    def sweep(self, n: int = 1, adapt: bool = False) -> np.ndarray:
        trace = np.zeros(n, np.int64)
        sw.run_sweeps(self.D, self.S, self.P, self.par, self.H, self.rng, self.diag, n,
                      adapt, trace, 0)
        return trace

    def finish_adaptation(self):
        """Fix HMC step sizes at their dual-averaged values."""
        eps, da, acc = self.H
        eps[:] = np.exp(da[:, 1])
        acc[:] = 0.0

    def rebuild(self):
        sw.rebuild_stats(self.D, self.S, self.P, self.par)

    def check(self):
        code = sw.audit(self.D, self.S, self.P)
        if code:
            raise InvariantViolation(_AUDIT_MESSAGES.get(code, f"code {code}"))

    def conditional_c1(self, i: int) -> np.ndarray:
        """Normalized full conditional of treatment row ``i`` (no state change)."""
        return self._conditional(i)

    def conditional_c2(self, i: int) -> np.ndarray:
        """Normalized full conditional of RWD row ``i`` (0-based within the RWD)."""
        return self._conditional(self.n1 + i)

    def _conditional(self, row):
        sw.refresh_all(self.D, self.S, self.P, self.par)
        logp = np.empty(self.cfg.k)
        sw.conditional_log(row, self.D, self.S, self.P, self.par, self.rng, self.diag, logp)
        p = np.exp(logp - logp.max())
        return p / p.sum()

    # -- views ---------------------------------------------------------------
    @property
    def state(self) -> GibbsState:
        c, ylat, nn = self.S[0], self.S[1], self.S[13]
        hyp, mu, sig2, pi = self.P
        return GibbsState(c[: self.n1].copy(), c[self.n1:].copy(), ylat.copy(), mu.copy(),
                          sig2.copy(), pi[0].copy(), pi[1].copy(), float(hyp[2]),
                          float(hyp[3]), float(hyp[0]), float(hyp[1]), nn.copy())

    def set_hyper(self, mu0=None, b0=None, alpha1=None, alpha2=None):
        hyp = self.P[0]
        for idx, v in enumerate((mu0, b0, alpha1, alpha2)):
            if v is not None:
                hyp[idx] = v
        sw.refresh_all(self.D, self.S, self.P, self.par)

    def set_assignments(self, c1, c2):
        c = self.S[0]
        c[: self.n1] = c1
        c[self.n1:] = c2
        self.rebuild()
        sw.step4_update_params_weights(self.S, self.P, self.par, self.rng)

    def replace_data(self, xcat=None, xcon=None, y=None):
        """Overwrite covariates or fully observed outcomes in place and
        recount the statistics (used by joint-distribution tests)."""
        if xcat is not None:
            self.D[1][:] = xcat
        if xcon is not None:
            self.D[4][:] = xcon
        if y is not None:
            self.D[5][:] = y
            self.S[1][:] = y
        self.rebuild()

    @property
    def acceptance(self) -> dict:
        acc = self.H[2]
        names = ("mu0_b0", "alpha1", "alpha2")
        out = {}
        for b, nm in enumerate(names):
            tot = acc[b, 1]
            out[nm] = {
                "accept_rate": float(acc[b, 0] / tot) if tot else float("nan"),
                "small_energy_error_frac": float(acc[b, 2] / tot) if tot else float("nan"),
                "moves": int(tot),
                "step_size": float(self.H[0][b]),
            }
        return out


def _kmeans(X: np.ndarray, g: int, rng: np.random.Generator, iters: int = 25):
    """Lloyd's algorithm with k-means++ seeding; returns (labels, centroids)."""
    n = X.shape[0]
    centers = np.empty((g, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for t in range(1, g):
        tot = d2.sum()
        idx = rng.choice(n, p=d2 / tot) if tot > 0 else rng.integers(n)
        centers[t] = X[idx]
        d2 = np.minimum(d2, ((X - centers[t]) ** 2).sum(axis=1))
    lab = np.zeros(n, np.int64)
    for _ in range(iters):
        dist = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        if _ > 0 and np.array_equal(new, lab):
            break
        lab = new
        for t in range(g):
            m = lab == t
            if m.any():
                centers[t] = X[m].mean(axis=0)
    return lab, centers


def init_state(study: StudyData, cfg: ChainConfig, rng: np.random.Generator | None = None
               ) -> GibbsSampler:
    """Build an initialized sampler.

    RWD rows are grouped by k-means on a one-hot/standardized embedding
    (at most ``min(k, n2)`` groups), each treatment row joins the nearest
    occupied RWD centroid, censored outcomes start inside their interval
    (bound + 0.5 when one side is open) and (theta, pi) are drawn given
    these assignments.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return GibbsSampler(study, cfg, rng)


# -- chains ---------------------------------------------------------------------

_DRAW_FIELDS = ("c1", "c2", "pi1", "pi2", "mu", "sigma2", "alpha", "mu0", "b0", "n")


@dataclass
class PosteriorChain:
    """Thinned post burn-in draws stored as stacked arrays.

    ``mu``, ``sigma2`` and ``n`` have shape (M, 2, k) with arm index 0 for
    the treatment arm; ``alpha`` has columns (alpha1, alpha2).
    """

    c1: np.ndarray
    c2: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    alpha: np.ndarray
    mu0: np.ndarray
    b0: np.ndarray
    n: np.ndarray
    y_latent: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return self.pi1.shape[0]

    @property
    def k(self) -> int:
        return self.pi1.shape[1]

    def draw(self, m: int) -> GibbsState:
        yl = self.y_latent[m] if self.y_latent is not None else np.zeros(0)
        return GibbsState(self.c1[m], self.c2[m], yl, self.mu[m], self.sigma2[m],
                          self.pi1[m], self.pi2[m], float(self.alpha[m, 0]),
                          float(self.alpha[m, 1]), float(self.mu0[m]), float(self.b0[m]),
                          self.n[m])

    def k_n2(self) -> np.ndarray:
        return np.count_nonzero(self.n[:, 1, :], axis=1)

    def to_jsonl(self, path) -> None:
        """One header line, then one JSON record per draw. Floats are written
        with shortest round-trip repr so a reload is exact."""
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"header": True, "config": self.config,
                                 "n_draws": len(self)}, sort_keys=True) + "\n")
            for m in range(len(self)):
                rec = {f: getattr(self, f)[m].tolist() for f in _DRAW_FIELDS}
                fh.write(json.dumps(rec) + "\n")
        tmp.replace(path)

    @classmethod
    def from_jsonl(cls, path) -> "PosteriorChain":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            recs = [json.loads(line) for line in fh if line.strip()]
        if not recs:
            raise ValueError(f"{path}: chain file has no draws")
        arrs = {}
        for f in _DRAW_FIELDS:
            dtype = np.int64 if f in ("c1", "c2", "n") else float
            arrs[f] = np.array([r[f] for r in recs], dtype=dtype)
        return cls(config=header.get("config", {}), **arrs)

    def subset(self, idx) -> "PosteriorChain":
        kw = {f: getattr(self, f)[idx] for f in _DRAW_FIELDS}
        yl = None if self.y_latent is None else self.y_latent[idx]
        return PosteriorChain(y_latent=yl, config=self.config, diagnostics=self.diagnostics,
                              **kw)


def geweke_z(x: np.ndarray, first: float = 0.1, last: float = 0.5) -> float:
    """Geweke convergence z-score comparing early and late chain segments.

    Long-run variances use a Bartlett-window estimate of the spectral
    density at zero.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    a = x[: max(2, int(first * n))]
    b = x[n - max(2, int(last * n)):]

    def lrv(y):
        y = y - y.mean()
        m = y.size
        L = int(np.floor(4 * (m / 100.0) ** (2 / 9))) + 1
        s = np.dot(y, y) / m
        for h in range(1, min(L, m - 1) + 1):
            s += 2 * (1 - h / (L + 1)) * np.dot(y[h:], y[:-h]) / m
        return max(s, 1e-300) / m

    den = math.sqrt(lrv(a) + lrv(b))
    if den == 0 or not np.isfinite(den):
        return 0.0
    return float((a.mean() - b.mean()) / den)


def run_chain(study: StudyData, cfg: ChainConfig, rng: np.random.Generator | None = None,
              audit_every: int | None = None, keep_latent: bool = True) -> PosteriorChain:
    """Run the sampler and return the thinned post burn-in draws.

    Parameters
    ----------
    study : StudyData
    cfg : ChainConfig
    rng : Generator, optional
        Defaults to ``np.random.default_rng(cfg.seed)``.
    audit_every : int, optional
        Check every state invariant after this many sweeps (default from
        ``cfg.audit_every``); raises :class:`InvariantViolation` on failure.
    keep_latent : bool
        Store the imputed outcomes of every draw.
    """
    if rng is None:
        if cfg.seed is None:
            raise ValueError("a seed (cfg.seed) or an explicit Generator is required")
        rng = np.random.default_rng(cfg.seed)
    smp = init_state(study, cfg, rng)
    audit_every = cfg.audit_every if audit_every is None else audit_every
    M = cfg.n_draws
    k = cfg.k
    out = {
        "c1": np.zeros((M, smp.n1), np.int64), "c2": np.zeros((M, smp.n2), np.int64),
        "pi1": np.zeros((M, k)), "pi2": np.zeros((M, k)),
        "mu": np.zeros((M, 2, k)), "sigma2": np.zeros((M, 2, k)),
        "alpha": np.zeros((M, 2)), "mu0": np.zeros(M), "b0": np.zeros(M),
        "n": np.zeros((M, 2, k), np.int64),
    }
    ylat = np.zeros((M, smp.n1 + smp.n2)) if keep_latent else None
    occ = np.zeros(cfg.iters, np.int64)
    trace = np.zeros(1, np.int64)
    m = 0
    for t in range(cfg.iters):
        adapt = t < cfg.burn_in
        sw.run_sweeps(smp.D, smp.S, smp.P, smp.par, smp.H, smp.rng, smp.diag, 1, adapt,
                      trace, 0)
        occ[t] = trace[0]
        if t + 1 == cfg.burn_in:
            smp.finish_adaptation()
        if cfg.rebuild_every and (t + 1) % cfg.rebuild_every == 0:
            smp.rebuild()
        if audit_every and (t + 1) % audit_every == 0:
            smp.check()
        if t >= cfg.burn_in and (t - cfg.burn_in + 1) % cfg.thin == 0 and m < M:
            c, yl, nn = smp.S[0], smp.S[1], smp.S[13]
            hyp, mu, sig2, pi = smp.P
            out["c1"][m] = c[: smp.n1]
            out["c2"][m] = c[smp.n1:]
            out["pi1"][m] = pi[0]
            out["pi2"][m] = pi[1]
            out["mu"][m] = mu
            out["sigma2"][m] = sig2
            out["alpha"][m] = hyp[2:4]
            out["mu0"][m] = hyp[0]
            out["b0"][m] = hyp[1]
            out["n"][m] = nn
            if ylat is not None:
                ylat[m] = yl
            m += 1
    if cfg.burn_in == 0:
        smp.finish_adaptation()
    chain = PosteriorChain(y_latent=ylat, config=cfg.to_dict(), **out)
    monitored = {
        "mu0": chain.mu0, "b0": chain.b0, "alpha1": chain.alpha[:, 0],
        "alpha2": chain.alpha[:, 1], "k_n2": chain.k_n2().astype(float),
    }
    chain.config["m_mu_used"] = smp.m_mu
    chain.config["a_x_used"] = smp.a_x
    chain.config["config_hash"] = cfg.hash()
    chain.diagnostics = {
        "acceptance": smp.acceptance,
        "geweke_z": {k_: geweke_z(v) if len(v) > 4 else float("nan")
                     for k_, v in monitored.items()},
        "occupied_trace": occ.tolist(),
        "truncation_fallbacks": int(smp.diag[sw.DG_TRUNC]),
        "hmc_nonfinite": int(smp.diag[sw.DG_NONFINITE]),
        "n_draws": M,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
    }
    return chain
