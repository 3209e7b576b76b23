"""Simulation truths for the operating-characteristic studies.

Every generator is a pure function of its inputs and the supplied
``numpy.random.Generator``; replicate generators are derived from a master
seed with :func:`replicate_rngs`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data_model import (RWD, TREATMENT, CensoredOutcome, CovariateSchema, MixedDataset,
                         StudyData, merge_historical)

__all__ = [
    "ScenarioSpec",
    "replicate_rngs",
    "gen_cam",
    "gen_mix",
    "gen_selection",
    "gen_outcomes",
    "gen_multi_historical",
    "hr_transform",
    "gen_gbm_like",
    "gbm_survival_study",
    "gen_from_prior",
    "encode_binary",
    "generate",
]


@dataclass
class ScenarioSpec:
    """One simulation cell.

    ``n2`` defaults to ``6 * n1`` (``3 * n1`` per source for the
    multi-historical design).
    """

    kind: str = "CAM"
    n1: int = 50
    p: int = 10
    delta: float = 0.0
    n2: int | None = None
    beta: float = 1.0
    sigma_tilde: float = 1.0
    k: int = 4
    sigma2: float = 0.5
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = self.kind.upper()
        if self.kind not in ("CAM", "MIX", "INTERACTION", "ORACLE", "MULTIHISTORICAL"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n2 is None:
            self.n2 = (3 if self.kind == "MULTIHISTORICAL" else 6) * self.n1
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("scenario sizes must be positive")


def replicate_rngs(master_seed: int, n: int, *path: int) -> list:
    """Independent generators for ``n`` replicates.

    The stream of replicate ``r`` is ``SeedSequence(master_seed,
    spawn_key=(*path, r))``, so adding replicates never changes earlier
    ones and distinct ``path`` values (command, cell, stage) never collide.
    """
    return [np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(*path, r)))
            for r in range(n)]


def _continuous_schema(q: int, nbin: int = 0) -> CovariateSchema:
    spec = [(f"x{l + 1}", 0) for l in range(q)] + [(f"b{l + 1}", 2) for l in range(nbin)]
    return CovariateSchema.from_spec(spec)


def _study(schema, cat1, con1, cat2, con2, meta, src2=None) -> StudyData:
    t = MixedDataset(schema, TREATMENT, cat1, con1, source=np.array(["trial"] * len(cat1),
                                                                     dtype=object))
    r = MixedDataset(schema, RWD, cat2, con2,
                     source=src2 if src2 is not None else np.array(["rwd"] * len(cat2),
                                                                   dtype=object))
    return StudyData(t, r, meta)


# -- covariate scenarios ----------------------------------------------------------

def gen_cam(spec: ScenarioSpec, rng: np.random.Generator) -> StudyData:
    """Trial arm from one component; RWD from a two-component mixture that
    contains it with weight 1/7.

    The first ``q = p - 3`` columns are continuous with variance 0.5, the
    last 3 binary (success probability 0.85 in the trial component, 0.65 in
    the other). The trial mean vector is redrawn from N_q(1, 0.5 I).
    """
    if spec.p < 4:
        raise ValueError("the CAM scenario needs p >= 4")
    q = spec.p - 3
    sd = math.sqrt(spec.sigma2)
    mu1 = rng.normal(1.0, sd, q)
    n1, n2 = spec.n1, spec.n2
    con1 = rng.normal(mu1, sd, (n1, q))
    cat1 = (rng.random((n1, 3)) < 0.85).astype(np.int64)
    z = rng.random(n2) < 1.0 / 7.0
    means = np.where(z[:, None], mu1[None, :], 0.0)
    con2 = rng.normal(means, sd)
    rho = np.where(z, 0.85, 0.65)
    cat2 = (rng.random((n2, 3)) < rho[:, None]).astype(np.int64)
    meta = {"scenario": "CAM", "mu1": mu1.tolist(), "rwd_component": z.astype(int).tolist()}
    return _study(_continuous_schema(q, 3), cat1, con1, cat2, con2, meta)


def _mix_atoms(p: int, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # shared atoms j < k put 2 in coordinates (2j+1, 2j+2) (1-based)
    if p < 2 * k + 2:
        raise ValueError(f"the MIX layout needs p >= 2k + 2 = {2 * k + 2}")
    shared = np.zeros((k - 1, p))
    for j in range(1, k):
        shared[j - 1, [2 * j, 2 * j + 1]] = 2.0
    trial_k = np.zeros(p)
    trial_k[[0, 2, 4]] = 1.5
    rwd_k = np.zeros(p)
    rwd_k[[2 * k, 2 * k + 1]] = 2.0
    return shared, trial_k, rwd_k


def _srswor_weights(k: int, rng) -> np.ndarray:
    w = rng.choice(np.arange(1, 8), size=k, replace=False).astype(float)
    return w / w.sum()


def gen_mix(spec: ScenarioSpec, rng: np.random.Generator) -> StudyData:
    """Both arms are k-component Gaussian mixtures sharing atoms j < k; the
    k-th atom differs between arms. Weights are normalized draws without
    replacement from {1, ..., 7}."""
    k, p = spec.k, spec.p
    shared, trial_k, rwd_k = _mix_atoms(p, k)
    atoms1 = np.vstack([shared, trial_k])
    atoms2 = np.vstack([shared, rwd_k])
    w1 = _srswor_weights(k, rng)
    w2 = _srswor_weights(k, rng)
    sd = math.sqrt(spec.sigma2)
    z1 = rng.choice(k, spec.n1, p=w1)
    z2 = rng.choice(k, spec.n2, p=w2)
    con1 = rng.normal(atoms1[z1], sd)
    con2 = rng.normal(atoms2[z2], sd)
    meta = {"scenario": "MIX", "weights1": w1.tolist(), "weights2": w2.tolist(),
            "atoms1": atoms1.tolist(), "atoms2": atoms2.tolist()}
    schema = _continuous_schema(p)
    return _study(schema, np.zeros((spec.n1, 0)), con1, np.zeros((spec.n2, 0)), con2, meta)


def gen_multi_historical(spec: ScenarioSpec, rng: np.random.Generator) -> StudyData:
    """Trial on atoms 1..k; RWD source A on atoms 1..k-1 and source B on
    atoms 2..k, each of size ``spec.n2`` (default 3 * n1), merged into one
    RWD with provenance tags ``"A"`` and ``"B"``."""
    k, p = spec.k, spec.p
    if k < 3:
        raise ValueError("the multi-historical design needs k >= 3")
    shared, _, rwd_k = _mix_atoms(p, k)
    atoms = np.vstack([shared, rwd_k])
    sd = math.sqrt(spec.sigma2)
    w1 = _srswor_weights(k, rng)
    wa = _srswor_weights(k - 1, rng)
    wb = _srswor_weights(k - 1, rng)
    z1 = rng.choice(k, spec.n1, p=w1)
    za = rng.choice(k - 1, spec.n2, p=wa)
    zb = 1 + rng.choice(k - 1, spec.n2, p=wb)
    schema = _continuous_schema(p)
    empty = np.zeros((spec.n2, 0))
    ds_a = MixedDataset(schema, RWD, empty, rng.normal(atoms[za], sd),
                        source=np.array(["A"] * spec.n2, dtype=object))
    ds_b = MixedDataset(schema, RWD, empty, rng.normal(atoms[zb], sd),
                        source=np.array(["B"] * spec.n2, dtype=object))
    merged = merge_historical([ds_a, ds_b])
    trial = MixedDataset(schema, TREATMENT, np.zeros((spec.n1, 0)), rng.normal(atoms[z1], sd),
                         source=np.array(["trial"] * spec.n1, dtype=object))
    meta = {"scenario": "MULTIHISTORICAL", "atoms": atoms.tolist(),
            "components": {"trial": z1.tolist(), "A": za.tolist(), "B": zb.tolist()}}
    return StudyData(trial, merged, meta)


# -- selection from a historical database ------------------------------------------

def encode_binary(ds: MixedDataset, interactions: list | None = None) -> tuple[np.ndarray, list]:
    """All-binary encoding: binary columns kept, multi-level columns
    one-hot (one indicator per level), continuous columns dichotomized at
    their median. Missing cells encode as all zeros. ``interactions`` is a
    list of column-name pairs whose level-1 indicators are multiplied."""
    cols, names = [], []
    ic = iq = 0
    first = {}
    for col in ds.schema.columns:
        if col.kind == "categorical":
            v = ds.cat[:, ic]
            ic += 1
            if col.num_levels == 2:
                cols.append((v == 1).astype(float))
                names.append(col.name)
                first[col.name] = cols[-1]
            else:
                for lev in range(col.num_levels):
                    cols.append((v == lev).astype(float))
                    names.append(f"{col.name}={lev}")
        else:
            x = ds.cont[:, iq]
            iq += 1
            med = np.nanmedian(x)
            cols.append(np.where(np.isnan(x), 0.0, (x > med).astype(float)))
            names.append(f"{col.name}>median")
            first[col.name] = cols[-1]
    for a, b in interactions or []:
        if a not in first or b not in first:
            raise ValueError(f"interaction ({a}, {b}) needs two binary columns")
        cols.append(first[a] * first[b])
        names.append(f"{a}*{b}")
    X = np.column_stack(cols) if cols else np.zeros((ds.n, 0))
    return X, names


def selection_probability(X: np.ndarray, b: np.ndarray, offset: float = 0.8) -> np.ndarray:
    """(x'b + c) / (1 + x'b + c), set to 0 where the numerator is <= 0."""
    v = X @ b + offset
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] / (1.0 + v[pos])
    return out


GBM_INTERACTIONS = [("Gender", "Age"), ("RTDose", "Age")]


def gen_selection(historical: MixedDataset, mode: str, rng: np.random.Generator,
                  n1: int = 49, n2: int | None = None, interactions: list | None = None,
                  max_redraws: int = 1000) -> StudyData:
    """Build both arms by weighted resampling of a database.

    A coefficient vector b is drawn with replacement from {-1, 0.75} and
    e(x) is the selection probability of each record. The trial arm is
    ``n1`` i.i.d. draws with probability proportional to e(x), the RWD is
    ``n2`` (default ``6 * n1``) i.i.d. draws proportional to 1 - e(x), so
    the arms follow F(x) e(x) and F(x) (1 - e(x)) without F being known.
    A coefficient draw that gives every record e(x) = 0 is redrawn.
    ``mode`` is ``"interaction"`` (with the products in ``interactions``,
    default Gender x Age and RTDose x Age) or ``"oracle"`` (main effects
    only).
    """
    mode = mode.lower()
    if mode not in ("interaction", "oracle"):
        raise ValueError("mode must be 'interaction' or 'oracle'")
    n2 = 6 * n1 if n2 is None else n2
    if n1 < 1 or n2 < 1:
        raise ValueError("arm sizes must be positive")
    if historical.n < 2:
        raise ValueError(f"database has {historical.n} rows, need at least 2")
    inter = (GBM_INTERACTIONS if interactions is None else interactions) \
        if mode == "interaction" else []
    X, names = encode_binary(historical, inter)
    for redraws in range(max_redraws + 1):
        b = rng.choice(np.array([-1.0, 0.75]), size=X.shape[1], replace=True)
        e = selection_probability(X, b)
        if e.sum() > 0 and (1 - e).sum() > 0:
            break
    else:
        raise ValueError(f"no coefficient draw in {max_redraws + 1} tries gives both arms "
                         "positive selection mass")
    i1 = rng.choice(historical.n, size=n1, replace=True, p=e / e.sum())
    i2 = rng.choice(historical.n, size=n2, replace=True, p=(1 - e) / (1 - e).sum())
    trial = replace(historical.subset(i1), arm=TREATMENT)
    rwd = replace(historical.subset(i2), arm=RWD)
    meta = {"scenario": mode.upper(), "coefficients": b.tolist(), "features": names,
            "clamped_fraction": float(np.mean(e == 0.0)),
            "coefficient_redraws": redraws, "propensity": e.tolist()}
    return StudyData(trial, rwd, meta)


# -- outcomes -------------------------------------------------------------------------

def _design(ds: MixedDataset) -> np.ndarray:
    # numeric covariate vector: continuous as is, categoricals as level
    # indicators for levels >= 1; missing cells contribute 0
    cols = [np.nan_to_num(ds.cont, nan=0.0)]
    for l, col in enumerate(ds.schema.categorical):
        v = ds.cat[:, l]
        for lev in range(1, col.num_levels):
            cols.append((v == lev).astype(float)[:, None])
    return np.hstack(cols) if cols else np.zeros((ds.n, 0))


def gen_outcomes(study: StudyData, delta: float, beta, sigma_tilde: float,
                 rng: np.random.Generator) -> StudyData:
    """y1 = delta + x'beta + eps and y2 = x'beta + eps with eps ~ N(0, sigma^2).

    ``beta`` is a scalar (same coefficient for every design column) or a
    vector matching the design: continuous columns followed by one
    indicator per non-reference categorical level.
    """
    X1, X2 = _design(study.treatment), _design(study.rwd)
    d = X1.shape[1]
    b = np.full(d, float(beta)) if np.ndim(beta) == 0 else np.asarray(beta, float)
    if b.shape != (d,):
        raise ValueError(f"beta has length {b.size}, design has {d} columns")
    y1 = delta + X1 @ b + sigma_tilde * rng.standard_normal(study.n1)
    y2 = X2 @ b + sigma_tilde * rng.standard_normal(study.n2)
    meta = dict(study.meta, delta=float(delta), sigma_tilde=float(sigma_tilde))
    return StudyData(study.treatment.with_outcome(CensoredOutcome.fully_observed(y1)),
                     study.rwd.with_outcome(CensoredOutcome.fully_observed(y2)), meta)


def hr_transform(times, target_hr: float = 0.6) -> np.ndarray:
    """Scale survival times by 1/target_hr, the hazard-ratio-``target_hr``
    shift under an exponential model; censoring statuses are unchanged."""
    if not target_hr > 0:
        raise ValueError("target hazard ratio must be positive")
    times = np.asarray(times, dtype=float)
    if np.any(~(times > 0)):
        raise ValueError("survival times must be positive")
    return times / target_hr


def generate(spec: ScenarioSpec, rng: np.random.Generator,
             historical: MixedDataset | None = None) -> StudyData:
    """Covariates for ``spec.kind`` followed by the linear outcome model."""
    if spec.kind == "CAM":
        st = gen_cam(spec, rng)
    elif spec.kind == "MIX":
        st = gen_mix(spec, rng)
    elif spec.kind == "MULTIHISTORICAL":
        st = gen_multi_historical(spec, rng)
    else:
        db = historical if historical is not None else gen_gbm_like(rng)
        st = gen_selection(db, spec.kind, rng, n1=spec.n1, n2=spec.n2)
    return gen_outcomes(st, spec.delta, spec.beta, spec.sigma_tilde, rng)


# -- GBM-style synthetic database -----------------------------------------------------

GBM_COLUMNS = [("Age", 2), ("KPS", 3), ("RTDose", 2), ("SOC", 2), ("CT", 2), ("MGMT", 3),
               ("ATRX", 2), ("Gender", 2), ("EOR", 3), ("Grade", 2), ("SurgeryReason", 2)]

# level probabilities per latent patient profile (rows: profiles). The
# profiles follow the usual clinical pattern: fit patients treated with the
# standard protocol, elderly or frail patients, and an intermediate group.
_GBM_PROFILES = {
    "Age": [[0.85, 0.15], [0.15, 0.85], [0.5, 0.5]],
    "KPS": [[0.05, 0.35, 0.6], [0.6, 0.35, 0.05], [0.2, 0.6, 0.2]],
    "RTDose": [[0.05, 0.95], [0.8, 0.2], [0.3, 0.7]],
    "SOC": [[0.05, 0.95], [0.75, 0.25], [0.3, 0.7]],
    "CT": [[0.5, 0.5], [0.9, 0.1], [0.7, 0.3]],
    "MGMT": [[0.55, 0.35, 0.1], [0.5, 0.3, 0.2], [0.55, 0.3, 0.15]],
    "ATRX": [[0.9, 0.1], [0.95, 0.05], [0.9, 0.1]],
    "Gender": [[0.4, 0.6], [0.45, 0.55], [0.4, 0.6]],
    "EOR": [[0.65, 0.3, 0.05], [0.15, 0.35, 0.5], [0.4, 0.45, 0.15]],
    "Grade": [[0.08, 0.92], [0.03, 0.97], [0.05, 0.95]],
    "SurgeryReason": [[0.85, 0.15], [0.5, 0.5], [0.7, 0.3]],
}
_GBM_PROFILE_WEIGHTS = [0.45, 0.3, 0.25]
_GBM_MISSING = {"MGMT": 0.12, "ATRX": 0.15, "KPS": 0.04, "EOR": 0.03}
# log-OS effects per level (level 0 is the reference)
_GBM_EFFECTS = {
    "Age": [0.0, -0.25], "KPS": [0.0, 0.15, 0.3], "SOC": [0.0, 0.3],
    "MGMT": [0.0, 0.3, 0.1], "EOR": [0.0, -0.15, -0.2], "Grade": [0.0, -0.3],
    "CT": [0.0, 0.1],
}


def gen_gbm_like(rng: np.random.Generator, n: int = 339, median_weeks: float = 65.0,
                 sd_log: float = 0.6, followup: tuple = (80.0, 300.0)) -> MixedDataset:
    """Synthetic stand-in for a historical glioblastoma database.

    Eleven categorical covariates are drawn from a three-profile latent
    class model (so they are correlated), with some cells missing
    completely at random. Log overall survival (weeks) is linear in the
    covariates with normal residuals of SD ``sd_log``, centred so the
    population median is about ``median_weeks``. Follow-up is uniform on
    ``followup`` and survival beyond it is right-censored.
    """
    schema = CovariateSchema.from_spec(GBM_COLUMNS)
    prof = rng.choice(len(_GBM_PROFILE_WEIGHTS), size=n, p=_GBM_PROFILE_WEIGHTS)
    cat = np.empty((n, len(GBM_COLUMNS)), np.int64)
    lin = np.zeros(n)
    for l, (name, L) in enumerate(GBM_COLUMNS):
        P = np.asarray(_GBM_PROFILES[name])[prof]
        u = rng.random(n)[:, None]
        v = (u > np.cumsum(P, axis=1)).sum(axis=1)
        v = np.minimum(v, L - 1)
        if name in _GBM_EFFECTS:
            lin += np.asarray(_GBM_EFFECTS[name])[v]
        miss = rng.random(n) < _GBM_MISSING.get(name, 0.0)
        cat[:, l] = np.where(miss, -1, v)
    lin -= np.median(lin)
    log_t = math.log(median_weeks) + lin + sd_log * rng.standard_normal(n)
    t = np.exp(log_t)
    fu = rng.uniform(*followup, n)
    event = t <= fu
    time = np.where(event, t, fu)
    out = CensoredOutcome.right_censored(time, event.astype(int))
    return MixedDataset(schema, RWD, cat, np.zeros((n, 0)), out,
                        np.array(["gbm_db"] * n, dtype=object), np.arange(n))


def gbm_survival_study(db: MixedDataset, rng: np.random.Generator, n1: int = 49,
                       hypothesis: str = "H0", target_hr: float = 0.6,
                       n2: int | None = None) -> StudyData:
    """Resample both arms from ``db`` (interaction-type selection) and keep
    the trial arm's observed survival (H0) or scale it by 1/target_hr (H1)."""
    st = gen_selection(db, "interaction", rng, n1=n1, n2=n2)
    if hypothesis.upper() == "H1":
        o = st.treatment.outcome
        time = hr_transform(np.exp(o.y), target_hr)
        new = CensoredOutcome.right_censored(time, o.observed.astype(int))
        st = StudyData(st.treatment.with_outcome(new), st.rwd, dict(st.meta))
    elif hypothesis.upper() != "H0":
        raise ValueError("hypothesis must be 'H0' or 'H1'")
    st.meta["hypothesis"] = hypothesis.upper()
    return st


# -- draws from the model's own prior ------------------------------------------------

def gen_from_prior(n1: int, n2: int, schema: CovariateSchema, rng: np.random.Generator,
                   k: int = 15, m_mu: float = 0.0, cfg=None, censor_shift: float | None = None
                   ) -> tuple[StudyData, dict]:
    """Simulate a study from the prior of the common-atoms model.

    Draws (alpha, mu0, b0), RWD weights and labels, treatment weights on
    the RWD-occupied clusters and labels, covariate atoms and values, and
    normal responses from arm-specific NIG cluster parameters. With
    ``censor_shift`` set, each row also gets a censoring point
    ``mu + sigma * (censor_shift + z)`` drawn independently of its outcome
    (about 24% censored at shift 1) and only ``min(y, C)`` is recorded.

    Returns the study and a dict of the true latent quantities.
    """
    from .cam_gibbs import ChainConfig  # local import avoids a cycle

    cfg = cfg or ChainConfig()
    rh = cfg.response
    a1 = math.exp(rng.normal(rh.mu_alpha, math.sqrt(rh.s2_alpha)))
    a2 = math.exp(rng.normal(rh.mu_alpha, math.sqrt(rh.s2_alpha)))
    mu0 = rng.normal(m_mu, math.sqrt(rh.s2_mu))
    b0 = math.exp(rng.normal(rh.m_b, math.sqrt(rh.s2_b)))
    pi2 = _dirichlet(np.full(k, a2 / k), rng)
    c2 = rng.choice(k, n2, p=pi2)
    J = np.unique(c2)
    pi1 = np.zeros(k)
    pi1[J] = _dirichlet(np.full(J.size, a1 / J.size), rng)
    c1 = rng.choice(k, n1, p=pi1)
    c = np.r_[c1, c2]
    # covariate atoms
    pq = len(schema.continuous)
    a_x = cfg.a_x if cfg.a_x is not None else pq + 30.0
    cat = np.empty((n1 + n2, len(schema.categorical)), np.int64)
    for l, col in enumerate(schema.categorical):
        probs = np.array([_dirichlet(np.full(col.num_levels, cfg.cat_conc), rng)
                          for _ in range(k)])
        u = rng.random(n1 + n2)[:, None]
        cat[:, l] = np.minimum((u > np.cumsum(probs[c], axis=1)).sum(axis=1),
                               col.num_levels - 1)
    con = np.empty((n1 + n2, pq))
    for l in range(pq):
        s2 = cfg.b_x / rng.gamma(a_x, 1.0, k)
        m = rng.normal(cfg.m_x, np.sqrt(s2 / cfg.kappa_x))
        con[:, l] = rng.normal(m[c], np.sqrt(s2[c]))
    # responses
    sig2 = b0 / rng.gamma(rh.a0, 1.0, (2, k))
    mu = rng.normal(mu0, np.sqrt(sig2 / rh.kappa0))
    arm = np.r_[np.zeros(n1, int), np.ones(n2, int)]
    y = rng.normal(mu[arm, c], np.sqrt(sig2[arm, c]))
    lower, upper, obs = y.copy(), y.copy(), np.ones(n1 + n2, bool)
    if censor_shift is not None:
        sd = np.sqrt(sig2[arm, c])
        C = mu[arm, c] + sd * (censor_shift + rng.standard_normal(n1 + n2))
        obs = y <= C
        lower = np.where(obs, y, C)
        upper = np.where(obs, y, np.inf)
    yrec = np.where(obs, y, lower)
    out = CensoredOutcome(yrec, lower, upper, obs)
    t = MixedDataset(schema, TREATMENT, cat[:n1], con[:n1], out.subset(np.arange(n1)))
    r = MixedDataset(schema, RWD, cat[n1:], con[n1:], out.subset(np.arange(n1, n1 + n2)))
    truth = {"alpha1": a1, "alpha2": a2, "mu0": mu0, "b0": b0, "pi1": pi1, "pi2": pi2,
             "c1": c1, "c2": c2, "mu": mu, "sigma2": sig2, "y": y}
    return StudyData(t, r, {"scenario": "PRIOR"}), truth


def _dirichlet(shape: np.ndarray, rng) -> np.ndarray:
    # log-space gamma draws so tiny shapes do not underflow to all zeros
    shape = np.asarray(shape, float)
    g = np.log(rng.gamma(shape + 1.0)) + np.log(rng.random(shape.size)) / shape
    g = np.exp(g - g.max())
    return g / g.sum()
