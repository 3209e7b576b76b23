"""End-to-end analyses of one study and the replicate power harness.

Two analysis paths are compared throughout:

* ``CA-PPMx``: the joint covariate-response model; the estimate is the
  posterior mean of the population-adjusted effect (survival: the
  posterior probability that HR(t*) is below r*).
* ``IS-LM`` / ``IS-KM``: the two-step route. A covariate-only common-atoms
  fit gives importance weights, a synthetic control of size n1 is
  resampled, and the arms are compared by least squares (continuous) or
  Kaplan-Meier curves and the logrank test (survival).

Randomness flows from one master seed: replicate r of cell c under
hypothesis h uses ``SeedSequence(master, spawn_key=(c, h, r))`` and the
stages of a replicate draw from that generator in a fixed order.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cam_gibbs import ChainConfig, PosteriorChain, run_chain
from .classical_baselines import km_estimate, logrank_test, ols_effect
from .data_model import StudyData
from .equivalence_check import ClassifierConfig, compare_arms
from .importance_resampling import compute_weights, diagnostics, resample
from .simgen import ScenarioSpec, generate, replicate_rngs
from .treatment_effect import calibrated_test, delta_draws, null_interval, posterior_effect

__all__ = ["AnalysisSettings", "fit", "synthetic_control", "analyze_continuous",
           "analyze_survival", "PowerCell", "run_cell", "power_table"]

CONTINUOUS_METHODS = ("CA-PPMx", "IS-LM")


@dataclass
class AnalysisSettings:
    """Chain and test settings shared by every replicate of a study."""

    chain: ChainConfig = field(default_factory=lambda: ChainConfig(iters=2000, burn_in=1000,
                                                                     thin=2))
    methods: tuple = CONTINUOUS_METHODS
    auc: bool = False
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    t_star: float = 50.0
    r_star: float = 0.6

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["methods"] = list(self.methods)
        return d


def fit(study: StudyData, cfg: ChainConfig, rng: np.random.Generator,
        use_response: bool = True) -> PosteriorChain:
    """One chain; ``use_response=False`` ignores outcomes entirely."""
    c = dataclasses.replace(cfg, use_response=use_response and study.has_outcome)
    return run_chain(study, c, rng, keep_latent=False)


def synthetic_control(study: StudyData, cfg: ChainConfig, rng: np.random.Generator,
                      size: int | None = None):
    """Covariate-only fit, importance weights and one resampled control.

    Returns (weights, synthetic dataset, diagnostics dict).
    """
    chain = fit(study, cfg, rng, use_response=False)
    w = compute_weights(chain, study.rwd)
    size = size or study.n1
    _, synth = resample(w, size, rng, study.rwd)
    return w, synth, diagnostics(w, size)


def analyze_continuous(study: StudyData, st: AnalysisSettings, rng: np.random.Generator,
                       ) -> dict:
    """Effect estimates of the requested methods for one continuous study."""
    out = {}
    if "CA-PPMx" in st.methods:
        chain = fit(study, st.chain, rng, use_response=True)
        d = delta_draws(chain)
        out["CA-PPMx"] = float(d.mean())
        out["CA-PPMx_sd"] = float(d.std())
    if "IS-LM" in st.methods or st.auc:
        _, synth, diag = synthetic_control(study, st.chain, rng)
        out["ess"] = diag["ess"]
        if "IS-LM" in st.methods:
            y = np.r_[study.treatment.outcome.y, synth.outcome.y]
            z = np.r_[np.ones(study.n1), np.zeros(synth.n)]
            out["IS-LM"] = ols_effect(y, z)["delta"]
        if st.auc:
            out["auc_is"] = compare_arms(study.treatment, synth, st.classifier, rng).auc
    return out


def analyze_survival(study: StudyData, st: AnalysisSettings, rng: np.random.Generator,
                     with_model: bool = True) -> dict:
    """IS-KM logrank comparison and the model-based P(HR(t*) < r*)."""
    out = {}
    _, synth, diag = synthetic_control(study, st.chain, rng)
    o1, o2 = study.treatment.outcome, synth.outcome
    times = np.exp(np.r_[o1.y, o2.y])
    status = np.r_[o1.observed, o2.observed].astype(int)
    grp = np.r_[np.ones(o1.y.size, int), np.zeros(o2.y.size, int)]
    lr = logrank_test(grp, times, status)
    out["logrank_p"] = lr["p_value"]
    out["logrank_stat"] = lr["statistic"]
    out["km_treatment_at_t_star"] = float(km_estimate(times[grp == 1], status[grp == 1])(st.t_star))
    out["km_control_at_t_star"] = float(km_estimate(times[grp == 0], status[grp == 0])(st.t_star))
    out["ess"] = diag["ess"]
    if with_model:
        chain = fit(study, st.chain, rng, use_response=True)
        allt = np.exp(np.r_[study.treatment.outcome.y, study.rwd.outcome.y])
        eff = posterior_effect(chain, "survival", st.t_star, st.r_star, max_time=float(allt.max()))
        out["prob_hr_below"] = eff.prob_hr_below
        out["hr_star_median"] = float(np.nanmedian(eff.hr_star_draws))
    return out


# -- power harness ---------------------------------------------------------------------

@dataclass
class PowerCell:
    """One (scenario, n1, p, delta) cell of the power study."""

    spec: ScenarioSpec
    replicates: int = 50
    cell_id: int = 0

    def label(self) -> dict:
        return {"scenario": self.spec.kind, "n1": self.spec.n1, "p": self.spec.p,
                "delta": self.spec.delta}


def _replicate(args):
    spec, st, seq = args
    rng = np.random.default_rng(seq)
    study = generate(spec, rng)
    return analyze_continuous(study, st, rng)


def _map(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def run_cell(cell: PowerCell, st: AnalysisSettings, master_seed: int, workers: int = 1,
             min_null: int = 40) -> dict:
    """Null and alternative replicates of one cell and the calibrated test.

    Each method's null band is the central 95% of its null estimates. The
    alternative rejection rate is the power; the null rejection rate is
    computed leave-one-out (each null estimate against the band of the
    others).
    """
    R = cell.replicates
    if R < min_null:
        raise ValueError(f"power cells need at least {min_null} replicates, got {R}")
    null_spec = dataclasses.replace(cell.spec, delta=0.0)
    jobs = []
    for h, spec in ((0, null_spec), (1, cell.spec)):
        seqs = [np.random.SeedSequence(master_seed, spawn_key=(cell.cell_id, h, r))
                for r in range(R)]
        jobs += [(spec, st, s) for s in seqs]
    res = _map(_replicate, jobs, workers)
    null, alt = res[:R], res[R:]
    row = dict(cell.label(), replicates=R)
    for m in st.methods:
        e0 = np.array([r[m] for r in null])
        e1 = np.array([r[m] for r in alt])
        test = calibrated_test(e0, e1, min_replicates=min_null)
        loo = [calibrated_test(np.delete(e0, i), e0[i], min_replicates=min_null - 1)["reject"]
               for i in range(R)]
        row[f"{m}_power"] = float(np.mean(test["reject"]))
        row[f"{m}_null_rejection"] = float(np.mean(loo))
        row[f"{m}_band"] = [test["lower"], test["upper"]]
        row[f"{m}_alt_mean"] = float(e1.mean())
        row[f"{m}_null_mean"] = float(e0.mean())
    if cell.spec.delta == 0.0:
        for m in st.methods:
            row[f"{m}_power"] = row[f"{m}_null_rejection"]
    row["estimates"] = {"null": null, "alternative": alt}
    return row


def power_table(cells, st: AnalysisSettings, master_seed: int, workers: int = 1) -> list:
    """Run every cell; rows keep the order of ``cells``."""
    rows = []
    for i, cell in enumerate(cells):
        if cell.cell_id == 0:
            cell = dataclasses.replace(cell, cell_id=i)
        rows.append(run_cell(cell, st, master_seed, workers))
    return rows


def binomial_band(p: float, n: int, k: float = 3.0) -> tuple[float, float]:
    """p +/- k binomial standard errors."""
    se = math.sqrt(p * (1 - p) / n)
    return p - k * se, p + k * se


__all__ += ["binomial_band", "null_interval", "replicate_rngs"]
