"""Two-step and joint analyses of one simulated CAM study.

Run with ``python3 demos/cam_pipeline.py``. Takes about half a minute.
"""

import numpy as np

from commonatoms.cam_gibbs import ChainConfig
from commonatoms.classical_baselines import ols_effect
from commonatoms.equivalence_check import compare_arms
from commonatoms.pipeline import fit, synthetic_control
from commonatoms.simgen import ScenarioSpec, generate
from commonatoms.treatment_effect import delta_draws

rng = np.random.default_rng(1)
study = generate(ScenarioSpec("CAM", n1=50, p=10, delta=3.0), rng)
cfg = ChainConfig(iters=2000, burn_in=1000, thin=2)
print(f"trial rows {study.n1}, RWD rows {study.rwd.n}, true effect 3.0")

# naive comparison against the whole RWD
naive = ols_effect(np.r_[study.treatment.outcome.y, study.rwd.outcome.y],
                   np.r_[np.ones(study.n1), np.zeros(study.rwd.n)])
print(f"naive difference in means: {naive['delta']:.3f}")

# two-step route: weights, synthetic control, equivalence check, least squares
w, synth, diag = synthetic_control(study, cfg, rng)
print(f"importance-weight ESS: {diag['ess']:.1f}")
auc = compare_arms(study.treatment, synth, rng=rng).auc
print(f"classifier AUC, trial vs synthetic control: {auc:.3f}")
y = np.r_[study.treatment.outcome.y, synth.outcome.y]
z = np.r_[np.ones(study.n1), np.zeros(synth.n)]
print(f"IS-LM effect: {ols_effect(y, z)['delta']:.3f}")

# joint covariate-response model
d = delta_draws(fit(study, cfg, rng, use_response=True))
lo, hi = np.quantile(d, [0.025, 0.975])
print(f"CA-PPMx effect: {d.mean():.3f} (95% interval {lo:.3f} to {hi:.3f})")
