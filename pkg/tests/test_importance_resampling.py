import math

import numpy as np
import pytest

from commonatoms.cam_gibbs import ChainConfig, run_chain
from commonatoms.importance_resampling import (ImportanceWeightSet, compute_weights, diagnostics,
                                               rao_blackwell_pi1, read_weights_csv, resample,
                                               write_weights_csv)
from commonatoms.simgen import ScenarioSpec, gen_cam
from helpers import make_chain


class TestComputeWeights:
    def test_single_cluster_uniform(self):
        ch = make_chain([[0, 0]] * 3, [[0] * 6] * 3, [[1.0, 0, 0]] * 3)
        assert np.allclose(compute_weights(ch).w, 1 / 6, rtol=0, atol=1e-15)

    def test_two_cluster_hand_formula(self):
        # pi1 = (0.8, 0.2), cluster sizes (4, 1): raw weights 0.8/4 and 0.2/1
        ch = make_chain([[0, 1]], [[0, 0, 0, 0, 1]], [[0.8, 0.2]])
        raw = np.array([0.2, 0.2, 0.2, 0.2, 0.2])
        assert np.allclose(compute_weights(ch).w, raw / raw.sum(), rtol=0, atol=1e-15)

    def test_average_over_draws(self):
        ch = make_chain([[0], [0]], [[0, 0, 1], [0, 1, 1]], [[0.5, 0.5], [0.9, 0.1]])
        d1 = np.array([0.25, 0.25, 0.5])
        d2 = np.array([0.9, 0.05, 0.05])
        want = (d1 + d2) / 2
        assert np.allclose(compute_weights(ch).w, want / want.sum(), rtol=0, atol=1e-15)

    def test_relabeling_invariance(self, rng):
        M, k = 5, 4
        c2 = rng.integers(0, k, (M, 12))
        c1 = np.array([rng.choice(np.unique(r), 3) for r in c2])
        pi1 = np.zeros((M, k))
        for m in range(M):
            J = np.unique(c2[m])
            pi1[m, J] = rng.dirichlet(np.ones(J.size))
        perm = rng.permutation(k)
        a = compute_weights(make_chain(c1, c2, pi1)).w
        b = compute_weights(make_chain(perm[c1], perm[c2], pi1[:, np.argsort(perm)])).w
        assert np.allclose(a, b, rtol=0, atol=1e-15)

    def test_same_seed_same_weights(self, prior_study, short_cfg):
        st, _ = prior_study
        a = compute_weights(run_chain(st, short_cfg)).w
        b = compute_weights(run_chain(st, short_cfg)).w
        assert np.array_equal(a, b)

    def test_rao_blackwell_hand(self):
        # RWD occupies clusters 0 and 1; treatment counts (3, 1); alpha1 = 1, K = 2
        ch = make_chain([[0, 0, 0, 1]], [[0, 1, 1]], [[0.9, 0.1, 0.0]])
        rb = rao_blackwell_pi1(ch)
        assert np.allclose(rb, [[3.5 / 5, 1.5 / 5, 0.0]], rtol=0, atol=1e-15)
        raw = np.array([3.5 / 5, 1.5 / 10, 1.5 / 10])
        w = compute_weights(ch, rao_blackwell=True).w
        assert np.allclose(w, raw / raw.sum(), rtol=0, atol=1e-15)

    def test_rao_blackwell_close_to_plain(self, prior_study, short_cfg):
        st, _ = prior_study
        ch = run_chain(st, short_cfg)
        a = compute_weights(ch).w
        b = compute_weights(ch, rao_blackwell=True).w
        assert np.abs(a - b).sum() < 0.5

    def test_empty_chain(self):
        ch = make_chain([[0]], [[0]], [[1.0]]).subset(slice(0, 0))
        with pytest.raises(ValueError):
            compute_weights(ch)

    def test_invariants_on_real_chain(self, prior_study, short_cfg):
        st, _ = prior_study
        w = compute_weights(run_chain(st, short_cfg), st.rwd)
        assert np.all(w.w > 0) and abs(w.w.sum() - 1) < 1e-12
        assert list(w.source) == list(st.rwd.source)


class TestResample:
    def test_point_mass(self, rng):
        w = np.zeros(10)
        w[7] = 1
        idx, _ = resample(ImportanceWeightSet(w, 1), 500, rng)
        assert np.all(idx == 7)

    def test_uniform_frequencies(self, rng):
        idx, _ = resample(ImportanceWeightSet(np.ones(10), 1), 100_000, rng)
        f = np.bincount(idx, minlength=10) / idx.size
        se = math.sqrt(0.1 * 0.9 / idx.size)
        assert np.all(np.abs(f - 0.1) < 3 * se)

    def test_expectation_identity(self, rng):
        x = rng.normal(size=30)
        w = ImportanceWeightSet(rng.random(30) ** 2, 1)
        target = float(w.w @ x)
        means = np.array([x[resample(w, 20, rng)[0]].mean() for _ in range(10_000)])
        assert abs(means.mean() - target) < 3 * means.std() / math.sqrt(means.size)

    def test_materializes_provenance(self, cam_study, rng):
        w = ImportanceWeightSet(np.ones(cam_study.n2), 1, cam_study.rwd.source,
                                cam_study.rwd.row_index)
        idx, synth = resample(w, 15, rng, cam_study.rwd)
        assert synth.n == 15
        assert np.array_equal(synth.row_index, cam_study.rwd.row_index[idx])
        assert np.array_equal(synth.cont, cam_study.rwd.cont[idx])

    def test_rejects_zero_size(self, rng):
        with pytest.raises(ValueError):
            resample(ImportanceWeightSet(np.ones(3), 1), 0, rng)


class TestDiagnostics:
    def test_uniform(self):
        assert diagnostics(ImportanceWeightSet(np.ones(40), 1))["ess"] == pytest.approx(40)

    def test_point_mass(self):
        assert diagnostics(ImportanceWeightSet([0, 1.0, 0], 1))["ess"] == pytest.approx(1.0)

    def test_two_halves(self):
        d = diagnostics(ImportanceWeightSet([0.5, 0.5, 0, 0, 0], 1), size=3)
        assert d["ess"] == pytest.approx(2.0)
        assert d["ess_below_size"] is True
        assert d["entropy"] == pytest.approx(math.log(2))

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            ImportanceWeightSet([-0.1, 1.1], 1)
        with pytest.raises(ValueError):
            ImportanceWeightSet([0.0, 0.0], 1)


def test_csv_round_trip(tmp_path):
    w = ImportanceWeightSet(np.array([0.1, 0.3, 0.6]), 4, np.array(["A", "A", "B"], object),
                            np.array([5, 6, 0]))
    write_weights_csv(w, tmp_path / "w.csv")
    back = read_weights_csv(tmp_path / "w.csv")
    assert np.array_equal(back.w, w.w)
    assert list(back.source) == ["A", "A", "B"] and list(back.row_index) == [5, 6, 0]


def test_weighted_mean_error_shrinks_with_n():
    """Weighted RWD covariate means approach the trial population means as n grows."""
    cfg = ChainConfig(iters=300, burn_in=100, thin=2, use_response=False)
    med = []
    for n1 in (50, 100, 150):
        errs = []
        for r in range(20):
            rng = np.random.default_rng(np.random.SeedSequence(77, spawn_key=(n1, r)))
            st = gen_cam(ScenarioSpec("CAM", n1=n1, p=10), rng)
            w = compute_weights(run_chain(st, cfg, rng))
            # continuous means mu1, binary success probability 0.85
            target = np.r_[st.meta["mu1"], [0.85] * 3]
            est = np.r_[w.w @ st.rwd.cont, w.w @ st.rwd.cat]
            errs.append(np.abs(est - target).mean())
        med.append(float(np.median(errs)))
    assert med[0] > med[1] > med[2], med
