import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from commonatoms.classical_baselines import chi2_1_sf, km_estimate, logrank_test, ols_effect


class TestKaplanMeier:
    def test_all_events(self):
        km = km_estimate([1, 2, 3], [1, 1, 1])
        assert km.surv == pytest.approx([2 / 3, 1 / 3, 0.0], abs=1e-15)

    def test_all_censored(self):
        km = km_estimate([1, 2, 3], [0, 0, 0])
        assert km.time.size == 0
        assert np.all(km([0.5, 2, 10]) == 1.0)

    def test_middle_censored(self):
        km = km_estimate([1, 2, 3], [1, 0, 1])
        assert list(km.time) == [1, 3]
        assert km(1) == pytest.approx(2 / 3, abs=1e-15)
        assert km(3) == 0.0
        assert km.at_risk[1] == 1

    def test_greenwood_by_hand(self):
        # times 1,2,2,3+,4 with events at 1, 2 (x2), 4
        km = km_estimate([1, 2, 2, 3, 4], [1, 1, 1, 0, 1])
        s1, s2 = 4 / 5, 4 / 5 * 2 / 4
        assert km.surv[:2] == pytest.approx([s1, s2], abs=1e-15)
        g2 = 1 / (5 * 4) + 2 / (4 * 2)
        assert km.var[1] == pytest.approx(s2 ** 2 * g2, rel=1e-13)
        assert np.all((km.lo >= 0) & (km.hi <= 1) & (km.lo <= km.surv))

    def test_step_function_right_continuous(self):
        km = km_estimate([2, 4], [1, 1])
        assert km(1.999) == 1.0 and km(2.0) == 0.5 and km(3.9) == 0.5

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            km_estimate([0.0, 1.0], [1, 1])

    @given(hs.lists(hs.floats(0.1, 100), min_size=1, max_size=30))
    def test_no_censoring_is_empirical(self, t):
        t = np.array(t)
        km = km_estimate(t, np.ones(t.size, int))
        for u in np.unique(t):
            assert km(u) == pytest.approx(np.mean(t > u), abs=1e-12)


def _perm_pvalue(group, times, status, rng, n_perm=20_000):
    obs = logrank_test(group, times, status)["statistic"]
    hits = 0
    g = np.asarray(group).copy()
    for _ in range(n_perm):
        rng.shuffle(g)
        hits += logrank_test(g, times, status)["statistic"] >= obs - 1e-12
    return (hits + 1) / (n_perm + 1)


class TestLogrank:
    def test_identical_groups(self):
        t = [3, 5, 8, 13]
        r = logrank_test([0] * 4 + [1] * 4, t + t, [1] * 8)
        assert r["statistic"] == pytest.approx(0.0, abs=1e-15)
        assert r["p_value"] == 1.0

    def test_separated_groups(self):
        t = np.r_[np.arange(1, 21), np.arange(21, 41)]
        r = logrank_test(np.r_[np.zeros(20), np.ones(20)], t, np.ones(40, int))
        assert r["statistic"] > 0 and r["p_value"] < 0.05

    def test_hand_example_with_ties(self):
        # group 0: 1, 2, 3+; group 1: 2, 4
        r = logrank_test([0, 0, 0, 1, 1], [1, 2, 3, 2, 4], [1, 1, 0, 1, 1])
        # t=1: n=5,n0=3,d=1 -> E=3/5, V=6/25; t=2: n=4,n0=2,d=2 -> E=1, V=1/3;
        # t=4: n=1,n0=0 -> E=0
        E, V = 3 / 5 + 1, 6 / 25 + 1 / 3
        assert r["observed"] == 2 and r["expected"] == pytest.approx(E)
        assert r["variance"] == pytest.approx(V, rel=1e-13)
        assert r["statistic"] == pytest.approx((2 - E) ** 2 / V, rel=1e-13)

    def test_invariant_to_monotone_time_transform(self, rng):
        t = rng.exponential(10, 30)
        s = rng.integers(0, 2, 30)
        s[0] = 1
        g = rng.integers(0, 2, 30)
        a = logrank_test(g, t, s)["statistic"]
        b = logrank_test(g, np.exp(t / 10), s)["statistic"]
        assert a == pytest.approx(b, rel=1e-12)

    def test_needs_two_groups(self):
        with pytest.raises(ValueError):
            logrank_test([1, 1, 1], [1, 2, 3], [1, 1, 1])

    def test_chi2_tail(self):
        assert chi2_1_sf(3.841458820694124) == pytest.approx(0.05, abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_agrees_with_permutation_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = 40
        g = np.r_[np.zeros(20, int), np.ones(20, int)]
        t = rng.exponential(1.0, n) * np.where(g == 1, 1.6, 1.0)
        c = rng.exponential(3.0, n)
        s = (t <= c).astype(int)
        tt = np.minimum(t, c)
        p = logrank_test(g, tt, s)["p_value"]
        assert abs(p - _perm_pvalue(g, tt, s, rng, 5000)) < 0.02


class TestOls:
    def test_exact_fit(self):
        z = np.r_[np.ones(5), np.zeros(5)]
        r = ols_effect(2.5 * z, z)
        assert r["delta"] == pytest.approx(2.5, abs=1e-12)
        assert r["se"] == pytest.approx(0.0, abs=1e-12)

    def test_null_design(self, rng):
        z = np.r_[np.ones(100), np.zeros(100)]
        r = ols_effect(rng.normal(size=200), z)
        assert abs(r["t"]) < 4

    @settings(max_examples=20, deadline=None)
    @given(hs.integers(0, 10_000))
    def test_matches_normal_equations(self, seed):
        r = np.random.default_rng(seed)
        n = 40
        z = (r.random(n) < 0.5).astype(float)
        z[:2] = [0, 1]
        X = r.normal(size=(n, 3))
        y = r.normal(size=n)
        out = ols_effect(y, z, X)
        A = np.column_stack([np.ones(n), z, X])
        coef = np.linalg.solve(A.T @ A, A.T @ y)
        assert np.allclose(out["coef"], coef, rtol=0, atol=1e-10)
        assert np.max(np.abs(A.T @ out["residuals"])) < 1e-10

    def test_rank_deficiency_names_column(self):
        z = np.r_[np.ones(5), np.zeros(5)]
        with pytest.raises(ValueError, match="dup"):
            ols_effect(np.arange(10.0), z, z[:, None], names=["dup"])
