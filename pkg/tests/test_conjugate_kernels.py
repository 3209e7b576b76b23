import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs
from scipy import integrate, stats

from commonatoms import _special as sp
from commonatoms.conjugate_kernels import (ClusterSuffStats, KernelHyper, cat_predictive,
                                           cont_predictive, nig_posterior, psi_X,
                                           sample_truncated_t, student_t_cdf, student_t_pdf,
                                           student_t_ppf)

# Student-t cdf values frozen from mpmath at 50 digits (see _mp_t_cdf)
T_CDF_FROZEN = [
    (-3.0, 2.5, 0.03628804777451592),
    (0.7, 4.0, 0.7387499172032749),
    (2.0, 1.0, 0.8524163823495667),
    (-0.25, 30.0, 0.4021457045402875),
]


def _mp_t_cdf(x, df):
    mp.mp.dps = 50
    x, df = mp.mpf(x), mp.mpf(df)
    z = df / (df + x * x)
    tail = mp.betainc(df / 2, mp.mpf(1) / 2, 0, z, regularized=True) / 2
    return float(1 - tail if x > 0 else tail)


class TestCategorical:
    def test_counts_three_one(self):
        assert cat_predictive(0, [3, 1], [1, 1]) == pytest.approx(4 / 6, abs=1e-15)

    def test_empty_cluster_is_uniform(self):
        for lev in range(3):
            assert cat_predictive(lev, [0, 0, 0], [1, 1, 1]) == pytest.approx(1 / 3, abs=1e-15)

    def test_counts_two_zero(self):
        assert cat_predictive(0, [2, 0], [1, 1]) == pytest.approx(0.75, abs=1e-15)

    def test_out_of_range_level(self):
        with pytest.raises(ValueError):
            cat_predictive(2, [1, 1], [1, 1])

    @given(hs.lists(hs.integers(0, 20), min_size=2, max_size=6))
    def test_sums_to_one(self, counts):
        conc = np.linspace(0.5, 2.0, len(counts))
        tot = sum(cat_predictive(l, counts, conc) for l in range(len(counts)))
        assert abs(tot - 1.0) < 1e-12


class TestContinuous:
    def test_empty_cluster_prior_predictive(self):
        a = 33.0
        h = KernelHyper(m=0.0, kappa=1.0, a=a, b=1.0)
        for x in (-1.3, 0.0, 0.4):
            ref = stats.t.pdf(x, 2 * a, 0.0, math.sqrt(2 / a))
            assert cont_predictive(x, 0, 0.0, 0.0, h) == pytest.approx(ref, rel=1e-12)

    def test_mode_at_location(self):
        h = KernelHyper(a=5.0)
        mn, kn, an, bn = nig_posterior(3, 2.0, 3.0, 0.0, 1.0, 5.0, 1.0)
        f0 = cont_predictive(mn, 3, 2.0, 3.0, h)
        for dx in (1e-3, -1e-3, 0.2):
            assert cont_predictive(mn + dx, 3, 2.0, 3.0, h) < f0

    def test_matches_quadrature(self):
        # cluster {1, 1, 1}, hyper (0, 1, 10, 1); integrate N(x | mu, s2)
        # against the NIG posterior of (mu, s2)
        h = KernelHyper(m=0.0, kappa=1.0, a=10.0, b=1.0)
        mn, kn, an, bn = nig_posterior(3, 3.0, 3.0, 0.0, 1.0, 10.0, 1.0)

        lc = an * math.log(bn) - math.lgamma(an) - math.log(2 * math.pi) + 0.5 * math.log(kn)

        def joint(mu, s2, x):
            # N(x | mu, s2) N(mu | mn, s2 / kn) InvGamma(s2 | an, bn)
            q = (x - mu) ** 2 + kn * (mu - mn) ** 2
            return math.exp(lc - (an + 2.0) * math.log(s2) - (bn + 0.5 * q) / s2)

        for x in (0.2, 0.75, 1.6):
            val, _ = integrate.dblquad(lambda mu, s2: joint(mu, s2, x), 1e-6, 2.0,
                                       mn - 3.0, mn + 3.0, epsabs=1e-13, epsrel=1e-11)
            assert abs(cont_predictive(x, 3, 3.0, 3.0, h) - val) < 1e-8

    def test_integrates_to_one(self):
        h = KernelHyper(a=4.0)
        x = np.linspace(-60, 60, 200001)
        f = np.array([cont_predictive(v, 2, 1.0, 2.5, h) for v in x[::50]])
        tot = integrate.trapezoid(f, x[::50])
        assert abs(tot - 1.0) < 1e-4


class TestPsiX:
    def test_all_missing_row(self):
        st = ClusterSuffStats([2, 3], 2)
        st.add([1, 0], [0.3, -0.2])
        h = KernelHyper.default([2, 3], 2)
        assert psi_X([-1, -1], [np.nan, np.nan], st, h) == 1.0

    def test_single_binary(self):
        st = ClusterSuffStats([2], 0)
        st.add([0], [])
        st.add([0], [])
        h = KernelHyper.default([2], 0)
        assert psi_X([0], [], st, h) == pytest.approx(0.75, abs=1e-15)

    def test_factorization(self):
        st = ClusterSuffStats([3], 1)
        for lev, x in [(0, 0.1), (2, 0.5), (0, -0.3)]:
            st.add([lev], [x])
        h = KernelHyper.default([3], 1)
        want = (cat_predictive(0, st.cat_counts[0], h.cat_conc[0])
                * cont_predictive(0.2, st.cont_n[0], st.cont_s1[0], st.cont_s2[0], h))
        assert abs(psi_X([0], [0.2], st, h) - want) < 1e-12 * want

    @settings(max_examples=30, deadline=None)
    @given(hs.lists(hs.tuples(hs.integers(-1, 2), hs.floats(-5, 5)), min_size=1, max_size=15),
           hs.data())
    def test_add_remove_matches_rebuild(self, rows, data):
        st = ClusterSuffStats([3], 1)
        for lev, x in rows:
            st.add([lev], [x])
        keep = data.draw(hs.lists(hs.booleans(), min_size=len(rows), max_size=len(rows)))
        for (lev, x), k in zip(rows, keep):
            if not k:
                st.remove([lev], [x])
        kept = [r for r, k in zip(rows, keep) if k]
        ref = ClusterSuffStats.from_rows([3], 1, [[l] for l, _ in kept], [[x] for _, x in kept])
        assert np.array_equal(st.cat_counts[0], ref.cat_counts[0])
        assert st.cont_n[0] == ref.cont_n[0]
        assert abs(st.cont_s1[0] - ref.cont_s1[0]) < 1e-9
        assert abs(st.cont_s2[0] - ref.cont_s2[0]) < 1e-9

    def test_remove_unknown_member(self):
        st = ClusterSuffStats([2], 0)
        with pytest.raises(ValueError):
            st.remove([1], [])


class TestStudentT:
    def test_cdf_at_location(self):
        assert student_t_cdf(1.7, 3.3, loc=1.7, scale=2.0) == pytest.approx(0.5, abs=1e-15)

    def test_normal_limit(self):
        for x in (-2.0, -0.3, 1.1):
            assert abs(student_t_cdf(x, 1e6) - stats.norm.cdf(x)) < 1e-5

    def test_cauchy(self):
        assert student_t_cdf(1.0, 1.0) == pytest.approx(0.75, abs=1e-13)

    @pytest.mark.parametrize("x,df,want", T_CDF_FROZEN)
    def test_cdf_frozen_values(self, x, df, want):
        assert student_t_cdf(x, df) == pytest.approx(want, abs=1e-12)

    def test_frozen_values_match_mpmath(self):
        for x, df, want in T_CDF_FROZEN:
            assert abs(_mp_t_cdf(x, df) - want) < 1e-14

    def test_ppf_inverts_cdf(self):
        for df in (0.7, 2.0, 9.0, 80.0):
            for p in (1e-6, 0.02, 0.5, 0.9, 1 - 1e-7):
                x = student_t_ppf(p, df)
                assert abs(student_t_cdf(x, df) - p) < 1e-10

    def test_pdf_is_derivative_of_cdf(self):
        h = 1e-5
        for df in (1.5, 6.0):
            for x in (-2.0, 0.3, 4.0):
                num = (student_t_cdf(x + h, df) - student_t_cdf(x - h, df)) / (2 * h)
                assert abs(num - student_t_pdf(x, df)) < 1e-6

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            student_t_cdf(0.0, -1.0)
        with pytest.raises(ValueError):
            student_t_cdf(0.0, 2.0, scale=0.0)

    def test_digamma_matches_mpmath(self):
        mp.mp.dps = 30
        for x in (1e-3, 0.5, 1.0, 3.7, 250.0):
            assert sp.digamma(x) == pytest.approx(float(mp.digamma(x)), rel=1e-12)


class TestTruncatedT:
    def test_unbounded_is_t(self, rng):
        d = sample_truncated_t(5.0, 1.0, 2.0, -np.inf, np.inf, rng, size=10_000)
        assert stats.kstest(d, stats.t(5.0, 1.0, 2.0).cdf).pvalue > 0.01

    def test_symmetric_bounds_mean(self, rng):
        d = sample_truncated_t(3.0, 2.0, 1.5, 0.5, 3.5, rng, size=100_000)
        se = d.std() / math.sqrt(d.size)
        assert abs(d.mean() - 2.0) < 3 * se

    def test_support(self, rng):
        d = sample_truncated_t(4.0, 0.0, 1.0, 2.0, 3.0, rng, size=5000)
        assert np.all((d > 2.0) & (d < 3.0))

    def test_far_tail_interval(self, rng):
        d = sample_truncated_t(30.0, 0.0, 1.0, 12.0, np.inf, rng, size=200)
        assert np.all(d > 12.0) and np.all(np.isfinite(d))

    def test_vanishing_mass_rejected(self, rng):
        with pytest.raises(ValueError, match="vanishing mass"):
            sample_truncated_t(200.0, 0.0, 1.0, 1e6, np.inf, rng)

    def test_empty_interval_rejected(self, rng):
        with pytest.raises(ValueError):
            sample_truncated_t(3.0, 0.0, 1.0, 1.0, 1.0, rng)
