import numpy as np
import pytest
from scipy.spatial.distance import pdist
from scipy.stats import ks_2samp

from ppdiag import (FirstOrder, GeyerSat, GibbsModel, McmcConfig, PointPattern,
                    Strauss, Window, monomial, potential, sample_gibbs,
                    sample_gibbs_many, sample_poisson, unit_square)


class TestSamplePoisson:
    def test_zero_intensity_empty(self, square):
        assert sample_poisson(0.0, square, seed=1).n == 0

    def test_homogeneous_count_law(self, square):
        counts = [sample_poisson(100.0, square, seed=s).n for s in range(2000)]
        se = np.sqrt(100.0 / 2000.0)
        assert abs(np.mean(counts) - 100.0) < 3 * se

    def test_inhomogeneous_mean_matches_grid_integral(self, square):
        trend = FirstOrder([monomial(1, 0), monomial(0, 1), monomial(2, 0)],
                           [np.log(200.0), 2.0, 2.0, 3.0])
        from ppdiag import PixelGrid
        g = PixelGrid(square, 2048)
        xx, yy = np.meshgrid(g.xs, g.ys)
        mean_expect = np.exp(
            trend.log_intensity(np.column_stack([xx.ravel(), yy.ravel()]))
        ).sum() * g.cell_area
        n_sims = 60
        counts = [sample_poisson(trend, square, seed=s).n for s in range(n_sims)]
        se = np.sqrt(mean_expect / n_sims)  # Poisson variance = mean
        assert abs(np.mean(counts) - mean_expect) < 3 * se

    def test_nonfinite_intensity_rejected(self, square):
        with pytest.raises(ValueError):
            sample_poisson(lambda x, y: 1.0 / (x - x), square, seed=0)


class TestSampleGibbs:
    def test_determinism_bit_for_bit(self, square):
        m = GibbsModel(FirstOrder.constant(np.log(80.0)), Strauss(0.05, -0.7))
        cfg = McmcConfig(n_steps=30_000, seed=12345)
        a = sample_gibbs(m, square, cfg)
        b = sample_gibbs(m, square, cfg)
        assert np.array_equal(a.points, b.points)

    def test_python_path_determinism(self, square):
        from ppdiag import AreaInteraction, PixelGrid
        m = GibbsModel(FirstOrder.constant(np.log(30.0)),
                       AreaInteraction(0.05, 0.5))
        g = PixelGrid(square, 64)
        cfg = McmcConfig(n_steps=300, seed=7)
        a = sample_gibbs(m, square, cfg, grid=g)
        b = sample_gibbs(m, square, cfg, grid=g)
        assert np.array_equal(a.points, b.points)

    def test_strauss_positive_phi_refused(self, square):
        m = GibbsModel(FirstOrder.constant(1.0), Strauss(0.05, 0.2))
        with pytest.raises(ValueError, match="refused"):
            sample_gibbs(m, square, McmcConfig(n_steps=10, seed=0))

    def test_phi_zero_matches_poisson_law(self, square):
        trend = FirstOrder.constant(np.log(100.0))
        m = GibbsModel(trend, Strauss(0.05, 0.0))
        ns_chain = [sample_gibbs(m, square, McmcConfig(20_000, seed=s)).n
                    for s in range(500)]
        ns_direct = [sample_poisson(trend, square, seed=10_000 + s).n
                     for s in range(500)]
        assert ks_2samp(ns_chain, ns_direct).pvalue > 0.01

    def test_hard_core_has_no_close_pair(self, square):
        m = GibbsModel(FirstOrder.constant(np.log(100.0)),
                       Strauss(0.08, -np.inf))
        for s in range(5):
            p = sample_gibbs(m, square, McmcConfig(50_000, seed=s))
            assert p.n > 0
            assert pdist(p.points).min() > 0.08

    def test_geyer_potential_increases_with_gamma(self, square):
        trend = FirstOrder.constant(4.0)
        vals = {}
        for name, phi in (("indep", 0.0), ("cluster", 0.4)):
            m = GibbsModel(trend, GeyerSat(0.05, 4.5, phi))
            vs = [potential(GeyerSat(0.05, 4.5), sample_gibbs(
                m, square, McmcConfig(60_000, seed=300 + s)))
                for s in range(25)]
            vals[name] = np.mean(vs)
        assert vals["cluster"] > vals["indep"]

    def test_replicates_independent_of_batching(self, square):
        m = GibbsModel(FirstOrder.constant(np.log(60.0)), Strauss(0.05, -0.4))
        cfg = McmcConfig(5_000, seed=42)
        a = sample_gibbs_many(m, square, cfg, 4)
        b = sample_gibbs_many(m, square, cfg, 4)
        for x, y in zip(a, b):
            assert np.array_equal(x.points, y.points)


class ToyStrauss:
    """Strauss model with range beyond the window diameter: the density
    depends on the count alone, so the coarse law is exactly enumerable."""

    def __init__(self, kappa, gamma, window):
        self.kappa = kappa
        self.gamma = gamma
        self.window = window

    def count_pmf(self, n_max=40):
        n = np.arange(n_max + 1)
        logw = (n * np.log(self.kappa * self.window.area)
                + n * (n - 1) / 2.0 * np.log(self.gamma)
                - np.array([np.sum(np.log(np.arange(1, k + 1))) for k in n]))
        w = np.exp(logw - logw.max())
        return w / w.sum()


class TestStationaryLaw:
    def test_toy_enumeration_total_variation(self, square):
        """Chain law vs exact enumeration on a 3-cell occupancy coarsening.

        With interaction range beyond the window diameter, the count law is
        enumerable and points are uniform given the count, so the occupancy
        probabilities of three vertical strips follow by inclusion-exclusion.
        """
        from itertools import product
        kappa, gamma = 3.0, 0.5
        toy = ToyStrauss(kappa, gamma, square)
        model = GibbsModel(FirstOrder.constant(np.log(kappa)),
                           Strauss(5.0, np.log(gamma)))
        pmf_n = toy.count_pmf()
        n = np.arange(len(pmf_n))

        def p_zero_superset(k):
            # probability that k chosen strips hold no point
            return float((pmf_n * ((3.0 - k) / 3.0) ** n).sum())

        from math import comb
        states = {}
        for occ in product((0, 1), repeat=3):
            k = 3 - sum(occ)  # strips required empty
            prob = sum((-1) ** (j - k) * comb(3 - k, j - k) * p_zero_superset(j)
                       for j in range(k, 4))
            states[occ] = prob
        assert sum(states.values()) == pytest.approx(1.0)

        sims = sample_gibbs_many(model, square, McmcConfig(4_000, seed=11),
                                 8000)
        emp = {occ: 0.0 for occ in states}
        for p in sims:
            a = int((p.points[:, 0] < 1 / 3).sum())
            b = int(((p.points[:, 0] >= 1 / 3) & (p.points[:, 0] < 2 / 3)).sum())
            c = p.n - a - b
            emp[(int(a > 0), int(b > 0), int(c > 0))] += 1.0 / len(sims)
        tv = 0.5 * sum(abs(states[k] - emp[k]) for k in states)
        assert tv < 0.02, tv

    def test_detailed_balance_of_count_chain(self, square):
        """With constant intensity and window-wide range, the count chain has
        closed-form transition rates; check detailed balance numerically."""
        kappa, gamma = 3.0, 0.5
        area = square.area
        pmf = ToyStrauss(kappa, gamma, square).count_pmf()
        p_birth = 0.5
        for n in range(12):
            lam_birth = kappa * gamma ** n  # intensity seen by a newcomer
            t_up = p_birth * min(1.0, lam_birth * area / (n + 1))
            lam_death = kappa * gamma ** n  # each point sees the other n
            t_down = (1 - p_birth) * min(1.0, (n + 1) / (lam_death * area))
            lhs = pmf[n] * t_up
            rhs = pmf[n + 1] * t_down
            assert lhs == pytest.approx(rhs, rel=1e-12)
