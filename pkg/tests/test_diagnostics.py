import numpy as np
import pytest

import ppdiag.diagnostics as dg
from ppdiag import (FirstOrder, GibbsModel, McmcConfig, PixelGrid,
                    PointPattern, Strauss, compensator, disc_window_area,
                    fit_mple, k_hat, mc_innovation_variance,
                    poincare_variance, pseudo_compensator, pseudo_residual,
                    pseudo_sum, residual, sample_gibbs, sample_poisson,
                    smooth, standardized, union_discs_area, unit_square)

R_GRID = np.linspace(0.0, 0.125, 26)


@pytest.fixture(scope="module")
def csr_pattern(square):
    return sample_poisson(100.0, square, seed=314)


@pytest.fixture(scope="module")
def csr_fit(csr_pattern):
    return fit_mple(csr_pattern, GibbsModel(FirstOrder()))


@pytest.fixture(scope="module")
def dead_model():
    # essentially zero fitted intensity
    return GibbsModel(FirstOrder.constant(-80.0))


class TestCompensator:
    def test_zero_intensity_gives_zero(self, dead_model, csr_pattern):
        c = compensator(dg.VS(), dead_model, csr_pattern, R_GRID)
        assert np.allclose(c, 0.0, atol=1e-20)

    def test_csr_vs_closed_form_vs_quadrature(self, csr_fit, csr_pattern, square):
        kappa = csr_pattern.n / square.area
        closed = np.zeros_like(R_GRID)
        for k, r in enumerate(R_GRID):
            if r > 0:
                closed[k] = 0.5 * kappa * disc_window_area(
                    csr_pattern.points, r, square).sum()
        # default path is the closed form
        assert np.allclose(compensator(dg.VS(), csr_fit, r_grid=R_GRID), closed)
        # a dedicated quadrature rule agrees to about 1e-3 relative
        quad = compensator(dg.VS(), csr_fit, r_grid=R_GRID,
                           nodes=dg.uniform_rule(square, 150))
        scale = closed[-1]
        assert np.max(np.abs(quad - closed)) < 2e-3 * scale

    def test_csr_vg_union_area_form(self, csr_fit, csr_pattern, square):
        kappa = csr_pattern.n / square.area
        pix = PixelGrid(square, 256)
        got = compensator(dg.VG(), csr_fit, r_grid=R_GRID,
                          nodes=dg.uniform_rule(square, 128))
        for k in (8, 16, 25):
            expect = kappa * union_discs_area(csr_pattern.points, R_GRID[k],
                                              square, pix)
            assert got[k] == pytest.approx(expect, rel=0.02)

    def test_monotone_in_r(self, csr_fit):
        for stat in (dg.VS(), dg.VG(), dg.GhatLocal("hanisch"),
                     dg.KhatLocal("translation")):
            c = compensator(stat, csr_fit, r_grid=R_GRID)
            assert (np.diff(c) >= -1e-10).all(), stat.name

    def test_isotropic_khat_rejected(self):
        with pytest.raises(ValueError, match="isotropic"):
            dg.KhatLocal("isotropic")

    def test_non_decomposable_rejected(self, csr_fit):
        with pytest.raises(ValueError, match="decomposition"):
            compensator(dg.VA(), csr_fit, r_grid=R_GRID)


class TestResidual:
    def test_empty_pattern_zero_model(self, square, dead_model):
        p = PointPattern(np.empty((0, 2)), square)
        res = residual(dg.VS(), dead_model, p, R_GRID)
        assert np.allclose(res, 0.0)

    def test_csr_interior_identity(self, rng, square):
        pts = rng.uniform(0.3, 0.7, (45, 2))  # inside W eroded by r_max
        p = PointPattern(pts, square)
        fm = fit_mple(p, GibbsModel(FirstOrder()))
        res = residual(dg.VS(), fm, r_grid=R_GRID)
        n = p.n
        kraw = k_hat(p, R_GRID, "raw")
        ident = (n * (n - 1) * kraw - n * n * np.pi * R_GRID ** 2) / (2 * square.area)
        assert np.max(np.abs(res - ident)) < 1e-9

    def test_true_form_strauss_zero_at_range(self, square):
        model = GibbsModel(FirstOrder.constant(np.log(100.0)),
                           Strauss(0.05, np.log(0.5)))
        p = sample_gibbs(model, square, McmcConfig(100_000, seed=4))
        fm = fit_mple(p, GibbsModel(FirstOrder(), Strauss(0.05)))
        r = np.array([0.0, 0.02, 0.05, 0.08])
        res = residual(dg.VS(), fm, r_grid=r)
        # the pseudo-likelihood equations pin the residual at the fitted range
        assert abs(res[2]) < 1e-6 * max(1.0, p.n)


class TestPseudoSum:
    def test_khat_identically_zero(self, rng, square):
        p = PointPattern(rng.uniform(0, 1, (70, 2)), square)
        ps = pseudo_sum(dg.KhatLocal("translation"), p, R_GRID)
        assert np.max(np.abs(ps)) < 1e-12

    def test_va_single_point_disc(self, square):
        p = PointPattern([[0.5, 0.5]], square)
        pix = PixelGrid(square, 256)
        ps = pseudo_sum(dg.VA(), p, R_GRID, pixel_grid=pix)
        r = R_GRID[-1]
        assert ps[-1] == pytest.approx(np.pi * r * r / square.area,
                                       abs=4 * r * pix.dx)

    def test_single_coverage_law_quick(self, square):
        # mean pseudo-sum of VA ~ rho pi r^2 exp(-rho pi r^2) under CSR
        r = np.array([0.0, 0.0564])  # nu = 1
        pix = PixelGrid(square, 128)
        vals = [pseudo_sum(dg.VA(), sample_poisson(100.0, square, 80_000 + s),
                           r, pixel_grid=PixelGrid(square, 128))[1]
                for s in range(120)]
        nu = 100 * np.pi * r[1] ** 2
        expect = nu * np.exp(-nu)
        assert abs(np.mean(vals) - expect) / expect < 0.05

    def test_fhat_pseudo_sum_matches_leave_one_out(self, rng, square):
        p = PointPattern(rng.uniform(0, 1, (10, 2)), square)
        pix = PixelGrid(square, 96)
        from ppdiag import f_hat
        for corr in ("raw", "border"):
            ps = pseudo_sum(dg.FhatIncrement(corr), p, R_GRID, pixel_grid=pix)
            full = f_hat(p, R_GRID, pix, corr)
            loo = np.array([f_hat(p.drop(i), R_GRID, pix, corr)
                            for i in range(p.n)])
            expect = p.n * full - loo.sum(axis=0)
            assert np.allclose(ps, expect, atol=1e-12, equal_nan=True)


class TestPseudoCompensator:
    def test_zero_intensity(self, dead_model, csr_pattern, square):
        pc = pseudo_compensator(dg.VG(), dead_model, csr_pattern, R_GRID)
        assert np.allclose(pc, 0.0, atol=1e-20)

    def test_pairwise_doubling(self, csr_fit):
        pc = pseudo_compensator(dg.VS(), csr_fit, r_grid=R_GRID)
        c = compensator(dg.VS(), csr_fit, r_grid=R_GRID)
        assert np.max(np.abs(pc - 2 * c)) < 1e-10

    def test_va_against_union_differencing_oracle(self, rng, square):
        p = PointPattern(rng.uniform(0, 1, (9, 2)), square)
        fm = fit_mple(p, GibbsModel(FirstOrder()))
        pix = PixelGrid(square, 256)
        rule = dg.uniform_rule(square, 16)
        r = np.array([0.0, 0.06, 0.12])
        got = pseudo_compensator(dg.VA(), fm, r_grid=r, nodes=rule,
                                 pixel_grid=pix)
        lam = fm.model.cond_intensity(rule.nodes, p)
        base = {rr: union_discs_area(p.points, rr, square, pix)
                for rr in r[1:]}
        for k, rr in enumerate(r):
            if rr == 0:
                continue
            deltas = np.array([
                union_discs_area(np.vstack([p.points, u]), rr, square, pix)
                - base[rr] for u in rule.nodes])
            expect = (rule.weights * lam * deltas).sum() / square.area
            assert got[k] == pytest.approx(expect, abs=1e-10)

    def test_khat_needs_three_points(self, square):
        p = PointPattern([[0.4, 0.5], [0.6, 0.5]], square)
        fm = fit_mple(p, GibbsModel(FirstOrder()))
        with pytest.raises(ValueError, match="more than 2"):
            pseudo_compensator(dg.KhatLocal("translation"), fm, r_grid=R_GRID)


class TestPseudoResidual:
    def test_pairwise_equals_twice_residual(self, csr_fit):
        pr = pseudo_residual(dg.VS(), csr_fit, r_grid=R_GRID)
        res = residual(dg.VS(), csr_fit, r_grid=R_GRID)
        assert np.max(np.abs(pr - 2 * res)) < 1e-10

    def test_triples_equal_six_residuals(self, csr_fit):
        pr = pseudo_residual(dg.VT(), csr_fit, r_grid=R_GRID)
        res = residual(dg.VT(), csr_fit, r_grid=R_GRID)
        assert np.max(np.abs(pr - 6 * res)) < 1e-10

    def test_vg_zero_mean_under_truth(self, square):
        model = GibbsModel(FirstOrder.constant(np.log(100.0)))
        rule = dg.uniform_rule(square, 80)
        r = np.array([0.0, 0.03, 0.0564, 0.09])
        vals = np.array([
            pseudo_residual(dg.VG(), model,
                            sample_poisson(100.0, square, 90_000 + s), r,
                            nodes=rule)
            for s in range(200)])
        mean = vals.mean(axis=0)[1:]
        se = vals.std(axis=0, ddof=1)[1:] / np.sqrt(len(vals))
        assert (np.abs(mean) < 3 * se).all()


class TestPoincareVariance:
    def test_vg_equals_compensator(self, csr_fit):
        pv = poincare_variance(dg.VG(), csr_fit, r_grid=R_GRID)
        c = compensator(dg.VG(), csr_fit, r_grid=R_GRID)
        assert np.max(np.abs(pv - c)) < 1e-10

    def test_zero_intensity(self, dead_model, csr_pattern):
        pv = poincare_variance(dg.VS(), dead_model, csr_pattern, R_GRID)
        assert np.allclose(pv, 0.0, atol=1e-20)

    def test_vs_csr_against_fine_grid_oracle(self, csr_fit, csr_pattern, square):
        kappa = csr_pattern.n / square.area
        r = np.array([0.0, 0.0564])
        got = poincare_variance(dg.VS(), csr_fit, r_grid=r,
                                nodes=dg.uniform_rule(square, 128))
        g = PixelGrid(square, 512)
        from scipy.spatial.distance import cdist
        d = cdist(g.centers(), csr_pattern.points)
        t = (d <= r[1]).sum(axis=1).astype(float)
        oracle = 0.25 * kappa * (t ** 2).sum() * g.cell_area
        assert got[1] == pytest.approx(oracle, rel=0.01)


class TestStandardized:
    def test_basic_values(self):
        out = standardized(np.array([0.0, 2.0]), np.array([1.0, 4.0]))
        assert np.allclose(out, [0.0, 1.0])

    def test_zero_variance_flagged(self):
        with pytest.warns(RuntimeWarning):
            out = standardized(np.array([0.0, 1.0]), np.array([0.0, 0.0]))
        assert np.isnan(out).all()

    def test_negative_variance_raises(self):
        with pytest.raises(ValueError):
            standardized(np.array([1.0]), np.array([-0.5]))


class TestSmooth:
    def test_constant_is_fixed_point(self):
        r = np.linspace(0, 1, 40)
        col = np.full(40, 2.5)
        assert np.allclose(smooth(col, r), 2.5)

    def test_zero_bandwidth_identity(self):
        r = np.linspace(0, 1, 20)
        col = np.sin(r)
        assert np.array_equal(smooth(col, r, bandwidth=0.0), col)

    def test_step_against_direct_oracle(self):
        r = np.linspace(0, 1, 30)
        col = (r > 0.5).astype(float)
        h = 0.1
        got = smooth(col, r, h)
        w = np.exp(-0.5 * ((r[:, None] - r[None, :]) / h) ** 2)
        expect = (w @ col) / w.sum(axis=1)
        assert np.allclose(got, expect)

    def test_nan_excluded(self):
        r = np.linspace(0, 1, 10)
        col = np.full(10, 3.0)
        col[0] = np.nan
        out = smooth(col, r, 0.2)
        assert np.allclose(out, 3.0)

    def test_all_nan(self):
        r = np.linspace(0, 1, 5)
        assert np.isnan(smooth(np.full(5, np.nan), r)).all()


class TestMCInnovationVariance:
    def test_deterministic_zero(self, square):
        model = GibbsModel(FirstOrder.constant(-60.0))  # empty patterns
        v = mc_innovation_variance(dg.VS(), model, square,
                                   np.array([0.0, 0.1]), n_sims=25, seed=1)
        assert np.allclose(v, 0.0)


class TestConditionalMode:
    def test_r_zero_matches_unconditional(self, csr_pattern):
        fm_u = fit_mple(csr_pattern, GibbsModel(FirstOrder()))
        fm_c = fit_mple(csr_pattern, GibbsModel(FirstOrder()),
                        mode="conditional")
        for stat in (dg.VS(), dg.VG(), dg.GhatLocal("hanisch"),
                     dg.KhatLocal("translation"), dg.GhatLocal("border"),
                     dg.KhatLocal("border")):
            a = residual(stat, fm_u, r_grid=R_GRID)
            b = residual(stat, fm_c, r_grid=R_GRID)
            assert np.allclose(a, b, equal_nan=True), stat.name

    def test_conditional_strauss_runs_and_is_finite(self, square):
        model = GibbsModel(FirstOrder.constant(np.log(100.0)),
                           Strauss(0.05, np.log(0.5)))
        p = sample_gibbs(model, square, McmcConfig(60_000, seed=9))
        fm = fit_mple(p, GibbsModel(FirstOrder(), Strauss(0.05)),
                      mode="conditional")
        r = np.linspace(0, 0.1, 11)
        for stat in (dg.VS(), dg.VG(), dg.KhatLocal("translation"),
                     dg.GhatLocal("hanisch")):
            res = residual(stat, fm, r_grid=r)
            assert np.isfinite(res[1:]).all(), stat.name
        # restriction domain works as well
        for stat in (dg.KhatLocal("border"), dg.GhatLocal("hanisch")):
            ctx = dg._resolve(fm, None, None, None, None, domain="restriction")
            tot = stat.totals(ctx, r)
            assert np.isfinite(tot[1:]).any(), stat.name


class TestGhatIncrements:
    def test_data_increments_match_leave_one_out(self, rng, square):
        p = PointPattern(rng.uniform(0, 1, (16, 2)), square)
        from ppdiag import g_hat
        ctx = dg._Ctx(None, p, "unconditional", None, None, None, "full")
        inc = dg.GhatLocal("hanisch").incr_at_data(ctx, R_GRID)
        full = g_hat(p, R_GRID, "hanisch")
        for i in range(p.n):
            loo = g_hat(p.drop(i), R_GRID, "hanisch")
            assert np.allclose(inc[i], full - loo, atol=1e-12)

    def test_free_increments_match_addition(self, rng, square):
        p = PointPattern(rng.uniform(0, 1, (16, 2)), square)
        from ppdiag import g_hat
        ctx = dg._Ctx(None, p, "unconditional", None, None, None, "full")
        us = rng.uniform(0, 1, (5, 2))
        inc = dg.GhatLocal("hanisch").incr_at(ctx, us, R_GRID)
        full = g_hat(p, R_GRID, "hanisch")
        for k, u in enumerate(us):
            plus = g_hat(p.add(u), R_GRID, "hanisch")
            assert np.allclose(inc[k], plus - full, atol=1e-12)
