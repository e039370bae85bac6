import numpy as np
import pytest

from ppdiag import (CovariateField, FirstOrder, GaussianKernel, GibbsModel,
                    PixelGrid, PointPattern, UniformDiscKernel, cox_score_test,
                    fit_mple, sample_poisson, smoothed_residual_field,
                    threshold_profile, unit_square)


@pytest.fixture()
def z_x():
    return CovariateField(fn=lambda x, y: x, name="x")


class TestCoxScoreTest:
    def test_linear_covariate_formula(self, square, z_x):
        p = PointPattern([[0.2, 0.5], [0.7, 0.3], [0.9, 0.9]], square)
        T, S = cox_score_test(p, z_x)
        n = 3
        expect = (S - n * 0.5) / np.sqrt(n / 3.0)
        assert S == pytest.approx(0.2 + 0.7 + 0.9)
        assert T == pytest.approx(expect, rel=1e-3)

    def test_mirror_antisymmetry(self, square, rng):
        pts = rng.uniform(0, 1, (40, 2))
        z = CovariateField(fn=lambda x, y: x - 0.5)
        p1 = PointPattern(pts, square)
        p2 = PointPattern(np.column_stack([1 - pts[:, 0], pts[:, 1]]), square)
        t1, _ = cox_score_test(p1, z)
        t2, _ = cox_score_test(p2, z)
        assert t1 == pytest.approx(-t2, abs=1e-10)

    def test_degenerate_covariate(self, square, random_pattern):
        z = CovariateField(fn=lambda x, y: np.zeros_like(x))
        with pytest.raises(ValueError, match="degenerate"):
            cox_score_test(random_pattern, z)

    def test_csr_calibration_centered_covariate(self, square):
        # substituting the estimated intensity absorbs the covariate mean,
        # so the statistic is N(0, 1) under the null only once Z is centered
        z = CovariateField(fn=lambda x, y: x - 0.5)
        hits = 0
        n_sims = 1000
        for s in range(n_sims):
            p = sample_poisson(100.0, square, seed=220_000 + s)
            T, _ = cox_score_test(p, z, grid_n=128)
            hits += abs(T) > 1.96
        rate = hits / n_sims
        assert 0.03 < rate < 0.07, rate

    def test_uncentered_covariate_shrinks_variance(self, square, z_x):
        # documented behavior of the plug-in normalization: for Z = x the
        # null variance is 1 - (int Z)^2 / (|W| int Z^2) = 1/4
        Ts = []
        for s in range(400):
            p = sample_poisson(100.0, square, seed=320_000 + s)
            T, _ = cox_score_test(p, z_x, grid_n=128)
            Ts.append(T)
        assert np.var(Ts, ddof=1) == pytest.approx(0.25, abs=0.08)


class TestThresholdProfile:
    def test_extreme_levels(self, square, z_x, random_pattern):
        fm = fit_mple(random_pattern, GibbsModel(FirstOrder()))
        z = np.array([-0.5, 1.5])
        t = threshold_profile(random_pattern, fm, z_x, z)
        assert t["count"][0] == 0.0
        assert t["lurking"][0] == pytest.approx(0.0)
        assert t["count"][1] == random_pattern.n
        # at z beyond max Z the lurking residual is the total residual ~ 0
        assert abs(t["lurking"][1]) < 1e-6

    def test_T_undefined_when_levelset_empty(self, square, z_x, random_pattern):
        t = threshold_profile(random_pattern, None, z_x, np.array([-1.0, 0.5]))
        assert np.isnan(t["T"][0])
        assert np.isfinite(t["T"][1])

    def test_fixed_level_moments(self, square, z_x):
        # small level set keeps the plug-in variance deflation negligible:
        # Var T = 1 - A/|W|; here kappa A = 50 with A = 0.05.  The grid is
        # chosen so pixel counting measures this level set exactly.
        z = np.array([0.05])
        vals = []
        for s in range(600):
            p = sample_poisson(1000.0, square, seed=230_000 + s)
            t = threshold_profile(p, None, z_x, z, grid_n=1000)
            vals.append(t["T"][0])
        vals = np.asarray(vals)
        assert abs(vals.mean()) < 0.12
        assert abs(vals.var(ddof=1) - 1.0) < 0.15

    def test_reindexing_under_constant_shift(self, square, random_pattern):
        z1 = CovariateField(fn=lambda x, y: x)
        z2 = CovariateField(fn=lambda x, y: x + 5.0)
        grid = np.linspace(0.1, 0.9, 9)
        t1 = threshold_profile(random_pattern, None, z1, grid)
        t2 = threshold_profile(random_pattern, None, z2, grid + 5.0)
        assert np.allclose(t1["T"], t2["T"], equal_nan=True)


class TestSmoothedResidualField:
    def test_empty_pattern_zero_field(self, square):
        p = PointPattern(np.empty((0, 2)), square)
        rf = smoothed_residual_field(p, None, GaussianKernel(0.1),
                                     PixelGrid(square, 16))
        assert np.allclose(rf.field, 0.0)

    def test_single_point_peak(self, square):
        p = PointPattern([[0.5, 0.5]], square)
        sigma = 0.05
        rf = smoothed_residual_field(p, None, GaussianKernel(sigma),
                                     PixelGrid(square, 101))
        peak = rf.field.max()
        expect = 1.0 / (2 * np.pi * sigma ** 2) - 1.0
        assert peak == pytest.approx(expect, rel=0.02)

    def test_integral_bookkeeping(self, square, rng):
        p = PointPattern(rng.uniform(0, 1, (80, 2)), square)
        g = PixelGrid(square, 64)
        rf = smoothed_residual_field(p, None, GaussianKernel(0.05), g)
        total = rf.field.sum() * g.cell_area
        # mass lost only to edge truncation of the kernels
        assert abs(total) <= 0.02 * p.n

    def test_disc_kernel_mass(self, square):
        k = UniformDiscKernel(0.1)
        v = np.array([[0.5, 0.5], [0.0, 0.0]])
        m1 = k.window_mass(v, square)
        assert m1[0] == pytest.approx(1.0)
        assert m1[1] == pytest.approx(0.25)

    def test_gaussian_masses_against_quadrature(self, square):
        k = GaussianKernel(0.07)
        v = np.array([[0.15, 0.2]])
        g = PixelGrid(square, 512)
        xx, yy = np.meshgrid(g.xs, g.ys)
        vals = k(xx - v[0, 0], yy - v[0, 1])
        assert k.window_mass(v, square)[0] == pytest.approx(
            vals.sum() * g.cell_area, rel=1e-4)
        assert k.window_mass2(v, square)[0] == pytest.approx(
            (vals ** 2).sum() * g.cell_area, rel=1e-4)

    def test_fitted_model_branch(self, square, rng):
        p = PointPattern(rng.uniform(0, 1, (60, 2)), square)
        fm = fit_mple(p, GibbsModel(FirstOrder()))
        rf0 = smoothed_residual_field(p, None, GaussianKernel(0.08),
                                      PixelGrid(square, 24))
        rf1 = smoothed_residual_field(p, fm, GaussianKernel(0.08),
                                      PixelGrid(square, 24))
        # a homogeneous fit reproduces the closed-form null up to quadrature
        assert np.allclose(rf0.field, rf1.field, atol=0.02 * p.n)
        assert np.isfinite(rf1.max_t)


class TestRasterCovariate:
    def test_bilinear_matches_analytic(self, square, rng):
        g = PixelGrid(square, 128)
        xx, yy = np.meshgrid(g.xs, g.ys)
        ras = (xx + 2 * yy)
        z = CovariateField(raster=ras, window=square)
        pts = rng.uniform(0.05, 0.95, (50, 2))
        got = z.at_points(pts)
        expect = pts[:, 0] + 2 * pts[:, 1]
        assert np.max(np.abs(got - expect)) < 1e-6
