import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppdiag import (BucketGrid, PixelGrid, Window, coverage_count_field,
                    disc_window_area, erode, neighbors_within, unit_square,
                    union_discs_area)


def lens_area(d, r):
    """Intersection area of two radius-r discs at center distance d."""
    if d >= 2 * r:
        return 0.0
    return 2 * r * r * np.arccos(d / (2 * r)) - 0.5 * d * np.sqrt(4 * r * r - d * d)


class TestWindow:
    def test_area_and_sides(self):
        w = Window(0, 2, 1, 2)
        assert w.area == 2.0
        assert w.side_x == 2.0 and w.side_y == 1.0

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            Window(0, 0, 0, 1)
        with pytest.raises(ValueError):
            Window(0, 1, 2, 1)

    def test_contains_boundary(self):
        w = unit_square()
        assert w.contains([[0.0, 0.5], [1.0, 1.0], [0.5, 0.5]]).all()
        assert not w.contains([[1.0001, 0.5]])[0]


class TestErode:
    def test_basic(self):
        w = unit_square()
        assert erode(w, 0.1) == Window(0.1, 0.9, 0.1, 0.9)

    def test_zero_is_identity(self):
        w = unit_square()
        assert erode(w, 0.0) == w

    def test_collapse_is_empty(self):
        assert erode(unit_square(), 0.5) is None

    @given(a=st.floats(0, 0.2), b=st.floats(0, 0.2))
    @settings(max_examples=50, deadline=None)
    def test_composition(self, a, b):
        w = unit_square()
        two = erode(erode(w, a), b)
        one = erode(w, a + b)
        assert two is not None and one is not None
        assert np.allclose(
            [two.x_min, two.x_max, two.y_min, two.y_max],
            [one.x_min, one.x_max, one.y_min, one.y_max])


class TestDiscWindowArea:
    def test_interior_disc(self):
        w = unit_square()
        assert disc_window_area([0.5, 0.5], 0.1, w) == pytest.approx(np.pi * 0.01)

    def test_corner_quarter(self):
        w = unit_square()
        assert disc_window_area([0.0, 0.0], 0.1, w) == pytest.approx(np.pi * 0.01 / 4)

    def test_against_fine_pixel_oracle(self):
        w = unit_square()
        c, r = np.array([0.05, 0.5]), 0.1
        exact = disc_window_area(c, r, w)
        g = PixelGrid(w, 2048)
        xx, yy = np.meshgrid(g.xs, g.ys)
        oracle = float(((xx - c[0]) ** 2 + (yy - c[1]) ** 2 <= r * r).sum()) \
            * g.cell_area
        assert abs(exact - oracle) / oracle < 1e-4

    def test_disc_swallows_window(self):
        w = unit_square()
        assert disc_window_area([0.5, 0.5], 5.0, w) == pytest.approx(w.area)

    @given(x=st.floats(0.01, 0.99), y=st.floats(0.01, 0.99),
           r1=st.floats(0.01, 0.4), r2=st.floats(0.01, 0.4))
    @settings(max_examples=60, deadline=None)
    def test_monotone_and_bounded(self, x, y, r1, r2):
        w = unit_square()
        lo, hi = min(r1, r2), max(r1, r2)
        a_lo = disc_window_area([x, y], lo, w)
        a_hi = disc_window_area([x, y], hi, w)
        assert a_lo <= a_hi + 1e-12
        assert a_hi <= min(np.pi * hi * hi, w.area) + 1e-12


class TestUnionDiscs:
    # pixel-center counting carries O(r * cell) boundary error; the bounds
    # below scale with the circumference in cells
    def test_single_disc(self):
        w = unit_square()
        g = PixelGrid(w, 512)
        r = 0.1
        a = union_discs_area([[0.5, 0.5]], r, w, g)
        assert abs(a - np.pi * r * r) <= 4 * r * g.dx

    def test_two_disjoint(self):
        w = unit_square()
        g = PixelGrid(w, 512)
        r = 0.1
        a = union_discs_area([[0.25, 0.5], [0.75, 0.5]], r, w, g)
        assert abs(a - 2 * np.pi * r * r) <= 8 * r * g.dx

    def test_lens_overlap_oracle(self):
        w = unit_square()
        g = PixelGrid(w, 512)
        r = 0.1
        pts = [[0.45, 0.5], [0.55, 0.5]]  # distance r
        a = union_discs_area(pts, r, w, g)
        expect = 2 * np.pi * r * r - lens_area(r, r)
        assert abs(a - expect) <= 8 * r * g.dx

    def test_empty(self):
        w = unit_square()
        assert union_discs_area(np.empty((0, 2)), 0.1, w, PixelGrid(w, 64)) == 0.0

    def test_subadditive(self, rng):
        w = unit_square()
        g = PixelGrid(w, 256)
        pts = rng.uniform(0.1, 0.9, (15, 2))
        r = 0.07
        union = union_discs_area(pts, r, w, g)
        total = disc_window_area(pts, r, w).sum()
        assert union <= total + 4 * g.cell_area


class TestCoverage:
    def test_empty_pattern(self):
        g = PixelGrid(unit_square(), 32)
        assert (coverage_count_field(np.empty((0, 2)), 0.1, g) == 0).all()

    def test_single_point_disc_indicator(self):
        w = unit_square()
        g = PixelGrid(w, 64)
        f = coverage_count_field([[0.5, 0.5]], 0.2, g)
        xx, yy = np.meshgrid(g.xs, g.ys)
        expect = ((xx - 0.5) ** 2 + (yy - 0.5) ** 2 <= 0.04).astype(int)
        assert (f == expect).all()

    def test_brute_force(self, rng):
        w = unit_square()
        g = PixelGrid(w, 48)
        pts = rng.uniform(0, 1, (10, 2))
        f = coverage_count_field(pts, 0.15, g)
        xx, yy = np.meshgrid(g.xs, g.ys)
        expect = np.zeros_like(f)
        for x, y in pts:
            expect += ((xx - x) ** 2 + (yy - y) ** 2 <= 0.15 ** 2)
        assert (f == expect).all()


class TestNeighborsWithin:
    def test_boundary_tie_included(self):
        idx = neighbors_within([[0.5, 0.0]], [0.0, 0.0], 0.5)
        assert list(idx) == [0]

    def test_zero_radius(self):
        assert len(neighbors_within([[0.3, 0.3]], [0.0, 0.0], 0.0)) == 0

    def test_large_random_vs_scan(self, rng):
        pts = rng.uniform(0, 1, (1000, 2))
        u = np.array([0.4, 0.6])
        r = 0.09
        got = neighbors_within(pts, u, r)
        d2 = ((pts - u) ** 2).sum(axis=1)
        expect = np.nonzero(d2 <= r * r)[0]
        assert np.array_equal(got, expect)

    def test_bucket_grid_matches_scan_on_random_triples(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 200))
            pts = rng.uniform(0, 1, (n, 2))
            u = rng.uniform(0, 1, 2)
            r = float(rng.uniform(0.01, 0.3))
            got = BucketGrid(pts, r).query(u)
            d2 = ((pts - u) ** 2).sum(axis=1)
            assert np.array_equal(got, np.nonzero(d2 <= r * r)[0])


class TestPixelGrid:
    def test_centers_inside_and_areas_sum(self):
        w = Window(0, 2, 0, 1)
        g = PixelGrid(w, 7, 5)
        c = g.centers()
        assert w.contains(c).all()
        assert g.cell_area * g.n_pixels == pytest.approx(w.area)

    def test_two_nearest(self, rng):
        w = unit_square()
        g = PixelGrid(w, 16)
        pts = rng.uniform(0, 1, (6, 2))
        idx, d1, d2 = g.two_nearest(pts)
        c = g.centers()
        dall = np.sqrt(((c[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
        order = np.sort(dall, axis=1)
        assert np.allclose(d1.ravel(), order[:, 0])
        assert np.allclose(d2.ravel(), order[:, 1])
        assert (idx.ravel() == np.argmin(dall, axis=1)).all()
