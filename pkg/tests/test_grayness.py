import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import textured_white, two_region_scene
from mixcc.color import apply_illumination, normalize
from mixcc.errors import DegenerateClusteringError, InsufficientRegionError, ShapeError
from mixcc.grayness import (
    SeedSet,
    chromaticity,
    cluster_gray_pixels,
    gray_index_seeds,
    grayness_map,
    sample_seeds_from_gt,
)
from mixcc.metrics import angular_error


class TestGraynessMap:
    def test_uniform_gray(self):
        img = apply_illumination(np.full((16, 16, 3), 0.4), [0.9, 0.6, 0.3])
        assert np.all(grayness_map(img) < 1e-6)

    def test_gray_ramp(self):
        ramp = np.linspace(0.05, 0.95, 32)[None, :, None] * np.ones((16, 1, 3))
        img = apply_illumination(ramp, [0.3, 0.5, 0.8])
        assert np.all(grayness_map(img) < 1e-6)

    def test_shaded_gray_texture(self, rng):
        shading = rng.uniform(0.05, 1, (20, 20, 1))
        img = apply_illumination(np.repeat(shading, 3, axis=2), [0.7, 0.5, 0.2])
        assert np.all(grayness_map(img) < 1e-6)

    def test_red_patch_scores_high(self, rng):
        h, w = 32, 64
        img = np.repeat(rng.uniform(0.2, 0.8, (h, w, 1)), 3, axis=2)
        red = np.stack([
            rng.uniform(0.7, 0.95, (h, 32)),
            rng.uniform(0.01, 0.06, (h, 32)),
            rng.uniform(0.01, 0.06, (h, 32)),
        ], axis=-1)
        img[:, 32:] = red
        img = apply_illumination(img, [0.6, 0.6, 0.5])
        g = grayness_map(img)
        gray_score = g[:, :30].max()
        red_score = np.median(g[:, 34:])
        assert red_score > 10 * max(gray_score, 1e-12)
        assert red_score > 0.1

    @given(st.floats(1e-3, 1e3))
    def test_exposure_invariant(self, k):
        img = np.random.default_rng(1).uniform(0.01, 1, (16, 16, 3))
        np.testing.assert_allclose(grayness_map(k * img), grayness_map(img), atol=1e-9, rtol=0)

    def test_zero_pixel_gets_max(self, rng):
        img = rng.uniform(0.1, 1, (8, 8, 3))
        img[2, 2, 1] = 0
        g = grayness_map(img)
        assert g[2, 2] == g.max()
        assert np.all(np.isfinite(g)) and np.all(g >= 0)

    def test_masked_pixel_gets_max(self, rng):
        img = rng.uniform(0.1, 1, (8, 8, 3))
        mask = np.ones((8, 8), bool)
        mask[5, 5] = False
        g = grayness_map(img, mask)
        assert g[5, 5] == g.max()


class TestClustering:
    def test_two_illuminants(self):
        white, illum, a, b, _ = two_region_scene(separation_deg=20)
        img = apply_illumination(white, illum)
        seeds = cluster_gray_pixels(img, grayness_map(img), 2)
        errs = sorted(min(angular_error(c, a), angular_error(c, b)) for c in seeds.colors)
        assert errs[-1] < 2.0
        # one cluster per illuminant
        assert {int(np.argmin([angular_error(c, a), angular_error(c, b)])) for c in seeds.colors} == {0, 1}
        assert not np.any(seeds.masks().sum(axis=0) > 1)

    def test_single_illuminant(self, rng):
        L = np.array([0.8, 0.6, 0.3])
        white = textured_white(64, 64, rng)
        white[10:26, 10:26] = np.repeat(rng.uniform(0.2, 0.8, (16, 16, 1)), 3, axis=2)
        img = apply_illumination(white, L)
        seeds = cluster_gray_pixels(img, grayness_map(img), 1)
        assert seeds.n_illuminants == 1
        assert angular_error(seeds.colors[0], L) < 1.0

    def test_m1_takes_all_candidates(self, rng):
        img = rng.uniform(0.1, 1, (40, 40, 3))
        seeds = cluster_gray_pixels(img, grayness_map(img), 1, percentile=1.0)
        assert len(seeds.points[0]) == 16  # ceil(1% of 1600)

    def test_permutation_stable(self):
        white, illum, *_ = two_region_scene(separation_deg=30)
        img = apply_illumination(white, illum)
        g = grayness_map(img)
        runs = [cluster_gray_pixels(img, g, 2, rng_seed=s) for s in (0, 1, 2, 3)]
        for r in runs[1:]:
            np.testing.assert_allclose(r.colors, runs[0].colors, atol=1e-12)

    def test_too_few_candidates(self):
        img = np.full((1, 2, 3), 0.5)
        with pytest.raises(DegenerateClusteringError):
            cluster_gray_pixels(img, grayness_map(img), 3)

    def test_identical_candidates(self):
        img = np.full((10, 10, 3), 0.5)
        with pytest.raises(DegenerateClusteringError):
            cluster_gray_pixels(img, grayness_map(img), 2, percentile=50)

    def test_shape_check(self):
        with pytest.raises(ShapeError):
            cluster_gray_pixels(np.ones((4, 4, 3)), np.zeros((3, 3)), 1)

    def test_gray_index_seeds_subsamples(self):
        white, illum, *_ = two_region_scene()
        seeds = gray_index_seeds(apply_illumination(white, illum), 2, k=5)
        assert [len(p) for p in seeds.points] == [5, 5]


class TestGtSampling:
    def quadrants(self, h=20, w=20):
        seg = np.zeros((h, w), dtype=np.int64)
        seg[:, w // 2:] = 1
        seg[h // 2:, :w // 2] = 2
        seg[h // 2:, w // 2:] = 3
        colors = normalize(np.array([[1, .5, .2], [.2, .5, 1], [.5, 1, .2], [.6, .6, .6]]))
        return seg, colors[seg], colors

    def test_contract(self):
        seg, gt, colors = self.quadrants()
        seeds = sample_seeds_from_gt(gt, seg, 10, rng_seed=4)
        assert seeds.n_illuminants == 4
        assert sum(len(p) for p in seeds.points) == 40
        for i, pts in enumerate(seeds.points):
            assert len(pts) == 10
            assert np.all(seg[pts[:, 0], pts[:, 1]] == i)
            assert seeds.mask(i).sum() == 10
        np.testing.assert_allclose(seeds.colors, colors, atol=1e-15)

    def test_deterministic(self):
        seg, gt, _ = self.quadrants()
        a = sample_seeds_from_gt(gt, seg, 7, rng_seed=9)
        b = sample_seeds_from_gt(gt, seg, 7, rng_seed=9)
        c = sample_seeds_from_gt(gt, seg, 7, rng_seed=10)
        assert all(np.array_equal(x, y) for x, y in zip(a.points, b.points))
        assert not all(np.array_equal(x, y) for x, y in zip(a.points, c.points))

    def test_exhaustive(self):
        seg, gt, _ = self.quadrants()
        seeds = sample_seeds_from_gt(gt, seg, 100)
        for i in range(4):
            np.testing.assert_array_equal(seeds.mask(i), seg == i)

    def test_insufficient(self):
        seg, gt, _ = self.quadrants()
        with pytest.raises(InsufficientRegionError):
            sample_seeds_from_gt(gt, seg, 101)

    def test_ignores_negative_labels(self):
        seg, gt, _ = self.quadrants()
        seg[0, :] = -1
        seeds = sample_seeds_from_gt(gt, seg, 90)
        assert not seeds.masks()[:, 0, :].any()


class TestSeedSet:
    def test_masks_match_points(self):
        s = SeedSet([[1, 0, 0], [0, 1, 0]], [[[0, 0], [1, 2]], [[2, 2]]], (3, 4))
        m = s.masks()
        assert m.shape == (2, 3, 4)
        assert set(zip(*np.nonzero(m[0]))) == {(0, 0), (1, 2)}
        assert set(zip(*np.nonzero(m[1]))) == {(2, 2)}

    def test_colors_normalized(self):
        s = SeedSet([[2, 0, 0]], [[[0, 0]]], (1, 1))
        np.testing.assert_array_equal(s.colors, [[1, 0, 0]])

    @pytest.mark.parametrize("points", [
        [[[0, 0]], [[0, 0]]],          # overlapping masks
        [[[0, 0]], []],                # empty illuminant
        [[[0, 0], [0, 0]], [[1, 1]]],  # duplicate point
        [[[0, 0]], [[5, 5]]],          # out of bounds
    ])
    def test_invalid(self, points):
        with pytest.raises(ValueError):
            SeedSet([[1, 0, 0], [0, 1, 0]], points, (2, 2))

    def test_roundtrip(self, tmp_path):
        s = SeedSet([[1, 2, 3], [3, 2, 1]], [[[0, 1]], [[1, 0], [1, 1]]], (2, 2), {"k": 2})
        s.write(tmp_path)
        back = SeedSet.read(tmp_path)
        np.testing.assert_array_equal(back.colors, s.colors)
        assert all(np.array_equal(a, b) for a, b in zip(back.points, s.points))
        assert (tmp_path / "seedmask_1.png").exists()
        assert back.meta == {"k": 2}


def test_chromaticity():
    np.testing.assert_allclose(chromaticity([[2, 1, 1], [0, 0, 0]]), [[0.5, 0.25], [0, 0]])
