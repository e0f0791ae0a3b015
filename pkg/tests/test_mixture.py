import logging
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import two_region_scene
from mixcc.color import apply_illumination, normalize
from mixcc.errors import FormatError, ShapeError
from mixcc.grayness import SeedSet, sample_seeds_from_gt
from mixcc.mixture import (
    check_probability_map,
    export_probability_map,
    export_probability_pngs,
    import_probability_map,
    l1_image_distance,
    mask_loss,
    oracle_probabilities,
    project_to_simplex,
    reconstruct_illumination,
    seed_diffusion_estimate,
    total_loss,
)


def one_pixel_seeds(colors, shape=(4, 4)):
    pts = [[[0, i]] for i in range(len(colors))]
    return SeedSet(colors, pts, shape)


class TestReconstruct:
    def test_one_hot(self):
        colors = np.array([[0.1, 0.8, 0.1], [0.8, 0.1, 0.1]])
        p = np.zeros((3, 4, 2))
        p[..., 1] = 1
        out = reconstruct_illumination(p, colors)
        np.testing.assert_array_equal(out, np.broadcast_to([0.8, 0.1, 0.1], (3, 4, 3)))

    def test_half(self):
        out = reconstruct_illumination(np.full((1, 1, 2), 0.5), [[1, 0, 0], [0, 1, 0]])
        np.testing.assert_array_equal(out[0, 0], [0.5, 0.5, 0])

    def test_uniform_four(self, rng):
        colors = rng.uniform(0, 1, (4, 3))
        out = reconstruct_illumination(np.full((2, 2, 4), 0.25), colors)
        np.testing.assert_allclose(out, np.broadcast_to(colors.mean(0), (2, 2, 3)), atol=1e-15)

    def test_count_mismatch(self):
        with pytest.raises(ShapeError):
            reconstruct_illumination(np.full((2, 2, 3), 1 / 3), [[1, 0, 0], [0, 1, 0]])

    def test_seedset_shape_mismatch(self):
        seeds = one_pixel_seeds([[1, 0, 0], [0, 1, 0]])
        with pytest.raises(ShapeError):
            reconstruct_illumination(np.full((3, 3, 2), 0.5), seeds)

    @given(st.integers(1, 5), st.integers(0, 2**31))
    def test_convex_hull(self, n, seed):
        r = np.random.default_rng(seed)
        colors = r.uniform(0, 1, (n, 3))
        p = r.dirichlet(np.ones(n), size=(5, 6))
        out = reconstruct_illumination(p, colors)
        assert np.all(out >= colors.min(0) - 1e-12)
        assert np.all(out <= colors.max(0) + 1e-12)


class TestL1:
    def test_identical(self, rng):
        a = rng.uniform(size=(5, 5, 3))
        assert l1_image_distance(a, a) == 0

    def test_single_pixel(self):
        assert l1_image_distance([[[1, 0, 0]]], [[[0, 1, 0]]]) == 2

    def test_two_pixels(self):
        a = np.zeros((1, 2, 3))
        b = a.copy()
        b[0, 0] = 0.1
        assert l1_image_distance(a, b) == pytest.approx(0.15, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1_image_distance(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))

    def test_mask(self):
        a = np.zeros((1, 2, 3))
        b = a.copy()
        b[0, 0] = 1
        assert l1_image_distance(a, b, mask=[[False, True]]) == 0


class TestMaskLoss:
    def test_exact(self):
        seeds = SeedSet([[1, 0, 0], [0, 1, 0]], [[[0, 0], [0, 1]], [[1, 1]]], (2, 2))
        pred = np.zeros((2, 2, 3))
        pred[0, :] = seeds.colors[0]
        pred[1, 1] = seeds.colors[1]
        assert mask_loss(pred, seeds) == 0

    def test_single_wrong_pixel(self):
        seeds = SeedSet([[1, 0, 0]], [[[0, 0]]], (2, 2))
        assert mask_loss(np.zeros((2, 2, 3)), seeds) == 1

    def test_normalized_per_mask(self):
        one = SeedSet([[1, 0, 0]], [[[0, 0]]], (2, 2))
        four = SeedSet([[1, 0, 0]], [[[0, 0], [0, 1], [1, 0], [1, 1]]], (2, 2))
        pred = np.zeros((2, 2, 3))
        assert mask_loss(pred, one) == mask_loss(pred, four) == 1

    def test_more_correct_seeds_stay_zero(self):
        pred = np.broadcast_to([1.0, 0, 0], (2, 2, 3))
        for pts in ([[0, 0]], [[0, 0], [1, 1]]):
            assert mask_loss(pred, SeedSet([[1, 0, 0]], [pts], (2, 2))) == 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mask_loss(np.zeros((3, 3, 3)), SeedSet([[1, 0, 0]], [[[0, 0]]], (2, 2)))


def scene_with_seeds(seed=0, k=8):
    white, illum, a, b, labels = two_region_scene(h=32, w=32, seed=seed)
    seeds = sample_seeds_from_gt(illum, labels, k, rng_seed=seed)
    return white, illum, a, b, labels, seeds


class TestTotalLoss:
    def test_oracle_prediction_is_zero(self):
        white, illum, a, b, labels, seeds = scene_with_seeds()
        p, res = oracle_probabilities(illum, seeds)
        rep = total_loss(illum, p, apply_illumination(white, illum), white, seeds)
        assert rep.illum < 1e-9 and rep.rgb < 1e-9 and rep.masks < 1e-9
        assert rep.total_supervised < 1e-7
        assert rep.gan == "absent" and rep.lam == 100

    def test_lambda_linear(self):
        white, illum, a, b, labels, seeds = scene_with_seeds()
        p = np.full(illum.shape[:2] + (2,), 0.5)
        biased = apply_illumination(white, illum)
        r1 = total_loss(illum, p, biased, white, seeds, lam=1)
        r100 = total_loss(illum, p, biased, white, seeds)
        s = r1.illum + r1.rgb + r1.masks
        assert r100.total_supervised == pytest.approx(100 * s, rel=1e-12)
        assert r1.total_supervised == pytest.approx(s, rel=1e-12)

    def test_uniform_closed_form(self):
        white, illum, a, b, labels, seeds = scene_with_seeds()
        colors = seeds.colors
        avg = colors.mean(0)
        d = np.abs(colors[0] - colors[1]).sum()
        biased = apply_illumination(white, illum)
        rep = total_loss(illum, np.full(illum.shape[:2] + (2,), 0.5), biased, white, seeds)
        assert rep.illum == pytest.approx(d / 2, abs=1e-12)
        assert rep.masks == pytest.approx(d, abs=1e-12)
        # corrected = W * L / avg, so the error is W * |L / avg - 1| summed over channels
        rgb = np.mean(np.sum(white * np.abs(illum / avg - 1), axis=-1))
        assert rep.rgb == pytest.approx(rgb, abs=1e-12)

    def test_rejects_bad_lambda(self):
        white, illum, a, b, labels, seeds = scene_with_seeds()
        with pytest.raises(ValueError):
            total_loss(illum, np.full((32, 32, 2), 0.5), white, white, seeds, lam=0)

    def test_shape_error_propagates(self):
        white, illum, a, b, labels, seeds = scene_with_seeds()
        with pytest.raises(ShapeError):
            total_loss(illum, np.full((32, 32, 3), 1 / 3), white, white, seeds)


class TestProjection:
    @given(arrays(np.float64, (7, 4), elements=st.floats(-10, 10)))
    def test_on_simplex(self, v):
        p = project_to_simplex(v)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(1), 1, atol=1e-12)

    def test_fixed_points(self):
        np.testing.assert_allclose(project_to_simplex([[0.2, 0.8]]), [[0.2, 0.8]])
        np.testing.assert_allclose(project_to_simplex([[2.0, 0.0]]), [[1.0, 0.0]])


class TestOracle:
    colors = normalize(np.array([[1, .4, .2], [.2, .5, 1], [.4, 1, .3]]))

    def test_one_hot(self):
        gt = np.broadcast_to(self.colors[1], (2, 3, 3))
        p, res = oracle_probabilities(gt, self.colors)
        np.testing.assert_allclose(p, np.broadcast_to([0, 1, 0], (2, 3, 3)), atol=1e-12)
        assert res.max() < 1e-12

    def test_half_half(self):
        gt = np.broadcast_to(0.5 * self.colors[0] + 0.5 * self.colors[1], (1, 1, 3))
        p, _ = oracle_probabilities(gt, self.colors[:2])
        np.testing.assert_allclose(p[0, 0], [0.5, 0.5], atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force_two(self, seed):
        r = np.random.default_rng(seed)
        colors = r.uniform(0.05, 1, (2, 3))
        gt = r.uniform(0, 1, (4, 4, 3))
        p, res = oracle_probabilities(gt, colors)
        grid = np.linspace(0, 1, 10001)
        cand = grid[:, None] * colors[0] + (1 - grid[:, None]) * colors[1]
        for (r_, c_), target in np.ndenumerate(gt[..., 0]):
            err = np.linalg.norm(cand - gt[r_, c_], axis=1)
            best = grid[np.argmin(err)]
            assert abs(p[r_, c_, 0] - best) < 1e-3
            assert res[r_, c_] <= err.min() + 1e-12

    @given(st.integers(2, 6), st.integers(0, 2**31))
    def test_convex_combination_recovered(self, n, seed):
        r = np.random.default_rng(seed)
        colors = r.uniform(0.05, 1, (n, 3))
        truth = r.dirichlet(np.ones(n), size=(3, 3))
        gt = reconstruct_illumination(truth, colors)
        with pytest.warns(RuntimeWarning) if n > 4 else _nowarn():
            p, res = oracle_probabilities(gt, colors)
        check_probability_map(p, n, tol=1e-9)
        assert res.max() < 1e-6
        np.testing.assert_allclose(reconstruct_illumination(p, colors), gt, atol=1e-6)

    def test_projected_gradient_branch(self, rng):
        colors = rng.uniform(0.05, 1, (9, 3))
        gt = rng.uniform(0, 1, (3, 3, 3))
        with pytest.warns(RuntimeWarning):
            p, res = oracle_probabilities(gt, colors)
        check_probability_map(p, 9, tol=1e-9)
        # exact solve over the first 4 colors can never beat the full problem
        with pytest.warns(RuntimeWarning):
            _, res4 = oracle_probabilities(gt, colors[:8])
        assert np.all(res <= res4 + 1e-6)

    def test_dependent_colors_warn(self):
        colors = np.array([[1, 0, 0], [0.5, 0.5, 0], [0, 1, 0]])
        gt = np.broadcast_to([0.5, 0.5, 0], (1, 1, 3))
        with pytest.warns(RuntimeWarning):
            p, res = oracle_probabilities(gt, colors)
        assert res.max() < 1e-12
        # every (a, 1 - 2a, a) fits exactly; a = 1/3 has the smallest norm
        np.testing.assert_allclose(p[0, 0], [1 / 3] * 3, atol=1e-12)

    def test_mask(self):
        gt = np.broadcast_to(self.colors[0], (2, 2, 3))
        p, res = oracle_probabilities(gt, self.colors, mask=[[True, False], [True, True]])
        np.testing.assert_allclose(p[0, 1], [1 / 3] * 3)
        assert res[0, 1] == 0


class _nowarn:
    def __enter__(self):
        import warnings
        self._cm = warnings.catch_warnings()
        self._cm.__enter__()
        warnings.simplefilter("error", RuntimeWarning)

    def __exit__(self, *exc):
        return self._cm.__exit__(*exc)


class TestSeedDiffusion:
    def test_single_illuminant(self, rng):
        img = rng.uniform(0.1, 1, (10, 10, 3))
        seeds = SeedSet([[1, 1, 1]], [[[3, 3], [7, 2]]], (10, 10))
        p = seed_diffusion_estimate(img, seeds)
        np.testing.assert_array_equal(p, np.ones((10, 10, 1)))

    def test_two_regions(self):
        white, illum, a, b, labels = two_region_scene(h=48, w=48, separation_deg=20)
        biased = apply_illumination(white, illum)
        seeds = sample_seeds_from_gt(illum, labels, 6, rng_seed=1)
        p = seed_diffusion_estimate(biased, seeds, sigma_spatial=4.0)
        check_probability_map(p, 2)
        am = p.argmax(-1)
        for region in (0, 1):
            assert np.mean(am[labels == region] == region) > 0.95

    def test_seed_pixels_argmax(self, rng):
        img = rng.uniform(0.1, 1, (12, 12, 3))
        seeds = SeedSet(rng.uniform(0.1, 1, (3, 3)),
                        [[[0, 0], [5, 5]], [[0, 1], [11, 11]], [[6, 6]]], (12, 12))
        p = seed_diffusion_estimate(img, seeds)
        for i, pts in enumerate(seeds.points):
            assert np.all(p[pts[:, 0], pts[:, 1]].argmax(-1) == i)

    @given(st.integers(0, 2**31), st.floats(0.01, 1), st.floats(0.5, 50))
    def test_simplex_invariant(self, seed, sc, ss):
        r = np.random.default_rng(seed)
        img = r.uniform(0, 1, (8, 9, 3))
        seeds = SeedSet(r.uniform(0.1, 1, (2, 3)), [[[0, 0]], [[7, 8]]], (8, 9))
        p = seed_diffusion_estimate(img, seeds, sigma_chroma=sc, sigma_spatial=ss)
        assert np.all((p >= 0) & (p <= 1))
        assert np.max(np.abs(p.sum(-1) - 1)) <= 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            seed_diffusion_estimate(np.ones((3, 3, 3)), SeedSet([[1, 1, 1]], [[[0, 0]]], (2, 2)))


class TestPmap:
    def test_roundtrip(self, tmp_path, rng):
        p = rng.dirichlet(np.ones(3), size=(5, 7)).astype(np.float32)
        export_probability_map(tmp_path / "a.pmap", p)
        back = import_probability_map(tmp_path / "a.pmap")
        np.testing.assert_array_equal(back, p.astype(np.float64))

    def test_layout(self, tmp_path):
        p = np.zeros((2, 3, 2), np.float32)
        p[..., 0] = 1
        p[1, 2] = [0.25, 0.75]
        export_probability_map(tmp_path / "a.pmap", p)
        raw = (tmp_path / "a.pmap").read_bytes()
        assert struct.unpack("<4sIIII", raw[:20]) == (b"PMAP", 1, 3, 2, 2)
        assert len(raw) == 20 + 4 * 12
        # last pixel (row 1, col 2) is the final pair of floats
        assert struct.unpack("<2f", raw[-8:]) == (0.25, 0.75)

    def test_rejects_sum_1_5(self, tmp_path):
        p = np.full((2, 2, 2), 0.5, np.float32)
        p[1, 0] = [0.75, 0.75]
        export_probability_map(tmp_path / "a.pmap", p)
        with pytest.raises(FormatError) as exc:
            import_probability_map(tmp_path / "a.pmap")
        assert exc.value.pixel == (1, 0)

    @pytest.mark.parametrize("delta", [5e-4, -5e-4])
    def test_repairs_small_drift(self, tmp_path, caplog, delta):
        p = np.full((2, 2, 2), 0.5)
        p[0, 1, 0] += delta
        export_probability_map(tmp_path / "a.pmap", p)
        with caplog.at_level(logging.WARNING, logger="mixcc.mixture"):
            back = import_probability_map(tmp_path / "a.pmap")
        assert "repairing" in caplog.text
        np.testing.assert_allclose(back.sum(-1), 1, atol=1e-12)

    def test_bad_header(self, tmp_path):
        (tmp_path / "a.pmap").write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(FormatError):
            import_probability_map(tmp_path / "a.pmap")

    def test_truncated_payload(self, tmp_path):
        export_probability_map(tmp_path / "a.pmap", np.full((2, 2, 2), 0.5))
        data = (tmp_path / "a.pmap").read_bytes()
        (tmp_path / "a.pmap").write_bytes(data[:-4])
        with pytest.raises(FormatError):
            import_probability_map(tmp_path / "a.pmap")

    def test_pngs(self, tmp_path):
        import cv2
        p = np.zeros((3, 3, 2))
        p[..., 1] = 1
        paths = export_probability_pngs(str(tmp_path), p)
        assert len(paths) == 2
        img = cv2.imread(paths[1], cv2.IMREAD_UNCHANGED)
        assert img.dtype == np.uint16 and img.max() == 65535


def test_check_probability_map():
    with pytest.raises(ValueError):
        check_probability_map(np.full((1, 1, 2), 0.6))
    with pytest.raises(ShapeError):
        check_probability_map(np.full((1, 1, 2), 0.5), n=3)
