"""Probability maps over N lights: reconstruct, invert, diffuse and score.

Run: python3 demos/05_probability_maps.py
"""

import tempfile
from pathlib import Path

import numpy as np

import mixcc
from mixcc.grayness import gray_index_seeds

rng = np.random.default_rng(4)
h, w = 64, 96
lights = mixcc.normalize(np.array([[0.9, 0.6, 0.3], [0.4, 0.6, 0.9]]))

# two lit regions meeting in a soft seam
labels = (np.arange(w)[None, :] >= w // 2) * np.ones((h, 1), dtype=np.int64)
illum, p_true = mixcc.build_illumination_map(labels, lights, feather_sigma=3)

# the oracle inverts the reconstruction exactly when the map is a convex mix
p, resid = mixcc.oracle_probabilities(illum, lights)
print("oracle max weight error:", np.abs(p - p_true).max(), "max residual:", resid.max())

# a scene under that light, with a gray card on each side for seeding
white = rng.uniform(0.2, 0.8, (h, w, 1)) * (1 + 0.1 * rng.uniform(-1, 1, (h, w, 3)))
for cx in (w // 4, 3 * w // 4):
    white[24:40, cx - 8:cx + 8] = white[24:40, cx - 8:cx + 8].mean(-1, keepdims=True)
biased = mixcc.apply_illumination(white, illum)

seeds = gray_index_seeds(biased, 2, k=16)
p_hat = mixcc.seed_diffusion_estimate(biased, seeds, sigma_spatial=0.1 * np.hypot(h, w))
pred = mixcc.reconstruct_illumination(p_hat, seeds)
err = mixcc.map_angular_error(illum, pred)
noop = mixcc.map_angular_error(illum, mixcc.doing_nothing(biased))
print(f"seed diffusion: {err.mean:.2f} deg, doing nothing: {noop.mean:.2f} deg")

# the supervised loss terms; the reference seeds sit away from the seam
core = np.where(np.abs(np.arange(w) - w / 2 + 0.5)[None, :] > 12, labels, -1)
gt_seeds = mixcc.sample_seeds_from_gt(illum, core, 8, colors=lights)
# loss terms reconstruct with the reference colors, so put the estimated
# channels in reference order first
order = [int(np.argmin([mixcc.angular_error(c, x) for c in seeds.colors])) for x in lights]
for name, prob in (("oracle", p), ("diffused", p_hat[..., order]), ("uniform", np.full((h, w, 2), 0.5))):
    rep = mixcc.total_loss(illum, prob, biased, white, gt_seeds)
    print(f"{name:9s} illum {rep.illum:.4f}  rgb {rep.rgb:.4f}  masks {rep.masks:.4f}  "
          f"total {rep.total_supervised:7.3f}  (adversarial term {rep.gan})")

# .pmap files carry maps to and from external generators
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "scene.pmap"
    mixcc.export_probability_map(path, p_hat)
    back = mixcc.import_probability_map(path)
    print(f"{path.stat().st_size} bytes on disk, float32 round-trip error {np.abs(back - p_hat).max():.1e}")
