"""Find gray pixels, cluster them into illuminants, and keep them as seeds.

Run: python3 demos/04_gray_pixel_seeds.py
"""

import numpy as np

import mixcc
from mixcc.grayness import gray_index_seeds

rng = np.random.default_rng(3)
h, w = 96, 128

# colorful surfaces with two gray cards, lit by two lights left and right
white = rng.uniform(0.2, 0.8, (h, w, 1)) * (1 + 0.15 * rng.uniform(-1, 1, (h, w, 3)))
for cx in (w // 4, 3 * w // 4):
    card = rng.uniform(0.2, 0.8, (16, 16, 1))
    white[h // 2 - 8:h // 2 + 8, cx - 8:cx + 8] = card
left, right = mixcc.normalize([0.9, 0.6, 0.35]), mixcc.normalize([0.45, 0.6, 0.85])
illum = np.where(np.arange(w)[None, :, None] < w // 2, left, right) * np.ones((h, 1, 1))
img = mixcc.apply_illumination(white, illum)

# low score = locally achromatic; exposure does not change it
g = mixcc.grayness_map(img)
print("median score on the left card:", np.median(g[h // 2 - 6:h // 2 + 6, w // 4 - 6:w // 4 + 6]))
print("median score elsewhere:", np.median(g))
print("unchanged by exposure:", np.allclose(mixcc.grayness_map(4 * img), g, atol=1e-9))

# the grayest 0.5% of pixels, clustered into two illuminants
seeds = gray_index_seeds(img, 2, k=16)
for i, c in enumerate(seeds.colors):
    errs = [mixcc.angular_error(c, x) for x in (left, right)]
    print(f"cluster {i}: {len(seeds.points[i])} seeds, {min(errs):.3f} deg from the "
          f"{'left' if np.argmin(errs) == 0 else 'right'} light")

# with ground truth, seeds can be sampled straight from the segments instead
labels = (np.arange(w)[None, :] >= w // 2) * np.ones((h, 1), dtype=int)
gt_seeds = mixcc.sample_seeds_from_gt(illum, labels, 8, rng_seed=0)
print("ground-truth seed masks:", gt_seeds.masks().shape, gt_seeds.masks().sum(axis=(1, 2)))
