"""The Grey-World family: one Minkowski/derivative formula, six presets.

Run: python3 demos/03_classical_estimators.py
"""

import numpy as np
from scipy import ndimage

import mixcc
from mixcc.estimators import PRESETS, estimate

rng = np.random.default_rng(2)

# smooth, mildly colored surfaces under a blue-ish light
base = rng.uniform(0.1, 0.6, (96, 96, 3))
white = np.stack([ndimage.gaussian_filter(base[..., c], 2) for c in range(3)], axis=-1)
light = mixcc.normalize([0.45, 0.6, 0.9])
img = mixcc.apply_illumination(white, light)

print(f"{'estimator':20s} {'p':>5s} {'order':>5s} {'sigma':>5s}  error")
for name, cfg in PRESETS.items():
    est = estimate(name, img)
    err = mixcc.angular_error(est, light)
    print(f"{name:20s} {cfg.minkowski_p:5.0f} {cfg.derivative_order:5d} "
          f"{cfg.smoothing_sigma:5.1f}  {err:5.2f} deg")

print(f"{'doing-nothing':20s} {'':17s}  {mixcc.angular_error(estimate('doing-nothing', img), light):5.2f} deg")

# clipped pixels are left out: burn a highlight into a copy
hot = img.copy()
hot[:10, :10] = 1.0
print("white-patch with a clipped highlight:",
      round(mixcc.angular_error(mixcc.white_patch(hot), light), 2), "deg (unchanged)")

# custom members of the family
cfg = mixcc.EstimatorConfig(minkowski_p=6, derivative_order=1, smoothing_sigma=2)
print("p=6, first order, sigma=2:", round(mixcc.angular_error(mixcc.grey_world_family(img, cfg), light), 2), "deg")
