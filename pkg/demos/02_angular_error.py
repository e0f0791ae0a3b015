"""Angular error and the six numbers every color-constancy table reports.

Run: python3 demos/02_angular_error.py
"""

import numpy as np

import mixcc
from mixcc.metrics import make_report

print("red vs green:", mixcc.angular_error([1, 0, 0], [0, 1, 0]), "deg")
print("white vs yellow:", round(mixcc.angular_error([1, 1, 1], [1, 1, 0]), 4), "deg")

# magnitude does not matter, only direction
print("scaled copy:", mixcc.angular_error([0.2, 0.4, 0.6], [2, 4, 6]), "deg")

# per-pixel errors between two illumination maps
h, w = 32, 32
gt = np.zeros((h, w, 3))
gt[:, : w // 2] = [0.9, 0.6, 0.3]
gt[:, w // 2:] = [0.4, 0.6, 0.9]
pred = np.broadcast_to([1.0, 1.0, 1.0], gt.shape)
res = mixcc.map_angular_error(gt, pred)
print(f"uniform gray prediction: mean {res.mean:.2f}, median {res.median:.2f} deg")

# dataset-level summary over per-image errors
errors = np.random.default_rng(1).gamma(2.0, 2.0, 200)
stats = mixcc.summarize(errors)
for field in ("mean", "median", "trimean", "best25", "worst25", "max"):
    print(f"  {field:8s} {getattr(stats, field):6.2f}")

report = make_report([("demo", "single-illuminant", stats)], {"note": "random errors"})
print("report schema version:", report["schema"])
