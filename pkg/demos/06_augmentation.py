"""Turn one single-light image into a multi-light training sample.

Run: python3 demos/06_augmentation.py
"""

import tempfile
from pathlib import Path

import numpy as np

import mixcc
from mixcc.augment import read_sample, write_sample

rng = np.random.default_rng(5)
corrected = rng.uniform(0.05, 1.0, (96, 96, 3))

# a pool of measured lights; in practice read with mixcc.augment.load_pool
pool = mixcc.normalize(rng.uniform(0.2, 1.0, (20, 3)))

# any labelled segmentation works; here a synthetic 4-cell partition
segments = mixcc.voronoi_segments(96, 96, 4, rng_seed=1)
print("pixels per segment:", np.bincount(segments.ravel()))

# channel shuffling multiplies the variety of the pool by up to six
print("shuffles of (0.8, 0.6, 0.4):",
      sorted({tuple(mixcc.shuffle_illuminant([0.8, 0.6, 0.4], s).tolist()) for s in range(30)}))

sample = mixcc.augment(corrected, segments, pool, 4, k=10, rng_seed=42, feather_sigma=6)
print("artifacts:", list(sample.artifacts()))
print("weights sum to one:", np.abs(sample.weights.sum(-1) - 1).max())
print("I = W * L holds:", np.abs(mixcc.apply_illumination(sample.corrected, sample.illum_map)
                                 - sample.biased).max())

with tempfile.TemporaryDirectory() as d:
    out = write_sample(sample, Path(d) / "img0001", fmt="pfm")
    print("written:", sorted(p.name for p in out.iterdir()))
    back = read_sample(out)
    print("pool ids used:", back["meta"]["pool_ids"])

train, test = mixcc.split_dataset([f"img{i:04d}" for i in range(5000)], 0.8, rng_seed=0)
print("5000 images split into", len(train), "train and", len(test), "test")
