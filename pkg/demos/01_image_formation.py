"""Relight a canonical image, undo the cast, and read back the illuminant.

Run: python3 demos/01_image_formation.py
"""

import numpy as np

import mixcc

rng = np.random.default_rng(0)

# a canonical ("white-balanced") image: random reflectances in linear RGB
white = rng.uniform(0.05, 1.0, (48, 64, 3))

# a warm light, applied per pixel as I = W * L
warm = np.array([0.9, 0.6, 0.3])
biased = mixcc.apply_illumination(white, warm)
print("mean pixel, canonical:", white.reshape(-1, 3).mean(0).round(3))
print("mean pixel, under warm light:", biased.reshape(-1, 3).mean(0).round(3))

# Von Kries correction divides the light back out
corrected = mixcc.von_kries_correct(biased, warm)
print("max round-trip error:", np.abs(corrected - white).max())

# the light implied by a biased/corrected pair is the per-channel median ratio
print("apparent illuminant:", mixcc.apparent_illumination(biased, corrected).round(4))
print("normalized warm light:", mixcc.normalize(warm).round(4))

# masked pixels are skipped and come back as zero
mask = np.ones(white.shape[:2], bool)
mask[:8, :8] = False
out = mixcc.von_kries_correct(biased, warm, mask=mask)
print("masked corner stays zero:", bool(np.all(out[:8, :8] == 0)))

# the sRGB transfer curve, for reading and displaying 8/16-bit files
print("sRGB 0.5 -> linear", mixcc.srgb_to_linear(0.5))
print("linear 0.214 -> sRGB", mixcc.linear_to_srgb(0.214041140482232))
