"""Synthesize multi-illuminant training samples from single-illuminant images.

A canonical image is relit with N illuminants drawn from a pool, each
channel-shuffled, laid out by a segmentation and blended at segment
boundaries with Gaussian-feathered weights. Seeds for each illuminant are
drawn from pixels lit purely by it.
"""

import math
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io
from .color import apply_illumination, as_image, normalize
from .errors import ConfigurationError, InsufficientRegionError, ShapeError
from .grayness import SeedSet, sample_seeds_from_gt

DEFAULT_FEATHER_SIGMA = 8.0
DEFAULT_SEEDS_PER_ILLUMINANT = 16
# own-segment weight above which a pixel counts as lit by one illuminant only
_PURE_WEIGHT = 1.0 - 1e-9

_PERMUTATIONS = (
    (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
)


def shuffle_illuminant(base, rng_seed):
    """Return ``base`` with its channels permuted; the permutation is drawn
    uniformly from the six possibilities using ``rng_seed``."""
    base = np.asarray(base, dtype=np.float64).reshape(3)
    perm = _PERMUTATIONS[np.random.default_rng(rng_seed).integers(6)]
    return base[list(perm)]


def validate_segments(segments, n=None):
    """Check that labels are ``0..n-1`` and each occurs at least once."""
    seg = np.asarray(segments)
    if seg.ndim != 2 or not np.issubdtype(seg.dtype, np.integer):
        raise ShapeError("segment map must be a 2-D integer array")
    present = np.unique(seg)
    n = len(present) if n is None else n
    if present.min() < 0 or present.max() >= n:
        raise ConfigurationError(f"segment labels must lie in [0, {n})")
    if len(present) != n:
        missing = sorted(set(range(n)) - set(present.tolist()))
        raise ConfigurationError(f"segment labels {missing} have no pixels")
    return seg.astype(np.int64)


def voronoi_segments(height, width, n, rng_seed=0):
    """Synthetic segmentation: nearest-site partition over ``n`` random sites."""
    if n < 1 or n > height * width:
        raise ConfigurationError("need 1 <= n <= number of pixels")
    rng = np.random.default_rng(rng_seed)
    sites = rng.choice(height * width, size=n, replace=False)
    sr, sc = np.divmod(sites, width)
    rr, cc = np.mgrid[0:height, 0:width]
    d = (rr[..., None] - sr) ** 2 + (cc[..., None] - sc) ** 2
    return np.argmin(d, axis=-1).astype(np.int64)


def mixture_weights(segments, n, feather_sigma=DEFAULT_FEATHER_SIGMA):
    """Per-pixel convex weights ``(H, W, n)`` from feathered segment indicators."""
    seg = np.asarray(segments)
    onehot = (seg[..., None] == np.arange(n)).astype(np.float64)
    if feather_sigma <= 0:
        return onehot
    blurred = np.stack(
        [ndimage.gaussian_filter(onehot[..., i], feather_sigma, mode="reflect") for i in range(n)],
        axis=-1,
    )
    blurred = np.clip(blurred, 0.0, None)
    return blurred / blurred.sum(axis=-1, keepdims=True)


def build_illumination_map(segments, colors, feather_sigma=DEFAULT_FEATHER_SIGMA):
    """Lay illuminant colors out over a segmentation.

    Returns ``(illum_map, weights)``. ``feather_sigma=0`` gives hard
    boundaries; otherwise each segment indicator is Gaussian-blurred and the
    stack renormalized to a partition of unity.
    """
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    seg = validate_segments(segments, len(colors))
    weights = mixture_weights(seg, len(colors), feather_sigma)
    return np.einsum("hwn,nc->hwc", weights, colors), weights


@dataclass
class AugmentedSample:
    biased: np.ndarray
    corrected: np.ndarray
    illum_map: np.ndarray
    illuminant_colors: np.ndarray
    seeds: SeedSet
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.illuminant_colors)

    @property
    def seed_masks(self):
        return self.seeds.masks()

    def artifacts(self):
        """The 2N+2 training artifacts, keyed by their output file names."""
        out = {}
        for i, c in enumerate(self.illuminant_colors):
            out[f"illum_{i}.json"] = c
        for i in range(self.n):
            out[f"seedmask_{i}.png"] = self.seeds.mask(i)
        out["biased"] = self.biased
        out["corrected"] = self.corrected
        return out


def augment(corrected, segments, pool, n, k=DEFAULT_SEEDS_PER_ILLUMINANT, rng_seed=0,
            feather_sigma=DEFAULT_FEATHER_SIGMA, source_id="", pool_ids=None):
    """Relight a canonical image with ``n`` shuffled pool illuminants.

    ``pool`` is a sequence of RGB triples (normalized on use). Draws happen
    without replacement when the pool is large enough. Seeds are sampled
    from pixels whose own-segment weight is 1; where that core holds fewer
    than ``k`` pixels, from the ``k`` pixels the segment's light dominates most.
    """
    corrected = as_image(corrected, "corrected")
    seg = np.asarray(segments)
    if seg.shape != corrected.shape[:2]:
        raise ShapeError(f"segments {seg.shape} do not match image {corrected.shape[:2]}")
    if len(np.unique(seg)) != n:
        raise ConfigurationError(f"segment map has {len(np.unique(seg))} labels, expected n={n}")
    seg = validate_segments(seg, n)
    pool = normalize(np.asarray(pool, dtype=np.float64).reshape(-1, 3))
    if len(pool) == 0:
        raise ConfigurationError("illuminant pool is empty")

    rng = np.random.default_rng(rng_seed)
    drawn = rng.choice(len(pool), size=n, replace=len(pool) < n)
    shuffle_seeds = rng.integers(0, 2**63 - 1, size=n)
    seed_rng = int(rng.integers(0, 2**63 - 1))
    colors = np.stack([shuffle_illuminant(pool[j], int(s)) for j, s in zip(drawn, shuffle_seeds)])

    illum_map, weights = build_illumination_map(seg, colors, feather_sigma)
    biased = apply_illumination(corrected, illum_map)

    own = np.take_along_axis(weights, seg[..., None], axis=-1)[..., 0]
    sampling = np.full_like(seg, -1)
    pure_core = True
    for i in range(n):
        w_i = own[seg == i]
        if len(w_i) < k:
            raise InsufficientRegionError(f"segment {i} has {len(w_i)} pixels, fewer than k={k}")
        # the purest pixels available: the pure core, or the k most dominated
        cut = _PURE_WEIGHT
        if np.count_nonzero(w_i >= cut) < k:
            cut = np.partition(w_i, len(w_i) - k)[len(w_i) - k]
            pure_core = False
        sampling[(seg == i) & (own >= cut)] = i
    seeds = sample_seeds_from_gt(illum_map, sampling, k, seed_rng, colors=colors)
    seed_weight = min(float(own[pts[:, 0], pts[:, 1]].min()) for pts in seeds.points)

    ids = [pool_ids[j] for j in drawn] if pool_ids is not None else [int(j) for j in drawn]
    provenance = {
        "source_id": source_id,
        "rng_seed": rng_seed,
        "pool_ids": ids,
        "n": n,
        "k": k,
        "feather_sigma": feather_sigma,
        "seeds_from_pure_core": pure_core,
        "min_seed_weight": seed_weight,
    }
    return AugmentedSample(biased, corrected, illum_map, colors, seeds, weights, provenance)


def write_sample(sample, out_dir, fmt="png16", extra_meta=None):
    """Write a sample directory atomically (temp directory + rename).

    Layout: ``biased.<fmt>``, ``corrected.<fmt>``, ``illum.pfm``,
    ``illum_{i}.json``, ``seedmask_{i}.png``, ``seeds.json``, ``meta.json``.
    """
    if fmt not in ("png16", "pfm"):
        raise ConfigurationError(f"unknown image format {fmt!r}")
    out_dir = Path(out_dir)
    tmp = out_dir.with_name(f".{out_dir.name}.tmp{os.getpid()}")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    for name in ("biased", "corrected"):
        img = getattr(sample, name)
        if fmt == "png16":
            io.write_png16(tmp / f"{name}.png16", img)
        else:
            io.write_pfm(tmp / f"{name}.pfm", img)
    io.write_pfm(tmp / "illum.pfm", sample.illum_map)
    for i, c in enumerate(sample.illuminant_colors):
        io.write_json(tmp / f"illum_{i}.json", {"index": i, "rgb": c.tolist()})
    sample.seeds.write(tmp)
    artifacts = [f"illum_{i}.json" for i in range(sample.n)]
    artifacts += [f"seedmask_{i}.png" for i in range(sample.n)]
    artifacts += [f"biased.{fmt}", f"corrected.{fmt}"]
    meta = dict(sample.provenance, format=fmt, artifacts=artifacts)
    meta.update(extra_meta or {})
    io.write_json(tmp / "meta.json", meta)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    os.replace(tmp, out_dir)
    return out_dir


def read_sample(sample_dir):
    """Load a sample directory written by :func:`write_sample`.

    Returns a dict with ``biased``, ``corrected``, ``illum_map``, ``seeds``,
    ``colors`` and ``meta``.
    """
    d = Path(sample_dir)
    meta = io.read_json(d / "meta.json")
    fmt = meta.get("format", "png16")
    seeds = SeedSet.read(d)
    colors = np.array([io.read_json(d / f"illum_{i}.json")["rgb"] for i in range(seeds.n_illuminants)])
    return {
        "biased": io.read_image(d / f"biased.{fmt}"),
        "corrected": io.read_image(d / f"corrected.{fmt}"),
        "illum_map": io.read_pfm(d / "illum.pfm"),
        "seeds": seeds,
        "colors": colors,
        "meta": meta,
    }


def split_dataset(ids, train_fraction=0.8, rng_seed=0):
    """Random disjoint train/test split with ``floor(f * n)`` training ids.

    Both lists keep the input order.
    """
    ids = list(ids)
    if not ids:
        raise ValueError("cannot split an empty id list")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    n_train = math.floor(train_fraction * len(ids) + 1e-9)
    perm = np.random.default_rng(rng_seed).permutation(len(ids))
    chosen = set(perm[:n_train].tolist())
    train = [x for i, x in enumerate(ids) if i in chosen]
    test = [x for i, x in enumerate(ids) if i not in chosen]
    return train, test


def load_pool(path):
    """Read an illuminant pool: a JSON list of RGB triples, or of objects
    with ``id`` and ``rgb`` keys. Returns ``(colors, ids)``."""
    raw = io.read_json(path)
    if not isinstance(raw, list) or not raw:
        raise ConfigurationError(f"{path}: pool must be a non-empty JSON list")
    colors, ids = [], []
    for i, item in enumerate(raw):
        if isinstance(item, dict):
            colors.append(item["rgb"])
            ids.append(item.get("id", i))
        else:
            colors.append(item)
            ids.append(i)
    return normalize(np.asarray(colors, dtype=np.float64).reshape(-1, 3)), ids


def illuminants_from_gt_map(gt_map, segments):
    """Per-segment median color of a ground-truth illumination map, normalized.

    Useful for building a pool from multi-illuminant ground truth.
    """
    gt = np.asarray(gt_map, dtype=np.float64)
    seg = np.asarray(segments)
    labels = np.unique(seg[seg >= 0])
    return normalize(np.stack([np.median(gt[seg == lab], axis=0) for lab in labels]))
