"""Gray-pixel scoring, gray-pixel clustering into illuminant groups, and
seed sets.

The grayness score of a pixel is the norm of the local log-chromatic
contrast::

    score = || ( Lap(log R - log G), Lap(log B - log G) ) ||_2

with ``Lap`` the 3x3 five-point Laplacian under reflect padding. Under the
diagonal model an achromatic surface gives ``log R - log G`` equal to the
log illuminant ratio, which is locally constant, so the Laplacian cancels
it regardless of the illuminant or of shading. A global exposure change
adds the same constant to every log channel and leaves the score
unchanged.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.cluster import KMeans

from .color import as_image, as_illumination, as_mask, normalize
from .errors import DegenerateClusteringError, FormatError, InsufficientRegionError, ShapeError
from . import io

# pixels darker than this in any channel have no reliable log value
_LOG_FLOOR = 1e-12


@dataclass
class SeedSet:
    """Seed points grouped by illuminant.

    ``colors`` is ``(N, 3)`` (normalized on construction); ``points[i]`` is a
    ``(K_i, 2)`` integer array of ``(row, col)`` coordinates for illuminant
    ``i``; ``shape`` is the ``(H, W)`` of the image the seeds belong to.
    """

    colors: np.ndarray
    points: list
    shape: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.colors = normalize(np.asarray(self.colors, dtype=np.float64).reshape(-1, 3))
        self.shape = tuple(int(s) for s in self.shape[:2])
        self.points = [np.asarray(p, dtype=np.int64).reshape(-1, 2) for p in self.points]
        if len(self.points) != len(self.colors):
            raise ShapeError("one point list per illuminant color is required")
        h, w = self.shape
        seen = np.zeros(self.shape, dtype=bool)
        for i, pts in enumerate(self.points):
            if len(pts) == 0:
                raise ValueError(f"illuminant {i} has no seed points")
            if np.any(pts < 0) or np.any(pts[:, 0] >= h) or np.any(pts[:, 1] >= w):
                raise ShapeError(f"seed points of illuminant {i} fall outside {self.shape}")
            flat = np.ravel_multi_index(pts.T, self.shape)
            if np.unique(flat).size != flat.size or np.any(seen.flat[flat]):
                raise ValueError("seed points must be unique and masks disjoint")
            seen.flat[flat] = True

    @property
    def n_illuminants(self):
        return len(self.colors)

    def mask(self, i):
        m = np.zeros(self.shape, dtype=bool)
        m[self.points[i][:, 0], self.points[i][:, 1]] = True
        return m

    def masks(self):
        return np.stack([self.mask(i) for i in range(self.n_illuminants)])

    def subsample(self, k, rng_seed=0):
        """Keep at most ``k`` points per illuminant, drawn without replacement."""
        rng = np.random.default_rng(rng_seed)
        pts = []
        for p in self.points:
            if len(p) > k:
                idx = np.sort(rng.choice(len(p), size=k, replace=False))
                p = p[idx]
            pts.append(p)
        return SeedSet(self.colors, pts, self.shape, dict(self.meta, subsample_k=k))

    def to_dict(self):
        return {
            "schema": 1,
            "shape": list(self.shape),
            "illuminants": [
                {"color": c.tolist(), "points": p.tolist()}
                for c, p in zip(self.colors, self.points)
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != 1:
            raise FormatError("unsupported seed file schema")
        ills = d["illuminants"]
        return cls(
            [i["color"] for i in ills],
            [i["points"] for i in ills],
            d["shape"],
            d.get("meta", {}),
        )

    def write(self, directory):
        """Write ``seeds.json`` plus one ``seedmask_{i}.png`` per illuminant."""
        io.write_json(f"{directory}/seeds.json", self.to_dict())
        for i in range(self.n_illuminants):
            io.write_mask(f"{directory}/seedmask_{i}.png", self.mask(i))

    @classmethod
    def read(cls, directory):
        return cls.from_dict(io.read_json(f"{directory}/seeds.json"))


def _log_safe(img):
    return np.log(np.maximum(img, _LOG_FLOOR))


def grayness_map(img, mask=None):
    """Per-pixel grayness score; lower means more likely an achromatic surface.

    Pixels that are masked out or have a zero channel get the map's maximum.
    """
    img = as_image(img)
    logs = _log_safe(img)
    d_rg = ndimage.laplace(logs[..., 0] - logs[..., 1], mode="reflect")
    d_bg = ndimage.laplace(logs[..., 2] - logs[..., 1], mode="reflect")
    score = np.hypot(d_rg, d_bg)
    bad = ~as_mask(mask, img.shape) | np.any(img <= 0, axis=-1)
    if np.any(bad):
        score[bad] = score.max() if np.any(~bad) else 1.0
    return score


def local_contrast(img):
    """Magnitude of the Laplacian of mean log intensity."""
    logs = _log_safe(as_image(img))
    return np.abs(ndimage.laplace(logs.mean(axis=-1), mode="reflect"))


def chromaticity(rgb):
    """``(r, g) = (R, G) / (R + G + B)`` along the last axis."""
    rgb = np.asarray(rgb, dtype=np.float64)
    s = rgb.sum(axis=-1, keepdims=True)
    return rgb[..., :2] / np.where(s > 0, s, 1.0)


def _rgb_from_chroma(rg):
    rgb = np.concatenate([rg, 1.0 - rg.sum(axis=-1, keepdims=True)], axis=-1)
    return normalize(np.clip(rgb, 0.0, None))


def cluster_gray_pixels(img, gmap, m, percentile=0.5, mask=None, rng_seed=0, min_contrast=1e-4):
    """Group the grayest pixels into ``m`` illuminant clusters.

    The lowest-scoring ``percentile`` percent of usable pixels (at least
    ``m``) are clustered with k-means in ``(r, g)`` chromaticity. Usable
    pixels are valid, non-zero, and have local log contrast of at least
    ``min_contrast`` (flat regions carry no grayness evidence); the contrast
    gate is dropped if it leaves fewer than ``m`` pixels. Clusters are
    ordered by centroid chromaticity so the result does not depend on
    k-means label order. Cluster members become the seed points and the
    centroid chromaticity the seed color.
    """
    img = as_image(img)
    gmap = np.asarray(gmap, dtype=np.float64)
    if gmap.shape != img.shape[:2]:
        raise ShapeError(f"grayness map {gmap.shape} does not match image {img.shape[:2]}")
    if m < 1:
        raise ValueError("cluster count must be >= 1")
    usable = as_mask(mask, img.shape) & np.all(img > 0, axis=-1)
    gated = usable & (local_contrast(img) >= min_contrast)
    if np.count_nonzero(gated) >= m:
        usable = gated
    cand = np.flatnonzero(usable)
    if cand.size < m:
        raise DegenerateClusteringError(
            f"only {cand.size} gray candidates for {m} clusters; try a smaller m"
        )
    n_sel = min(cand.size, max(m, math.ceil(percentile / 100.0 * img.shape[0] * img.shape[1])))
    # stable sort: equal scores resolve to the lowest pixel index
    order = np.argsort(gmap.ravel()[cand], kind="stable")
    chosen = np.sort(cand[order[:n_sel]])
    rg = chromaticity(img.reshape(-1, 3)[chosen])

    if m == 1:
        labels = np.zeros(len(chosen), dtype=int)
        centers = rg.mean(axis=0, keepdims=True)
    else:
        if len(np.unique(np.round(rg, 12), axis=0)) < m:
            raise DegenerateClusteringError(
                f"fewer than {m} distinct gray chromaticities; try a smaller m"
            )
        km = KMeans(n_clusters=m, init="k-means++", n_init=10, random_state=rng_seed).fit(rg)
        labels = km.labels_
        centers = np.stack([rg[labels == j].mean(axis=0) for j in range(m)])

    rank = np.lexsort((centers[:, 1], centers[:, 0]))
    points = []
    for j in rank:
        members = chosen[labels == j]
        if members.size == 0:
            raise DegenerateClusteringError("k-means produced an empty cluster")
        points.append(np.stack(np.unravel_index(members, img.shape[:2]), axis=1))
    meta = {"percentile": percentile, "m": m, "rng_seed": rng_seed, "min_contrast": min_contrast,
            "n_candidates": int(n_sel)}
    return SeedSet(_rgb_from_chroma(centers[rank]), points, img.shape[:2], meta)


def gray_index_seeds(img, m, k=16, mask=None, percentile=0.5, rng_seed=0):
    """Score, cluster and keep ``k`` random members per cluster as seeds."""
    gmap = grayness_map(img, mask)
    seeds = cluster_gray_pixels(img, gmap, m, percentile=percentile, mask=mask, rng_seed=rng_seed)
    return seeds.subsample(k, rng_seed)


def sample_seeds_from_gt(gt, segments, k, rng_seed=0, colors=None):
    """Draw ``k`` seed pixels per labelled region of a ground-truth map.

    Labels ``< 0`` are ignored. Regions are visited in increasing label
    order. Seed colors are ``colors[label]`` when given, else the normalized
    per-channel median of ``gt`` over the region.
    """
    segments = np.asarray(segments)
    gt = as_illumination(gt, segments.shape, name="gt")
    labels = np.unique(segments[segments >= 0])
    rng = np.random.default_rng(rng_seed)
    pts, cols = [], []
    for lab in labels:
        region = np.flatnonzero(segments.ravel() == lab)
        if region.size < k:
            raise InsufficientRegionError(
                f"region {int(lab)} has {region.size} pixels, fewer than k={k}"
            )
        picked = np.sort(rng.choice(region, size=k, replace=False))
        pts.append(np.stack(np.unravel_index(picked, segments.shape), axis=1))
        if colors is not None:
            cols.append(np.asarray(colors[int(lab)], dtype=np.float64))
        else:
            cols.append(np.median(gt.reshape(-1, 3)[region], axis=0))
    meta = {"k": k, "rng_seed": rng_seed, "labels": [int(v) for v in labels]}
    return SeedSet(np.array(cols), pts, segments.shape, meta)
