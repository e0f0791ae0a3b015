"""N-illuminant probability maps: reconstruction, supervised losses, an exact
simplex least-squares inversion, and a seed-diffusion estimator.

A probability map is an ``(H, W, N)`` float array whose last axis lies on
the unit simplex. The illumination it encodes is
``L(x) = sum_i P_i(x) * color_i``.

Binary file layout (``.pmap``)::

    offset  size  field
    0       4     magic  b"PMAP"
    4       4     version, uint32 LE (= 1)
    8       4     width,   uint32 LE
    12      4     height,  uint32 LE
    16      4     n,       uint32 LE
    20      4*W*H*N  float32 LE weights, row-major: row, then column,
                     then illuminant index (innermost)
"""

import itertools
import logging
import struct
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import io
from .color import as_illumination, as_image, as_mask, von_kries_correct
from .errors import FormatError, ShapeError
from .grayness import SeedSet, chromaticity

log = logging.getLogger(__name__)

PMAP_MAGIC = b"PMAP"
PMAP_VERSION = 1
_HEADER = struct.Struct("<4sIIII")

DEFAULT_LAMBDA = 100.0


def _colors_of(seeds):
    if isinstance(seeds, SeedSet):
        return seeds.colors
    c = np.asarray(seeds, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != 3:
        raise ShapeError(f"illuminant colors must be (N, 3), got {c.shape}")
    return c


def check_probability_map(p, n=None, tol=1e-6):
    """Validate the simplex invariant and return ``p`` as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3:
        raise ShapeError(f"probability map must be (H, W, N), got {p.shape}")
    if n is not None and p.shape[2] != n:
        raise ShapeError(f"probability map has {p.shape[2]} channels, expected {n}")
    if not np.all(np.isfinite(p)) or np.any(p < -tol) or np.any(p > 1 + tol):
        raise ValueError("probability weights must be finite and in [0, 1]")
    if np.max(np.abs(p.sum(axis=-1) - 1.0)) > tol:
        raise ValueError("probability weights must sum to 1 per pixel")
    return p


def reconstruct_illumination(p, seeds):
    """``L = sum_i P_i * I_i`` for a probability map and N illuminant colors."""
    colors = _colors_of(seeds)
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3 or p.shape[2] != len(colors):
        raise ShapeError(
            f"probability map with shape {p.shape} does not match {len(colors)} illuminants"
        )
    if isinstance(seeds, SeedSet) and p.shape[:2] != seeds.shape:
        raise ShapeError(f"probability map {p.shape[:2]} does not match seeds {seeds.shape}")
    return np.einsum("hwn,nc->hwc", p, colors)


def l1_image_distance(a, b, mask=None):
    """Mean over pixels of the channel-summed absolute difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    per_pixel = np.abs(a - b)
    if per_pixel.ndim == 3:
        per_pixel = per_pixel.sum(axis=-1)
    valid = as_mask(mask, per_pixel.shape)
    return float(np.mean(per_pixel[valid])) if np.any(valid) else 0.0


def mask_loss(pred, seeds):
    """Seed-point consistency: for each illuminant, the mean L1 distance
    between the predicted illumination at its seed pixels and its color,
    summed over illuminants."""
    pred = as_illumination(pred, seeds.shape, name="pred")
    total = 0.0
    for color, pts in zip(seeds.colors, seeds.points):
        diff = np.abs(pred[pts[:, 0], pts[:, 1]] - color).sum(axis=-1)
        total += float(diff.mean())
    return total


@dataclass(frozen=True)
class LossReport:
    illum: float
    rgb: float
    masks: float
    total_supervised: float
    lam: float = DEFAULT_LAMBDA
    # the adversarial term is never computed here
    gan: str = "absent"

    def to_dict(self):
        return asdict(self)


def total_loss(gt_illum, pred_p, biased, gt_white, seeds, lam=DEFAULT_LAMBDA, mask=None):
    """Evaluate the supervised part of the training objective.

    ``illum`` compares the reconstructed map to ``gt_illum``; ``rgb`` compares
    ``biased`` corrected by the reconstruction to ``gt_white``; ``masks`` is
    :func:`mask_loss`. ``total_supervised = lam * (illum + rgb + masks)``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    biased = as_image(biased, "biased")
    gt_illum = as_illumination(gt_illum, biased.shape, name="gt_illum")
    pred = reconstruct_illumination(pred_p, seeds)
    if pred.shape != biased.shape:
        raise ShapeError(f"prediction {pred.shape} does not match image {biased.shape}")
    corrected = von_kries_correct(biased, pred, mask=mask)
    l_illum = l1_image_distance(pred, gt_illum, mask)
    l_rgb = l1_image_distance(corrected, as_image(gt_white, "gt_white"), mask)
    l_masks = mask_loss(pred, seeds)
    return LossReport(
        illum=l_illum,
        rgb=l_rgb,
        masks=l_masks,
        total_supervised=lam * (l_illum + l_rgb + l_masks),
        lam=lam,
    )


def project_to_simplex(v):
    """Euclidean projection of each row (last axis) onto the unit simplex."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    return np.maximum(v - theta, 0.0)


def _affine_rank(colors):
    a = np.vstack([colors.T, np.ones(len(colors))])
    return np.linalg.matrix_rank(a, tol=1e-10)


def _solve_by_supports(targets, colors):
    # Exact simplex-constrained least squares: the optimum lies on some
    # support S where it solves the equality-constrained problem.
    n = len(colors)
    npx = len(targets)
    best_p = np.zeros((npx, n))
    best_r = np.full(npx, np.inf)
    best_norm = np.full(npx, np.inf)
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            a = colors[list(support)].T  # (3, s)
            # the sum-to-one affine set is centre + span(Z); the pseudo-inverse
            # then gives the minimum-norm least-squares point on it
            centre = np.full(size, 1.0 / size)
            z = linalg.null_space(np.ones((1, size)))  # (s, s-1), orthonormal
            sol = centre + ((z @ np.linalg.pinv(a @ z)) @ (targets - a @ centre).T).T
            feasible = np.all(sol >= -1e-12, axis=1)
            sol = np.maximum(sol, 0.0)
            p = np.zeros((npx, n))
            p[:, support] = sol
            resid = np.linalg.norm(p @ colors - targets, axis=1)
            norm = np.linalg.norm(p, axis=1)
            better = feasible & (
                (resid < best_r - 1e-12) | ((resid <= best_r + 1e-12) & (norm < best_norm - 1e-12))
            )
            best_p[better] = p[better]
            best_r[better] = resid[better]
            best_norm[better] = norm[better]
    return best_p


def _solve_projected_gradient(targets, colors, iters=2000):
    n = len(colors)
    gram = colors @ colors.T
    step = 1.0 / max(np.linalg.eigvalsh(gram).max(), 1e-12)
    lin = targets @ colors.T
    p = np.full((len(targets), n), 1.0 / n)
    y, t = p.copy(), 1.0
    for _ in range(iters):
        p_next = project_to_simplex(y - step * (y @ gram - lin))
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        y = p_next + ((t - 1) / t_next) * (p_next - p)
        p, t = p_next, t_next
    return p


def oracle_probabilities(gt, seeds, mask=None):
    """Invert the reconstruction: per-pixel simplex weights minimizing
    ``|| sum_i p_i I_i - L(x) ||_2``.

    Returns ``(p, residual)`` where ``residual`` is the per-pixel L2 error of
    the best fit. For up to 8 illuminants the solution is exact (every
    support set is checked); larger N falls back to accelerated projected
    gradient. Affinely dependent seed colors make the answer non-unique;
    a warning is issued and ties are broken toward the minimum-norm weights.
    """
    colors = _colors_of(seeds)
    gt = as_illumination(gt, name="gt")
    n = len(colors)
    if _affine_rank(colors) < n:
        warnings.warn("seed colors are affinely dependent; oracle weights are not unique",
                      RuntimeWarning, stacklevel=2)
    valid = as_mask(mask, gt.shape)
    targets = gt[valid]
    if n <= 8:
        sol = _solve_by_supports(targets, colors)
    else:
        sol = _solve_projected_gradient(targets, colors)
    sol /= sol.sum(axis=1, keepdims=True)
    p = np.zeros(gt.shape[:2] + (n,))
    p[~valid] = 1.0 / n
    p[valid] = sol
    residual = np.linalg.norm(np.einsum("hwn,nc->hwc", p, colors) - gt, axis=-1)
    residual[~valid] = 0.0
    return p, residual


def seed_diffusion_estimate(biased, seeds, sigma_chroma=0.05, sigma_spatial=None,
                            mask=None, chunk=8192):
    """Spread seed identities over the image with a bilateral kernel.

    Each pixel's weight for illuminant ``i`` sums, over that illuminant's
    seed points, ``exp(-dc^2 / 2 sigma_chroma^2) * exp(-ds^2 / 2 sigma_spatial^2)``
    where ``dc`` is the ``(r, g)`` chromaticity distance to the seed pixel
    and ``ds`` the spatial distance in pixels. ``sigma_spatial`` defaults to
    a quarter of the image diagonal. Seed pixels are pinned to their own
    illuminant and every pixel is normalized onto the simplex last.
    """
    biased = as_image(biased, "biased")
    h, w = biased.shape[:2]
    if (h, w) != seeds.shape:
        raise ShapeError(f"seeds {seeds.shape} do not match image {(h, w)}")
    if sigma_spatial is None:
        sigma_spatial = 0.25 * np.hypot(h, w)
    n = seeds.n_illuminants
    chroma = chromaticity(biased).reshape(-1, 2)
    rows, cols = np.divmod(np.arange(h * w), w)
    coords = np.stack([rows, cols], axis=1).astype(np.float64)

    logw = np.empty((h * w, n))
    for i, pts in enumerate(seeds.points):
        flat = pts[:, 0] * w + pts[:, 1]
        s_chroma = chroma[flat]
        s_xy = pts.astype(np.float64)
        for start in range(0, h * w, chunk):
            sl = slice(start, start + chunk)
            dc = ((chroma[sl, None, :] - s_chroma[None]) ** 2).sum(-1)
            ds = ((coords[sl, None, :] - s_xy[None]) ** 2).sum(-1)
            logw[sl, i] = logsumexp(
                -dc / (2 * sigma_chroma**2) - ds / (2 * sigma_spatial**2), axis=1
            )
    p = np.exp(logw - logw.max(axis=1, keepdims=True))
    for i, pts in enumerate(seeds.points):
        flat = pts[:, 0] * w + pts[:, 1]
        p[flat] = 0.0
        p[flat, i] = 1.0
    if mask is not None:
        p[~as_mask(mask, biased.shape).ravel()] = 1.0
    p /= p.sum(axis=1, keepdims=True)
    return p.reshape(h, w, n)


def export_probability_map(path, p):
    """Write ``p`` in the ``.pmap`` layout described in the module docstring."""
    p = np.asarray(p)
    if p.ndim != 3:
        raise ShapeError(f"probability map must be (H, W, N), got {p.shape}")
    h, w, n = p.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(PMAP_MAGIC, PMAP_VERSION, w, h, n))
        fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def import_probability_map(path, tol=1e-3):
    """Read and validate a ``.pmap`` file.

    Weights may miss the simplex by up to ``tol`` (sum or bounds); such maps
    are clipped and renormalized with a logged warning. Anything further off
    raises FormatError naming the first offending pixel.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, w, h, n = _HEADER.unpack(header)
        if magic != PMAP_MAGIC or version != PMAP_VERSION:
            raise FormatError(f"{path}: not a version-{PMAP_VERSION} probability map")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if n == 0 or data.size != w * h * n:
        raise FormatError(f"{path}: expected {w * h * n} weights, found {data.size}")
    p = data.reshape(h, w, n).astype(np.float64)

    def bad_at(where, what):
        r, c = (int(i) for i in np.argwhere(where)[0])
        raise FormatError(f"{path}: {what} at pixel ({r}, {c})", pixel=(r, c))

    finite = np.all(np.isfinite(p), axis=-1)
    if not np.all(finite):
        bad_at(~finite, "non-finite weight")
    out_of_range = np.any((p < -tol) | (p > 1 + tol), axis=-1)
    if np.any(out_of_range):
        bad_at(out_of_range, "weight outside [0, 1]")
    sums = p.sum(axis=-1)
    off = np.abs(sums - 1.0) > tol
    if np.any(off):
        bad_at(off, "weights do not sum to 1")
    if np.any(p < 0) or np.any(p > 1) or np.max(np.abs(sums - 1.0)) > 1e-6:
        log.warning("%s: repairing probability map within tolerance %g", path, tol)
        p = np.clip(p, 0.0, 1.0)
        p /= p.sum(axis=-1, keepdims=True)
    return p


def export_probability_pngs(directory, p, prefix="prob"):
    """One 16-bit grayscale PNG per illuminant channel, for inspection."""
    p = np.asarray(p)
    paths = []
    for i in range(p.shape[2]):
        path = f"{directory}/{prefix}_{i}.png"
        io.write_gray16(path, p[..., i])
        paths.append(path)
    return paths

