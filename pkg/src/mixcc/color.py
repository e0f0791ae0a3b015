"""Linear-RGB image algebra: transfer curves, the diagonal image-formation
model and its Von Kries inverse.

Images are plain ``(H, W, 3)`` float arrays in linear RGB. Illumination
maps share that layout; a single illuminant is a length-3 vector and is
broadcast wherever a map is accepted. Validity masks are ``(H, W)`` boolean
arrays where ``False`` excludes a pixel (e.g. a masked reference object).
"""

import numpy as np

from .errors import (
    EmptyDomainError,
    ShapeError,
    SingularIlluminantError,
    UndefinedDirectionError,
    ValueRangeError,
)

# floor below which an illuminant channel is treated as singular
EPS = 1e-4

NEUTRAL = np.full(3, 1.0 / np.sqrt(3.0))


def as_image(img, name="image"):
    """Validate a linear-RGB raster and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueRangeError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise ValueRangeError(f"{name} contains negative values")
    return arr


def as_mask(mask, shape):
    """Return a boolean ``(H, W)`` validity mask; ``None`` means all valid."""
    if mask is None:
        return np.ones(shape[:2], dtype=bool)
    m = np.asarray(mask).astype(bool)
    if m.shape != tuple(shape[:2]):
        raise ShapeError(f"mask shape {m.shape} does not match image {shape[:2]}")
    return m


def as_illumination(illum, shape=None, name="illumination"):
    """Validate an illumination map (or broadcast a single illuminant).

    When ``shape`` is given the result is an ``(H, W, 3)`` array matching it.
    """
    arr = np.asarray(illum, dtype=np.float64)
    if arr.shape == (3,) and shape is not None:
        arr = np.broadcast_to(arr, tuple(shape[:2]) + (3,))
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"{name} must have shape (H, W, 3) or (3,), got {arr.shape}")
    if shape is not None and arr.shape[:2] != tuple(shape[:2]):
        raise ShapeError(f"{name} shape {arr.shape[:2]} does not match image {tuple(shape[:2])}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueRangeError(f"{name} must be finite and non-negative")
    return arr


def normalize(v, axis=-1):
    """Scale vectors to unit L2 norm along ``axis``.

    Raises UndefinedDirectionError if any vector is all zero.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise UndefinedDirectionError("cannot normalize a zero or non-finite vector")
    return v / norm


def uniform_map(illuminant, shape):
    """Broadcast one illuminant to a writable ``(H, W, 3)`` map."""
    ill = np.asarray(illuminant, dtype=np.float64).reshape(3)
    return np.tile(ill, tuple(shape[:2]) + (1,))


def srgb_to_linear(img):
    """Decode gamma-encoded sRGB values in [0, 1] to linear RGB.

    Works on any array shape. Values outside [0, 1] or non-finite values
    raise ValueRangeError.
    """
    x = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(x)) or np.any(x < 0) or np.any(x > 1):
        raise ValueRangeError("sRGB input must be finite and within [0, 1]")
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(img, return_clipped=False):
    """Encode linear RGB with the sRGB curve for display.

    Values are clipped to [0, 1] first. With ``return_clipped=True`` a
    boolean array flagging the clipped entries is returned as well.
    """
    x = np.asarray(img, dtype=np.float64)
    x = np.nan_to_num(x, nan=0.0, posinf=1.0, neginf=0.0)
    clipped = (x < 0) | (x > 1)
    x = np.clip(x, 0.0, 1.0)
    # 1.055 * x**(1/2.4) - 0.055, arranged so that x = 1 maps to exactly 1
    out = np.where(x <= 0.0031308, 12.92 * x, 1.0 + 1.055 * (np.power(x, 1 / 2.4) - 1.0))
    if return_clipped:
        return out, clipped
    return out


def apply_illumination(white, illum):
    """Render a canonical image under an illuminant: ``I = W * L`` per pixel."""
    white = as_image(white, "white")
    illum = as_illumination(illum, white.shape)
    return white * illum


def von_kries_correct(biased, illum, mask=None, eps=EPS):
    """Divide out the illuminant channel-wise, recovering the canonical image.

    Pixels excluded by ``mask`` are returned as zero. Any illuminant channel
    ``<= eps`` at a valid pixel raises SingularIlluminantError carrying the
    offending ``(row, col)``.
    """
    biased = as_image(biased, "biased")
    illum = as_illumination(illum, biased.shape)
    valid = as_mask(mask, biased.shape)
    singular = np.any(illum <= eps, axis=-1) & valid
    if np.any(singular):
        r, c = (int(i) for i in np.argwhere(singular)[0])
        raise SingularIlluminantError(
            f"illuminant {illum[r, c].tolist()} at pixel ({r}, {c}) has a channel <= {eps}",
            pixel=(r, c),
        )
    safe = np.where(valid[..., None], illum, 1.0)
    return np.where(valid[..., None], biased / safe, 0.0)


def apparent_illumination(biased, corrected, mask=None, eps=EPS):
    """Recover the single illuminant implied by a biased/corrected image pair.

    The per-pixel ratio ``biased / corrected`` is reduced with a per-channel
    median over valid pixels and returned with unit L2 norm. Pixels with any
    ``corrected`` channel ``<= eps`` carry no usable ratio and are skipped.
    """
    biased = as_image(biased, "biased")
    corrected = as_image(corrected, "corrected")
    if biased.shape != corrected.shape:
        raise ShapeError(f"shape mismatch: {biased.shape} vs {corrected.shape}")
    valid = as_mask(mask, biased.shape) & np.all(corrected > eps, axis=-1)
    if not np.any(valid):
        raise EmptyDomainError("no valid pixels to estimate the apparent illumination")
    ratios = biased[valid] / corrected[valid]
    est = np.median(ratios, axis=0)
    if not np.any(est > 0):
        raise EmptyDomainError("apparent illumination is zero on every channel")
    return normalize(est)
