"""Learning-free single-illuminant estimators.

Every estimator here is a member of the Minkowski/derivative family::

    e_c  ∝  ( mean_x |d^n f_c,sigma(x)|^p )^(1/p)

where ``f_c,sigma`` is channel ``c`` smoothed with a Gaussian of width
``sigma`` and ``d^n`` the order-``n`` derivative magnitude (order 0 is the
smoothed image itself). Grey-World is ``n=0, p=1``; White-Patch ``p=inf``;
Shades-of-Grey ``p>1``; the Grey-Edge variants use ``n=1`` or ``n=2``.
"""

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import ndimage

from .color import NEUTRAL, as_image, as_mask, normalize, uniform_map
from .errors import ConfigurationError, EmptyDomainError


@dataclass(frozen=True)
class EstimatorConfig:
    minkowski_p: float = 1.0
    derivative_order: int = 0
    smoothing_sigma: float = 0.0
    # a pixel is saturated if any channel reaches this fraction of full scale
    saturation_threshold: float = 0.98
    saturation_level: float = 1.0

    def __post_init__(self):
        if self.derivative_order not in (0, 1, 2):
            raise ConfigurationError("derivative_order must be 0, 1 or 2")
        if not (self.minkowski_p >= 1):
            raise ConfigurationError("minkowski_p must be >= 1 or inf")
        if self.smoothing_sigma < 0:
            raise ConfigurationError("smoothing_sigma must be >= 0")
        if self.derivative_order > 0 and self.smoothing_sigma <= 0:
            raise ConfigurationError("derivative estimators need smoothing_sigma > 0")
        if not (0 < self.saturation_threshold <= 1):
            raise ConfigurationError("saturation_threshold must lie in (0, 1]")
        if not self.saturation_level > 0:
            raise ConfigurationError("saturation_level must be positive")

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["minkowski_p"]):
            d["minkowski_p"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "minkowski_p" in d:
            d["minkowski_p"] = float(d["minkowski_p"])
        return cls(**d)


PRESETS = {
    "grey-world": EstimatorConfig(),
    "white-patch": EstimatorConfig(minkowski_p=math.inf),
    "shades-of-grey": EstimatorConfig(minkowski_p=4.0),
    "general-grey-world": EstimatorConfig(minkowski_p=4.0, smoothing_sigma=1.0),
    "grey-edge-1": EstimatorConfig(minkowski_p=5.0, derivative_order=1, smoothing_sigma=1.0),
    "grey-edge-2": EstimatorConfig(minkowski_p=5.0, derivative_order=2, smoothing_sigma=1.0),
}


def preset(name, **overrides):
    """Look up a named configuration, optionally overriding fields."""
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown estimator {name!r}; choose from {sorted(PRESETS)}"
        ) from None
    return replace(cfg, **overrides) if overrides else cfg


def _derivative_magnitude(channel, order, sigma):
    if order == 0:
        if sigma == 0:
            return channel
        return ndimage.gaussian_filter(channel, sigma, mode="reflect")

    def d(o):
        # wide support so truncated derivative kernels still annihilate constants
        return ndimage.gaussian_filter(channel, sigma, order=o, mode="reflect", truncate=8.0)

    if order == 1:
        return np.hypot(d((0, 1)), d((1, 0)))
    return np.sqrt(d((0, 2)) ** 2 + d((2, 0)) ** 2 + 4 * d((1, 1)) ** 2)


def _usable_pixels(img, mask, cfg):
    valid = as_mask(mask, img.shape)
    saturated = np.any(img >= cfg.saturation_threshold * cfg.saturation_level, axis=-1)
    if cfg.derivative_order > 0 or cfg.smoothing_sigma > 0:
        # filtered responses next to clipped pixels are contaminated too
        saturated = ndimage.binary_dilation(saturated, structure=np.ones((3, 3), bool))
    return valid & ~saturated


def minkowski_norm(values, p):
    """``(mean |v|^p)^(1/p)``; ``p=inf`` gives the maximum."""
    v = np.abs(np.asarray(values, dtype=np.float64))
    top = v.max()
    if math.isinf(p) or top == 0:
        return float(top)
    # scale by the max to keep large p from overflowing
    return float(top * np.mean((v / top) ** p) ** (1.0 / p))


def grey_world_family(img, cfg=None, mask=None):
    """Estimate a single normalized illuminant with the Minkowski/derivative framework."""
    cfg = cfg or EstimatorConfig()
    img = as_image(img)
    usable = _usable_pixels(img, mask, cfg)
    if not np.any(usable):
        raise EmptyDomainError("every pixel is masked or saturated")
    est = np.array([
        minkowski_norm(
            _derivative_magnitude(img[..., c], cfg.derivative_order, cfg.smoothing_sigma)[usable],
            cfg.minkowski_p,
        )
        for c in range(3)
    ])
    return normalize(est)


def grey_world(img, mask=None):
    return grey_world_family(img, PRESETS["grey-world"], mask)


def shades_of_grey(img, p=4.0, mask=None):
    return grey_world_family(img, replace(PRESETS["shades-of-grey"], minkowski_p=p), mask)


def grey_edge(img, order=1, p=5.0, sigma=1.0, mask=None):
    cfg = EstimatorConfig(minkowski_p=p, derivative_order=order, smoothing_sigma=sigma)
    return grey_world_family(img, cfg, mask)


def white_patch(img, cfg=None, mask=None):
    """Per-channel maximum over valid, unsaturated pixels, normalized."""
    cfg = replace(cfg or PRESETS["white-patch"], minkowski_p=math.inf)
    return grey_world_family(img, cfg, mask)


def doing_nothing(img):
    """Predict no color cast: a uniform neutral map."""
    img = np.asarray(img)
    return uniform_map(NEUTRAL, img.shape)


def estimate(name, img, cfg=None, mask=None):
    """Run a named classical estimator and return one normalized illuminant."""
    if name == "doing-nothing":
        return NEUTRAL.copy()
    cfg = cfg or preset(name)
    if name == "white-patch":
        return white_patch(img, cfg, mask)
    if name not in PRESETS:
        raise ConfigurationError(f"unknown estimator {name!r}")
    return grey_world_family(img, cfg, mask)
