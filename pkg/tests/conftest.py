import numpy as np
import pytest
from hypothesis import settings

from mixcc.color import normalize

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def rotate(v, axis, deg):
    """Rodrigues rotation of ``v`` about ``axis`` by ``deg`` degrees."""
    axis = normalize(axis)
    v = np.asarray(v, dtype=np.float64)
    t = np.radians(deg)
    return v * np.cos(t) + np.cross(axis, v) * np.sin(t) + axis * np.dot(axis, v) * (1 - np.cos(t))


def illuminant_pair(separation_deg):
    """Two unit illuminants symmetric about neutral, ``separation_deg`` apart."""
    base = np.ones(3) / np.sqrt(3)
    half = separation_deg / 2
    return normalize(rotate(base, [1, -1, 0], half)), normalize(rotate(base, [1, -1, 0], -half))


def textured_white(h, w, rng, sat=0.15, lo=0.2, hi=0.8):
    """Canonical image of mildly colored random reflectances."""
    level = rng.uniform(lo, hi, (h, w, 1))
    tint = 1 + sat * rng.uniform(-1, 1, (h, w, 3))
    return level * tint


def two_region_scene(h=128, w=128, separation_deg=20.0, seed=0, patch=8):
    """Left half lit by A, right half by B, one gray patch per half.

    Returns ``(white, illum_map, A, B, labels)``.
    """
    rng = np.random.default_rng(seed)
    a, b = illuminant_pair(separation_deg)
    white = textured_white(h, w, rng)
    level = rng.uniform(0.2, 0.8, (h, w, 1))
    for cx in (w // 4, 3 * w // 4):
        sl = (slice(h // 2 - patch, h // 2 + patch), slice(cx - patch, cx + patch))
        white[sl] = np.repeat(level[sl], 3, axis=2)
    labels = np.where(np.arange(w)[None, :] < w // 2, 0, 1) * np.ones((h, 1), dtype=np.int64)
    illum = np.where(labels[..., None] == 0, a, b)
    return white, illum, a, b, labels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
