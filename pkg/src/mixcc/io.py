"""Image, mask and portable-float-map I/O.

PNG files (8 or 16 bit) are treated as sRGB-encoded and are linearized on
load; PFM files hold linear float data and are read as-is. Masks are
single-channel PNGs where 0 marks an invalid pixel.
"""

import json
import re
from pathlib import Path

import cv2
import numpy as np

from .color import linear_to_srgb, srgb_to_linear
from .errors import FormatError


def _imdecode(path, flags=cv2.IMREAD_UNCHANGED):
    buf = np.fromfile(str(path), dtype=np.uint8)
    img = cv2.imdecode(buf, flags)
    if img is None:
        raise FormatError(f"could not decode image {path}")
    return img


def _imencode_png(arr):
    ok, buf = cv2.imencode(".png", arr)
    if not ok:
        raise FormatError("PNG encoding failed")
    return buf.tobytes()


def _scale_for(dtype):
    if dtype == np.uint8:
        return 255.0
    if dtype == np.uint16:
        return 65535.0
    raise FormatError(f"unsupported PNG sample type {dtype}")


def read_pfm(path):
    """Read a PFM file into a float64 array, ``(H, W, 3)`` or ``(H, W)``.

    Rows are returned top-to-bottom.
    """
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise FormatError(f"{path}: not a PFM file")
        dims = fh.readline()
        while dims.startswith(b"#"):
            dims = fh.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise FormatError(f"{path}: malformed PFM header")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(fh.readline().strip())
        endian = "<" if scale < 0 else ">"
        channels = 3 if kind == b"PF" else 1
        data = np.fromfile(fh, dtype=endian + "f4")
    expected = width * height * channels
    if data.size != expected:
        raise FormatError(f"{path}: expected {expected} floats, found {data.size}")
    shape = (height, width, 3) if channels == 3 else (height, width)
    # PFM stores the bottom row first
    return np.flipud(data.reshape(shape)).astype(np.float64)


def write_pfm(path, arr):
    """Write a float array as little-endian PFM (32-bit samples)."""
    arr = np.asarray(arr, dtype="<f4")
    if arr.ndim == 3 and arr.shape[2] == 3:
        kind = b"PF"
    elif arr.ndim == 2:
        kind = b"Pf"
    else:
        raise FormatError(f"cannot write array of shape {arr.shape} as PFM")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(kind + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(np.flipud(arr)).tobytes())


def read_image(path):
    """Load a linear-RGB float64 image from PNG (sRGB-encoded) or PFM."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"PF", b"Pf"):
        img = read_pfm(path)
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        return img
    raw = _imdecode(path)
    scale = _scale_for(raw.dtype)
    if raw.ndim == 2:
        raw = np.repeat(raw[..., None], 3, axis=2)
    elif raw.shape[2] == 4:
        raw = raw[..., :3]
    rgb = raw[..., ::-1].astype(np.float64) / scale
    return srgb_to_linear(rgb)


def encode_png16(img):
    """sRGB-encode a linear image and return 16-bit PNG bytes."""
    enc = linear_to_srgb(img)
    q = np.round(enc * 65535.0).astype(np.uint16)
    return _imencode_png(np.ascontiguousarray(q[..., ::-1]))


def write_png16(path, img):
    with open(path, "wb") as fh:
        fh.write(encode_png16(img))


def write_png8(path, img):
    """Gamma-adjusted 8-bit PNG for viewing."""
    enc = linear_to_srgb(img)
    q = np.round(enc * 255.0).astype(np.uint8)
    if q.ndim == 3:
        q = np.ascontiguousarray(q[..., ::-1])
    with open(path, "wb") as fh:
        fh.write(_imencode_png(q))


def write_gray16(path, values):
    """Write values in [0, 1] as a linear (not gamma encoded) 16-bit gray PNG."""
    q = np.round(np.clip(values, 0.0, 1.0) * 65535.0).astype(np.uint16)
    with open(path, "wb") as fh:
        fh.write(_imencode_png(q))


def read_mask(path):
    """Read a single-channel PNG mask: nonzero = valid."""
    raw = _imdecode(path)
    if raw.ndim == 3:
        raw = raw.max(axis=2)
    return raw > 0


def write_mask(path, mask):
    q = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(_imencode_png(q))


def read_labels(path):
    """Read an integer label map (single-channel PNG) for segmentation input."""
    raw = _imdecode(path)
    if raw.ndim == 3:
        raise FormatError(f"{path}: label maps must be single-channel")
    return raw.astype(np.int64)


def write_labels(path, labels):
    labels = np.asarray(labels)
    dtype = np.uint8 if labels.max() < 256 else np.uint16
    with open(path, "wb") as fh:
        fh.write(_imencode_png(labels.astype(dtype)))


def dumps_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)

