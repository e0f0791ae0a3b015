"""On-disk dataset layout shared by the command-line tools.

A dataset directory holds ``manifest.json``::

    {"schema": 1, "kind": "dataset", "samples": [{"id": "...", "path": "..."}]}

and one directory per sample (``path`` is relative to the manifest). A
sample directory contains some of:

* ``biased.png16`` / ``biased.pfm``   -- input image (required for estimation)
* ``corrected.png16`` / ``corrected.pfm`` -- canonical image
* ``illum.pfm``                        -- ground-truth illumination map
* ``mask.png``                         -- validity mask, 0 = excluded
* ``seeds.json`` + ``seedmask_{i}.png`` -- seed set
* ``prob.pmap``                        -- probability map (predictions)
* ``meta.json``                        -- provenance

PNG files are read as sRGB and linearized; PFM files are linear. To
evaluate on an external multi-illuminant benchmark, convert each scene to
``biased.pfm`` (or 16-bit PNG) plus ``illum.pfm`` in this layout.
"""

from pathlib import Path

from . import io
from .errors import FormatError

MANIFEST = "manifest.json"


def write_manifest(directory, ids, kind, failed=None):
    entries = [{"id": i, "path": i} for i in sorted(ids)]
    doc = {"schema": 1, "kind": kind, "samples": entries}
    if failed:
        doc["failed"] = sorted(failed)
    io.write_json(Path(directory) / MANIFEST, doc)
    return doc


def read_manifest(directory):
    """Return an ordered ``{id: sample_dir}`` mapping."""
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {directory}")
    doc = io.read_json(path)
    if doc.get("schema") != 1 or "samples" not in doc:
        raise FormatError(f"{path}: unsupported manifest")
    return {s["id"]: directory / s["path"] for s in doc["samples"]}


def find_image(sample_dir, stem):
    """Locate ``<stem>.png16``, ``<stem>.pfm`` or ``<stem>.png``; None if absent."""
    for ext in ("png16", "pfm", "png"):
        p = Path(sample_dir) / f"{stem}.{ext}"
        if p.exists():
            return p
    return None


def load_image(sample_dir, stem):
    p = find_image(sample_dir, stem)
    if p is None:
        raise FileNotFoundError(f"{sample_dir}: no {stem} image")
    return io.read_image(p)


def load_mask(sample_dir):
    p = Path(sample_dir) / "mask.png"
    return io.read_mask(p) if p.exists() else None


def load_illum(sample_dir):
    p = Path(sample_dir) / "illum.pfm"
    if not p.exists():
        raise FileNotFoundError(f"{sample_dir}: no illum.pfm")
    return io.read_pfm(p)
