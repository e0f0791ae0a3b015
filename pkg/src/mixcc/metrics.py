"""Angular error and the six-statistic summary used in color-constancy tables."""

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import jsonschema
import numpy as np

from .color import as_illumination, as_mask
from .errors import EmptyDomainError, ShapeError, UndefinedDirectionError

STAT_FIELDS = ("mean", "median", "trimean", "best25", "worst25", "max")
CSV_HEADER = ("id",) + STAT_FIELDS
REPORT_SCHEMA_VERSION = 1


def angular_error(e, e_hat):
    """Angle in degrees between illuminant vectors.

    Broadcasts over leading dimensions, so ``(H, W, 3)`` maps work too.
    Equal to ``arccos(e . e_hat / (|e| |e_hat|))`` but evaluated as
    ``atan2(|e x e_hat|, e . e_hat)``, which keeps full precision for
    nearly parallel vectors where ``arccos`` loses about half the digits.
    """
    e = np.asarray(e, dtype=np.float64)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    if e.shape[-1] != 3 or e_hat.shape[-1] != 3:
        raise ShapeError("illuminants must have 3 channels in the last axis")
    n1 = np.linalg.norm(e, axis=-1, keepdims=True)
    n2 = np.linalg.norm(e_hat, axis=-1, keepdims=True)
    if np.any(n1 == 0) or np.any(n2 == 0):
        raise UndefinedDirectionError("angular error is undefined for a zero vector")
    u, v = e / n1, e_hat / n2
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    out = np.degrees(np.arctan2(cross, np.sum(u * v, axis=-1)))
    return float(out) if out.ndim == 0 else out


class MapError(NamedTuple):
    per_pixel: np.ndarray  # degrees, NaN at invalid pixels
    mean: float
    median: float


def _mean(values):
    # order-independent, exact for constant inputs
    lo = min(values)
    return lo + math.fsum(v - lo for v in values) / len(values)


def map_angular_error(gt, pred, mask=None):
    """Per-pixel angular error between two illumination maps.

    Returns the error raster (NaN where ``mask`` is False) along with the
    mean and median over valid pixels.
    """
    gt = as_illumination(gt, name="gt")
    pred = as_illumination(pred, gt.shape, name="pred")
    valid = as_mask(mask, gt.shape)
    if not np.any(valid):
        raise EmptyDomainError("no valid pixels in the evaluation mask")
    err = np.full(gt.shape[:2], np.nan)
    err[valid] = angular_error(gt[valid], pred[valid])
    vals = err[valid]
    return MapError(err, _mean(vals.tolist()), float(np.median(vals)))


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    median: float
    trimean: float
    best25: float
    worst25: float
    max: float
    count: int

    def as_row(self, ident):
        return [ident] + [getattr(self, f) for f in STAT_FIELDS]

    def to_dict(self):
        return asdict(self)


def summarize(errors):
    """Reduce a list of angular errors to :class:`ErrorStats`.

    Quartiles use linear interpolation on the sorted sample (numpy's default
    "linear" method); the trimean is ``(Q1 + 2*Q2 + Q3) / 4``. ``best25`` and
    ``worst25`` average the ``ceil(n/4)`` lowest and highest values.
    """
    x = np.sort(np.asarray(errors, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise EmptyDomainError("cannot summarize an empty error list")
    if not np.all(np.isfinite(x)):
        raise ValueError("errors must be finite")
    q1, q2, q3 = np.percentile(x, [25, 50, 75])
    k = math.ceil(n / 4)
    vals = x.tolist()
    mean = _mean(vals)
    best = _mean(vals[:k])
    worst = _mean(vals[-k:])
    lo, hi = vals[0], vals[-1]
    trimean = (q1 + 2 * q2 + q3) / 4
    # rounding guards; the inequalities hold exactly in real arithmetic
    return ErrorStats(
        mean=mean,
        median=float(q2),
        trimean=float(min(max(trimean, lo), hi)),
        best25=min(best, mean),
        worst25=max(worst, mean),
        max=hi,
        count=n,
    )


def write_csv(path, rows):
    """Write per-image statistics. ``rows`` is an iterable of ``(id, ErrorStats)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for ident, stats in rows:
            w.writerow([ident] + [repr(float(getattr(stats, f))) for f in STAT_FIELDS])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [(r["id"], {f: float(r[f]) for f in STAT_FIELDS}) for r in reader]


_STATS_SCHEMA = {
    "type": "object",
    "properties": {f: {"type": "number", "minimum": 0} for f in STAT_FIELDS}
    | {"count": {"type": "integer", "minimum": 1}},
    "required": list(STAT_FIELDS) + ["count"],
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema": {"const": REPORT_SCHEMA_VERSION},
        "results": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "method": {"type": "string"},
                    "protocol": {"enum": ["single-illuminant", "map"]},
                    "stats": _STATS_SCHEMA,
                },
                "required": ["method", "protocol", "stats"],
            },
        },
        "metadata": {"type": "object"},
    },
    "required": ["schema", "results", "metadata"],
}


def make_report(results, metadata):
    """Assemble a versioned JSON-able report.

    ``results`` is a list of ``(method, protocol, ErrorStats)`` tuples, one
    per table row.
    """
    report = {
        "schema": REPORT_SCHEMA_VERSION,
        "results": [
            {"method": m, "protocol": p, "stats": s.to_dict()} for m, p, s in results
        ],
        "metadata": metadata,
    }
    validate_report(report)
    return report


def validate_report(report):
    jsonschema.validate(report, REPORT_SCHEMA)


def write_report(path, report):
    validate_report(report)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path):
    with open(path) as fh:
        report = json.load(fh)
    validate_report(report)
    return report

