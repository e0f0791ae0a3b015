"""Batch command-line front end.

Every run writes ``run.json`` (the fully resolved configuration) next to
its outputs, so a run can be repeated from that file alone::

    mixcc augment --config out/run.json

Configuration precedence: built-in defaults < ``--config`` file (top-level
keys, then the section named after the subcommand) < command-line flags.
Exit status is 0 on success, 1 if any sample failed, 2 on usage errors.
"""

import argparse
import functools
import logging
import math
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset, io
from .augment import (
    augment,
    load_pool,
    split_dataset,
    validate_segments,
    voronoi_segments,
    write_sample,
)
from .color import NEUTRAL, normalize, uniform_map, von_kries_correct
from .errors import ConfigurationError
from .estimators import PRESETS, EstimatorConfig, estimate, preset
from .grayness import SeedSet, gray_index_seeds
from .metrics import (
    angular_error,
    make_report,
    map_angular_error,
    summarize,
    write_csv,
    write_report,
)
from .mixture import (
    DEFAULT_LAMBDA,
    export_probability_map,
    import_probability_map,
    oracle_probabilities,
    reconstruct_illumination,
    seed_diffusion_estimate,
    total_loss,
)

log = logging.getLogger("mixcc")

ESTIMATORS = sorted(PRESETS) + ["doing-nothing", "seed-diffusion", "import", "oracle"]
IMAGE_EXTS = (".png", ".png16", ".pfm")

COMMON_DEFAULTS = {"out": None, "rng_seed": 0, "jobs": None, "format": "png16", "visualize": False}

DEFAULTS = {
    "augment": {
        "images": None, "segments": None, "synthetic_segments": False, "pool": None,
        "gt_illuminants": None, "n": 4, "k": 16, "feather_sigma": 8.0,
    },
    "estimate": {
        "dataset": None, "estimator": "grey-world", "minkowski_p": None,
        "derivative_order": None, "smoothing_sigma": None, "saturation_threshold": None,
        "seeds": "gi", "m": 4, "k": 16, "percentile": 0.5, "sigma_chroma": 0.05,
        "sigma_spatial_frac": 0.25, "import_dir": None,
    },
    "correct": {"dataset": None, "predictions": None},
    "seeds": {"dataset": None, "m": 4, "k": 16, "percentile": 0.5},
    "evaluate": {"dataset": None, "predictions": None, "method": None},
    "losses": {"dataset": None, "predictions": None, "lam": DEFAULT_LAMBDA},
    "split": {"dataset": None, "ids": None, "train_fraction": 0.8},
}


def _sample_seed(rng_seed, ident):
    ss = np.random.SeedSequence([int(rng_seed), zlib.crc32(str(ident).encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _run_parallel(func, items, jobs):
    """Apply ``func`` to ``(id, payload)`` items; returns results in id order.

    ``func`` must return ``(id, error_or_None, result)``.
    """
    items = sorted(items, key=lambda t: t[0])
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(func, items))


def _guarded(work, item):
    ident = item[0]
    try:
        return ident, None, work(item)
    except Exception as exc:  # collected per sample, reported at the end
        return ident, f"{type(exc).__name__}: {exc}", None


def _guard(work):
    return functools.partial(_guarded, work)


def _finish(out, results, kind):
    ok = [i for i, err, _ in results if err is None]
    failed = {i: err for i, err, _ in results if err is not None}
    dataset.write_manifest(out, ok, kind, failed=list(failed))
    log_path = Path(out) / "errors.log"
    if failed:
        with open(log_path, "w") as fh:
            for i in sorted(failed):
                fh.write(f"{i}: {failed[i]}\n")
        for i in sorted(failed):
            log.error("sample %s failed: %s", i, failed[i])
    elif log_path.exists():
        log_path.unlink()
    return 1 if failed else 0


# -- augment -----------------------------------------------------------------

def _augment_one(item):
    ident, p = item
    img = io.read_image(p["image"])
    meta = {}
    if p.get("gt_rgb") is not None:
        img = von_kries_correct(img, normalize(p["gt_rgb"]) * math.sqrt(3))
        meta["canonicalized_with"] = list(p["gt_rgb"])
    if p["segments_path"] is not None:
        seg = validate_segments(io.read_labels(p["segments_path"]))
    else:
        seg = voronoi_segments(img.shape[0], img.shape[1], p["n"], p["seed"])
    sample = augment(
        img, seg, p["pool"], p["n"], k=p["k"], rng_seed=p["seed"],
        feather_sigma=p["feather_sigma"], source_id=ident, pool_ids=p["pool_ids"],
    )
    write_sample(sample, Path(p["out"]) / ident, fmt=p["format"], extra_meta=meta)
    return len(sample.artifacts())


def cmd_augment(cfg):
    if not cfg["images"] or not cfg["pool"]:
        raise ConfigurationError("augment needs --images and --pool")
    if not cfg["segments"] and not cfg["synthetic_segments"]:
        raise ConfigurationError("augment needs --segments or --synthetic-segments")
    images = sorted(p for p in Path(cfg["images"]).iterdir() if p.suffix.lower() in IMAGE_EXTS)
    if not images:
        raise ConfigurationError(f"no images found in {cfg['images']}")
    pool, pool_ids = load_pool(cfg["pool"])
    gt = io.read_json(cfg["gt_illuminants"]) if cfg["gt_illuminants"] else {}
    items = []
    for path in images:
        ident = path.stem
        seg_path = None
        if cfg["segments"]:
            seg_path = Path(cfg["segments"]) / f"{ident}.png"
        items.append((ident, {
            "image": str(path), "segments_path": seg_path and str(seg_path),
            "gt_rgb": gt.get(ident), "pool": pool, "pool_ids": pool_ids, "n": cfg["n"],
            "k": cfg["k"], "feather_sigma": cfg["feather_sigma"], "format": cfg["format"],
            "seed": _sample_seed(cfg["rng_seed"], ident), "out": cfg["out"],
        }))
    results = _run_parallel(_guard(_augment_one), items, cfg["jobs"])
    return _finish(cfg["out"], results, "dataset")


# -- estimate ----------------------------------------------------------------

def _estimator_config(cfg):
    overrides = {
        k: cfg[k] for k in
        ("minkowski_p", "derivative_order", "smoothing_sigma", "saturation_threshold")
        if cfg.get(k) is not None
    }
    return preset(cfg["estimator"], **overrides)


def _load_seeds(source, sample_dir, img, mask, cfg, seed):
    if source == "gt":
        return SeedSet.read(sample_dir)
    if source == "gi":
        return gray_index_seeds(img, cfg["m"], k=cfg["k"], mask=mask,
                                percentile=cfg["percentile"], rng_seed=seed)
    raise ConfigurationError(f"unknown seed source {source!r}")


def _estimate_one(item):
    ident, p = item
    cfg, src, dst = p["cfg"], Path(p["src"]), Path(p["out"]) / ident
    name = cfg["estimator"]
    img = dataset.load_image(src, "biased")
    mask = dataset.load_mask(src)
    dst.mkdir(parents=True, exist_ok=True)
    meta = {"id": ident, "estimator": name}
    if name in PRESETS:
        ecfg = EstimatorConfig.from_dict(p["ecfg"])
        ill = estimate(name, img, ecfg, mask)
        meta.update(illuminant=ill.tolist(), estimator_config=ecfg.to_dict(),
                    protocol="single illuminant broadcast to a uniform map")
        illum = uniform_map(ill, img.shape)
    elif name == "doing-nothing":
        meta.update(illuminant=NEUTRAL.tolist())
        illum = uniform_map(NEUTRAL, img.shape)
    else:
        if name == "oracle":
            seeds = SeedSet.read(src)
            prob, resid = oracle_probabilities(dataset.load_illum(src), seeds)
            meta["max_residual"] = float(resid.max())
        else:
            seeds = _load_seeds(cfg["seeds"], src, img, mask, cfg, p["seed"])
            if name == "seed-diffusion":
                sigma_s = cfg["sigma_spatial_frac"] * math.hypot(*img.shape[:2])
                prob = seed_diffusion_estimate(img, seeds, cfg["sigma_chroma"], sigma_s, mask)
                meta.update(sigma_chroma=cfg["sigma_chroma"], sigma_spatial=sigma_s)
            else:
                prob = import_probability_map(Path(cfg["import_dir"]) / f"{ident}.pmap")
            meta["seed_source"] = cfg["seeds"]
        seeds.write(dst)
        export_probability_map(dst / "prob.pmap", prob)
        illum = reconstruct_illumination(prob, seeds)
    io.write_pfm(dst / "illum.pfm", illum)
    io.write_json(dst / "meta.json", meta)


def cmd_estimate(cfg):
    if cfg["estimator"] not in ESTIMATORS:
        raise ConfigurationError(f"unknown estimator {cfg['estimator']!r}; choose from {ESTIMATORS}")
    if cfg["estimator"] == "import" and not cfg["import_dir"]:
        raise ConfigurationError("--estimator import needs --import-dir")
    ecfg = _estimator_config(cfg).to_dict() if cfg["estimator"] in PRESETS else None
    samples = dataset.read_manifest(cfg["dataset"])
    items = [(i, {"cfg": cfg, "ecfg": ecfg, "src": str(d), "out": cfg["out"],
                  "seed": _sample_seed(cfg["rng_seed"], i)}) for i, d in samples.items()]
    results = _run_parallel(_guard(_estimate_one), items, cfg["jobs"])
    return _finish(cfg["out"], results, "predictions")


# -- correct -----------------------------------------------------------------

def _correct_one(item):
    ident, p = item
    img = dataset.load_image(p["src"], "biased")
    illum = io.read_pfm(Path(p["pred"]) / "illum.pfm")
    out = von_kries_correct(img, illum, mask=dataset.load_mask(p["src"]))
    dst = Path(p["out"]) / ident
    dst.mkdir(parents=True, exist_ok=True)
    if p["format"] == "pfm":
        io.write_pfm(dst / "corrected.pfm", out)
    else:
        io.write_png16(dst / "corrected.png16", out)


def _aligned(cfg):
    gt = dataset.read_manifest(cfg["dataset"])
    pred = dataset.read_manifest(cfg["predictions"])
    common = sorted(set(gt) & set(pred))
    for i in sorted(set(gt) ^ set(pred)):
        log.warning("id %s present in only one manifest; excluded", i)
    if not common:
        raise ConfigurationError("dataset and predictions share no ids")
    return gt, pred, common


def cmd_correct(cfg):
    gt, pred, ids = _aligned(cfg)
    items = [(i, {"src": str(gt[i]), "pred": str(pred[i]), "out": cfg["out"],
                  "format": cfg["format"]}) for i in ids]
    results = _run_parallel(_guard(_correct_one), items, cfg["jobs"])
    return _finish(cfg["out"], results, "corrected")


# -- seeds -------------------------------------------------------------------

def _seeds_one(item):
    ident, p = item
    img = dataset.load_image(p["src"], "biased")
    seeds = gray_index_seeds(img, p["m"], k=p["k"], mask=dataset.load_mask(p["src"]),
                             percentile=p["percentile"], rng_seed=p["seed"])
    dst = Path(p["out"]) / ident
    dst.mkdir(parents=True, exist_ok=True)
    seeds.write(dst)


def cmd_seeds(cfg):
    samples = dataset.read_manifest(cfg["dataset"])
    items = [(i, {"src": str(d), "out": cfg["out"], "m": cfg["m"], "k": cfg["k"],
                  "percentile": cfg["percentile"], "seed": _sample_seed(cfg["rng_seed"], i)})
             for i, d in samples.items()]
    results = _run_parallel(_guard(_seeds_one), items, cfg["jobs"])
    return _finish(cfg["out"], results, "seeds")


# -- evaluate ----------------------------------------------------------------

def _evaluate_one(item):
    ident, p = item
    gt = dataset.load_illum(p["src"])
    pred = io.read_pfm(Path(p["pred"]) / "illum.pfm")
    mask = dataset.load_mask(p["src"])
    res = map_angular_error(gt, pred, mask)
    valid = ~np.isnan(res.per_pixel)
    pixel_stats = summarize(res.per_pixel[valid])
    gt_single = normalize(np.median(gt[valid], axis=0))
    pmeta_path = Path(p["pred"]) / "meta.json"
    pmeta = io.read_json(pmeta_path) if pmeta_path.exists() else {}
    pred_single = normalize(pmeta.get("illuminant") or np.median(pred[valid], axis=0))
    single = angular_error(gt_single, pred_single)
    if p["visualize"]:
        vis = Path(p["out"]) / "vis"
        vis.mkdir(exist_ok=True)
        scale = max(gt.max(), pred.max(), 1e-12)
        io.write_png8(vis / f"{ident}_gt.png", gt / scale)
        io.write_png8(vis / f"{ident}_pred.png", pred / scale)
        biased = dataset.load_image(p["src"], "biased")
        corr = von_kries_correct(biased, np.maximum(pred, 1e-3) / scale)
        io.write_png8(vis / f"{ident}_corrected.png", corr / max(corr.max(), 1e-12))
    return pixel_stats, single, pmeta.get("estimator")


def cmd_evaluate(cfg):
    gt, pred, ids = _aligned(cfg)
    out = Path(cfg["out"])
    items = [(i, {"src": str(gt[i]), "pred": str(pred[i]), "out": str(out),
                  "visualize": cfg["visualize"]}) for i in ids]
    results = _run_parallel(_guard(_evaluate_one), items, cfg["jobs"])
    good = [(i, r) for i, err, r in results if err is None]
    failed = {i: err for i, err, _ in results if err is not None}
    for i, err in failed.items():
        log.error("sample %s failed: %s", i, err)
    if not good:
        raise ConfigurationError("no sample could be evaluated")
    write_csv(out / "per_image.csv", [(i, r[0]) for i, r in good])
    method = cfg["method"] or next((r[2] for _, r in good if r[2]), "unknown")
    report = make_report(
        [
            (method, "map", summarize([r[0].mean for _, r in good])),
            (method, "single-illuminant", summarize([r[1] for _, r in good])),
        ],
        {
            "averaging": "map protocol: per-image mean of per-pixel errors, then dataset statistics",
            "single_illuminant": "per-image median illuminant of each map (classical estimators "
                                 "use their own single estimate), one angular error per image",
            "units": "degrees",
            "n_images": len(good),
            "excluded_ids": sorted(set(gt) ^ set(pred)),
            "failed_ids": sorted(failed),
            "config": _serializable(cfg),
        },
    )
    write_report(out / "report.json", report)
    if failed:
        with open(out / "errors.log", "w") as fh:
            for i in sorted(failed):
                fh.write(f"{i}: {failed[i]}\n")
    return 1 if failed else 0


# -- losses ------------------------------------------------------------------

def _losses_one(item):
    ident, p = item
    src, pred = Path(p["src"]), Path(p["pred"])
    seeds = SeedSet.read(pred) if (pred / "seeds.json").exists() else SeedSet.read(src)
    prob = import_probability_map(pred / "prob.pmap")
    return total_loss(
        dataset.load_illum(src), prob, dataset.load_image(src, "biased"),
        dataset.load_image(src, "corrected"), seeds, lam=p["lam"], mask=dataset.load_mask(src),
    ).to_dict()


def cmd_losses(cfg):
    gt, pred, ids = _aligned(cfg)
    items = [(i, {"src": str(gt[i]), "pred": str(pred[i]), "lam": cfg["lam"]}) for i in ids]
    results = _run_parallel(_guard(_losses_one), items, cfg["jobs"])
    per = {i: r for i, err, r in results if err is None}
    failed = {i: err for i, err, _ in results if err is not None}
    agg = {}
    if per:
        for key in ("illum", "rgb", "masks", "total_supervised"):
            agg[key] = math.fsum(r[key] for r in per.values()) / len(per)
    io.write_json(Path(cfg["out"]) / "losses.json", {
        "schema": 1, "lambda": cfg["lam"], "gan": "absent", "samples": per,
        "aggregate": agg, "failed": failed,
    })
    for i, err in sorted(failed.items()):
        log.error("sample %s failed: %s", i, err)
    return 1 if failed else 0


# -- split -------------------------------------------------------------------

def cmd_split(cfg):
    if cfg["dataset"]:
        ids = list(dataset.read_manifest(cfg["dataset"]))
    elif cfg["ids"]:
        ids = [ln.strip() for ln in Path(cfg["ids"]).read_text().splitlines() if ln.strip()]
    else:
        raise ConfigurationError("split needs --dataset or --ids")
    train, test = split_dataset(ids, cfg["train_fraction"], cfg["rng_seed"])
    io.write_json(Path(cfg["out"]) / "split.json", {
        "schema": 1, "train": train, "test": test,
        "train_fraction": cfg["train_fraction"], "rng_seed": cfg["rng_seed"],
    })
    return 0


COMMANDS = {
    "augment": cmd_augment,
    "estimate": cmd_estimate,
    "correct": cmd_correct,
    "seeds": cmd_seeds,
    "evaluate": cmd_evaluate,
    "losses": cmd_losses,
    "split": cmd_split,
}


def _serializable(cfg):
    return {k: v for k, v in sorted(cfg.items()) if k not in ("config", "command", "jobs")}


def build_parser():
    parser = argparse.ArgumentParser(prog="mixcc", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--rng-seed", dest="rng_seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    common.add_argument("--format", choices=("png16", "pfm"))
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_,
                              argument_default=argparse.SUPPRESS)

    p = add("augment", "synthesize multi-illuminant samples")
    p.add_argument("--images")
    p.add_argument("--segments", help="directory of <id>.png label maps")
    p.add_argument("--synthetic-segments", dest="synthetic_segments", action="store_true")
    p.add_argument("--pool", help="JSON illuminant pool")
    p.add_argument("--gt-illuminants", dest="gt_illuminants",
                   help="JSON {id: rgb} used to bring inputs to canonical first")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--feather-sigma", dest="feather_sigma", type=float)

    p = add("estimate", "predict illumination maps")
    p.add_argument("--dataset")
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--minkowski-p", dest="minkowski_p", type=float)
    p.add_argument("--derivative-order", dest="derivative_order", type=int)
    p.add_argument("--smoothing-sigma", dest="smoothing_sigma", type=float)
    p.add_argument("--saturation-threshold", dest="saturation_threshold", type=float)
    p.add_argument("--seeds", choices=("gi", "gt"))
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--percentile", type=float)
    p.add_argument("--sigma-chroma", dest="sigma_chroma", type=float)
    p.add_argument("--sigma-spatial-frac", dest="sigma_spatial_frac", type=float)
    p.add_argument("--import-dir", dest="import_dir")

    p = add("correct", "apply predicted maps to the biased images")
    p.add_argument("--dataset")
    p.add_argument("--predictions")

    p = add("seeds", "gray-pixel seed extraction")
    p.add_argument("--dataset")
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--percentile", type=float)

    p = add("evaluate", "angular-error report")
    p.add_argument("--dataset")
    p.add_argument("--predictions")
    p.add_argument("--method", help="row label in the report")
    p.add_argument("--visualize", action="store_true")

    p = add("losses", "supervised loss terms for probability maps")
    p.add_argument("--dataset")
    p.add_argument("--predictions")
    p.add_argument("--lambda", dest="lam", type=float)

    p = add("split", "train/test split")
    p.add_argument("--dataset")
    p.add_argument("--ids", help="text file, one id per line")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    return parser


def resolve_config(args):
    """Merge defaults, the config file and explicit flags (flags win)."""
    command = args["command"]
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(DEFAULTS[command])
    if args.get("config"):
        doc = io.read_json(args["config"])
        if doc.get("command", command) != command:
            raise ConfigurationError(f"config is for {doc['command']!r}, not {command!r}")
        params = doc.get("config", doc)
        cfg.update({k: v for k, v in params.items() if not isinstance(v, dict) and k in cfg})
        cfg.update({k: v for k, v in params.get(command, {}).items() if k in cfg})
    cfg.update({k: v for k, v in args.items() if k in cfg})
    cfg["command"] = command
    if not cfg["out"]:
        raise ConfigurationError("--out is required")
    return cfg


def main(argv=None):
    args = vars(build_parser().parse_args(argv))
    logging.basicConfig(level=logging.INFO if args.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "run.json", {"command": cfg["command"], "config": _serializable(cfg)})
        return COMMANDS[cfg["command"]](cfg)
    except (ConfigurationError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
