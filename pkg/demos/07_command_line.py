"""A full batch run through the command line, in a temporary directory.

Run: python3 demos/07_command_line.py
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from mixcc import io

rng = np.random.default_rng(6)


def mixcc(*args):
    cmd = [sys.executable, "-m", "mixcc", *map(str, args)]
    print("$ mixcc", " ".join(map(str, args[:1])), "...")
    return subprocess.run(cmd, check=False).returncode


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    (tmp / "images").mkdir()
    for i in range(6):
        io.write_pfm(tmp / "images" / f"img{i}.pfm", rng.uniform(0.05, 1, (48, 48, 3)))
    io.write_json(tmp / "pool.json", rng.uniform(0.2, 1, (10, 3)).tolist())

    mixcc("augment", "--images", tmp / "images", "--synthetic-segments", "--pool", tmp / "pool.json",
          "--n", 2, "--k", 8, "--feather-sigma", 3, "--format", "pfm", "--out", tmp / "aug")
    mixcc("split", "--dataset", tmp / "aug", "--train-fraction", 0.5, "--out", tmp / "split")

    for est in ("doing-nothing", "grey-world", "seed-diffusion"):
        mixcc("estimate", "--dataset", tmp / "aug", "--estimator", est, "--m", 2,
              "--percentile", 2, "--out", tmp / est)
        mixcc("evaluate", "--dataset", tmp / "aug", "--predictions", tmp / est, "--out", tmp / f"eval-{est}")

    mixcc("estimate", "--dataset", tmp / "aug", "--estimator", "oracle", "--out", tmp / "oracle")
    mixcc("losses", "--dataset", tmp / "aug", "--predictions", tmp / "oracle", "--out", tmp / "losses")

    print()
    print(f"{'method':16s} {'protocol':18s} {'mean':>6s} {'median':>6s} {'max':>6s}")
    for est in ("doing-nothing", "grey-world", "seed-diffusion"):
        report = json.loads((tmp / f"eval-{est}" / "report.json").read_text())
        for row in report["results"]:
            s = row["stats"]
            print(f"{est:16s} {row['protocol']:18s} {s['mean']:6.2f} {s['median']:6.2f} {s['max']:6.2f}")
    agg = json.loads((tmp / "losses" / "losses.json").read_text())["aggregate"]
    print("oracle losses:", {k: f"{v:.1e}" for k, v in agg.items()})
    print("split:", json.loads((tmp / "split" / "split.json").read_text())["train"])
