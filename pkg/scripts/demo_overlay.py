#!/usr/bin/env python3
"""End-to-end demo on synthetic imagery.

Builds a store of clear street views, degrades the center view to simulate a
washed-out road, runs the overlay pipeline, and leaves the annotated frame,
diff image, and JSON report in the output directory.

Usage:
    python scripts/demo_overlay.py [--out demo_out] [--size 480]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from lanelock import cli, synth
from lanelock.config import PipelineConfig
from lanelock.imagestore import GeoPose, load_image
from lanelock.raster import save_png


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_out")
    ap.add_argument("--size", type=int, default=480)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store_dir = out / "store"
    store_dir.mkdir(exist_ok=True)

    world = synth.make_world(seed=args.seed)
    store = synth.build_store(store_dir, world, world.origin, width=args.size, height=args.size)
    current = synth.black_lower_third(load_image(store, store.get("grid_11")))
    current = synth.apply_gain_bias(current, 1.05, -4)
    save_png(current, out / "current.png")

    noisy_pose = GeoPose(
        world.origin.lat + 0.35e-4, world.origin.lon - 0.25e-4,
        world.origin.heading, world.origin.pitch,
    )
    code = cli.run_overlay(
        out / "current.png",
        noisy_pose,
        store_dir,
        PipelineConfig(),
        out / "annotated.png",
        out / "report.json",
        diff_path=out / "diff.png",
    )
    if code == 0:
        report = json.loads((out / "report.json").read_text())
        print(json.dumps(report, indent=2, sort_keys=True))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
