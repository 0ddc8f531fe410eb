#!/usr/bin/env python3
"""Generate the bundled evaluation fixtures for `lanelock eval`.

Builds a synthetic-world store plus two cases:

  self_retrieval   the current frame is a stored view with its lower third
                   painted out; the search must recover the stored pose
                   exactly and a feature homography within 1e-3 of identity.
  ecc_refinement   the current frame is an off-grid view with moved
                   distractor objects and a gain/bias photometric change;
                   masked ECC must strictly reduce the SSD.

Usage:
    python scripts/make_fixtures.py --out fixtures [--size 640] [--seed 0]
"""

from __future__ import annotations

import argparse
import dataclasses
import json
from pathlib import Path

from lanelock import synth
from lanelock.imagestore import GeoPose
from lanelock.raster import save_png


def expected_best_record(world, store, pose, width, height):
    """Geometric oracle: the record whose view window overlaps the query most
    (smallest distance between view centers on the world plane)."""
    qx, qy = synth.view_center(world, pose)

    def center_dist(rec):
        rx, ry = synth.view_center(world, rec.pose)
        return ((qx - rx) ** 2 + (qy - ry) ** 2) ** 0.5

    return min(store.records, key=lambda r: (center_dist(r), r.id))


def write_case(case_dir: Path, current, expected: dict) -> None:
    case_dir.mkdir(parents=True)
    save_png(current, case_dir / "current.png")
    with open(case_dir / "expected.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(expected, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="fixture directory to create")
    ap.add_argument("--size", type=int, default=640, help="image side in pixels")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    if out.exists():
        ap.error(f"{out} already exists")
    (out / "store").mkdir(parents=True)

    world = synth.make_world(seed=args.seed)
    center = world.origin
    store = synth.build_store(out / "store", world, center, step=1e-4, n=3,
                              width=args.size, height=args.size)

    def pose_list(p: GeoPose) -> list[float]:
        return [p.lat, p.lon, p.heading, p.pitch]

    # Case 1: degraded copy of the center view; exact self-retrieval.
    center_rec = store.get("grid_11")
    from lanelock.imagestore import load_image

    current1 = synth.black_lower_third(load_image(store, center_rec))
    pose0 = GeoPose(center.lat + 0.3e-4, center.lon - 0.2e-4, center.heading, center.pitch)
    write_case(
        out / "cases" / "self_retrieval",
        current1,
        {
            "pose0": pose_list(pose0),
            "expected_pose": pose_list(center_rec.pose),
            "h_expected": "identity",
            "h_tol": 1e-3,
            "require_ssd_improvement": False,
        },
    )

    # Case 2: off-grid view, moved distractors, photometric change.
    query_pose = GeoPose(center.lat + 0.4e-4, center.lon + 0.3e-4,
                         center.heading + 2.0, center.pitch)
    current2 = synth.view(world, query_pose, args.size, args.size)
    current2 = synth.add_distractors(current2, seed=args.seed + 100)
    current2 = synth.apply_gain_bias(current2, 1.12, -8)
    best = expected_best_record(world, store, query_pose, args.size, args.size)
    write_case(
        out / "cases" / "ecc_refinement",
        current2,
        {
            "pose0": pose_list(query_pose),
            "expected_pose": pose_list(best.pose),
            "h_expected": None,
            "require_ssd_improvement": True,
            "require_ecc_convergence": True,
        },
    )

    print(f"fixtures written to {out}")
    print("run them with:  lanelock eval --fixtures", out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
