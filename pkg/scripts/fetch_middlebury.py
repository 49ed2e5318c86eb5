#!/usr/bin/env python3
"""Fetch the Tsukuba stereo pair and write the benchmark layout.

Downloads the head-and-lamp RGB stereo sequence from the Middlebury
stereo archive and converts it into the directory layout the evaluation
harness expects for a cross-spectral pair:

    data/middlebury/tsukuba/
        left.ppm      RGB reference image (row 3, col 3)
        right.ppm     RGB matching image (row 3, col 4)
        gt.pgm        raw ground truth, disparity * 16
        meta.json     {"gt_scale": 16.0, "disparity_range": [0, 16]}

The ground truth is defined for the reference image with positive
disparity toward the matching camera (x_right = x_left - d).  Pass a
different --dest to place the tree elsewhere; the acceptance tests look
under data/middlebury/tsukuba relative to the repository root.

Needs network access; run it once on a machine that has it, then copy
the directory into the sandbox if needed.
"""

import argparse
import json
import os
import sys
import urllib.request

BASE = "https://vision.middlebury.edu/stereo/data/scenes2001/data/tsukuba"
FILES = {
    "left.ppm": "scene1.row3.col3.ppm",
    "right.ppm": "scene1.row3.col4.ppm",
    "gt.pgm": "truedisp.row3.col3.pgm",
}
META = {"gt_scale": 16.0, "disparity_range": [0, 16]}


def fetch(url, dest):
    print(f"fetching {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        data = resp.read()
    with open(dest, "wb") as f:
        f.write(data)
    print(f"  wrote {dest} ({len(data)} bytes)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--dest", default="data/middlebury/tsukuba",
                    help="output directory (default: %(default)s)")
    ap.add_argument("--force", action="store_true",
                    help="re-download files that already exist")
    args = ap.parse_args()

    os.makedirs(args.dest, exist_ok=True)
    for local, remote in FILES.items():
        path = os.path.join(args.dest, local)
        if os.path.exists(path) and not args.force:
            print(f"keeping existing {path}")
            continue
        try:
            fetch(f"{BASE}/{remote}", path)
        except Exception as exc:
            print(f"failed to fetch {remote}: {exc}", file=sys.stderr)
            sys.exit(1)
    with open(os.path.join(args.dest, "meta.json"), "w") as f:
        json.dump(META, f, indent=2)
    print(f"done; pair ready under {args.dest}")


if __name__ == "__main__":
    main()
