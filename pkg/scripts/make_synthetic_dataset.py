#!/usr/bin/env python3
"""Generate a synthetic loop dataset (KITTI-style .bin clouds + poses)."""

import argparse
from pathlib import Path

from polarscan.synth import loop_dataset, write_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="dataset directory to create")
    parser.add_argument("--frames", type=int, default=400)
    parser.add_argument("--lap", type=int, default=220,
                        help="frames per traversal of the course")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    clouds, poses = loop_dataset(n_frames=args.frames, lap_frames=args.lap, seed=args.seed)
    write_dataset(args.out, clouds, poses)
    print(f"wrote {args.frames} frames under {args.out} (lap = {args.lap} frames)")


if __name__ == "__main__":
    main()
