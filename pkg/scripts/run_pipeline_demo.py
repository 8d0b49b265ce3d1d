#!/usr/bin/env python3
"""End-to-end demo: synthesize a loop, project, encode, evaluate, report."""

import argparse
import tempfile
from pathlib import Path

from polarscan.cli import main as polarscan
from polarscan.synth import loop_dataset, write_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=None,
                        help="keep artifacts here instead of a temp dir")
    parser.add_argument("--head", choices=["meanstd", "vlad"], default="meanstd")
    parser.add_argument("--kind", choices=["bev", "polar", "range", "front"],
                        default="polar")
    args = parser.parse_args()

    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="polarscan_demo_"))
    data = workdir / "data"
    out = workdir / f"out_{args.kind}_{args.head}"
    clouds, poses = loop_dataset(n_frames=400, lap_frames=220, seed=5)
    write_dataset(data, clouds, poses)

    project_args = [
        "project",
        "--clouds-dir", str(data / "clouds"),
        "--profile", str(data / "sensor.txt"),
        "--kind", args.kind,
        "--height", "10" if args.kind in ("range", "front") else "64",
        "--width", "64",
        "--channels", "height,intensity",
        "--max-range", "60",
        "--out", str(out),
    ]
    if args.kind == "front":
        project_args += ["--fov=-1.5708,1.5708"]
    assert polarscan(project_args) == 0
    assert polarscan([
        "encode", "--encoder", "baseline", "--patch", "16", "--c-out", "64",
        "--head", args.head, "--out", str(out),
    ]) == 0
    assert polarscan([
        "eval", "--poses", str(data / "poses.csv"),
        "--regime", "intra", "--split", "220", "--offset", "200",
        "--tau", "5", "--out", str(out),
    ]) == 0
    assert polarscan([
        "report", str(out / "records.csv"),
        "--poses", str(data / "poses.csv"), "--out", str(out / "report"),
    ]) == 0
    print(f"artifacts under {out}")


if __name__ == "__main__":
    main()
