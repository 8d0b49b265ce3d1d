#!/usr/bin/env python3
"""Run all four projections over one synthetic loop and tabulate the metrics.

Mirrors the projection-comparison experiment shape: same encoder, same head,
same regime, only the 2-D mapping changes.
"""

import argparse
import tempfile
from pathlib import Path

from polarscan.cli import main as polarscan
from polarscan.synth import loop_dataset, write_dataset

KINDS = ("bev", "polar", "range", "front")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=None)
    parser.add_argument("--head", choices=["meanstd", "vlad"], default="meanstd")
    parser.add_argument("--frames", type=int, default=400)
    args = parser.parse_args()

    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="polarscan_cmp_"))
    data = workdir / "data"
    clouds, poses = loop_dataset(
        n_frames=args.frames, lap_frames=args.frames // 2 + 20, seed=5, noise=0.05
    )
    write_dataset(data, clouds, poses)

    records = []
    for kind in KINDS:
        out = workdir / f"out_{kind}"
        project_args = [
            "project",
            "--clouds-dir", str(data / "clouds"),
            "--profile", str(data / "sensor.txt"),
            "--kind", kind,
            "--height", "10" if kind in ("range", "front") else "64",
            "--width", "64",
            "--channels", "height,intensity",
            "--max-range", "60",
            "--out", str(out),
        ]
        if kind == "front":
            project_args += ["--fov=-1.5708,1.5708"]
        assert polarscan(project_args) == 0
        assert polarscan([
            "encode", "--encoder", "baseline", "--patch", "16", "--c-out", "64",
            "--head", args.head, "--out", str(out),
        ]) == 0
        assert polarscan([
            "eval", "--poses", str(data / "poses.csv"),
            "--regime", "intra",
            "--split", str(args.frames // 2 + 20),
            "--offset", str(args.frames // 2),
            "--tau", "5", "--out", str(out),
        ]) == 0
        target = out / f"{kind}.csv"
        target.write_bytes((out / "records.csv").read_bytes())
        records.append(target)

    assert polarscan([
        "report", *[str(r) for r in records],
        "--poses", str(data / "poses.csv"),
        "--out", str(workdir / "comparison"),
    ]) == 0
    print(f"comparison table under {workdir / 'comparison'}")


if __name__ == "__main__":
    main()
