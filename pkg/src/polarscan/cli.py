"""Command-line pipeline: project -> encode -> eval -> report.

Exit codes: 0 success, 1 runtime failure (e.g. unreadable frames),
2 usage/config/format error.
"""

from __future__ import annotations

import argparse
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import aggregation, cloud, features, metrics, projections, retrieval
from .config import RunConfig
from .errors import (
    ConfigError,
    FormatError,
    ParseError,
    PolarscanError,
    ValidationError,
)

_FRAME_RE = re.compile(r"(\d+)")


def _frame_id_of(path: Path, fallback: int) -> int:
    m = _FRAME_RE.search(path.stem)
    return int(m.group(1)) if m else fallback


def _load_cloud(path: Path, frame_id: int, timestamp: float) -> cloud.PointCloud:
    if path.suffix == ".bin":
        return cloud.parse_kitti_bin(path.read_bytes(), frame_id, timestamp)
    if path.suffix == ".csv":
        return cloud.parse_csv(path.read_text(), frame_id, timestamp)
    raise FormatError(f"unsupported cloud file type: {path.name}")


def cmd_project(cfg: RunConfig, png_channel: str | None = None) -> int:
    """Rasterize every cloud in the dataset to a PPRJ file."""
    clouds_dir = cfg.clouds_dir()
    paths = sorted(
        p for p in clouds_dir.iterdir() if p.suffix in (".bin", ".csv")
    )
    if not paths:
        raise ConfigError(f"no .bin or .csv clouds in {clouds_dir}")
    proj_cfg = cfg.projection()
    profile = None
    if cfg.profile_path() is not None:
        profile = cloud.load_sensor_profile(cfg.profile_path().read_text())
    if proj_cfg.kind in (projections.ProjectionKind.RANGE, projections.ProjectionKind.FRONT):
        if profile is None:
            raise ConfigError(f"{proj_cfg.kind.name} projection requires dataset.profile")
    roi = cfg.roi()
    ground_z = cfg.ground_z()
    k = cfg.curvature_k()
    need_curvature = "curvature" in proj_cfg.channels
    out_dir = cfg.output_dir() / "projections"
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(item):
        seq, path = item
        pc = _load_cloud(path, _frame_id_of(path, seq), timestamp=0.0)
        if roi is not None or ground_z is not None:
            box = roi if roi is not None else _everything_box(pc)
            pc = cloud.crop_filter(pc, box, ground_z)
        if need_curvature:
            pc = cloud.estimate_curvature(pc, k=k)
        img = projections.project(pc, profile, proj_cfg)
        return img

    failures = 0
    with ThreadPoolExecutor(max_workers=cfg.jobs()) as pool:
        futures = [(path, pool.submit(work, (seq, path))) for seq, path in enumerate(paths)]
        for path, fut in futures:
            try:
                img = fut.result()
            except Exception as exc:
                failures += 1
                print(f"error: {path.name}: {exc}", file=sys.stderr)
                continue
            target = out_dir / f"frame_{img.frame_id:06d}.pprj"
            target.write_bytes(projections.save_pprj(img))
            if png_channel is not None:
                png = projections.render_png(img, png_channel)
                (out_dir / f"frame_{img.frame_id:06d}_{png_channel}.png").write_bytes(png)
    print(f"projected {len(paths) - failures}/{len(paths)} frames -> {out_dir}")
    return 1 if failures else 0


def _everything_box(pc: cloud.PointCloud) -> cloud.Box:
    lo = pc.xyz.min(axis=0) - 1.0
    hi = pc.xyz.max(axis=0) + 1.0
    return cloud.Box(tuple(lo), tuple(hi))


def _load_feature_maps(cfg: RunConfig) -> list[features.FeatureMap]:
    if cfg.encoder_type() == "external":
        paths = sorted(cfg.features_dir().glob("*.pfea"))
        if not paths:
            raise ConfigError(f"no .pfea files in {cfg.features_dir()}")
        return [features.load_feature_map(p.read_bytes()) for p in paths]
    proj_dir = cfg.output_dir() / "projections"
    paths = sorted(proj_dir.glob("*.pprj"))
    if not paths:
        raise ConfigError(f"no .pprj files in {proj_dir}; run `project` first")
    patch = cfg._int("encoder.patch")
    c_out = cfg._int("encoder.c_out")
    with ThreadPoolExecutor(max_workers=cfg.jobs()) as pool:
        return list(
            pool.map(
                lambda p: features.baseline_encode(
                    projections.load_pprj(p.read_bytes(), _frame_id_of(p, 0)),
                    patch=patch,
                    c_out=c_out,
                ),
                paths,
            )
        )


def cmd_encode(cfg: RunConfig) -> int:
    """Turn projections (or external feature maps) into a PDSC descriptor set."""
    maps = _load_feature_maps(cfg)
    head = cfg.head_type()
    if head == "vlad":
        cb = _codebook_for(cfg, maps)
        descs = [aggregation.vlad_aggregate(fm, cb) for fm in maps]
    else:
        descs = [aggregation.mean_std_pool(fm) for fm in maps]
    dims = {d.dim for d in descs}
    if len(dims) > 1:
        raise ValidationError(f"mixed descriptor dimensions: {sorted(dims)}")
    descs = [aggregation.l2_normalize(d) for d in descs]
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / "descriptors.pdsc"
    target.write_bytes(aggregation.save_descriptors(descs))
    print(f"encoded {len(descs)} descriptors (L={descs[0].dim}) -> {target}")
    return 0


def _codebook_for(cfg: RunConfig, maps: list[features.FeatureMap]) -> aggregation.VladCodebook:
    path = cfg.codebook_path()
    if path.is_file():
        return aggregation.load_codebook(path.read_bytes())
    seed = cfg._int("head.seed")
    k = cfg._int("head.k")
    alpha = cfg._float("head.alpha")
    tokens = np.concatenate([features.flatten_tokens(fm) for fm in maps])
    limit = 20_000
    if tokens.shape[0] > limit:  # seeded subsample keeps init reproducible
        sel = np.random.default_rng(seed).choice(tokens.shape[0], size=limit, replace=False)
        tokens = tokens[np.sort(sel)]
    cb = aggregation.init_codebook(tokens, k=k, seed=seed, alpha=alpha)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(aggregation.save_codebook(cb))
    print(f"initialized codebook K={k} -> {path}")
    return cb


def _load_index(descriptors_path: Path, poses_path: Path) -> retrieval.DescriptorIndex:
    descs = aggregation.load_descriptors(descriptors_path.read_bytes())
    poses = cloud.load_poses(poses_path.read_text())
    return retrieval.build_index(descs, poses)


def cmd_eval(cfg: RunConfig) -> int:
    """Run the configured regime and write report + records + PR curve."""
    out_dir = cfg.output_dir()
    desc_path = Path(cfg.get("eval.descriptors") or out_dir / "descriptors.pdsc")
    if not desc_path.is_file():
        raise ConfigError(f"descriptor file not found: {desc_path}")
    index = _load_index(desc_path, cfg.poses_path())
    regime = cfg.regime(n_frames=len(index))
    gt = cfg.ground_truth()
    query_index = None
    if regime.regime is retrieval.Regime.INTER:
        q_desc = cfg.get("eval.query_descriptors")
        q_poses = cfg.get("eval.query_poses")
        if q_desc is None or q_poses is None:
            raise ConfigError("INTER regime needs eval.query_descriptors and eval.query_poses")
        query_index = _load_index(Path(q_desc), Path(q_poses))
    records = retrieval.run_regime(index, regime, gt, query_index=query_index)
    report = metrics.build_report(records)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(metrics.report_to_json(report))
    (out_dir / "records.csv").write_text(retrieval.records_to_csv(records))
    (out_dir / "pr_curve.csv").write_text(metrics.curve_to_csv(report.curve))
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"R@1={report.recall_at_1:.4f} maxF1={report.max_f1:.4f} AUC={report.pr_auc:.4f}"
    )
    return 0


def cmd_report(records_paths: list[Path], poses_path: Path | None, out_dir: Path) -> int:
    """Tabulate metrics across runs; optionally emit match maps for plotting."""
    poses = None
    if poses_path is not None:
        poses = cloud.load_poses(poses_path.read_text())
    rows = []
    for path in records_paths:
        records = retrieval.records_from_csv(path.read_text())
        report = metrics.build_report(records)
        rows.append((path.stem, report))
        if poses is not None:
            map_csv = _match_map(records, poses)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / f"{path.stem}_map.csv").write_text(map_csv)
    header = f"{'run':<24}{'R@1':>8}{'maxF1':>8}{'AUC':>8}{'queries':>9}"
    lines = [header]
    for name, rep in rows:
        lines.append(
            f"{name:<24}{rep.recall_at_1:>8.4f}{rep.max_f1:>8.4f}"
            f"{rep.pr_auc:>8.4f}{rep.n_queries_with_positives:>9d}"
        )
    table = "\n".join(lines)
    print(table)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_lines = ["run,recall_at_1,max_f1,pr_auc,n_queries_with_positives"]
    for name, rep in rows:
        csv_lines.append(
            f"{name},{rep.recall_at_1!r},{rep.max_f1!r},{rep.pr_auc!r},{rep.n_queries_with_positives}"
        )
    (out_dir / "comparison.csv").write_text("\n".join(csv_lines) + "\n")
    return 0


def _match_map(records: list[retrieval.QueryRecord], poses: cloud.PoseTrack) -> str:
    pos_of = {int(f): poses.positions[i] for i, f in enumerate(poses.frame_ids)}
    lines = ["qx,qy,mx,my,correct"]
    for r in records:
        if not r.has_any_positive:
            continue
        if r.query_frame not in pos_of or r.top1_frame not in pos_of:
            raise FormatError(f"frame {r.query_frame} or {r.top1_frame} missing from poses")
        q = pos_of[r.query_frame]
        m = pos_of[r.top1_frame]
        lines.append(
            f"{float(q[0])!r},{float(q[1])!r},{float(m[0])!r},{float(m[1])!r},"
            f"{int(r.is_positive)}"
        )
    return "\n".join(lines) + "\n"


_OVERRIDE_KEYS = {
    "clouds_dir": "dataset.clouds_dir",
    "poses": "dataset.poses",
    "profile": "dataset.profile",
    "ground_z": "preprocess.ground_z",
    "roi": "preprocess.roi",
    "curvature_k": "preprocess.curvature_k",
    "kind": "projection.kind",
    "height": "projection.height",
    "width": "projection.width",
    "channels": "projection.channels",
    "max_range": "projection.max_range",
    "fov": "projection.fov",
    "extent": "projection.extent",
    "output_height": "projection.output_height",
    "output_width": "projection.output_width",
    "encoder": "encoder.type",
    "patch": "encoder.patch",
    "c_out": "encoder.c_out",
    "features_dir": "encoder.features_dir",
    "head": "head.type",
    "codebook": "head.codebook",
    "k": "head.k",
    "alpha": "head.alpha",
    "seed": "head.seed",
    "regime": "regime.type",
    "split": "regime.split",
    "offset": "regime.offset",
    "w": "regime.window",
    "delta": "regime.lag",
    "tau": "gt.tau",
    "delta_t": "gt.delta_t",
    "gt_mode": "gt.mode",
    "descriptors": "eval.descriptors",
    "query_descriptors": "eval.query_descriptors",
    "query_poses": "eval.query_poses",
    "out": "output.dir",
    "jobs": "jobs",
}


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for attr, key in _OVERRIDE_KEYS.items():
        if hasattr(args, attr) and getattr(args, attr) is not None:
            overrides[key] = str(getattr(args, attr))
    return RunConfig.load(getattr(args, "config", None), overrides)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", help="worker threads (env POLARSCAN_JOBS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polarscan",
        description="LiDAR place recognition via 2-D projections",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="rasterize clouds into PPRJ images")
    _add_common(p)
    p.add_argument("--clouds-dir", dest="clouds_dir")
    p.add_argument("--profile")
    p.add_argument("--kind", choices=["bev", "polar", "range", "front"])
    p.add_argument("--height")
    p.add_argument("--width")
    p.add_argument("--channels", help="comma list of height,range,intensity,curvature")
    p.add_argument("--max-range", dest="max_range")
    p.add_argument("--fov", help="a_min,a_max radians (front)")
    p.add_argument("--extent", help="per_frame or fixed:<params>")
    p.add_argument("--output-height", dest="output_height")
    p.add_argument("--output-width", dest="output_width")
    p.add_argument("--ground-z", dest="ground_z")
    p.add_argument("--roi", help="x0,x1,y0,y1,z0,z1")
    p.add_argument("--curvature-k", dest="curvature_k")
    p.add_argument("--png", dest="png_channel", help="also render this channel as PNG")

    p = sub.add_parser("encode", help="aggregate feature maps into descriptors")
    _add_common(p)
    p.add_argument("--encoder", choices=["baseline", "external"])
    p.add_argument("--patch")
    p.add_argument("--c-out", dest="c_out")
    p.add_argument("--features-dir", dest="features_dir")
    p.add_argument("--head", choices=["meanstd", "vlad"])
    p.add_argument("--codebook")
    p.add_argument("--k")
    p.add_argument("--alpha")
    p.add_argument("--seed")

    p = sub.add_parser("eval", help="run a regime and write the metric report")
    _add_common(p)
    p.add_argument("--poses")
    p.add_argument("--descriptors")
    p.add_argument("--regime", choices=["intra", "inter", "time_window"])
    p.add_argument("--split")
    p.add_argument("--offset")
    p.add_argument("--w")
    p.add_argument("--delta")
    p.add_argument("--tau")
    p.add_argument("--delta-t", dest="delta_t")
    p.add_argument("--gt-mode", dest="gt_mode", choices=["frames", "seconds"])
    p.add_argument("--query-descriptors", dest="query_descriptors")
    p.add_argument("--query-poses", dest="query_poses")

    p = sub.add_parser("report", help="tabulate one or more records CSVs")
    p.add_argument("records", nargs="+")
    p.add_argument("--poses", help="poses CSV for the match-map output")
    p.add_argument("--out", default="out")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "project":
            cfg = _config_from_args(args)
            return cmd_project(cfg, png_channel=args.png_channel)
        if args.command == "encode":
            cfg = _config_from_args(args)
            return cmd_encode(cfg)
        if args.command == "eval":
            cfg = _config_from_args(args)
            return cmd_eval(cfg)
        if args.command == "report":
            return cmd_report(
                [Path(p) for p in args.records],
                Path(args.poses) if args.poses else None,
                Path(args.out),
            )
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, FormatError, ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PolarscanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
