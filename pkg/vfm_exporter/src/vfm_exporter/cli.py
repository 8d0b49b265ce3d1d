"""CLI: `vfm-export export --manifest <path>`.

Exit codes: 0 all frames written, 1 some frames failed or runtime error,
2 bad manifest/usage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backbone import BackboneError
from .exporter import export_features
from .manifest import ManifestError, load_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vfm-export",
        description="Export backbone token grids (PFEA) from projection images (PPRJ)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="run the backbone over a manifest of frames")
    p.add_argument("--manifest", required=True, type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = load_manifest(args.manifest)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = export_features(manifest)
    except BackboneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for frame_id, why in summary.failures:
        print(f"error: frame {frame_id}: {why}", file=sys.stderr)
    print(f"exported {len(summary.written)}/{len(manifest.frames)} frames")
    return 0 if summary.ok else 1


if __name__ == "__main__":
    sys.exit(main())
