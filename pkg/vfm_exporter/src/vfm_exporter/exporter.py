"""Run the backbone over PPRJ images and write PFEA token grids."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backbone import BackboneError, TokenBackbone, normalize_planes
from .formats import FormatError, read_pprj, write_pfea
from .manifest import ExportManifest, FrameSpec


@dataclass
class ExportSummary:
    written: list[Path] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)  # (frame_id, why)

    @property
    def ok(self) -> bool:
        return not self.failures


def _load_planes(spec: FrameSpec, manifest: ExportManifest) -> np.ndarray:
    blob = spec.input_path.read_bytes()
    proj = read_pprj(blob)
    h, w = proj.data.shape[:2]
    if (h, w) != manifest.input_size:
        raise FormatError(
            f"image is {h}x{w}, manifest expects {manifest.input_size[0]}x{manifest.input_size[1]}"
        )
    missing = [c for c in manifest.channels if c not in proj.channel_labels]
    if missing:
        raise KeyError(f"missing channel(s): {', '.join(missing)}")
    return np.stack([proj.channel(c) for c in manifest.channels])


def _atomic_write(path: Path, blob: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_features(manifest: ExportManifest) -> ExportSummary:
    """One PFEA per manifest frame; per-frame problems are collected,
    a model load failure aborts the whole run."""
    backbone = TokenBackbone(
        model_id=manifest.model,
        image_size=manifest.input_size,
        patch=manifest.patch,
        weights=manifest.weights,
        seed=manifest.seed,
    )
    summary = ExportSummary()
    for spec in manifest.frames:
        try:
            planes = _load_planes(spec, manifest)
            planes = normalize_planes(planes, manifest.normalization)
            # one frame per forward: token values independent of batch grouping
            tokens = backbone.token_grid(planes)
            _atomic_write(spec.output_path, write_pfea(tokens, spec.frame_id))
            summary.written.append(spec.output_path)
        except (OSError, FormatError, KeyError, ValueError) as exc:
            summary.failures.append((spec.frame_id, str(exc)))
    return summary


__all__ = ["ExportSummary", "export_features", "BackboneError"]
