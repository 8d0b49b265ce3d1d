"""Export manifest: which frames to run, through which backbone, and how."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class FrameSpec:
    frame_id: int
    input_path: Path
    output_path: Path


@dataclass(frozen=True)
class ExportManifest:
    model: str
    weights: Path | None  # state-dict file; None = seeded random init
    seed: int
    input_size: tuple[int, int]
    patch: int
    normalization: str  # "imagenet" or "none"
    channels: tuple[str, str, str]
    frames: tuple[FrameSpec, ...]

    def __post_init__(self):
        if len(self.channels) != 3:
            raise ManifestError("backbone input needs exactly 3 channels")
        h, w = self.input_size
        if h < self.patch or w < self.patch:
            raise ManifestError("input size must be at least one patch")
        if h % self.patch or w % self.patch:
            raise ManifestError(
                f"input size {self.input_size} must be divisible by patch {self.patch}"
            )
        if self.normalization not in ("imagenet", "none"):
            raise ManifestError("normalization must be imagenet or none")


def load_manifest(path: Path) -> ExportManifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    try:
        frames = tuple(
            FrameSpec(
                frame_id=int(f["frame_id"]),
                input_path=(path.parent / f["input"]).resolve(),
                output_path=(path.parent / f["output"]).resolve(),
            )
            for f in payload["frames"]
        )
        weights = payload.get("weights")
        return ExportManifest(
            model=payload.get("model", "vit_b_16"),
            weights=(path.parent / weights).resolve() if weights else None,
            seed=int(payload.get("seed", 0)),
            input_size=tuple(int(v) for v in payload.get("input_size", (224, 224))),
            patch=int(payload.get("patch", 16)),
            normalization=payload.get("normalization", "imagenet"),
            channels=tuple(payload["channels"]),
            frames=frames,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"bad manifest field: {exc}") from None
