"""Standalone readers/writers for the PPRJ and PFEA interchange formats.

These mirror the byte layouts of the projection pipeline's container files;
the exporter talks to that pipeline only through these files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

PPRJ_MAGIC = b"PPRJ"
PFEA_MAGIC = b"PFEA"
VERSION = 1
SOURCE_EXTERNAL = 1


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectionFile:
    data: np.ndarray  # (H, W, C) float32
    channel_labels: tuple[str, ...]
    kind: int
    fill_mask: np.ndarray  # (H, W) bool

    def channel(self, label: str) -> np.ndarray:
        if label not in self.channel_labels:
            raise KeyError(f"channel {label!r} not in {self.channel_labels}")
        return self.data[:, :, self.channel_labels.index(label)]


def read_pprj(blob: bytes) -> ProjectionFile:
    if len(blob) < 21 or blob[:4] != PPRJ_MAGIC:
        raise FormatError("bad PPRJ magic")
    version, h, w, c, kind = struct.unpack_from("<IIIIB", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported PPRJ version {version}")
    pos = 21
    labels = []
    for _ in range(c):
        if pos >= len(blob):
            raise FormatError("truncated channel table")
        ln = blob[pos]
        pos += 1
        labels.append(blob[pos : pos + ln].decode("ascii"))
        pos += ln
    need = h * w * c * 4 + h * w
    if len(blob) - pos != need:
        raise FormatError(f"expected {need} payload bytes, got {len(blob) - pos}")
    data = np.frombuffer(blob, dtype="<f4", count=h * w * c, offset=pos).reshape(h, w, c)
    mask = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=pos + h * w * c * 4)
    return ProjectionFile(
        data=data.copy(),
        channel_labels=tuple(labels),
        kind=kind,
        fill_mask=mask.reshape(h, w).astype(bool),
    )


def write_pfea(tokens: np.ndarray, frame_id: int) -> bytes:
    """Serialize a (c, h, w) float token grid as an EXTERNAL-source PFEA."""
    if tokens.ndim != 3:
        raise FormatError(f"tokens must be (c, h, w), got {tokens.shape}")
    if not np.all(np.isfinite(tokens)):
        raise FormatError("non-finite token value")
    c, h, w = tokens.shape
    header = struct.pack(
        "<4sIIIIQB", PFEA_MAGIC, VERSION, c, h, w, frame_id, SOURCE_EXTERNAL
    )
    return header + tokens.astype("<f4").tobytes(order="C")
