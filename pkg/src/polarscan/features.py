"""Token grids: the c x h x w feature maps the aggregation heads consume.

Maps come either from the deterministic built-in patch-statistics encoder or
from the PFEA interchange format written by an external backbone exporter.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, FormatError, ValidationError
from .projections import ProjectionImage

PFEA_MAGIC = b"PFEA"
PFEA_VERSION = 1

STAT_NAMES = (
    "mean",
    "std",
    "min",
    "max",
    "fill_ratio",
    "grad_u",  # mean |forward difference| along image width
    "grad_v",  # mean |forward difference| along image height
    "centroid",
)
STATS_PER_CHANNEL = len(STAT_NAMES)


class FeatureSource(enum.Enum):
    BASELINE = 0
    EXTERNAL = 1


@dataclass(frozen=True)
class FeatureMap:
    c: int
    h: int
    w: int
    data: np.ndarray  # (c, h, w) float32
    frame_id: int
    source: FeatureSource

    def __post_init__(self):
        if self.data.shape != (self.c, self.h, self.w):
            raise ValidationError(
                f"data shape {self.data.shape} != ({self.c}, {self.h}, {self.w})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("feature map contains non-finite values")


def baseline_encode(img: ProjectionImage, patch: int = 16, c_out: int = 64) -> FeatureMap:
    """Patch-statistics stand-in for a learned backbone.

    Each patch x patch cell (edge cells truncated, not padded) yields eight
    statistics per input channel, laid out channel-major in the first
    8*C output channels; the rest stay zero. Deterministic by construction.
    """
    if patch < 1:
        raise ValidationError("patch must be >= 1")
    n_ch = img.data.shape[2]
    if c_out < STATS_PER_CHANNEL * n_ch:
        raise ValidationError(
            f"c_out {c_out} < {STATS_PER_CHANNEL}*{n_ch} statistics channels"
        )
    img_h, img_w = img.data.shape[:2]
    if patch > img_h and patch > img_w:
        raise DegenerateInputError(
            f"patch {patch} exceeds both image dimensions {img_h}x{img_w}"
        )
    h = -(-img_h // patch)
    w = -(-img_w // patch)

    data = np.zeros((c_out, h, w), dtype=np.float64)
    mask = img.fill_mask.astype(np.float64)
    for i in range(h):
        for j in range(w):
            cell = img.data[i * patch : (i + 1) * patch, j * patch : (j + 1) * patch, :]
            mcell = mask[i * patch : (i + 1) * patch, j * patch : (j + 1) * patch]
            ph, pw = cell.shape[:2]
            for ch in range(n_ch):
                block = cell[:, :, ch].astype(np.float64)
                base = ch * STATS_PER_CHANNEL
                data[base + 0, i, j] = block.mean()
                data[base + 1, i, j] = block.std()  # population
                data[base + 2, i, j] = block.min()
                data[base + 3, i, j] = block.max()
                data[base + 4, i, j] = mcell.mean()
                if pw > 1:
                    data[base + 5, i, j] = np.abs(np.diff(block, axis=1)).mean()
                if ph > 1:
                    data[base + 6, i, j] = np.abs(np.diff(block, axis=0)).mean()
                data[base + 7, i, j] = block[ph // 2, pw // 2]

    return FeatureMap(
        c=c_out,
        h=h,
        w=w,
        data=data.astype(np.float32),
        frame_id=img.frame_id,
        source=FeatureSource.BASELINE,
    )


def flatten_tokens(fm: FeatureMap) -> np.ndarray:
    """Row-major (h*w, c) token matrix; token (i, j) is data[:, i, j]."""
    return fm.data.reshape(fm.c, fm.h * fm.w).T.copy()


def unflatten_tokens(tokens: np.ndarray, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`flatten_tokens` back to (c, h, w)."""
    if tokens.shape[0] != h * w:
        raise ValidationError(f"expected {h * w} tokens, got {tokens.shape[0]}")
    return tokens.T.reshape(tokens.shape[1], h, w).copy()


def save_feature_map(fm: FeatureMap) -> bytes:
    header = struct.pack(
        "<4sIIIIQB",
        PFEA_MAGIC,
        PFEA_VERSION,
        fm.c,
        fm.h,
        fm.w,
        fm.frame_id,
        fm.source.value,
    )
    return header + fm.data.astype("<f4").tobytes(order="C")


def load_feature_map(blob: bytes) -> FeatureMap:
    """Parse a PFEA blob, validating shape and per-value finiteness."""
    header_size = 4 + 4 * 4 + 8 + 1
    if len(blob) < header_size or blob[:4] != PFEA_MAGIC:
        raise FormatError("bad PFEA magic")
    version, c, h, w, frame_id, source_byte = struct.unpack_from("<IIIIQB", blob, 4)
    if version != PFEA_VERSION:
        raise FormatError(f"unsupported PFEA version {version}")
    try:
        source = FeatureSource(source_byte)
    except ValueError:
        raise FormatError(f"unknown source byte {source_byte}") from None
    expect = c * h * w * 4
    if len(blob) - header_size != expect:
        raise FormatError(
            f"expected {expect} payload bytes, got {len(blob) - header_size}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=c * h * w, offset=header_size)
    bad = np.nonzero(~np.isfinite(data))[0]
    if bad.size:
        raise ValidationError(f"non-finite value at flat index {int(bad[0])}")
    return FeatureMap(
        c=c,
        h=h,
        w=w,
        data=data.reshape(c, h, w).copy(),
        frame_id=int(frame_id),
        source=source,
    )
