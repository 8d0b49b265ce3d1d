"""Rasterize enriched point clouds into multi-channel 2-D images.

Four mappings are supported: top-down BEV, sensor-centric polar, spherical
range image over the physical beam table, and a fov-restricted front view.
All outputs are per-channel normalized to [0, 1]; pixel collisions keep the
closest return for the range channel and the last point in scan order for
every other channel.
"""

from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, SensorProfile
from .errors import (
    ChannelLookupError,
    DegenerateInputError,
    FormatError,
    ValidationError,
)

CHANNELS = ("height", "range", "intensity", "curvature")

PPRJ_MAGIC = b"PPRJ"
PPRJ_VERSION = 1


class ProjectionKind(enum.Enum):
    BEV = 0
    POLAR = 1
    RANGE = 2
    FRONT = 3


@dataclass(frozen=True)
class BevExtent:
    """Fixed ground-plane window for BEV; points outside are dropped."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError("extent min must be < max on both axes")


@dataclass(frozen=True)
class PolarExtent:
    """Fixed radial/angular window for polar; out-of-window points clamp
    into the edge bins (keeps angular wrap-around intact at the seam)."""

    r_max: float
    theta_min: float
    theta_max: float

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValidationError("r_max must be positive")
        if not self.theta_min < self.theta_max:
            raise ValidationError("theta_min must be < theta_max")


@dataclass(frozen=True)
class ProjectionConfig:
    kind: ProjectionKind
    height: int
    width: int
    channels: tuple[str, ...]
    max_range: float
    fov: tuple[float, float] | None = None  # radians, FRONT only
    extent: BevExtent | PolarExtent | None = None  # None = per-frame extents
    output_size: tuple[int, int] | None = None  # defaults to (height, width)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValidationError("height and width must be >= 1")
        if not self.channels:
            raise ValidationError("at least one channel required")
        if len(set(self.channels)) != len(self.channels):
            raise ValidationError("duplicate channel")
        for c in self.channels:
            if c not in CHANNELS:
                raise ValidationError(f"unknown channel {c!r}")
        if not self.max_range > 0:
            raise ValidationError("max_range must be positive")
        if self.fov is not None and not self.fov[0] < self.fov[1]:
            raise ValidationError("fov must satisfy a_min < a_max")
        if self.kind is ProjectionKind.FRONT and self.fov is None:
            raise ValidationError("FRONT projection requires fov")
        if self.extent is not None:
            if self.kind is ProjectionKind.BEV and not isinstance(self.extent, BevExtent):
                raise ValidationError("BEV fixed extent must be a BevExtent")
            if self.kind is ProjectionKind.POLAR and not isinstance(self.extent, PolarExtent):
                raise ValidationError("POLAR fixed extent must be a PolarExtent")
            if self.kind in (ProjectionKind.RANGE, ProjectionKind.FRONT):
                raise ValidationError("range/front projections take no extent")
        out = self.output_size
        if out is not None and (out[0] < 1 or out[1] < 1):
            raise ValidationError("output_size must be >= 1 per axis")

    @property
    def resolved_output_size(self) -> tuple[int, int]:
        return self.output_size if self.output_size is not None else (self.height, self.width)


@dataclass(frozen=True)
class ProjectionImage:
    """Normalized H x W x C image; unfilled pixels are exactly 0."""

    data: np.ndarray  # (H, W, C) float32 in [0, 1]
    channel_labels: tuple[str, ...]
    kind: ProjectionKind
    frame_id: int
    fill_mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != len(self.channel_labels):
            raise ValidationError("data must be (H, W, C) with C = len(labels)")
        if self.fill_mask.shape != self.data.shape[:2]:
            raise ValidationError("fill_mask shape must match data")

    def channel(self, label: str) -> np.ndarray:
        if label not in self.channel_labels:
            raise ChannelLookupError(
                f"channel {label!r} not in {self.channel_labels}"
            )
        return self.data[:, :, self.channel_labels.index(label)]


def _floor_index(scaled: np.ndarray, limit: int) -> np.ndarray:
    return np.clip(np.floor(scaled).astype(np.int64), 0, limit - 1)


def _normalize_minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi > lo:
        return (values - lo) / (hi - lo)
    return np.zeros_like(values)


def project(cloud: PointCloud, profile: SensorProfile | None, cfg: ProjectionConfig) -> ProjectionImage:
    """Map a cloud onto the configured grid and normalize its channels."""
    if len(cloud) == 0:
        raise DegenerateInputError("cannot project an empty cloud")
    if "curvature" in cfg.channels and cloud.curvature_raw is None:
        raise ValidationError("curvature channel requested before estimation")
    if cfg.kind in (ProjectionKind.RANGE, ProjectionKind.FRONT) and profile is None:
        raise ValidationError(f"{cfg.kind.name} projection requires a sensor profile")

    xyz = cloud.xyz
    intensity = cloud.intensity
    curvature = cloud.curvature
    h, w = cfg.height, cfg.width

    if cfg.kind in (ProjectionKind.RANGE, ProjectionKind.FRONT):
        if cfg.height != profile.num_beams:
            raise ValidationError(
                f"height {cfg.height} must equal the beam count {profile.num_beams}"
            )

    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    theta = np.arctan2(y, x)  # atan2(0, 0) = 0 by host convention

    # u/v follow the mapping formulas; `rows`/`cols` pin the image layout
    # (BEV: u indexes rows; polar/range/front: u indexes columns).
    if cfg.kind is ProjectionKind.BEV:
        if isinstance(cfg.extent, BevExtent):
            ext = cfg.extent
            keep = (x >= ext.x_min) & (x <= ext.x_max) & (y >= ext.y_min) & (y <= ext.y_max)
            if not keep.any():
                raise DegenerateInputError("all points outside the fixed extent")
            x, y, z = x[keep], y[keep], z[keep]
            intensity, curvature = intensity[keep], curvature[keep]
            u = _scale_floor(x - ext.x_min, ext.x_max - ext.x_min, h)
            v = _scale_floor(y - ext.y_min, ext.y_max - ext.y_min, w)
        else:
            u = _scale_floor(x - x.min(), (x - x.min()).max(), h)
            v = _scale_floor(y - y.min(), (y - y.min()).max(), w)
        r = np.sqrt(x * x + y * y + z * z)
        rows, cols = u, v
    elif cfg.kind is ProjectionKind.POLAR:
        r = np.sqrt(x * x + y * y)
        if isinstance(cfg.extent, PolarExtent):
            ext = cfg.extent
            v = _scale_floor(r, ext.r_max, h)
            u = _scale_floor(theta - ext.theta_min, ext.theta_max - ext.theta_min, w)
        else:
            v = _scale_floor(r, r.max(), h)
            u = _scale_floor(theta - theta.min(), theta.max() - theta.min(), w)
        rows, cols = v, u
    elif cfg.kind is ProjectionKind.RANGE:
        r = np.sqrt(x * x + y * y + z * z)
        u = _floor_index(0.5 * (1.0 - theta / np.pi) * w, w)
        v = _nearest_beam(z, r, profile)
        rows, cols = v, u
    else:  # FRONT
        a_min, a_max = cfg.fov
        keep = (theta >= a_min) & (theta <= a_max)
        if not keep.any():
            raise DegenerateInputError("all points outside the horizontal fov")
        x, y, z = x[keep], y[keep], z[keep]
        intensity, curvature = intensity[keep], curvature[keep]
        theta = theta[keep]
        r = np.sqrt(x * x + y * y + z * z)
        u = _floor_index((theta - a_min) / (a_max - a_min) * w, w)
        v = _nearest_beam(z, r, profile)
        rows, cols = v, u

    values = {
        "height": _normalize_minmax(z),
        "range": np.clip(r / cfg.max_range, 0.0, 1.0),
        "intensity": _normalize_minmax(intensity),
        "curvature": _normalize_minmax(curvature),
    }

    mask = np.zeros(h * w, dtype=bool)
    lin = rows * w + cols
    # Last occurrence per pixel, independent of fancy-assignment ordering.
    uniq, first_rev = np.unique(lin[::-1], return_index=True)
    last = lin.size - 1 - first_rev
    mask[uniq] = True
    planes = []
    for label in cfg.channels:
        flat = np.zeros(h * w)
        if label == "range":
            acc = np.full(h * w, np.inf)
            np.minimum.at(acc, lin, values[label])
            flat[uniq] = acc[uniq]
        else:
            flat[uniq] = values[label][last]
        planes.append(flat)
    data = np.stack(planes, axis=-1).reshape(h, w, len(cfg.channels))
    mask = mask.reshape(h, w)

    out_h, out_w = cfg.resolved_output_size
    if (out_h, out_w) != (h, w):
        data, mask = _resize(data, mask, out_h, out_w)

    data = np.clip(data, 0.0, 1.0)
    data[~mask] = 0.0
    return ProjectionImage(
        data=data.astype(np.float32),
        channel_labels=tuple(cfg.channels),
        kind=cfg.kind,
        frame_id=cloud.frame_id,
        fill_mask=mask,
    )


def _scale_floor(offset: np.ndarray, span: float, size: int) -> np.ndarray:
    """floor(offset/span * (size-1)); degenerate spans collapse to index 0."""
    if span <= 0:
        return np.zeros(offset.shape, dtype=np.int64)
    return _floor_index(offset / span * (size - 1), size)


def _nearest_beam(z: np.ndarray, r: np.ndarray, profile: SensorProfile) -> np.ndarray:
    phi = np.zeros_like(r)
    ok = r > 0
    phi[ok] = np.arcsin(np.clip(z[ok] / r[ok], -1.0, 1.0))
    beams = np.asarray(profile.beam_elevations)
    diff = np.abs(np.degrees(phi)[:, None] - beams[None, :])
    return np.argmin(diff, axis=1)  # argmin takes the lowest index on ties


def _resize(data: np.ndarray, mask: np.ndarray, out_h: int, out_w: int):
    import cv2

    res = cv2.resize(data.astype(np.float32), (out_w, out_h), interpolation=cv2.INTER_LINEAR)
    if res.ndim == 2:
        res = res[:, :, None]
    m = cv2.resize(mask.astype(np.uint8), (out_w, out_h), interpolation=cv2.INTER_NEAREST)
    return res.astype(np.float64), m.astype(bool)


def render_png(img: ProjectionImage, channel: str) -> bytes:
    """Render one channel as an 8-bit grayscale PNG blob."""
    from PIL import Image

    plane = img.channel(channel)
    gray = np.clip(np.rint(plane * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(gray, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_pprj(img: ProjectionImage) -> bytes:
    """Serialize to the PPRJ container (see format notes in the README)."""
    out_h, out_w = img.data.shape[:2]
    c = img.data.shape[2]
    parts = [
        PPRJ_MAGIC,
        struct.pack("<IIIIB", PPRJ_VERSION, out_h, out_w, c, img.kind.value),
    ]
    for label in img.channel_labels:
        raw = label.encode("ascii")
        if len(raw) > 255:
            raise ValidationError("channel label too long")
        parts.append(struct.pack("<B", len(raw)))
        parts.append(raw)
    parts.append(img.data.astype("<f4").tobytes(order="C"))
    parts.append(img.fill_mask.astype(np.uint8).tobytes(order="C"))
    return b"".join(parts)


def load_pprj(blob: bytes, frame_id: int = 0) -> ProjectionImage:
    """Parse a PPRJ blob; frame identity comes from the caller (filename)."""
    if len(blob) < 21 or blob[:4] != PPRJ_MAGIC:
        raise FormatError("bad PPRJ magic")
    version, h, w, c, kind_byte = struct.unpack_from("<IIIIB", blob, 4)
    if version != PPRJ_VERSION:
        raise FormatError(f"unsupported PPRJ version {version}")
    try:
        kind = ProjectionKind(kind_byte)
    except ValueError:
        raise FormatError(f"unknown projection kind byte {kind_byte}") from None
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
    data = np.frombuffer(blob, dtype="<f4", count=h * w * c, offset=pos)
    data = data.reshape(h, w, c).copy()
    pos += h * w * c * 4
    mask = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=pos)
    mask = mask.reshape(h, w).astype(bool)
    if not np.all(np.isfinite(data)):
        raise FormatError("non-finite pixel value")
    return ProjectionImage(
        data=data,
        channel_labels=tuple(labels),
        kind=kind,
        frame_id=frame_id,
        fill_mask=mask,
    )
