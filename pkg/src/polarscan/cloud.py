"""Point-cloud parsing, spatial filtering, and per-point channel enrichment.

A scan is stored column-wise (coordinate / intensity / curvature arrays) for
vectorized processing; ``PointRecord`` is the per-point view used at API
boundaries and in tests. Point order is preserved by every operation here
because downstream pixel-collision tie-breaking depends on it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateInputError,
    FormatError,
    ParseError,
    ValidationError,
)

POINT_RECORD_BYTES = 16  # four little-endian float32 per point: x, y, z, intensity

# Exact brute-force neighbor search up to this size; kd-tree (with exact
# tie repair) above it.
BRUTE_FORCE_LIMIT = 20_000


@dataclass(frozen=True)
class PointRecord:
    """One LiDAR return. Curvature is 0 until estimated."""

    x: float
    y: float
    z: float
    intensity: float
    curvature: float = 0.0


@dataclass(frozen=True)
class PointCloud:
    """An ordered scan with optional per-point curvature.

    ``curvature`` holds the per-frame min-max normalized value consumed by
    projections; ``curvature_raw`` keeps the unnormalized eigenvalue ratio
    (None until :func:`estimate_curvature` has run).
    """

    frame_id: int
    timestamp: float
    xyz: np.ndarray  # (N, 3) float64
    intensity: np.ndarray  # (N,) float64
    curvature: np.ndarray  # (N,) float64 in [0, 1]
    curvature_raw: np.ndarray | None = None  # (N,) float64 in [0, 1/3]

    def __post_init__(self):
        n = self.xyz.shape[0]
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise ValidationError(f"xyz must be (N, 3), got {self.xyz.shape}")
        if self.intensity.shape != (n,) or self.curvature.shape != (n,):
            raise ValidationError("intensity/curvature length must match xyz")
        if self.curvature_raw is not None and self.curvature_raw.shape != (n,):
            raise ValidationError("curvature_raw length must match xyz")

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @property
    def points(self) -> list[PointRecord]:
        return [
            PointRecord(
                float(self.xyz[i, 0]),
                float(self.xyz[i, 1]),
                float(self.xyz[i, 2]),
                float(self.intensity[i]),
                float(self.curvature[i]),
            )
            for i in range(len(self))
        ]

    @classmethod
    def from_records(
        cls, records, frame_id: int = 0, timestamp: float = 0.0
    ) -> "PointCloud":
        xyz = np.array([[p.x, p.y, p.z] for p in records], dtype=np.float64)
        xyz = xyz.reshape(-1, 3)
        intensity = np.array([p.intensity for p in records], dtype=np.float64)
        curvature = np.array([p.curvature for p in records], dtype=np.float64)
        return cls(frame_id, timestamp, xyz, intensity, curvature)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; min strictly below max on every axis."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        for lo, hi in zip(self.min_corner, self.max_corner):
            if not lo < hi:
                raise ValidationError(f"box min {lo} must be < max {hi}")

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.min_corner)
        hi = np.asarray(self.max_corner)
        return np.all((xyz >= lo) & (xyz <= hi), axis=1)


@dataclass(frozen=True)
class PoseTrack:
    """Per-frame sensor positions; frames strictly increasing."""

    frame_ids: np.ndarray  # (N,) int64
    timestamps: np.ndarray  # (N,) float64 seconds
    positions: np.ndarray  # (N, 3) float64 meters

    def __post_init__(self):
        n = self.frame_ids.shape[0]
        if self.timestamps.shape != (n,) or self.positions.shape != (n, 3):
            raise ValidationError("pose track arrays must share length")
        if n > 1:
            if np.any(np.diff(self.frame_ids) <= 0):
                raise ValidationError("frame_ids must be strictly increasing")
            if np.any(np.diff(self.timestamps) < 0):
                raise ValidationError("timestamps must be non-decreasing")

    def __len__(self) -> int:
        return self.frame_ids.shape[0]

    @property
    def entries(self) -> list[tuple[int, float, np.ndarray]]:
        return [
            (int(f), float(t), p)
            for f, t, p in zip(self.frame_ids, self.timestamps, self.positions)
        ]


@dataclass(frozen=True)
class SensorProfile:
    """Beam table and range limit of the LiDAR."""

    name: str
    beam_elevations: tuple[float, ...]  # degrees, ascending
    max_range: float  # meters

    def __post_init__(self):
        if len(self.beam_elevations) == 0:
            raise ValidationError("profile needs at least one beam")
        if any(
            b >= a
            for b, a in zip(self.beam_elevations, self.beam_elevations[1:])
        ):
            raise ValidationError("beam elevations must be sorted ascending")
        if not self.max_range > 0:
            raise ValidationError("max_range must be positive")

    @property
    def num_beams(self) -> int:
        return len(self.beam_elevations)


def parse_kitti_bin(blob: bytes, frame_id: int = 0, timestamp: float = 0.0) -> PointCloud:
    """Decode a KITTI Velodyne `.bin` blob (x, y, z, intensity float32 LE)."""
    if len(blob) % POINT_RECORD_BYTES != 0:
        raise FormatError(
            f"blob length {len(blob)} is not a multiple of {POINT_RECORD_BYTES}"
        )
    raw = np.frombuffer(blob, dtype="<f4").reshape(-1, 4)
    bad = np.nonzero(~np.all(np.isfinite(raw), axis=1))[0]
    if bad.size:
        raise ParseError(f"non-finite value at point index {int(bad[0])}")
    data = raw.astype(np.float64)
    return PointCloud(
        frame_id=frame_id,
        timestamp=timestamp,
        xyz=data[:, :3],
        intensity=data[:, 3],
        curvature=np.zeros(len(data)),
    )


_CSV_COLUMNS = ("x", "y", "z", "intensity")


def parse_csv(text: str, frame_id: int = 0, timestamp: float = 0.0) -> PointCloud:
    """Parse a `x,y,z,intensity` CSV into a cloud; curvature left unset."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("missing header row")
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != _CSV_COLUMNS:
        missing = [c for c in _CSV_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"missing column(s): {', '.join(missing)}")
        raise FormatError(f"expected header {','.join(_CSV_COLUMNS)}, got {lines[0]!r}")
    rows = np.zeros((len(lines) - 1, 4))
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"line {i}: expected 4 fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"line {i}: {exc}") from None
        if not all(np.isfinite(vals)):
            raise ParseError(f"line {i}: non-finite value")
        rows[i - 2] = vals
    return PointCloud(
        frame_id=frame_id,
        timestamp=timestamp,
        xyz=rows[:, :3],
        intensity=rows[:, 3],
        curvature=np.zeros(len(rows)),
    )


def serialize_csv(cloud: PointCloud) -> str:
    """Inverse of :func:`parse_csv` for the x/y/z/intensity columns."""
    out = ["x,y,z,intensity"]
    for i in range(len(cloud)):
        row = (cloud.xyz[i, 0], cloud.xyz[i, 1], cloud.xyz[i, 2], cloud.intensity[i])
        out.append(",".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def crop_filter(cloud: PointCloud, roi: Box, ground_z: float | None = None) -> PointCloud:
    """Keep points inside ``roi`` and, if set, strictly above ``ground_z``."""
    keep = roi.contains(cloud.xyz)
    if ground_z is not None:
        keep &= cloud.xyz[:, 2] > ground_z
    return replace(
        cloud,
        xyz=cloud.xyz[keep],
        intensity=cloud.intensity[keep],
        curvature=cloud.curvature[keep],
        curvature_raw=None if cloud.curvature_raw is None else cloud.curvature_raw[keep],
    )


def _knn_brute(xyz: np.ndarray, k: int, chunk: int = 256) -> np.ndarray:
    """Exact k-nearest neighbors excluding self, ties by lower point index."""
    n = xyz.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        end = min(start + chunk, n)
        diff = xyz[start:end, None, :] - xyz[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        for row, i in enumerate(range(start, end)):
            d = d2[row].copy()
            d[i] = np.inf  # exclude self
            out[i] = _smallest_k_by_index(d, k)
    return out


def _smallest_k_by_index(d: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest values; exact float ties resolved ascending."""
    kth = np.partition(d, k - 1)[k - 1]
    below = np.nonzero(d < kth)[0]
    at = np.nonzero(d == kth)[0]  # nonzero yields ascending indices
    sel = np.concatenate([below, at[: k - below.size]])
    sel.sort()
    return sel


def _knn_kdtree(xyz: np.ndarray, k: int) -> np.ndarray:
    """kd-tree k-NN with brute-force repair of boundary distance ties."""
    from scipy.spatial import cKDTree

    n = xyz.shape[0]
    tree = cKDTree(xyz)
    # k+2 so the self hit and one boundary candidate are both visible.
    m = min(k + 2, n)
    dist, idx = tree.query(xyz, k=m)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        row = idx[i][idx[i] != i][:k]
        if row.size < k or _boundary_tie(dist[i], idx[i], i, k):
            d = np.einsum("ij,ij->i", xyz - xyz[i], xyz - xyz[i])
            d[i] = np.inf
            row = _smallest_k_by_index(d, k)
        else:
            row = np.sort(row)
        out[i] = row
    return out


def _boundary_tie(dist: np.ndarray, idx: np.ndarray, i: int, k: int) -> bool:
    kept = dist[idx != i]
    return kept.size > k and kept[k - 1] == kept[k]


def estimate_curvature(cloud: PointCloud, k: int = 10) -> PointCloud:
    """Attach surface-variation curvature from the local neighbor covariance.

    For each point, the covariance of its k nearest neighbors (self excluded)
    is eigendecomposed and curvature is the smallest eigenvalue over the
    trace, which is 0 on planes and at most 1/3 for isotropic neighborhoods.
    The stored channel is additionally min-max normalized over the frame.
    """
    if k < 3:
        raise ValidationError(f"k must be >= 3, got {k}")
    n = len(cloud)
    if n < k + 1:
        raise DegenerateInputError(f"need at least {k + 1} points, got {n}")

    if n <= BRUTE_FORCE_LIMIT:
        nbrs = _knn_brute(cloud.xyz, k)
    else:
        nbrs = _knn_kdtree(cloud.xyz, k)

    pts = cloud.xyz[nbrs]  # (N, k, 3)
    mu = pts.mean(axis=1, keepdims=True)
    centered = pts - mu
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    eig = np.linalg.eigvalsh(cov)  # ascending
    trace = eig.sum(axis=1)
    raw = np.zeros(n)
    ok = trace > 0
    raw[ok] = eig[ok, 0] / trace[ok]  # coincident neighborhoods stay 0
    raw = np.clip(raw, 0.0, 1.0 / 3.0)

    span = raw.max() - raw.min()
    norm = (raw - raw.min()) / span if span > 0 else np.zeros(n)
    return replace(cloud, curvature=norm, curvature_raw=raw)


def load_poses(text: str) -> PoseTrack:
    """Parse a `frame,timestamp,x,y,z` CSV into a pose track."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("missing header row")
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != ("frame", "timestamp", "x", "y", "z"):
        raise FormatError(f"expected header frame,timestamp,x,y,z, got {lines[0]!r}")
    frames, stamps, pos = [], [], []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"line {i}: expected 5 fields, got {len(parts)}")
        try:
            frames.append(int(parts[0]))
            stamps.append(float(parts[1]))
            pos.append([float(p) for p in parts[2:]])
        except ValueError as exc:
            raise ParseError(f"line {i}: {exc}") from None
    frames_arr = np.asarray(frames, dtype=np.int64)
    if frames_arr.size > 1:
        d = np.diff(frames_arr)
        if np.any(d == 0):
            raise FormatError("duplicate frame id")
        if np.any(d < 0):
            raise FormatError("frames out of order")
        if np.any(np.diff(stamps) < 0):
            raise FormatError("timestamps decrease")
    return PoseTrack(
        frame_ids=frames_arr,
        timestamps=np.asarray(stamps, dtype=np.float64),
        positions=np.asarray(pos, dtype=np.float64).reshape(-1, 3),
    )


def serialize_poses(track: PoseTrack) -> str:
    out = ["frame,timestamp,x,y,z"]
    for f, t, p in track.entries:
        out.append(
            f"{f},{t!r},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}"
        )
    return "\n".join(out) + "\n"


def load_sensor_profile(text: str) -> SensorProfile:
    """Parse a key=value profile (`beams=` in degrees, `max_range=` meters)."""
    fields: dict[str, str] = {}
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {i}: expected key=value")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    if "beams" not in fields:
        raise FormatError("missing beams=")
    if "max_range" not in fields:
        raise FormatError("missing max_range=")
    try:
        beams = tuple(float(b) for b in fields["beams"].split(","))
        max_range = float(fields["max_range"])
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return SensorProfile(
        name=fields.get("name", "unnamed"),
        beam_elevations=beams,
        max_range=max_range,
    )
