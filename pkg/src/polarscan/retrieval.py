"""Exact descriptor retrieval and the three loop-closure evaluation regimes.

Search is exhaustive flat L2 (no approximation); ties break toward the lower
row index so results are reproducible. Ground-truth positives are pose-based:
within tau meters and more than delta-t apart in time (or frames).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .aggregation import GlobalDescriptor
from .cloud import PoseTrack
from .errors import (
    ConfigError,
    FormatError,
    JoinError,
    ShapeError,
    ValidationError,
)


class TemporalUnit(enum.Enum):
    SECONDS = "seconds"
    FRAMES = "frames"


class Regime(enum.Enum):
    INTRA = "intra"
    INTER = "inter"
    TIME_WINDOW = "time_window"


@dataclass(frozen=True)
class GroundTruthConfig:
    tau: float = 5.0  # meters
    delta_t: float = 0.0  # seconds or frames per mode
    mode: TemporalUnit = TemporalUnit.FRAMES

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError("tau must be positive")
        if self.delta_t < 0:
            raise ValidationError("delta_t must be >= 0")


@dataclass(frozen=True)
class RegimeConfig:
    regime: Regime
    split_index: int | None = None  # INTRA: database = rows [0, split)
    offset: int = 200  # INTRA: min frame separation for positives
    window: int = 100  # TIME_WINDOW: w
    lag: int = 1  # TIME_WINDOW: delta

    def __post_init__(self):
        if self.regime is Regime.INTRA:
            if self.split_index is None or self.split_index <= 0:
                raise ValidationError("INTRA needs a positive split index")
        if self.regime is Regime.TIME_WINDOW:
            if self.window < 1 or self.lag < 1:
                raise ValidationError("TIME_WINDOW needs window >= 1 and lag >= 1")


@dataclass(frozen=True)
class DescriptorIndex:
    """Flat descriptor matrix joined with per-row pose metadata."""

    matrix: np.ndarray  # (N, L) float64
    frame_ids: np.ndarray  # (N,) int64
    timestamps: np.ndarray  # (N,) float64
    positions: np.ndarray  # (N, 3) float64

    def __post_init__(self):
        n = self.matrix.shape[0]
        if (
            self.frame_ids.shape != (n,)
            or self.timestamps.shape != (n,)
            or self.positions.shape != (n, 3)
        ):
            raise ValidationError("index arrays must share row count")

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class QueryResult:
    ids: np.ndarray  # row indices, distance-ascending
    distances: np.ndarray


@dataclass(frozen=True)
class QueryRecord:
    query_frame: int
    top1_frame: int
    distance: float
    is_positive: bool
    has_any_positive: bool


def build_index(descriptors: list[GlobalDescriptor], poses: PoseTrack) -> DescriptorIndex:
    """Stack descriptors in order and join pose metadata by frame id."""
    lookup = {int(f): i for i, f in enumerate(poses.frame_ids)}
    rows, stamps, pos, frames = [], [], [], []
    for d in descriptors:
        if d.frame_id not in lookup:
            raise JoinError(f"frame {d.frame_id} has no pose")
        i = lookup[d.frame_id]
        rows.append(d.values)
        frames.append(d.frame_id)
        stamps.append(poses.timestamps[i])
        pos.append(poses.positions[i])
    if rows:
        matrix = np.stack(rows).astype(np.float64)
    else:
        matrix = np.zeros((0, 0))
    return DescriptorIndex(
        matrix=matrix,
        frame_ids=np.asarray(frames, dtype=np.int64),
        timestamps=np.asarray(stamps, dtype=np.float64),
        positions=np.asarray(pos, dtype=np.float64).reshape(-1, 3),
    )


def search_topk(
    index: DescriptorIndex,
    query: GlobalDescriptor | np.ndarray,
    k: int = 1,
    mask: np.ndarray | None = None,
) -> QueryResult:
    """Exact k smallest L2 distances; ties break by lower row index."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    vec = query.values if isinstance(query, GlobalDescriptor) else np.asarray(query)
    if len(index) == 0:
        return QueryResult(np.empty(0, dtype=np.int64), np.empty(0))
    if vec.shape[0] != index.matrix.shape[1]:
        raise ShapeError(
            f"query dim {vec.shape[0]} != index dim {index.matrix.shape[1]}"
        )
    candidates = np.arange(len(index)) if mask is None else np.nonzero(mask)[0]
    if candidates.size == 0:
        return QueryResult(np.empty(0, dtype=np.int64), np.empty(0))
    dists = np.linalg.norm(index.matrix[candidates] - vec, axis=1)
    order = np.argsort(dists, kind="stable")[:k]  # stable keeps low index on ties
    return QueryResult(ids=candidates[order], distances=dists[order])


def compute_positives(
    index: DescriptorIndex,
    query_meta: tuple[int, float, np.ndarray],
    gt: GroundTruthConfig,
    mask: np.ndarray | None = None,
) -> set[int]:
    """Row indices within tau meters and beyond the temporal separation."""
    frame, timestamp, position = query_meta
    close = np.linalg.norm(index.positions - np.asarray(position), axis=1) < gt.tau
    if gt.mode is TemporalUnit.SECONDS:
        separated = np.abs(index.timestamps - timestamp) > gt.delta_t
    else:
        separated = np.abs(index.frame_ids - frame) > gt.delta_t
    hits = close & separated
    if mask is not None:
        hits &= mask
    return set(np.nonzero(hits)[0].tolist())


def run_regime(
    index: DescriptorIndex,
    regime: RegimeConfig,
    gt: GroundTruthConfig,
    query_index: DescriptorIndex | None = None,
) -> list[QueryRecord]:
    """Execute one evaluation regime and emit a top-1 record per query."""
    if regime.regime is Regime.INTER:
        if query_index is None:
            raise ConfigError("INTER regime needs a query descriptor set")
        return _run_inter(index, query_index, gt)
    if regime.regime is Regime.INTRA:
        return _run_intra(index, regime, gt)
    return _run_time_window(index, regime, gt)


def _record(index, qframe, result, positives) -> QueryRecord:
    top1 = int(result.ids[0])
    return QueryRecord(
        query_frame=int(qframe),
        top1_frame=int(index.frame_ids[top1]),
        distance=float(result.distances[0]),
        is_positive=top1 in positives,
        has_any_positive=bool(positives),
    )


def _run_intra(index, regime, gt) -> list[QueryRecord]:
    n = len(index)
    nd = regime.split_index
    if nd >= n:
        raise ConfigError(f"split {nd} must be < frame count {n}")
    db_mask = np.zeros(n, dtype=bool)
    db_mask[:nd] = True
    records = []
    for q in range(nd, n):
        meta = (index.frame_ids[q], index.timestamps[q], index.positions[q])
        positives = compute_positives(index, meta, gt, mask=db_mask)
        # Revisits must also be separated by more than the frame offset.
        positives = {
            j for j in positives
            if abs(int(index.frame_ids[q]) - int(index.frame_ids[j])) > regime.offset
        }
        result = search_topk(index, index.matrix[q], k=1, mask=db_mask)
        records.append(_record(index, index.frame_ids[q], result, positives))
    return records


def _run_inter(db, queries, gt) -> list[QueryRecord]:
    # Different sessions cannot self-match, so no temporal rule applies.
    records = []
    for q in range(len(queries)):
        close = np.linalg.norm(db.positions - queries.positions[q], axis=1) < gt.tau
        positives = set(np.nonzero(close)[0].tolist())
        result = search_topk(db, queries.matrix[q], k=1)
        records.append(_record(db, queries.frame_ids[q], result, positives))
    return records


def _run_time_window(index, regime, gt) -> list[QueryRecord]:
    n = len(index)
    records = []
    for t in range(n):
        hi = t - regime.lag  # inclusive; never >= t
        if hi < 0:
            continue  # empty window: skip query
        lo = max(0, t - regime.window - regime.lag)
        mask = np.zeros(n, dtype=bool)
        mask[lo : hi + 1] = True
        meta = (index.frame_ids[t], index.timestamps[t], index.positions[t])
        positives = compute_positives(index, meta, gt, mask=mask)
        result = search_topk(index, index.matrix[t], k=1, mask=mask)
        records.append(_record(index, index.frame_ids[t], result, positives))
    return records


RECORDS_HEADER = "query_frame,top1_frame,distance,is_positive,has_positive"


def records_to_csv(records: list[QueryRecord]) -> str:
    lines = [RECORDS_HEADER]
    for r in records:
        lines.append(
            f"{r.query_frame},{r.top1_frame},{r.distance!r},"
            f"{int(r.is_positive)},{int(r.has_any_positive)}"
        )
    return "\n".join(lines) + "\n"


def records_from_csv(text: str) -> list[QueryRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != RECORDS_HEADER:
        raise FormatError(f"expected header {RECORDS_HEADER!r}")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"line {i}: expected 5 fields")
        try:
            records.append(
                QueryRecord(
                    query_frame=int(parts[0]),
                    top1_frame=int(parts[1]),
                    distance=float(parts[2]),
                    is_positive=bool(int(parts[3])),
                    has_any_positive=bool(int(parts[4])),
                )
            )
        except ValueError as exc:
            raise FormatError(f"line {i}: {exc}") from None
    return records
