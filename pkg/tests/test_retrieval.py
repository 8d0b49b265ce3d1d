import math

import numpy as np
import pytest

from polarscan.aggregation import GlobalDescriptor, l2_normalize
from polarscan.cloud import PoseTrack
from polarscan.errors import ConfigError, FormatError, JoinError, ShapeError, ValidationError
from polarscan.retrieval import (
    GroundTruthConfig,
    Regime,
    RegimeConfig,
    TemporalUnit,
    build_index,
    compute_positives,
    records_from_csv,
    records_to_csv,
    run_regime,
    search_topk,
)


def track_of(positions, dt=0.1):
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = positions.shape[0]
    return PoseTrack(
        frame_ids=np.arange(n, dtype=np.int64),
        timestamps=dt * np.arange(n),
        positions=positions,
    )


def index_of(vectors, positions=None):
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if positions is None:
        positions = np.zeros((n, 3))
    descs = [GlobalDescriptor(vectors[i], frame_id=i) for i in range(n)]
    return build_index(descs, track_of(positions))


# ------------------------------------------------------------------ index

def test_build_index_basic():
    idx = index_of(np.eye(3))
    assert len(idx) == 3
    assert idx.frame_ids.tolist() == [0, 1, 2]


def test_build_index_missing_pose():
    descs = [GlobalDescriptor(np.ones(2), frame_id=7)]
    with pytest.raises(JoinError, match="7"):
        build_index(descs, track_of([[0, 0, 0]]))


def test_build_index_empty():
    idx = build_index([], track_of(np.zeros((0, 3))))
    assert len(idx) == 0
    res = search_topk(idx, GlobalDescriptor(np.ones(2), frame_id=0), k=3)
    assert res.ids.size == 0


def test_index_row_norms_near_unit():
    rng = np.random.default_rng(0)
    descs = [
        l2_normalize(GlobalDescriptor(rng.normal(0, 1, 6), frame_id=i))
        for i in range(10)
    ]
    idx = build_index(descs, track_of(np.zeros((10, 3))))
    norms = np.linalg.norm(idx.matrix, axis=1)
    assert np.all(np.abs(norms - 1.0) <= 1e-4)


# ----------------------------------------------------------------- search

def topk_oracle(matrix, query, k, mask=None):
    """Full sort of every candidate distance, ties by row index."""
    rows = range(len(matrix)) if mask is None else [i for i in range(len(matrix)) if mask[i]]
    scored = sorted(
        (math.dist(matrix[i], query), i) for i in rows
    )
    return [i for _, i in scored[:k]], [d for d, _ in scored[:k]]


def test_search_exact_match():
    idx = index_of([[1.0, 0.0], [0.0, 1.0]])
    res = search_topk(idx, np.array([1.0, 0.0]), k=1)
    assert res.ids.tolist() == [0]
    assert res.distances.tolist() == [0.0]


def test_search_tie_breaks_low_index():
    idx = index_of([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    res = search_topk(idx, np.array([0.0, 1.0]), k=3)
    assert res.ids.tolist() == [0, 1, 2]  # all equidistant


def test_search_matches_bruteforce():
    rng = np.random.default_rng(1)
    mat = rng.normal(0, 1, (50, 8))
    idx = index_of(mat)
    for _ in range(20):
        q = rng.normal(0, 1, 8)
        res = search_topk(idx, q, k=5)
        want_ids, want_d = topk_oracle(mat.tolist(), q.tolist(), 5)
        assert res.ids.tolist() == want_ids
        assert np.max(np.abs(res.distances - np.asarray(want_d))) <= 1e-12


def test_search_full_permutation():
    rng = np.random.default_rng(2)
    mat = rng.normal(0, 1, (30, 4))
    idx = index_of(mat)
    q = rng.normal(0, 1, 4)
    res = search_topk(idx, q, k=30)
    want_ids, _ = topk_oracle(mat.tolist(), q.tolist(), 30)
    assert sorted(res.ids.tolist()) == list(range(30))
    assert res.ids.tolist() == want_ids
    assert np.all(np.diff(res.distances) >= 0)
    assert np.all(res.distances >= 0)


def test_search_with_mask():
    rng = np.random.default_rng(3)
    mat = rng.normal(0, 1, (20, 4))
    idx = index_of(mat)
    mask = np.zeros(20, dtype=bool)
    mask[5:12] = True
    q = rng.normal(0, 1, 4)
    res = search_topk(idx, q, k=4, mask=mask)
    want_ids, _ = topk_oracle(mat.tolist(), q.tolist(), 4, mask)
    assert res.ids.tolist() == want_ids


def test_search_validation():
    idx = index_of(np.eye(3))
    with pytest.raises(ValidationError):
        search_topk(idx, np.ones(3), k=0)
    with pytest.raises(ShapeError):
        search_topk(idx, np.ones(5), k=1)


def test_scaling_before_normalization_keeps_top1():
    rng = np.random.default_rng(4)
    raw = rng.normal(0, 1, (30, 6))
    descs_a = [l2_normalize(GlobalDescriptor(raw[i], frame_id=i)) for i in range(30)]
    descs_b = [l2_normalize(GlobalDescriptor(raw[i] * 37.5, frame_id=i)) for i in range(30)]
    poses = track_of(np.zeros((30, 3)))
    idx_a = build_index(descs_a, poses)
    idx_b = build_index(descs_b, poses)
    for _ in range(10):
        q = rng.normal(0, 1, 6)
        qa = l2_normalize(GlobalDescriptor(q, frame_id=0))
        qb = l2_normalize(GlobalDescriptor(q * 0.003, frame_id=0))
        assert search_topk(idx_a, qa, 1).ids[0] == search_topk(idx_b, qb, 1).ids[0]


# -------------------------------------------------------------- positives

def test_positives_straight_line():
    positions = [[float(i), 0.0, 0.0] for i in range(200)]
    idx = index_of(np.zeros((200, 2)), positions)
    gt = GroundTruthConfig(tau=5.0, delta_t=0.0, mode=TemporalUnit.FRAMES)
    got = compute_positives(idx, (100, 10.0, np.array([100.0, 0.0, 0.0])), gt)
    # independent enumeration of both predicates
    want = {
        j
        for j in range(200)
        if math.dist([float(j), 0, 0], [100.0, 0, 0]) < 5.0 and abs(j - 100) > 0
    }
    assert got == want == set(range(96, 105)) - {100}


def test_positives_huge_delta_t_empty():
    idx = index_of(np.zeros((50, 2)), [[0.0, 0.0, 0.0]] * 50)
    gt = GroundTruthConfig(tau=5.0, delta_t=1e9, mode=TemporalUnit.FRAMES)
    assert compute_positives(idx, (0, 0.0, np.zeros(3)), gt) == set()


def test_positives_tiny_tau_empty():
    idx = index_of(np.zeros((5, 2)), [[float(i), 0, 0] for i in range(5)])
    gt = GroundTruthConfig(tau=1e-12, delta_t=0.0)
    assert compute_positives(idx, (0, 0.0, np.array([0.5, 0, 0])), gt) == set()


def test_positives_seconds_mode():
    idx = index_of(np.zeros((10, 2)), [[0.0, 0.0, 0.0]] * 10)  # dt = 0.1 s
    gt = GroundTruthConfig(tau=1.0, delta_t=0.35, mode=TemporalUnit.SECONDS)
    got = compute_positives(idx, (0, 0.0, np.zeros(3)), gt)
    assert got == set(range(4, 10))  # |0.1 j| > 0.35


def test_positive_relation_symmetric():
    rng = np.random.default_rng(5)
    positions = rng.uniform(0, 20, (40, 3))
    idx = index_of(np.zeros((40, 2)), positions)
    gt = GroundTruthConfig(tau=6.0, delta_t=0.0)
    for q in range(40):
        meta = (q, 0.1 * q, positions[q])
        for j in compute_positives(idx, meta, gt):
            back = compute_positives(idx, (j, 0.1 * j, positions[j]), gt)
            assert q in back


# ---------------------------------------------------------------- regimes

def looped_index(n=20, radius=10.0):
    """Positions traverse a circle twice; descriptors repeat exactly."""
    half = n // 2
    ang = 2 * np.pi * (np.arange(n) % half) / half
    positions = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n)], axis=1)
    vecs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return index_of(vecs, positions)


def test_intra_revisit_loop():
    idx = looped_index(20)
    regime = RegimeConfig(regime=Regime.INTRA, split_index=10, offset=5)
    gt = GroundTruthConfig(tau=5.0, delta_t=0.0)
    records = run_regime(idx, regime, gt)
    assert len(records) == 10
    for rec in records:
        assert rec.has_any_positive
        assert rec.distance == 0.0  # exact duplicate descriptor
        assert rec.is_positive
        assert rec.top1_frame == rec.query_frame - 10


def test_intra_split_bounds():
    idx = looped_index(10)
    with pytest.raises(ConfigError):
        run_regime(idx, RegimeConfig(regime=Regime.INTRA, split_index=10), GroundTruthConfig())
    with pytest.raises(ValidationError):
        RegimeConfig(regime=Regime.INTRA, split_index=0)


def test_time_window_database_rows():
    idx = index_of(np.random.default_rng(6).normal(0, 1, (12, 4)))
    regime = RegimeConfig(regime=Regime.TIME_WINDOW, window=5, lag=2)
    gt = GroundTruthConfig(tau=5.0, delta_t=0.0)
    records = run_regime(idx, regime, gt)
    # queries t = 2..11 have a non-empty window; t=10 searches rows {3..8}
    assert [r.query_frame for r in records] == list(range(2, 12))
    rec10 = records[8]
    res = search_topk(idx, idx.matrix[10], k=12)
    allowed = set(range(3, 9))
    assert rec10.top1_frame in allowed
    want = next(int(i) for i in res.ids if int(i) in allowed)
    assert rec10.top1_frame == want


def test_time_window_never_leaks_future():
    rng = np.random.default_rng(7)
    n = 500
    idx = index_of(rng.normal(0, 1, (n, 4)), rng.uniform(0, 50, (n, 3)))
    for w, delta in [(5, 2), (100, 10), (499, 1)]:
        regime = RegimeConfig(regime=Regime.TIME_WINDOW, window=w, lag=delta)
        records = run_regime(idx, regime, GroundTruthConfig(tau=5.0))
        for rec in records:
            assert rec.top1_frame <= rec.query_frame - delta


def test_inter_regime():
    rng = np.random.default_rng(8)
    db_vecs = np.eye(4)
    q_vecs = np.eye(4) + rng.normal(0, 0.01, (4, 4))
    positions = [[float(i) * 10, 0, 0] for i in range(4)]
    db = index_of(db_vecs, positions)
    queries = index_of(q_vecs, positions)
    records = run_regime(db, RegimeConfig(regime=Regime.INTER), GroundTruthConfig(tau=5.0),
                         query_index=queries)
    assert len(records) == 4
    for i, rec in enumerate(records):
        assert rec.top1_frame == i  # same position, nearly same vector
        assert rec.is_positive and rec.has_any_positive


def test_inter_requires_query_index():
    idx = looped_index(10)
    with pytest.raises(ConfigError):
        run_regime(idx, RegimeConfig(regime=Regime.INTER), GroundTruthConfig())


def reference_intra(matrix, positions, frame_ids, split, offset, tau):
    """Straight-line reimplementation of the INTRA regime for cross-checks."""
    out = []
    n = len(matrix)
    for q in range(split, n):
        best = None
        for j in range(split):
            d = math.dist(matrix[q], matrix[j])
            if best is None or d < best[0]:
                best = (d, j)
        positives = [
            j
            for j in range(split)
            if math.dist(positions[q], positions[j]) < tau
            and abs(frame_ids[q] - frame_ids[j]) > offset
        ]
        out.append(
            (frame_ids[q], frame_ids[best[1]], best[0], best[1] in positives, bool(positives))
        )
    return out


def test_intra_matches_reference_pipeline():
    rng = np.random.default_rng(9)
    n = 200
    half = n // 2
    ang = 2 * np.pi * (np.arange(n) % half) / half
    positions = np.stack([30 * np.cos(ang), 30 * np.sin(ang), np.zeros(n)], axis=1)
    vecs = np.stack([np.cos(ang), np.sin(ang), np.cos(2 * ang)], axis=1)
    vecs += rng.normal(0, 1e-3, vecs.shape)
    idx = index_of(vecs, positions)
    regime = RegimeConfig(regime=Regime.INTRA, split_index=half, offset=20)
    gt = GroundTruthConfig(tau=5.0, delta_t=0.0)
    records = run_regime(idx, regime, gt)
    want = reference_intra(
        vecs.tolist(), positions.tolist(), list(range(n)), half, 20, 5.0
    )
    assert len(records) == len(want)
    for rec, (qf, tf, d, pos, hasp) in zip(records, want):
        assert rec.query_frame == qf
        assert rec.top1_frame == tf
        assert rec.distance == pytest.approx(d, abs=1e-12)
        assert rec.is_positive == pos
        assert rec.has_any_positive == hasp


# ---------------------------------------------------------------- records

def test_records_csv_round_trip():
    idx = looped_index(20)
    records = run_regime(
        idx, RegimeConfig(regime=Regime.INTRA, split_index=10, offset=5),
        GroundTruthConfig(tau=5.0),
    )
    text = records_to_csv(records)
    assert text.splitlines()[0] == "query_frame,top1_frame,distance,is_positive,has_positive"
    back = records_from_csv(text)
    assert back == records


def test_records_csv_rejects_garbage():
    with pytest.raises(FormatError):
        records_from_csv("not,a,header\n")
    with pytest.raises(FormatError):
        records_from_csv(
            "query_frame,top1_frame,distance,is_positive,has_positive\n1,2\n"
        )
