"""Acceptance criteria, one test per criterion.

Each test enforces its stated tolerance and time budget and prints a
`[PASS] <criterion>` line; run with `pytest tests/test_acceptance.py -v -s`.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from polarscan.aggregation import VladCodebook, mean_std_pool, vlad_aggregate
from polarscan.cli import main
from polarscan.cloud import PointCloud, SensorProfile, estimate_curvature
from polarscan.features import FeatureMap, FeatureSource, flatten_tokens
from polarscan.metrics import max_f1, pr_curve
from polarscan.projections import (
    PolarExtent,
    ProjectionConfig,
    ProjectionKind,
    project,
)
from polarscan.retrieval import (
    GroundTruthConfig,
    Regime,
    RegimeConfig,
    run_regime,
    search_topk,
)
from polarscan.synth import loop_dataset, write_dataset

from test_aggregation import mean_std_oracle, vlad_oracle
from test_metrics import pr_oracle
from test_retrieval import index_of, topk_oracle


@contextmanager
def budget(name, seconds):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"{name}: {elapsed:.2f}s exceeds {seconds}s budget"
    print(f"[PASS] {name} ({elapsed:.2f}s < {seconds}s)")


def cloud_of(xyz, intensity=None):
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    n = xyz.shape[0]
    intensity = np.zeros(n) if intensity is None else np.asarray(intensity, float)
    return PointCloud(0, 0.0, xyz, intensity, np.zeros(n))


def pixels(img):
    return set(zip(*np.nonzero(img.fill_mask)))


def test_projection_formula_suite():
    with budget("projection formula suite", 1.0):
        profile = SensorProfile("t", (-10.0, 0.0, 10.0), 100.0)
        rng_cfg = ProjectionConfig(
            kind=ProjectionKind.RANGE, height=3, width=64,
            channels=("range",), max_range=100.0,
        )
        assert pixels(project(cloud_of([[1, 0, 0]]), profile, rng_cfg)) == {(1, 32)}
        assert pixels(project(cloud_of([[0, 0, 1]]), profile, rng_cfg)) == {(2, 32)}
        assert pixels(project(cloud_of([[0, 1, 1]]), profile, rng_cfg)) == {(2, 16)}

        bev_cfg = ProjectionConfig(
            kind=ProjectionKind.BEV, height=4, width=4,
            channels=("height",), max_range=100.0,
        )
        corners = cloud_of([[0, 0, 0], [10, 0, 0], [0, 5, 0], [10, 5, 0]])
        assert pixels(project(corners, None, bev_cfg)) == {(0, 0), (3, 0), (0, 3), (3, 3)}

        pol_cfg = ProjectionConfig(
            kind=ProjectionKind.POLAR, height=3, width=4,
            channels=("range",), max_range=100.0,
        )
        tri = cloud_of([[0, -1, 0], [1, 0, 0], [1, 1, 0]])
        assert pixels(project(tri, None, pol_cfg)) == {(1, 0), (1, 2), (2, 3)}

        fr_cfg = ProjectionConfig(
            kind=ProjectionKind.FRONT, height=3, width=8,
            channels=("range",), max_range=100.0, fov=(-math.pi / 4, math.pi / 4),
        )
        assert pixels(project(cloud_of([[1, 0, 0]]), profile, fr_cfg)) == {(1, 4)}
        assert pixels(project(cloud_of([[1, 1, 0]]), profile, fr_cfg)) == {(1, 7)}


def test_polar_circular_shift_equivariance():
    with budget("polar circular-shift equivariance", 1.0):
        w, h = 360, 8
        ext = PolarExtent(10.0, -math.pi, math.pi - 2 * math.pi / w)
        j = np.arange(w)
        theta = -math.pi + (j + 0.5) * (2 * math.pi / w)
        r = 2.5 + 5.0 * ((j * 7) % w) / w
        xyz = np.stack(
            [r * np.cos(theta), r * np.sin(theta), np.sin(j * 0.1) * 2 + 3], axis=1
        )
        intensity = (j % 17) / 17.0
        cfg = ProjectionConfig(
            kind=ProjectionKind.POLAR, height=h, width=w,
            channels=("height", "intensity"), max_range=100.0, extent=ext,
        )
        base = project(cloud_of(xyz, intensity), None, cfg)
        for m in (1, 7, 180):
            ang = m * 2 * math.pi / w
            rot = np.array(
                [[math.cos(ang), -math.sin(ang), 0],
                 [math.sin(ang), math.cos(ang), 0],
                 [0, 0, 1]]
            )
            turned = project(cloud_of(xyz @ rot.T, intensity), None, cfg)
            assert np.array_equal(turned.data, np.roll(base.data, m, axis=1)), m
            assert np.array_equal(turned.fill_mask, np.roll(base.fill_mask, m, axis=1)), m


def test_curvature_analytics():
    with budget("curvature analytics", 5.0):
        xs, ys = np.meshgrid(np.arange(5.0), np.arange(5.0))
        plane = np.stack([xs.ravel(), ys.ravel(), np.zeros(25)], axis=1)
        enriched = estimate_curvature(cloud_of(plane), k=8)
        assert np.all(enriched.curvature_raw <= 1e-12)

        corners = [
            [sx * 0.5, sy * 0.5, sz * 0.5]
            for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)
        ]
        cube = estimate_curvature(cloud_of(corners + [[0.0, 0.0, 0.0]]), k=8)
        assert abs(cube.curvature_raw[8] - 1.0 / 3.0) <= 1e-9

        rng = np.random.default_rng(12)
        xyz = rng.normal(0, 2, (120, 3))
        base = estimate_curvature(cloud_of(xyz), k=10)
        a, b = 0.7, 0.3
        rot = np.array(
            [[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]]
        ) @ np.array(
            [[1, 0, 0], [0, math.cos(b), -math.sin(b)], [0, math.sin(b), math.cos(b)]]
        )
        turned = estimate_curvature(cloud_of(xyz @ rot.T), k=10)
        assert np.max(np.abs(base.curvature_raw - turned.curvature_raw)) <= 1e-9


def test_aggregation_oracles():
    with budget("aggregation oracles", 10.0):
        rng = np.random.default_rng(21)
        for _ in range(100):
            c = int(rng.integers(1, 9))
            h = int(rng.integers(1, 33))
            w = int(rng.integers(1, 33))
            data = rng.normal(0, 2, (c, h, w)).astype(np.float32)
            fm = FeatureMap(c=c, h=h, w=w, data=data, frame_id=0,
                            source=FeatureSource.BASELINE)
            got = mean_std_pool(fm).values
            want = np.asarray(mean_std_oracle(data))
            assert np.max(np.abs(got - want)) <= 1e-12

        for _ in range(20):
            data = rng.normal(0, 1, (4, 3, 5)).astype(np.float32)
            fm = FeatureMap(c=4, h=3, w=5, data=data, frame_id=0,
                            source=FeatureSource.BASELINE)
            centers = rng.normal(0, 1, (3, 4))
            cb = VladCodebook(centers=centers, alpha=float(rng.uniform(0.5, 50)))
            got = vlad_aggregate(fm, cb).values
            want = np.asarray(
                vlad_oracle(flatten_tokens(fm).astype(np.float64).tolist(),
                            centers.tolist(), cb.alpha)
            )
            assert np.max(np.abs(got - want)) <= 1e-9

        data = rng.normal(0, 1, (4, 4, 4)).astype(np.float32)
        fm = FeatureMap(c=4, h=4, w=4, data=data, frame_id=0,
                        source=FeatureSource.BASELINE)
        mean_center = flatten_tokens(fm).astype(np.float64).mean(axis=0, keepdims=True)
        g = vlad_aggregate(fm, VladCodebook(centers=mean_center, alpha=10.0))
        assert np.max(np.abs(g.values)) <= 1e-12


def test_retrieval_oracle():
    with budget("retrieval oracle", 10.0):
        rng = np.random.default_rng(33)
        for _ in range(100):
            mat = rng.normal(0, 1, (50, 8))
            idx = index_of(mat)
            q = rng.normal(0, 1, 8)
            k = int(rng.integers(1, 51))
            got = search_topk(idx, q, k=k)
            want_ids, want_d = topk_oracle(mat.tolist(), q.tolist(), k)
            assert got.ids.tolist() == want_ids
            assert np.max(np.abs(got.distances - np.asarray(want_d))) <= 1e-12

        n = 500
        idx = index_of(rng.normal(0, 1, (n, 4)), rng.uniform(0, 50, (n, 3)))
        regime = RegimeConfig(regime=Regime.TIME_WINDOW, window=40, lag=5)
        records = run_regime(idx, regime, GroundTruthConfig(tau=5.0))
        assert {r.query_frame for r in records} == set(range(5, n))
        for rec in records:
            assert rec.top1_frame <= rec.query_frame - 5  # no future frames


def test_metrics_oracle():
    with budget("metrics oracle", 10.0):
        curve = pr_curve([0.1, 0.2, 0.3, 0.4], [1, 1, 0, 1])
        assert max_f1(curve) == 6 / 7  # exact float equality

        rng = np.random.default_rng(44)
        for _ in range(200):
            n = int(rng.integers(1, 50))
            d = rng.choice([0.05, 0.1, 0.3, 0.31, 0.8, 1.5, 2.0], size=n).tolist()
            y = rng.integers(0, 2, size=n).tolist()
            got = pr_curve(d, y)
            assert list(got.points) == pr_oracle(d, y)
            recalls = [r for _, _, r in got.points]
            assert all(b >= a for a, b in zip(recalls, recalls[1:]))


@pytest.fixture(scope="module")
def loop_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("loop") / "data"
    clouds, poses = loop_dataset(n_frames=400, lap_frames=220, seed=5)
    write_dataset(root, clouds, poses)
    return root


def run_e2e(dataset, out):
    args = [
        "project",
        "--clouds-dir", str(dataset / "clouds"),
        "--kind", "polar",
        "--height", "64",
        "--width", "64",
        "--channels", "height,intensity",
        "--max-range", "60",
        "--out", str(out),
    ]
    assert main(args) == 0
    assert main([
        "encode", "--encoder", "baseline", "--patch", "16", "--c-out", "64",
        "--head", "meanstd", "--out", str(out),
    ]) == 0
    assert main([
        "eval", "--poses", str(dataset / "poses.csv"),
        "--regime", "intra", "--split", "220", "--offset", "200",
        "--tau", "5", "--out", str(out),
    ]) == 0


def test_end_to_end_synthetic_loop(loop_data, tmp_path):
    with budget("end-to-end synthetic loop", 60.0):
        out = tmp_path / "run"
        run_e2e(loop_data, out)
        report = json.loads((out / "report.json").read_text())
        assert report["n_queries_with_positives"] == 180
        assert report["recall_at_1"] >= 0.95


def test_end_to_end_determinism(loop_data, tmp_path):
    with budget("end-to-end determinism", 120.0):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_e2e(loop_data, out_a)
        run_e2e(loop_data, out_b)
        assert (out_a / "descriptors.pdsc").read_bytes() == (out_b / "descriptors.pdsc").read_bytes()
        assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
