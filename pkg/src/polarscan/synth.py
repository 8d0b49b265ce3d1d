"""Synthetic loop-trajectory datasets for demos and end-to-end tests.

A scene is a fixed set of landmark "pillars" scattered around a circular
course. A scan at position p contains every scene point within sensor range,
expressed in the sensor frame, so two visits to the same position produce
bit-identical clouds and therefore near-duplicate descriptors.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .cloud import PointCloud, PoseTrack


def ring_scene(
    seed: int = 0,
    n_landmarks: int = 150,
    course_radius: float = 35.0,
    band: float = 20.0,
) -> np.ndarray:
    """(M, 4) world-frame scene points: x, y, z, intensity."""
    rng = np.random.default_rng(seed)
    points = []
    for _ in range(n_landmarks):
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rad = course_radius + rng.uniform(-band, band)
        cx, cy = rad * np.cos(ang), rad * np.sin(ang)
        height = rng.uniform(1.0, 6.0)
        reflect = rng.uniform(0.05, 1.0)
        for _ in range(rng.integers(6, 12)):
            points.append(
                [
                    cx + rng.normal(0.0, 0.3),
                    cy + rng.normal(0.0, 0.3),
                    rng.uniform(0.0, height),
                    reflect,
                ]
            )
    return np.asarray(points, dtype=np.float64)


def loop_positions(n_frames: int, lap_frames: int, course_radius: float = 35.0) -> np.ndarray:
    """(N, 3) positions walking a circle at one arc-meter per frame scale.

    Frame t and t + lap_frames land on bit-identical positions, which is what
    makes revisit descriptors exact duplicates downstream.
    """
    t = np.arange(n_frames) % lap_frames
    ang = 2.0 * np.pi * t / lap_frames
    return np.stack(
        [course_radius * np.cos(ang), course_radius * np.sin(ang), np.zeros(n_frames)],
        axis=1,
    )


def scan_at(
    scene: np.ndarray, position: np.ndarray, frame_id: int, timestamp: float, sensor_range: float = 25.0
) -> PointCloud:
    """Sensor-frame scan of all scene points within range of ``position``."""
    rel = scene[:, :3] - position
    keep = np.linalg.norm(rel, axis=1) <= sensor_range
    return PointCloud(
        frame_id=frame_id,
        timestamp=timestamp,
        xyz=rel[keep],
        intensity=scene[keep, 3],
        curvature=np.zeros(int(keep.sum())),
    )


def loop_dataset(
    n_frames: int = 400,
    lap_frames: int = 220,
    seed: int = 0,
    sensor_range: float = 25.0,
    noise: float = 0.0,
) -> tuple[list[PointCloud], PoseTrack]:
    """Clouds plus poses for a course traversed ``n_frames/lap_frames`` times.

    With ``noise`` = 0 revisits are bit-identical scans; a positive value adds
    per-frame measurement jitter so revisit descriptors are close, not equal.
    """
    scene = ring_scene(seed=seed)
    positions = loop_positions(n_frames, lap_frames)
    clouds = []
    jitter = np.random.default_rng(seed + 1)
    for t in range(n_frames):
        pc = scan_at(scene, positions[t], frame_id=t, timestamp=0.1 * t,
                     sensor_range=sensor_range)
        if noise > 0:
            pc = PointCloud(
                frame_id=pc.frame_id,
                timestamp=pc.timestamp,
                xyz=pc.xyz + jitter.normal(0.0, noise, pc.xyz.shape),
                intensity=np.clip(pc.intensity + jitter.normal(0.0, noise, len(pc)), 0, None),
                curvature=pc.curvature,
            )
        clouds.append(pc)
    track = PoseTrack(
        frame_ids=np.arange(n_frames, dtype=np.int64),
        timestamps=0.1 * np.arange(n_frames),
        positions=positions,
    )
    return clouds, track


def write_dataset(
    out_dir: Path,
    clouds: list[PointCloud],
    poses: PoseTrack,
    beam_elevations: tuple[float, ...] = (-15.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 15.0, 20.0),
    max_range: float = 60.0,
) -> None:
    """Write clouds as KITTI .bin plus poses.csv and sensor.txt."""
    out_dir = Path(out_dir)
    clouds_dir = out_dir / "clouds"
    clouds_dir.mkdir(parents=True, exist_ok=True)
    for cloud in clouds:
        rec = np.concatenate([cloud.xyz, cloud.intensity[:, None]], axis=1)
        blob = rec.astype("<f4").tobytes(order="C")
        (clouds_dir / f"{cloud.frame_id:06d}.bin").write_bytes(blob)
    from .cloud import serialize_poses

    (out_dir / "poses.csv").write_text(serialize_poses(poses))
    beams = ",".join(repr(b) for b in beam_elevations)
    (out_dir / "sensor.txt").write_text(
        f"name = synthetic\nbeams = {beams}\nmax_range = {max_range}\n"
    )
