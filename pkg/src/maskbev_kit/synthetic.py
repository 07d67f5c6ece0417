"""Small synthetic KITTI / SemanticKITTI trees for demos and tests.

Cars are boxes sampled on their surface; only the half facing the sensor is
kept, so single scans see partial footprints the way real LiDAR does.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .dataset_io import (ObjectBox3D, PointCloud, Pose, SemanticScan, write_kitti_objects, write_point_cloud,
                         write_semantic_labels)

SENSOR_HEIGHT = 1.73
CAR_CLASS, ROAD_CLASS = 10, 40

# standard LiDAR -> camera axes swap (x fwd, y left, z up) -> (x right, y down, z fwd)
TR_VELO_TO_CAM = np.array([
    [0.0, -1.0, 0.0, 0.02],
    [0.0, 0.0, -1.0, -0.08],
    [1.0, 0.0, 0.0, -0.27],
    [0.0, 0.0, 0.0, 1.0],
])
_P = "7.07e+02 0 6.04e+02 0 0 7.07e+02 1.81e+02 0 0 0 1 0"


def _fmt(m) -> str:
    return " ".join(f"{v:.12e}" for v in np.asarray(m)[:3].ravel())


def write_calib(path, odometry=False) -> None:
    lines = [f"P{i}: {_P}" for i in range(4)]
    if odometry:
        lines.append(f"Tr: {_fmt(TR_VELO_TO_CAM)}")
    else:
        lines.append("R0_rect: 1 0 0 0 1 0 0 0 1")
        lines.append(f"Tr_velo_to_cam: {_fmt(TR_VELO_TO_CAM)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def box_surface_points(center, length, width, height, yaw, rng, density=150.0,
                       sensor=(0.0, 0.0)) -> np.ndarray:
    """Points on the sides and roof of a box, restricted to the half nearest ``sensor``."""
    faces = [  # (u range, v range, fixed axis, fixed value)
        ((-length / 2, length / 2), (-width / 2, width / 2), 2, height / 2),
        ((-length / 2, length / 2), (-height / 2, height / 2), 1, width / 2),
        ((-length / 2, length / 2), (-height / 2, height / 2), 1, -width / 2),
        ((-width / 2, width / 2), (-height / 2, height / 2), 0, length / 2),
        ((-width / 2, width / 2), (-height / 2, height / 2), 0, -length / 2),
    ]
    out = []
    for (u0, u1), (v0, v1), axis, value in faces:
        n = max(int(density * (u1 - u0) * (v1 - v0)), 4)
        uv = rng.uniform((u0, v0), (u1, v1), size=(n, 2))
        pts = np.insert(uv, axis, value, axis=1)
        out.append(pts)
    local = np.concatenate(out)
    c, s = math.cos(yaw), math.sin(yaw)
    world = local @ np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]]) + np.asarray(center)
    toward = np.asarray(sensor, dtype=float) - np.asarray(center[:2])
    toward /= max(np.linalg.norm(toward), 1e-9)
    near = (world[:, :2] - np.asarray(center[:2])) @ toward >= -0.15 * min(length, width)
    return world[near]


def ground_points(rng, n, x_range, y_range, z=-SENSOR_HEIGHT) -> np.ndarray:
    xy = rng.uniform((x_range[0], y_range[0]), (x_range[1], y_range[1]), size=(n, 2))
    return np.column_stack([xy, np.full(n, z) + rng.normal(0, 0.02, n)])


def _random_cars(rng, n, x_range, y_range, min_gap=7.0) -> list[tuple]:
    cars = []
    while len(cars) < n:
        xy = rng.uniform((x_range[0], y_range[0]), (x_range[1], y_range[1]))
        if any(math.hypot(xy[0] - c[0], xy[1] - c[1]) < min_gap for c in cars):
            continue
        length, width, height = rng.uniform(3.5, 4.6), rng.uniform(1.6, 1.9), rng.uniform(1.4, 1.7)
        cars.append((float(xy[0]), float(xy[1]), length, width, height, float(rng.uniform(-math.pi, math.pi))))
    return cars


def write_kitti_split(root, n_scans=4, seed=0, split="training") -> list[str]:
    """KITTI-style ``<root>/<split>/{velodyne,label_2,calib}`` with 2-4 cars per scan."""
    rng = np.random.default_rng(seed)
    base = os.path.join(root, split)
    for sub in ("velodyne", "label_2", "calib"):
        os.makedirs(os.path.join(base, sub), exist_ok=True)
    ids = []
    for k in range(n_scans):
        sid = f"{k:06d}"
        ids.append(sid)
        calib = os.path.join(base, "calib", f"{sid}.txt")
        write_calib(calib)
        boxes, parts = [], [ground_points(rng, 3000, (0.5, 79.5), (-39.5, 39.5))]
        for x, y, l, w, h, yaw in _random_cars(rng, int(rng.integers(2, 5)), (6, 70), (-30, 30)):
            center = (x, y, -SENSOR_HEIGHT + h / 2)
            parts.append(box_surface_points(center, l, w, h, yaw, rng))
            bbox_h = float(rng.choice([55.0, 32.0, 18.0]))
            boxes.append(ObjectBox3D(center=center, length=l, width=w, height=h, yaw=yaw, class_name="Car",
                                     truncated=float(rng.choice([0.0, 0.2])), occluded=int(rng.integers(0, 3)),
                                     image_bbox_height=bbox_h, bbox2d=(100.0, 150.0, 180.0, 150.0 + bbox_h)))
        pts = np.concatenate(parts)
        cloud = PointCloud(pts, rng.uniform(0, 1, len(pts)))
        write_point_cloud(cloud, os.path.join(base, "velodyne", f"{sid}.bin"))
        write_kitti_objects(boxes, os.path.join(base, "label_2", f"{sid}.txt"), calib)
    return ids


def sequence_poses(n_scans, step=(4.0, 0.5), yaw_step=0.08) -> list[Pose]:
    """Sensor-to-world poses of a vehicle driving forward and turning slowly."""
    poses = []
    for k in range(n_scans):
        yaw = k * yaw_step
        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        poses.append(Pose(rot, np.array([k * step[0], k * step[1], 0.0])))
    return poses


def write_semantickitti_sequence(root, sequence="08", n_scans=3, n_cars=6, seed=0) -> list[str]:
    """SemanticKITTI-style ``<root>/sequences/<seq>`` with static cars seen from a moving sensor."""
    rng = np.random.default_rng(seed)
    seq_dir = os.path.join(root, "sequences", sequence)
    for sub in ("velodyne", "labels"):
        os.makedirs(os.path.join(seq_dir, sub), exist_ok=True)
    write_calib(os.path.join(seq_dir, "calib.txt"), odometry=True)
    poses = sequence_poses(n_scans)
    cars = _random_cars(rng, n_cars, (-25, 35), (-25, 25))
    tr, tr_inv = TR_VELO_TO_CAM, np.linalg.inv(TR_VELO_TO_CAM)
    with open(os.path.join(seq_dir, "poses.txt"), "w") as f:
        for p in poses:
            f.write(_fmt(tr @ p.matrix() @ tr_inv) + "\n")
    ids = []
    for k, pose in enumerate(poses):
        sid = f"{k:06d}"
        ids.append(sid)
        sensor = pose.translation[:2]
        pts = [ground_points(rng, 4000, (-39, 39), (-39, 39))]
        sem, inst = [np.full(4000, ROAD_CLASS)], [np.zeros(4000, dtype=np.int64)]
        inv = pose.inverse()
        for j, (x, y, l, w, h, yaw) in enumerate(cars):
            center = (x, y, -SENSOR_HEIGHT + h / 2)
            world = box_surface_points(center, l, w, h, yaw, rng, sensor=sensor)
            local = inv.apply(world)
            keep = np.hypot(local[:, 0], local[:, 1]) < 39.5
            pts.append(local[keep])
            sem.append(np.full(keep.sum(), CAR_CLASS))
            inst.append(np.full(keep.sum(), j + 1))
        xyz = np.concatenate(pts)
        cloud = PointCloud(xyz, rng.uniform(0, 1, len(xyz)))
        scan = SemanticScan(cloud, np.concatenate(sem), np.concatenate(inst))
        write_point_cloud(cloud, os.path.join(seq_dir, "velodyne", f"{sid}.bin"))
        write_semantic_labels(scan, os.path.join(seq_dir, "labels", f"{sid}.label"))
    return ids
