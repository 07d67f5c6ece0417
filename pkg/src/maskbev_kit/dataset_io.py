"""
KITTI / SemanticKITTI readers
-----------------------------
In-memory types for LiDAR scans, per-point labels, poses and 3D boxes, the
readers that build them from the public benchmark file formats, and the
crop regions used for both datasets.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


class FormatError(ValueError):
    """Raised when an input file does not follow the expected on-disk format."""


def _frozen_array(values, dtype, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PointCloud:
    """N LiDAR points in the sensor frame, with optional return strength in [0, 1]."""

    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        pts = _frozen_array(self.points, np.float64)
        if pts.size == 0:
            pts = _frozen_array(np.zeros((0, 3)), np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = _frozen_array(self.intensity, np.float64).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise ValueError("intensity must have one value per point")
            if inten.size and (np.any(inten < 0.0) or np.any(inten > 1.0)):
                raise ValueError("intensity values must lie in [0, 1]")
            object.__setattr__(self, "intensity", inten)

    def __len__(self):
        return self.points.shape[0]

    @property
    def has_intensity(self) -> bool:
        return self.intensity is not None

    def take(self, index) -> "PointCloud":
        """Subset by boolean mask or integer index array (order follows ``index``)."""
        inten = None if self.intensity is None else self.intensity[index]
        return PointCloud(self.points[index], inten)

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.intensity)


@dataclass(frozen=True)
class SemanticScan:
    """A PointCloud with SemanticKITTI per-point semantic and instance codes."""

    cloud: PointCloud
    semantic_id: np.ndarray
    instance_id: np.ndarray

    def __post_init__(self):
        sem = _frozen_array(self.semantic_id, np.uint16).reshape(-1)
        inst = _frozen_array(self.instance_id, np.uint16).reshape(-1)
        n = len(self.cloud)
        if sem.shape[0] != n or inst.shape[0] != n:
            raise ValueError(
                f"label lengths ({sem.shape[0]}, {inst.shape[0]}) do not match point count {n}")
        object.__setattr__(self, "semantic_id", sem)
        object.__setattr__(self, "instance_id", inst)

    def __len__(self):
        return len(self.cloud)

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    @property
    def intensity(self):
        return self.cloud.intensity

    @property
    def has_intensity(self) -> bool:
        return self.cloud.has_intensity

    def take(self, index) -> "SemanticScan":
        return SemanticScan(self.cloud.take(index), self.semantic_id[index], self.instance_id[index])

    def with_points(self, points) -> "SemanticScan":
        return SemanticScan(self.cloud.with_points(points), self.semantic_id, self.instance_id)


Scan = Union[PointCloud, SemanticScan]


@dataclass(frozen=True)
class Pose:
    """Rigid transform taking sensor-frame coordinates to world-frame coordinates."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _frozen_array(self.rotation, np.float64, (3, 3))
        trans = _frozen_array(self.translation, np.float64, (3,))
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-5) or abs(np.linalg.det(rot) - 1.0) > 1e-5:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "Pose":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (N, 3) points."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class ObjectBox3D:
    """A 3D box in the LiDAR frame.

    ``center`` is the geometric center of the box (KITTI labels store the
    bottom-face center; the reader shifts it up by half the height).
    ``length`` runs along the heading given by ``yaw``.
    """

    center: tuple
    length: float
    width: float
    height: float
    yaw: float
    class_name: str = "Car"
    truncated: float = 0.0
    occluded: int = 0
    image_bbox_height: float = 0.0
    # Passthrough of 2D label fields so that boxes can be written back.
    alpha: float = 0.0
    bbox2d: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        if len(center) != 3:
            raise ValueError("center must be (x, y, z)")
        object.__setattr__(self, "center", center)
        if min(self.length, self.width, self.height) <= 0:
            raise ValueError("box dimensions must be positive")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def footprint_corners(self) -> np.ndarray:
        """(4, 2) ground-plane corners, counter-clockwise."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array(self.center[:2])


def wrap_angle(angle: float) -> float:
    """Map an angle to [-pi, pi]."""
    return math.remainder(float(angle), 2.0 * math.pi)


@dataclass(frozen=True)
class CropRegion:
    """Axis-aligned box or radial crop, half-open on every interval."""

    x_min: float = 0.0
    x_max: float = 80.0
    y_min: float = -40.0
    y_max: float = 40.0
    z_min: float = -3.0
    z_max: float = 1.0
    mode: str = "axis_aligned_box"
    radius: float = 40.0

    def __post_init__(self):
        if self.mode not in ("axis_aligned_box", "radial"):
            raise ValueError(f"unknown crop mode {self.mode!r}")
        if self.z_min >= self.z_max:
            raise ValueError("z_min must be < z_max")
        if self.mode == "axis_aligned_box":
            if self.x_min >= self.x_max or self.y_min >= self.y_max:
                raise ValueError("min must be < max on each axis")
        elif self.radius <= 0:
            raise ValueError("radius must be positive")

    @classmethod
    def kitti(cls) -> "CropRegion":
        return cls(0.0, 80.0, -40.0, 40.0, -3.0, 1.0, "axis_aligned_box")

    @classmethod
    def semantickitti(cls) -> "CropRegion":
        return cls(-40.0, 40.0, -40.0, 40.0, -3.0, 1.0, "radial", 40.0)

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        keep = (p[:, 2] >= self.z_min) & (p[:, 2] < self.z_max)
        if self.mode == "radial":
            keep &= np.hypot(p[:, 0], p[:, 1]) <= self.radius
        else:
            keep &= (p[:, 0] >= self.x_min) & (p[:, 0] < self.x_max)
            keep &= (p[:, 1] >= self.y_min) & (p[:, 1] < self.y_max)
        return keep


def crop_point_cloud(scan: Scan, region: CropRegion) -> Scan:
    """Keep the points of ``scan`` inside ``region``; per-point attributes follow."""
    return scan.take(region.contains(scan.points))


# ---------------------------------------------------------------------------
# Velodyne scans and SemanticKITTI labels

_RECORD = np.dtype("<f4")


def read_point_cloud(path) -> PointCloud:
    """Read a KITTI Velodyne ``.bin`` file of (x, y, z, intensity) float32 records.

    Intensities are clipped to [0, 1].
    """
    size = os.path.getsize(path)
    if size % 16:
        raise FormatError(f"{path}: size {size} is not a multiple of 16 bytes")
    raw = np.fromfile(path, dtype=_RECORD).reshape(-1, 4)
    bad = ~np.isfinite(raw).all(axis=1)
    if bad.any():
        raise FormatError(f"{path}: non-finite value in record {int(np.flatnonzero(bad)[0])}")
    return PointCloud(raw[:, :3], np.clip(raw[:, 3], 0.0, 1.0))


def write_point_cloud(cloud: PointCloud, path) -> None:
    """Write ``cloud`` as Velodyne records; missing intensity is written as 0."""
    rec = np.zeros((len(cloud), 4), dtype=_RECORD)
    rec[:, :3] = cloud.points
    if cloud.intensity is not None:
        rec[:, 3] = cloud.intensity
    rec.tofile(path)


def read_semantic_labels(path, cloud: PointCloud) -> SemanticScan:
    """Attach a SemanticKITTI ``.label`` file (lower 16 bits semantic, upper 16 instance)."""
    words = np.fromfile(path, dtype="<u4")
    if os.path.getsize(path) != 4 * len(cloud) or words.shape[0] != len(cloud):
        raise FormatError(
            f"{path}: {os.path.getsize(path)} bytes of labels for {len(cloud)} points")
    return SemanticScan(cloud, words & 0xFFFF, words >> 16)


def write_semantic_labels(scan: SemanticScan, path) -> None:
    words = (scan.instance_id.astype("<u4") << 16) | scan.semantic_id.astype("<u4")
    words.astype("<u4").tofile(path)


# ---------------------------------------------------------------------------
# Calibration and poses

def read_calib(path) -> dict[str, np.ndarray]:
    """Parse a KITTI calibration file into flat float arrays keyed by name."""
    calib = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            key, _, rest = line.partition(":")
            try:
                calib[key.strip()] = np.array([float(v) for v in rest.split()], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return calib


def _homogeneous(values, rows) -> np.ndarray:
    m = np.eye(4)
    m[:rows, :] = np.asarray(values, dtype=np.float64).reshape(rows, 4)
    return m


def velo_to_cam(calib: dict, path="calib") -> np.ndarray:
    """4x4 LiDAR-to-camera extrinsic (``Tr_velo_to_cam`` or odometry ``Tr``)."""
    for key in ("Tr_velo_to_cam", "Tr"):
        if key in calib:
            if calib[key].size != 12:
                raise FormatError(f"{path}: {key} must have 12 values")
            return _homogeneous(calib[key], 3)
    raise FormatError(f"{path}: missing Tr_velo_to_cam / Tr entry")


def rectification(calib: dict, path="calib") -> np.ndarray:
    """4x4 rectifying rotation; identity when the file has no ``R0_rect``."""
    m = np.eye(4)
    if "R0_rect" in calib:
        if calib["R0_rect"].size != 9:
            raise FormatError(f"{path}: R0_rect must have 9 values")
        m[:3, :3] = calib["R0_rect"].reshape(3, 3)
    return m


def read_poses(poses_path, calib_path) -> list[Pose]:
    """Read odometry poses (camera frame) and re-express them for LiDAR points.

    Each returned pose maps LiDAR-frame points of that scan to the world
    frame: ``Tr^-1 @ P_cam @ Tr``.
    """
    tr = velo_to_cam(read_calib(calib_path), calib_path)
    tr_inv = np.linalg.inv(tr)
    poses = []
    with open(poses_path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                values = [float(v) for v in line.split()]
            except ValueError as exc:
                raise FormatError(f"{poses_path}:{lineno}: {exc}") from None
            if len(values) != 12:
                raise FormatError(f"{poses_path}:{lineno}: expected 12 values, got {len(values)}")
            m = tr_inv @ _homogeneous(values, 3) @ tr
            try:
                poses.append(Pose.from_matrix(m))
            except ValueError:
                raise FormatError(f"{poses_path}:{lineno}: pose is not a rigid transform") from None
    return poses


# ---------------------------------------------------------------------------
# KITTI object labels

def read_kitti_objects(label_path, calib_path, classes=("Car",)) -> list[ObjectBox3D]:
    """Read a KITTI ``label_2`` file and convert the boxes of ``classes`` to the LiDAR frame."""
    calib = read_calib(calib_path)
    cam_to_velo = np.linalg.inv(rectification(calib, calib_path) @ velo_to_cam(calib, calib_path))
    wanted = set(classes)
    boxes = []
    with open(label_path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 15:
                raise FormatError(f"{label_path}:{lineno}: expected 15 fields, got {len(parts)}")
            if parts[0] not in wanted:
                continue
            try:
                truncated, occluded, alpha = float(parts[1]), int(float(parts[2])), float(parts[3])
                x1, y1, x2, y2 = (float(v) for v in parts[4:8])
                h, w, l = (float(v) for v in parts[8:11])
                loc = np.array([float(v) for v in parts[11:14]])
                ry = float(parts[14])
            except ValueError as exc:
                raise FormatError(f"{label_path}:{lineno}: {exc}") from None
            # camera y points down; the label location is the bottom-face center
            center_cam = np.append(loc - np.array([0.0, h / 2.0, 0.0]), 1.0)
            center = (cam_to_velo @ center_cam)[:3]
            heading = cam_to_velo[:3, :3] @ np.array([math.cos(ry), 0.0, -math.sin(ry)])
            boxes.append(ObjectBox3D(
                center=tuple(center), length=l, width=w, height=h,
                yaw=math.atan2(heading[1], heading[0]), class_name=parts[0],
                truncated=truncated, occluded=occluded, image_bbox_height=y2 - y1,
                alpha=alpha, bbox2d=(x1, y1, x2, y2),
            ))
    return boxes


def write_kitti_objects(boxes: Sequence[ObjectBox3D], label_path, calib_path) -> None:
    """Inverse of :func:`read_kitti_objects` (2D fields are written back as stored)."""
    calib = read_calib(calib_path)
    velo_to_rect = rectification(calib, calib_path) @ velo_to_cam(calib, calib_path)
    lines = []
    for b in boxes:
        center = (velo_to_rect @ np.append(np.array(b.center), 1.0))[:3]
        loc = center + np.array([0.0, b.height / 2.0, 0.0])
        heading = velo_to_rect[:3, :3] @ np.array([math.cos(b.yaw), math.sin(b.yaw), 0.0])
        ry = wrap_angle(math.atan2(-heading[2], heading[0]))
        fields = [b.class_name, f"{b.truncated:.2f}", str(int(b.occluded)), f"{b.alpha:.2f}"]
        fields += [f"{v:.2f}" for v in b.bbox2d]
        fields += [f"{v:.6f}" for v in (b.height, b.width, b.length, *loc, ry)]
        lines.append(" ".join(fields))
    with open(label_path, "w") as f:
        f.write("".join(line + "\n" for line in lines))
