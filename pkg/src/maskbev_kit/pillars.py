"""
Pillar voxelization and point featurization
-------------------------------------------
Points are binned into vertical pillars on a regular ground-plane grid, up
to ``max_points_per_voxel`` points are kept per pillar, and every kept point
is decorated with pillar-relative features. A per-pillar reduction followed
by :func:`scatter_to_bev` produces a dense C x H x W bird's-eye-view tensor.

Raster convention used everywhere in the package: ``array[row, col]`` with
``col`` indexing x and ``row`` indexing y, both counted from the grid minimum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataset_io import PointCloud, Scan


@dataclass(frozen=True)
class GridConfig:
    x_min: float = 0.0
    x_max: float = 80.0
    y_min: float = -40.0
    y_max: float = 40.0
    z_min: float = -3.0
    z_max: float = 1.0
    voxel_size: float = 0.16
    max_points_per_voxel: int = 32

    def __post_init__(self):
        v = self.voxel_size
        if v <= 0:
            raise ValueError("voxel_size must be positive")
        for lo, hi, axis in ((self.x_min, self.x_max, "x"), (self.y_min, self.y_max, "y")):
            span = hi - lo
            n = round(span / v)
            if n <= 0 or abs(span - n * v) > 1e-9:
                raise ValueError(f"{axis} extent {span} is not a positive multiple of {v}")
        if self.z_min >= self.z_max:
            raise ValueError("z_min must be < z_max")
        if self.max_points_per_voxel < 1:
            raise ValueError("max_points_per_voxel must be >= 1")

    @classmethod
    def kitti(cls, **kw) -> "GridConfig":
        return cls(0.0, 80.0, -40.0, 40.0, **kw)

    @classmethod
    def semantickitti(cls, **kw) -> "GridConfig":
        return cls(-40.0, 40.0, -40.0, 40.0, **kw)

    @property
    def W(self) -> int:
        return round((self.x_max - self.x_min) / self.voxel_size)

    @property
    def H(self) -> int:
        return round((self.y_max - self.y_min) / self.voxel_size)

    @property
    def shape(self) -> tuple[int, int]:
        return self.H, self.W

    def cell_indices(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized (col, row, in_range) for an (N, 2+) array; z is not checked."""
        xy = np.asarray(xy, dtype=np.float64)
        fx = np.floor((xy[:, 0] - self.x_min) / self.voxel_size)
        fy = np.floor((xy[:, 1] - self.y_min) / self.voxel_size)
        ok = ((xy[:, 0] >= self.x_min) & (xy[:, 0] < self.x_max)
              & (xy[:, 1] >= self.y_min) & (xy[:, 1] < self.y_max)
              & (fx >= 0) & (fx < self.W) & (fy >= 0) & (fy < self.H))
        col = np.where(ok, fx, 0).astype(np.int64)
        row = np.where(ok, fy, 0).astype(np.int64)
        return col, row, ok

    def in_z_range(self, z: np.ndarray) -> np.ndarray:
        return (z >= self.z_min) & (z < self.z_max)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(H, W) arrays of cell-center x and y coordinates."""
        xs = self.x_min + (np.arange(self.W) + 0.5) * self.voxel_size
        ys = self.y_min + (np.arange(self.H) + 0.5) * self.voxel_size
        cx, cy = np.meshgrid(xs, ys)
        return cx, cy


def world_to_pixel(grid: GridConfig, x: float, y: float) -> tuple[int, int] | None:
    """(col, row) of the cell containing (x, y), or None when outside the grid."""
    col, row, ok = grid.cell_indices(np.array([[x, y]]))
    if not ok[0]:
        return None
    return int(col[0]), int(row[0])


def pixel_to_world(grid: GridConfig, col: int, row: int) -> tuple[float, float]:
    """Center of cell (col, row)."""
    return (grid.x_min + (col + 0.5) * grid.voxel_size,
            grid.y_min + (row + 0.5) * grid.voxel_size)


@dataclass(frozen=True)
class PillarSet:
    """Non-empty pillars of a cloud.

    ``coords[p] = (col, row)``; ``indices[p, :counts[p]]`` are indices into the
    source cloud, the rest is padding (-1). Pillars are ordered row-major.
    """

    coords: np.ndarray
    indices: np.ndarray
    counts: np.ndarray
    grid: GridConfig

    def __len__(self):
        return self.coords.shape[0]

    def __iter__(self):
        for (col, row), idx, n in zip(self.coords, self.indices, self.counts):
            yield int(col), int(row), idx[:n]


def voxelize(cloud: Scan, grid: GridConfig, sampling: str = "first_k", seed: int | None = None) -> PillarSet:
    """Group in-range points into pillars.

    ``sampling`` is ``"first_k"`` (keep the first points in input order) or
    ``"seeded_random"`` (uniform subset drawn with ``seed``, kept in input order).
    """
    if sampling not in ("first_k", "seeded_random"):
        raise ValueError(f"unknown sampling policy {sampling!r}")
    pts = cloud.points
    k = grid.max_points_per_voxel
    col, row, ok = grid.cell_indices(pts[:, :2])
    ok &= grid.in_z_range(pts[:, 2])
    src = np.flatnonzero(ok)
    if src.size == 0:
        return PillarSet(np.zeros((0, 2), np.int64), np.full((0, k), -1, np.int64),
                         np.zeros(0, np.int64), grid)
    keys = row[src] * grid.W + col[src]
    order = np.argsort(keys, kind="stable")
    src, keys = src[order], keys[order]
    uniq, starts, sizes = np.unique(keys, return_index=True, return_counts=True)

    counts = np.minimum(sizes, k)
    indices = np.full((uniq.size, k), -1, dtype=np.int64)
    if sampling == "first_k":
        slot = np.arange(src.size) - np.repeat(starts, sizes)
        keep = slot < k
        pillar = np.repeat(np.arange(uniq.size), sizes)
        indices[pillar[keep], slot[keep]] = src[keep]
    else:
        rng = np.random.default_rng(seed)
        for p, (s, n) in enumerate(zip(starts, sizes)):
            members = src[s:s + n]
            if n > k:
                members = np.sort(rng.choice(members, size=k, replace=False))
            indices[p, :members.size] = members
    coords = np.stack([uniq % grid.W, uniq // grid.W], axis=1)
    return PillarSet(coords, indices, counts, grid)


@dataclass(frozen=True)
class PointFeatures:
    """(P, K, D) per-point features with a per-pillar valid count.

    Channel layout: x, y, z, pillar distance, offset from pillar center (3),
    offset from the pillar mean (3), and intensity when available.
    """

    features: np.ndarray
    counts: np.ndarray

    @property
    def num_channels(self) -> int:
        return self.features.shape[2]

    def valid_mask(self) -> np.ndarray:
        k = self.features.shape[1]
        return np.arange(k)[None, :] < self.counts[:, None]


DISTANCE_MODES = ("pillar_center", "pillar_center_3d", "point")


def featurize(cloud: Scan, pillars: PillarSet, distance: str = "pillar_center") -> PointFeatures:
    """Decorate every sampled point with pillar-relative features (10 channels, 11 with intensity).

    ``distance`` selects the scalar distance channel: horizontal distance of the
    pillar center (default), 3D distance of the pillar center, or the point's
    own 3D range.
    """
    if distance not in DISTANCE_MODES:
        raise ValueError(f"unknown distance mode {distance!r}")
    grid = pillars.grid
    has_int = cloud.has_intensity
    d = 11 if has_int else 10
    n_p, k = pillars.indices.shape
    feats = np.zeros((n_p, k, d), dtype=np.float64)
    if n_p == 0:
        return PointFeatures(feats, pillars.counts.copy())

    valid = np.arange(k)[None, :] < pillars.counts[:, None]
    idx = np.where(valid, pillars.indices, 0)
    xyz = cloud.points[idx]
    xyz[~valid] = 0.0

    v = grid.voxel_size
    center = np.empty((n_p, 3))
    center[:, 0] = grid.x_min + (pillars.coords[:, 0] + 0.5) * v
    center[:, 1] = grid.y_min + (pillars.coords[:, 1] + 0.5) * v
    center[:, 2] = 0.5 * (grid.z_min + grid.z_max)
    mean = xyz.sum(axis=1) / pillars.counts[:, None]

    feats[..., 0:3] = xyz
    if distance == "pillar_center":
        feats[..., 3] = np.hypot(center[:, 0], center[:, 1])[:, None]
    elif distance == "pillar_center_3d":
        feats[..., 3] = np.linalg.norm(center, axis=1)[:, None]
    else:
        feats[..., 3] = np.linalg.norm(xyz, axis=2)
    feats[..., 4:7] = xyz - center[:, None, :]
    feats[..., 7:10] = xyz - mean[:, None, :]
    if has_int:
        feats[..., 10] = cloud.intensity[idx]
    feats[~valid] = 0.0
    return PointFeatures(feats, pillars.counts.copy())


def max_reduce(features: PointFeatures) -> np.ndarray:
    """Channel-wise max over the valid points of each pillar -> (P, D)."""
    f = np.where(features.valid_mask()[..., None], features.features, -np.inf)
    if f.shape[0] == 0:
        return np.zeros((0, features.num_channels))
    return f.max(axis=1)


@dataclass(frozen=True)
class BevTensor:
    data: np.ndarray  # (C, H, W)
    grid: GridConfig | None = None

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("BEV tensor must be C x H x W")
        if self.grid is not None and self.data.shape[1:] != self.grid.shape:
            raise ValueError(f"tensor dims {self.data.shape[1:]} do not match grid {self.grid.shape}")


def scatter_to_bev(pillars: PillarSet, per_pillar_features: np.ndarray, channels: int = 1) -> BevTensor:
    """Write one C-vector per pillar into a zero float32 C x H x W tensor.

    ``per_pillar_features`` is (P, C); ``channels`` only matters when P == 0.
    """
    feats = np.asarray(per_pillar_features)
    if feats.ndim != 2 or feats.shape[0] != len(pillars):
        raise ValueError(f"expected ({len(pillars)}, C) pillar features, got {feats.shape}")
    c = feats.shape[1] if len(pillars) else channels
    grid = pillars.grid
    out = np.zeros((c, grid.H, grid.W), dtype=np.float32)
    out[:, pillars.coords[:, 1], pillars.coords[:, 0]] = feats.T
    return BevTensor(out, grid)


def encode_cloud(cloud: PointCloud, grid: GridConfig, sampling="first_k", seed=None,
                 distance="pillar_center") -> BevTensor:
    """voxelize -> featurize -> max_reduce -> scatter."""
    pillars = voxelize(cloud, grid, sampling, seed)
    feats = featurize(cloud, pillars, distance)
    return scatter_to_bev(pillars, max_reduce(feats), channels=feats.num_channels)


# ---------------------------------------------------------------------------
# BEVT binary format: b"BEVT", uint32 C, H, W, then C*H*W float32, all little-endian.

_MAGIC = b"BEVT"


def bev_to_bytes(tensor: BevTensor | np.ndarray) -> bytes:
    data = tensor.data if isinstance(tensor, BevTensor) else np.asarray(tensor)
    c, h, w = data.shape
    return _MAGIC + struct.pack("<3I", c, h, w) + np.ascontiguousarray(data, dtype="<f4").tobytes()


def write_bev(tensor: BevTensor | np.ndarray, path) -> None:
    with open(path, "wb") as f:
        f.write(bev_to_bytes(tensor))


def read_bev(path, grid: GridConfig | None = None) -> BevTensor:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC or len(raw) < 16:
        raise ValueError(f"{path}: not a BEVT file")
    c, h, w = struct.unpack("<3I", raw[4:16])
    if len(raw) != 16 + 4 * c * h * w:
        raise ValueError(f"{path}: payload size does not match header {c}x{h}x{w}")
    data = np.frombuffer(raw, dtype="<f4", offset=16).reshape(c, h, w).astype(np.float32)
    return BevTensor(data, grid)


__all__ = [
    "GridConfig", "PillarSet", "PointFeatures", "BevTensor", "voxelize", "featurize",
    "max_reduce", "scatter_to_bev", "encode_cloud", "world_to_pixel", "pixel_to_world",
    "write_bev", "read_bev", "bev_to_bytes",
]
