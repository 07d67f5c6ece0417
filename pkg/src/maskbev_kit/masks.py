"""
BEV instance-mask labels
------------------------
Ground-truth footprint masks from 3D boxes (rasterized rotated rectangles)
and from per-point instance labels aggregated over a posed scan sequence,
plus the run-length-encoded JSON label format shared with prediction files.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from .dataset_io import ObjectBox3D, Pose, SemanticScan
from .pillars import GridConfig

CAR = 0

# cell centers closer than this to a rectangle edge count as inside
_EDGE_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """H x W boolean footprint raster tied to a grid."""

    data: np.ndarray
    grid: GridConfig

    def __post_init__(self):
        data = np.asarray(self.data, dtype=bool)
        if data.shape != self.grid.shape:
            raise ValueError(f"mask shape {data.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "data", data)

    @classmethod
    def empty(cls, grid: GridConfig) -> "BinaryMask":
        return cls(np.zeros(grid.shape, dtype=bool), grid)

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.data))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class MaskEntry:
    instance_id: int
    class_label: int
    mask: BinaryMask
    score: float | None = None


@dataclass(frozen=True)
class InstanceMaskSet:
    """Ground-truth (``score is None``) or predicted masks of one scan."""

    scan_id: str
    entries: tuple = ()
    grid: GridConfig = field(default_factory=GridConfig)

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.instance_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.scan_id}: duplicate instance ids")
        for e in entries:
            if e.mask.grid != self.grid:
                raise ValueError(f"{self.scan_id}: instance {e.instance_id} is on a different grid")
            if e.score is None and e.mask.area == 0:
                raise ValueError(f"{self.scan_id}: ground-truth instance {e.instance_id} has an empty mask")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> list[int]:
        return [e.instance_id for e in self.entries]

    def get(self, instance_id: int) -> MaskEntry | None:
        for e in self.entries:
            if e.instance_id == instance_id:
                return e
        return None

    def stack(self) -> np.ndarray:
        """(N, H, W) boolean array of the entry masks."""
        if not self.entries:
            return np.zeros((0, *self.grid.shape), dtype=bool)
        return np.stack([e.mask.data for e in self.entries])


@dataclass(frozen=True)
class MaskGenParams:
    closing_kernel: int = 3
    opening_kernel: int = 3
    min_area_pixels: int = 40
    presence_filter: bool = True

    def __post_init__(self):
        for k in (self.closing_kernel, self.opening_kernel):
            if k < 1 or k % 2 == 0:
                raise ValueError("morphology kernels must be odd and >= 1")
        if self.min_area_pixels < 0:
            raise ValueError("min_area_pixels must be >= 0")


# ---------------------------------------------------------------------------
# Rasterization and morphology

def rasterize_box_footprint(box: ObjectBox3D, grid: GridConfig) -> BinaryMask:
    """Cells whose center lies in the box's ground-plane rectangle (edges included)."""
    out = np.zeros(grid.shape, dtype=bool)
    cos, sin = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = box.length / 2.0, box.width / 2.0
    bx, by = box.center[0], box.center[1]
    # half extents of the rotated rectangle's axis-aligned bounding box
    ex = abs(hl * cos) + abs(hw * sin)
    ey = abs(hl * sin) + abs(hw * cos)
    v = grid.voxel_size
    c0 = max(int(math.floor((bx - ex - grid.x_min) / v)) - 1, 0)
    c1 = min(int(math.ceil((bx + ex - grid.x_min) / v)) + 1, grid.W)
    r0 = max(int(math.floor((by - ey - grid.y_min) / v)) - 1, 0)
    r1 = min(int(math.ceil((by + ey - grid.y_min) / v)) + 1, grid.H)
    if c0 >= c1 or r0 >= r1:
        return BinaryMask(out, grid)
    dx = (grid.x_min + (np.arange(c0, c1) + 0.5) * v - bx)[None, :]
    dy = (grid.y_min + (np.arange(r0, r1) + 0.5) * v - by)[:, None]
    along = dx * cos + dy * sin
    across = -dx * sin + dy * cos
    out[r0:r1, c0:c1] = (np.abs(along) <= hl + _EDGE_EPS) & (np.abs(across) <= hw + _EDGE_EPS)
    return BinaryMask(out, grid)


def _square(kernel: int) -> np.ndarray:
    return np.ones((kernel, kernel), dtype=bool)


def dilate(data: np.ndarray, kernel: int) -> np.ndarray:
    if kernel == 1:
        return data.copy()
    return ndimage.binary_dilation(data, structure=_square(kernel), border_value=0)


def erode(data: np.ndarray, kernel: int) -> np.ndarray:
    # cells outside the raster count as background
    if kernel == 1:
        return data.copy()
    return ndimage.binary_erosion(data, structure=_square(kernel), border_value=0)


def morphology(mask: BinaryMask, op: str, kernel: int) -> BinaryMask:
    """``close`` (dilate, then erode) or ``open`` (erode, then dilate) with a square kernel."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("kernel must be odd and >= 1")
    if op == "close":
        data = erode(dilate(mask.data, kernel), kernel)
    elif op == "open":
        data = dilate(erode(mask.data, kernel), kernel)
    else:
        raise ValueError(f"unknown morphology op {op!r}")
    return BinaryMask(data, mask.grid)


def occupancy(points_xy: np.ndarray, grid: GridConfig) -> np.ndarray:
    """Boolean raster with a cell set for every point falling in it (z ignored)."""
    out = np.zeros(grid.shape, dtype=bool)
    if len(points_xy):
        col, row, ok = grid.cell_indices(points_xy)
        out[row[ok], col[ok]] = True
    return out


def clean_mask(data: np.ndarray, grid: GridConfig, params: MaskGenParams) -> BinaryMask:
    m = morphology(BinaryMask(data, grid), "close", params.closing_kernel)
    return morphology(m, "open", params.opening_kernel)


# ---------------------------------------------------------------------------
# Box-derived masks

def generate_masks_from_boxes(boxes: Sequence[ObjectBox3D], grid: GridConfig,
                              params: MaskGenParams = MaskGenParams(), scan_id: str = "") -> InstanceMaskSet:
    entries = []
    for i, box in enumerate(boxes):
        mask = rasterize_box_footprint(box, grid)
        if mask.area >= max(params.min_area_pixels, 1):
            entries.append(MaskEntry(i, CAR, mask))
    return InstanceMaskSet(scan_id, tuple(entries), grid)


# ---------------------------------------------------------------------------
# Sequence aggregation

@dataclass
class AggregatedInstanceMap:
    """World-frame points per instance id, with the number of contributing scans."""

    points: dict = field(default_factory=dict)
    scan_counts: dict = field(default_factory=dict)

    def __contains__(self, instance_id):
        return instance_id in self.points

    def ids(self) -> list[int]:
        return sorted(self.points)

    def merge(self, other: "AggregatedInstanceMap") -> "AggregatedInstanceMap":
        ids = set(self.points) | set(other.points)
        pts, counts = {}, {}
        for i in sorted(ids):
            parts = [m.points[i] for m in (self, other) if i in m.points]
            pts[i] = np.concatenate(parts) if len(parts) > 1 else parts[0]
            counts[i] = self.scan_counts.get(i, 0) + other.scan_counts.get(i, 0)
        return AggregatedInstanceMap(pts, counts)


def vehicle_points(scan: SemanticScan, vehicle_classes: Iterable[int]) -> np.ndarray:
    classes = np.fromiter(vehicle_classes, dtype=np.int64)
    return np.isin(scan.semantic_id, classes) & (scan.instance_id != 0)


def scan_instances(scan: SemanticScan, pose: Pose, vehicle_classes: Iterable[int]) -> AggregatedInstanceMap:
    """World-frame vehicle points of a single scan, grouped by instance id."""
    sel = vehicle_points(scan, vehicle_classes)
    ids = scan.instance_id[sel].astype(np.int64)
    world = pose.apply(scan.points[sel])
    pts, counts = {}, {}
    for i in np.unique(ids):
        pts[int(i)] = world[ids == i]
        counts[int(i)] = 1
    return AggregatedInstanceMap(pts, counts)


def aggregate_instances(scans: Sequence[SemanticScan], poses: Sequence[Pose],
                        vehicle_classes: Iterable[int] = (10,)) -> AggregatedInstanceMap:
    """Accumulate every scan's vehicle instance points in the world frame."""
    if len(scans) != len(poses):
        raise ValueError(f"{len(scans)} scans but {len(poses)} poses")
    classes = tuple(vehicle_classes)
    parts = defaultdict(list)
    counts = defaultdict(int)
    for scan, pose in zip(scans, poses):
        single = scan_instances(scan, pose, classes)
        for i, p in single.points.items():
            parts[i].append(p)
            counts[i] += 1
    return AggregatedInstanceMap(
        {i: np.concatenate(parts[i]) for i in sorted(parts)},
        {i: counts[i] for i in sorted(counts)},
    )


def _present_ids(scan: SemanticScan, grid: GridConfig) -> set[int]:
    _, _, ok = grid.cell_indices(scan.points[:, :2])
    ids = scan.instance_id[ok & (scan.instance_id != 0)]
    return {int(i) for i in np.unique(ids)}


def generate_masks_from_instances(agg: AggregatedInstanceMap, scan: SemanticScan, scan_pose: Pose,
                                  grid: GridConfig, params: MaskGenParams = MaskGenParams(),
                                  scan_id: str = "") -> InstanceMaskSet:
    """Complete footprint masks of the aggregated instances, seen from ``scan_pose``.

    Per instance: map to the scan frame, rasterize occupancy, close then open,
    drop below ``min_area_pixels``, and (with ``presence_filter``) drop
    instances that have no in-grid point in ``scan`` itself.
    """
    to_local = scan_pose.inverse()
    present = _present_ids(scan, grid) if params.presence_filter else None
    entries = []
    for i in agg.ids():
        local = to_local.apply(agg.points[i])
        raw = occupancy(local[:, :2], grid)
        if not raw.any():
            continue
        mask = clean_mask(raw, grid, params)
        if mask.area < max(params.min_area_pixels, 1):
            continue
        if present is not None and i not in present:
            continue
        entries.append(MaskEntry(i, CAR, mask))
    return InstanceMaskSet(scan_id, tuple(entries), grid)


def single_scan_mask(scan: SemanticScan, instance: int, grid: GridConfig,
                     params: MaskGenParams = MaskGenParams()) -> BinaryMask | None:
    """Cleaned footprint of one instance from this scan's points only (no area filter)."""
    pts = scan.points[scan.instance_id == instance]
    raw = occupancy(pts[:, :2], grid)
    if not raw.any():
        return None
    return clean_mask(raw, grid, params)


# ---------------------------------------------------------------------------
# RLE + JSON label files

def rle_encode(mask: np.ndarray) -> list[int]:
    """Alternating run lengths of the row-major flattened mask, starting with zeros."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return [0]
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(counts: Sequence[int], shape: tuple[int, int]) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    total = shape[0] * shape[1]
    if np.any(counts < 0) or counts.sum() != total:
        raise ValueError(f"RLE counts sum to {counts.sum()}, expected {total}")
    values = np.arange(counts.size) % 2 == 1
    return np.repeat(values, counts).reshape(shape)


def grid_to_json(grid: GridConfig) -> dict:
    return {"x_min": grid.x_min, "x_max": grid.x_max, "y_min": grid.y_min, "y_max": grid.y_max,
            "voxel_size": grid.voxel_size, "H": grid.H, "W": grid.W}


def grid_from_json(d: Mapping, base: GridConfig | None = None) -> GridConfig:
    base = base or GridConfig()
    grid = GridConfig(float(d["x_min"]), float(d["x_max"]), float(d["y_min"]), float(d["y_max"]),
                      base.z_min, base.z_max, float(d["voxel_size"]), base.max_points_per_voxel)
    if ("H" in d and d["H"] != grid.H) or ("W" in d and d["W"] != grid.W):
        raise ValueError(f"grid H/W {d.get('H')}x{d.get('W')} inconsistent with bounds")
    return grid


def mask_set_to_json(ms: InstanceMaskSet) -> dict:
    instances = []
    for e in ms.entries:
        item = {"id": int(e.instance_id), "class": int(e.class_label), "rle": rle_encode(e.mask.data)}
        if e.score is not None:
            item["score"] = float(e.score)
        instances.append(item)
    return {"scan_id": ms.scan_id, "grid": grid_to_json(ms.grid), "instances": instances}


def mask_set_from_json(doc: Mapping, default_score: float | None = None,
                       base_grid: GridConfig | None = None) -> InstanceMaskSet:
    """Parse a label/prediction document; ``default_score`` fills missing scores."""
    grid = grid_from_json(doc["grid"], base_grid)
    entries = []
    for item in doc["instances"]:
        score = item.get("score", default_score)
        mask = BinaryMask(rle_decode(item["rle"], grid.shape), grid)
        entries.append(MaskEntry(int(item["id"]), int(item.get("class", CAR)), mask,
                                 None if score is None else float(score)))
    return InstanceMaskSet(str(doc["scan_id"]), tuple(entries), grid)


def dumps_mask_set(ms: InstanceMaskSet) -> str:
    return json.dumps(mask_set_to_json(ms), separators=(",", ":")) + "\n"


def write_mask_set(ms: InstanceMaskSet, path) -> None:
    with open(path, "w") as f:
        f.write(dumps_mask_set(ms))


def read_mask_set(path, default_score: float | None = None,
                  base_grid: GridConfig | None = None) -> InstanceMaskSet:
    with open(path) as f:
        return mask_set_from_json(json.load(f), default_score, base_grid)
