"""
Seeded training-time augmentations
----------------------------------
Every transform takes a scan (PointCloud or SemanticScan) and, where it
moves geometry, the scan's labels: either a list of ObjectBox3D or an
InstanceMaskSet. Nothing is modified in place; all randomness comes from
an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .dataset_io import ObjectBox3D, PointCloud, Scan, SemanticScan, wrap_angle
from .masks import CAR, BinaryMask, InstanceMaskSet, MaskEntry, rasterize_box_footprint
from .pillars import GridConfig

Labels = Union[Sequence[ObjectBox3D], InstanceMaskSet, None]


@dataclass(frozen=True)
class AugmentationConfig:
    drop_fraction: float = 0.05
    flip_y: bool = True
    point_noise_sigma: float = 0.2
    noise_is_variance: bool = False
    global_translate_max: float = 0.2
    global_rotate_max: float = 2.5      # degrees
    instance_translate_max: float = 0.25
    instance_rotate_max: float = 9.0    # degrees
    paste_max_instances: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_fraction <= 1.0:
            raise ValueError("drop_fraction must be in [0, 1]")
        for name in ("point_noise_sigma", "global_translate_max", "global_rotate_max",
                     "instance_translate_max", "instance_rotate_max", "paste_max_instances"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def semantickitti(cls, seed: int = 0) -> "AugmentationConfig":
        """Drop, flip and point noise only."""
        return cls(global_translate_max=0.0, global_rotate_max=0.0, instance_translate_max=0.0,
                   instance_rotate_max=0.0, paste_max_instances=0, seed=seed)

    @classmethod
    def disabled(cls, seed: int = 0) -> "AugmentationConfig":
        return cls(0.0, False, 0.0, False, 0.0, 0.0, 0.0, 0.0, 0, seed)

    def is_noop(self) -> bool:
        return (self.drop_fraction == 0 and not self.flip_y and self.point_noise_sigma == 0
                and self.global_translate_max == 0 and self.global_rotate_max == 0
                and self.instance_translate_max == 0 and self.instance_rotate_max == 0
                and self.paste_max_instances == 0)


@dataclass(frozen=True)
class BankEntry:
    """Points of one instance cut from some scan, with its footprint label."""

    points: np.ndarray
    label: Union[ObjectBox3D, BinaryMask]
    intensity: np.ndarray | None = None
    semantic_id: int = 10

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("bank entries must contain points")


@dataclass
class InstanceBank:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_scan(cls, scan: Scan, labels: Labels) -> "InstanceBank":
        bank = cls()
        for inst in _instance_ids(labels):
            sel = instance_point_mask(scan, labels, inst)
            if not sel.any():
                continue
            label = labels.get(inst).mask if isinstance(labels, InstanceMaskSet) else labels[inst]
            inten = None if scan.intensity is None else scan.intensity[sel]
            sem = 10
            if isinstance(scan, SemanticScan):
                sem = int(np.bincount(scan.semantic_id[sel]).argmax())
            bank.entries.append(BankEntry(scan.points[sel], label, inten, sem))
        return bank


# ---------------------------------------------------------------------------
# helpers

def _instance_ids(labels: Labels) -> list[int]:
    if labels is None:
        return []
    if isinstance(labels, InstanceMaskSet):
        return labels.ids()
    return list(range(len(labels)))


def _rot2(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def _default_grid(labels: Labels, grid: GridConfig | None) -> GridConfig:
    if grid is not None:
        return grid
    if isinstance(labels, InstanceMaskSet):
        return labels.grid
    return GridConfig.kitti()


def footprint(label: Union[ObjectBox3D, BinaryMask], grid: GridConfig) -> np.ndarray:
    if isinstance(label, BinaryMask):
        return label.data
    return rasterize_box_footprint(label, grid).data


def _footprints(labels: Labels, grid: GridConfig) -> dict[int, np.ndarray]:
    if isinstance(labels, InstanceMaskSet):
        return {e.instance_id: e.mask.data for e in labels.entries}
    return {i: footprint(b, grid) for i, b in enumerate(labels or [])}


def _box_contains(box: ObjectBox3D, points: np.ndarray, margin: float = 1e-6) -> np.ndarray:
    d = points - np.array(box.center)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    along = d[:, 0] * c + d[:, 1] * s
    across = -d[:, 0] * s + d[:, 1] * c
    return ((np.abs(along) <= box.length / 2 + margin) & (np.abs(across) <= box.width / 2 + margin)
            & (np.abs(d[:, 2]) <= box.height / 2 + margin))


def instance_point_mask(scan: Scan, labels: Labels, instance: int) -> np.ndarray:
    """Points belonging to ``instance``.

    SemanticScan + masks: matching per-point instance id. PointCloud + masks:
    points whose cell is set in the footprint. Boxes: points inside the 3D box.
    """
    if isinstance(labels, InstanceMaskSet):
        entry = labels.get(instance)
        if entry is None:
            raise KeyError(f"unknown instance {instance}")
        if isinstance(scan, SemanticScan):
            return scan.instance_id == instance
        col, row, ok = labels.grid.cell_indices(scan.points[:, :2])
        return ok & entry.mask.data[row, col]
    if labels is None or not 0 <= instance < len(labels):
        raise KeyError(f"unknown instance {instance}")
    return _box_contains(labels[instance], scan.points)


def _remap_mask(data: np.ndarray, grid: GridConfig, yaw: float, pivot, shift) -> np.ndarray:
    """Nearest-cell resampling of a raster under p -> R(p - pivot) + pivot + shift."""
    cx, cy = grid.cell_centers()
    q = np.stack([cx.ravel(), cy.ravel()], axis=1) - np.asarray(pivot) - np.asarray(shift)[:2]
    src = q @ _rot2(yaw) + np.asarray(pivot)  # R^T applied to row vectors
    col, row, ok = grid.cell_indices(src)
    out = np.zeros(grid.H * grid.W, dtype=bool)
    out[ok] = data[row[ok], col[ok]]
    return out.reshape(grid.shape)


def _move_points(points: np.ndarray, yaw: float, pivot, shift) -> np.ndarray:
    out = points.copy()
    out[:, :2] = (points[:, :2] - pivot) @ _rot2(yaw).T + pivot
    out += np.asarray(shift, dtype=np.float64)
    return out


# ---------------------------------------------------------------------------
# point-level transforms

def drop_points(scan: Scan, fraction: float, seed) -> Scan:
    """Keep each point independently with probability ``1 - fraction``."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    keep = np.random.default_rng(seed).random(len(scan)) < 1.0 - fraction
    return scan.take(keep)


def jitter_points(scan: Scan, sigma: float, seed, sigma_is_variance: bool = False) -> Scan:
    """Add iid N(0, sigma^2) noise to every coordinate (sigma is a variance if asked)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    std = math.sqrt(sigma) if sigma_is_variance else sigma
    noise = np.random.default_rng(seed).normal(0.0, std, size=scan.points.shape)
    return scan.with_points(scan.points + noise)


def flip_y(scan: Scan, labels: Labels = None) -> tuple[Scan, Labels]:
    """Mirror across the x axis (y -> -y)."""
    pts = scan.points.copy()
    pts[:, 1] = -pts[:, 1]
    out = scan.with_points(pts)
    if labels is None:
        return out, None
    if isinstance(labels, InstanceMaskSet):
        g = labels.grid
        if g.y_min != -g.y_max:
            raise ValueError("flipping mask labels needs a grid symmetric in y")
        entries = tuple(replace(e, mask=BinaryMask(e.mask.data[::-1].copy(), g)) for e in labels.entries)
        return out, replace(labels, entries=entries)
    boxes = [replace(b, center=(b.center[0], -b.center[1], b.center[2]), yaw=-b.yaw) for b in labels]
    return out, boxes


def rigid_transform(scan: Scan, labels: Labels, yaw: float, translation) -> tuple[Scan, Labels]:
    """Rotate everything by ``yaw`` about the sensor's vertical axis, then translate."""
    t = np.zeros(3)
    t[:len(translation)] = translation
    out = scan.with_points(_move_points(scan.points, yaw, np.zeros(2), t))
    if labels is None:
        return out, None
    if isinstance(labels, InstanceMaskSet):
        g = labels.grid
        entries = []
        for e in labels.entries:
            data = _remap_mask(e.mask.data, g, yaw, np.zeros(2), t)
            if data.any():
                entries.append(replace(e, mask=BinaryMask(data, g)))
        return out, replace(labels, entries=tuple(entries))
    boxes = []
    for b in labels:
        c = _move_points(np.array([b.center]), yaw, np.zeros(2), t)[0]
        boxes.append(replace(b, center=tuple(c), yaw=wrap_angle(b.yaw + yaw)))
    return out, boxes


def global_rigid(scan: Scan, labels: Labels, translate_max: float, rotate_max_deg: float,
                 seed) -> tuple[Scan, Labels]:
    rng = np.random.default_rng(seed)
    t = rng.uniform(-translate_max, translate_max, size=3)
    yaw = math.radians(rng.uniform(-rotate_max_deg, rotate_max_deg))
    return rigid_transform(scan, labels, yaw, t)


# ---------------------------------------------------------------------------
# instance-level transforms

def move_instance(scan: Scan, labels: Labels, instance: int, translation, yaw: float,
                  grid: GridConfig | None = None) -> tuple[Scan, Labels, bool]:
    """Rotate one instance about its footprint centroid and translate it in the ground plane.

    Returns the inputs unchanged with ``False`` when the moved footprint would
    intersect another instance's footprint or leave the grid.
    """
    grid = _default_grid(labels, grid)
    sel = instance_point_mask(scan, labels, instance)
    shift = np.zeros(3)
    shift[:2] = np.asarray(translation, dtype=np.float64)[:2]
    prints = _footprints(labels, grid)
    own = prints[instance]
    if isinstance(labels, InstanceMaskSet):
        cx, cy = grid.cell_centers()
        pivot = np.array([cx[own].mean(), cy[own].mean()]) if own.any() else np.zeros(2)
        moved = _remap_mask(own, grid, yaw, pivot, shift)
        new_label = BinaryMask(moved, grid)
    else:
        box = labels[instance]
        pivot = np.array(box.center[:2])
        new_label = replace(box, center=tuple(np.array(box.center) + shift), yaw=wrap_angle(box.yaw + yaw))
        moved = footprint(new_label, grid)
    if not moved.any() or any((moved & fp).any() for i, fp in prints.items() if i != instance):
        return scan, labels, False

    pts = scan.points.copy()
    pts[sel] = _move_points(pts[sel], yaw, pivot, shift)
    new_scan = scan.with_points(pts)
    if isinstance(labels, InstanceMaskSet):
        entries = tuple(replace(e, mask=new_label) if e.instance_id == instance else e
                        for e in labels.entries)
        return new_scan, replace(labels, entries=entries), True
    boxes = list(labels)
    boxes[instance] = new_label
    return new_scan, boxes, True


def transform_instance(scan: Scan, labels: Labels, instance: int, translate_max: float,
                       rotate_max_deg: float, seed, grid: GridConfig | None = None) -> tuple[Scan, Labels]:
    """Random planar move of one instance; collisions leave the scan unchanged."""
    if instance not in _instance_ids(labels):
        raise KeyError(f"unknown instance {instance}")
    rng = np.random.default_rng(seed)
    t = rng.uniform(-translate_max, translate_max, size=2)
    yaw = math.radians(rng.uniform(-rotate_max_deg, rotate_max_deg))
    if not t.any() and yaw == 0.0:
        return scan, labels
    new_scan, new_labels, _ = move_instance(scan, labels, instance, t, yaw, grid)
    return new_scan, new_labels


def _append_points(scan: Scan, entry: BankEntry, instance_id: int) -> Scan:
    pts = np.concatenate([scan.points, entry.points])
    inten = None
    if scan.intensity is not None:
        extra = entry.intensity if entry.intensity is not None else np.zeros(len(entry.points))
        inten = np.concatenate([scan.intensity, extra])
    cloud = PointCloud(pts, inten)
    if isinstance(scan, SemanticScan):
        n = len(entry.points)
        return SemanticScan(cloud,
                            np.concatenate([scan.semantic_id, np.full(n, entry.semantic_id, np.uint16)]),
                            np.concatenate([scan.instance_id, np.full(n, instance_id, np.uint16)]))
    return cloud


def paste_instances(scan: Scan, labels: Labels, bank: InstanceBank, max_count: int, seed,
                    grid: GridConfig | None = None) -> tuple[Scan, Labels]:
    """Insert up to ``max_count`` bank instances at their recorded location, skipping collisions."""
    if not len(bank) or max_count <= 0:
        return scan, labels
    grid = _default_grid(labels, grid)
    masks_mode = isinstance(labels, InstanceMaskSet)
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(bank))[:min(max_count, len(bank))]
    occupied = np.zeros(grid.shape, dtype=bool)
    for fp in _footprints(labels, grid).values():
        occupied |= fp
    entries = list(labels.entries) if masks_mode else list(labels or [])
    next_id = 1 + max([*(labels.ids() if masks_mode else []),
                       *(scan.instance_id.tolist() if isinstance(scan, SemanticScan) else []), 0])
    for k in picks:
        entry = bank.entries[int(k)]
        if masks_mode != isinstance(entry.label, BinaryMask):
            raise TypeError("bank labels and scan labels must be of the same kind")
        fp = footprint(entry.label, grid)
        if not fp.any() or (fp & occupied).any():
            continue
        occupied |= fp
        scan = _append_points(scan, entry, next_id)
        entries.append(MaskEntry(next_id, CAR, BinaryMask(fp, grid)) if masks_mode else entry.label)
        next_id += 1
    if masks_mode:
        return scan, replace(labels, entries=tuple(entries))
    return scan, entries


# ---------------------------------------------------------------------------

def augment(scan: Scan, labels: Labels, config: AugmentationConfig, bank: InstanceBank | None = None,
            grid: GridConfig | None = None) -> tuple[Scan, Labels]:
    """Apply the enabled augmentations in the order
    drop, paste, per-instance move, global rigid, flip, jitter."""
    seeds = np.random.SeedSequence(config.seed).spawn(6)
    if config.drop_fraction > 0:
        scan = drop_points(scan, config.drop_fraction, seeds[0])
    if bank is not None and config.paste_max_instances > 0 and labels is not None:
        scan, labels = paste_instances(scan, labels, bank, config.paste_max_instances, seeds[1], grid)
    if labels is not None and (config.instance_translate_max > 0 or config.instance_rotate_max > 0):
        inst_seeds = seeds[2].spawn(max(len(_instance_ids(labels)), 1))
        for inst, s in zip(_instance_ids(labels), inst_seeds):
            scan, labels = transform_instance(scan, labels, inst, config.instance_translate_max,
                                              config.instance_rotate_max, s, grid)
    if config.global_translate_max > 0 or config.global_rotate_max > 0:
        scan, labels = global_rigid(scan, labels, config.global_translate_max,
                                    config.global_rotate_max, seeds[3])
    if config.flip_y and np.random.default_rng(seeds[4]).random() < 0.5:
        scan, labels = flip_y(scan, labels)
    if config.point_noise_sigma > 0:
        scan = jitter_points(scan, config.point_noise_sigma, seeds[5], config.noise_is_variance)
    return scan, labels
