"""
Mask detection metrics and footprint-completion statistics
----------------------------------------------------------
Predictions are matched greedily by score to ground-truth masks at a mask
IoU threshold; AP is computed from the pooled, score-sorted TP/FP list.
"""

from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .dataset_io import ObjectBox3D, PointCloud
from .masks import BinaryMask, InstanceMaskSet, occupancy
from .matching import iou_matrix
from .pillars import GridConfig

MAP_LADDER = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AP_MODES = ("all_point", "eleven_point", "forty_point")
DIFFICULTIES = ("Easy", "Moderate", "Hard")
# correct at IoU 0.7 if the area ratio alone limited the overlap
AREA_BAND = (0.7, 100.0 / 70.0)


@dataclass(frozen=True)
class ScoredMask:
    score: float
    mask: BinaryMask


@dataclass
class DetectionOutcome:
    """Per-prediction results, in descending score order.

    ``ignored`` predictions matched a ground truth that is excluded from
    the evaluation (e.g. outside a difficulty level) and count as neither
    TP nor FP.
    """

    scores: list = field(default_factory=list)
    is_tp: list = field(default_factory=list)
    matched_gt: list = field(default_factory=list)
    iou: list = field(default_factory=list)
    ignored: list = field(default_factory=list)

    def __len__(self):
        return len(self.scores)

    @property
    def num_tp(self) -> int:
        return sum(1 for t, ig in zip(self.is_tp, self.ignored) if t and not ig)


@dataclass
class MetricsReport:
    ap_at: dict
    m_ap: float
    m_iou: float
    num_gt: int
    num_pred: int
    num_tp: int
    per_difficulty: dict | None = None
    ap_mode: str = "all_point"

    def to_json(self) -> dict:
        doc = {
            "ap_at": {f"{t:.2f}": v for t, v in sorted(self.ap_at.items())},
            "AP50": self.ap_at.get(0.5), "AP70": self.ap_at.get(0.7),
            "mAP": self.m_ap, "mIoU": self.m_iou, "ap_mode": self.ap_mode,
            "counts": {"num_gt": self.num_gt, "num_pred": self.num_pred, "num_tp": self.num_tp},
        }
        if self.per_difficulty is not None:
            doc["per_difficulty"] = self.per_difficulty
        return doc


def _as_scored(preds) -> list[ScoredMask]:
    if isinstance(preds, InstanceMaskSet):
        return [ScoredMask(1.0 if e.score is None else float(e.score), e.mask) for e in preds.entries]
    out = []
    for p in preds:
        out.append(p if isinstance(p, ScoredMask) else ScoredMask(float(p[0]), p[1]))
    return out


def _score_order(scores: Sequence[float]) -> np.ndarray:
    # descending score, ties by input order
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def greedy_match(preds, gts: InstanceMaskSet, threshold: float,
                 ignore_ids: frozenset | set = frozenset()) -> DetectionOutcome:
    """Greedy score-ordered matching of predictions to ground truths.

    Each prediction takes the unmatched ground truth of highest IoU (ties to
    the lower instance id) when that IoU reaches ``threshold``.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    preds = _as_scored(preds)
    for p in preds:
        if p.mask.grid != gts.grid:
            raise ValueError("prediction and ground truth are on different grids")
    out = DetectionOutcome()
    if not preds:
        return out
    order = _score_order([p.score for p in preds])
    gt_ids = np.array(gts.ids(), dtype=np.int64)
    by_id = np.argsort(gt_ids, kind="stable")
    if len(gts):
        ious = iou_matrix(np.stack([preds[i].mask.data for i in order]), gts.stack()[by_id])
    taken = np.zeros(len(gts), dtype=bool)
    for rank, i in enumerate(order):
        out.scores.append(preds[i].score)
        best, best_iou = -1, 0.0
        if len(gts):
            cand = np.where(taken, -1.0, ious[rank])
            best = int(np.argmax(cand))
            best_iou = float(cand[best])
        if best >= 0 and best_iou >= threshold:
            taken[best] = True
            gid = int(gt_ids[by_id[best]])
            out.is_tp.append(True)
            out.matched_gt.append(gid)
            out.iou.append(best_iou)
            out.ignored.append(gid in ignore_ids)
        else:
            out.is_tp.append(False)
            out.matched_gt.append(None)
            out.iou.append(max(best_iou, 0.0))
            out.ignored.append(False)
    return out


def _envelope_ap(tp: np.ndarray, num_gt: int, mode: str) -> float:
    if mode not in AP_MODES:
        raise ValueError(f"unknown AP mode {mode!r}")
    if num_gt == 0:
        return 1.0 if tp.size == 0 else 0.0
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / num_gt
    precision = ctp / np.arange(1, tp.size + 1)
    # precision envelope: best precision at this or any higher recall
    env = np.maximum.accumulate(precision[::-1])[::-1]
    if mode == "all_point":
        prev = np.concatenate([[0.0], recall[:-1]])
        return float(np.sum((recall - prev) * env))
    grid = np.linspace(0.0, 1.0, 11) if mode == "eleven_point" else np.arange(1, 41) / 40.0
    # envelope at recall r = max precision over ranks whose recall >= r
    pos = np.searchsorted(recall, grid - 1e-12, side="left")
    vals = np.where(pos < recall.size, env[np.minimum(pos, recall.size - 1)], 0.0)
    return float(vals.mean())


def average_precision(outcome: DetectionOutcome | Sequence[bool], num_gt: int, mode: str = "all_point") -> float:
    """AP from score-ordered TP/FP flags (ignored predictions are skipped)."""
    if isinstance(outcome, DetectionOutcome):
        flags = [t for t, ig in zip(outcome.is_tp, outcome.ignored) if not ig]
    else:
        flags = list(outcome)
    return _envelope_ap(np.asarray(flags, dtype=np.float64), num_gt, mode)


def _pool(outcomes: Sequence[DetectionOutcome]) -> DetectionOutcome:
    pooled = DetectionOutcome()
    for o in outcomes:
        pooled.scores += o.scores
        pooled.is_tp += o.is_tp
        pooled.matched_gt += o.matched_gt
        pooled.iou += o.iou
        pooled.ignored += o.ignored
    order = _score_order(pooled.scores)
    return DetectionOutcome(*[[col[i] for i in order] for col in
                              (pooled.scores, pooled.is_tp, pooled.matched_gt, pooled.iou, pooled.ignored)])


def difficulty_bucket(box: ObjectBox3D) -> str:
    """Easiest KITTI difficulty level the box qualifies for, or ``Ignored``."""
    h, occ, trunc = box.image_bbox_height, box.occluded, box.truncated
    if h >= 40 and occ <= 0 and trunc <= 0.15:
        return "Easy"
    if h >= 25 and occ <= 1 and trunc <= 0.30:
        return "Moderate"
    if h >= 25 and occ <= 2 and trunc <= 0.50:
        return "Hard"
    return "Ignored"


def _levels_included(level: str) -> set[str]:
    return set(DIFFICULTIES[:DIFFICULTIES.index(level) + 1])


def evaluate_dataset(pred_sets: Mapping[str, object], gt_sets: Mapping[str, InstanceMaskSet],
                     thresholds=(0.5, 0.7), map_ladder=MAP_LADDER, ap_mode: str = "all_point",
                     miou_mode: str = "tp", difficulties: Mapping[str, Mapping[int, str]] | None = None,
                     difficulty_threshold: float = 0.7) -> MetricsReport:
    """Pooled mask AP over scans.

    ``miou_mode``: ``tp`` (mean IoU of the true positives at 0.5) or ``gt``
    (mean over ground truths, a missed ground truth counting 0).
    """
    missing = sorted(set(gt_sets) ^ set(pred_sets))
    if missing:
        raise ValueError(f"scan ids without a counterpart: {', '.join(missing)}")
    scan_ids = sorted(gt_sets)
    preds = {s: _as_scored(pred_sets[s]) for s in scan_ids}
    num_gt = sum(len(gt_sets[s]) for s in scan_ids)
    num_pred = sum(len(preds[s]) for s in scan_ids)

    def pooled(th, ignore=None):
        return _pool([greedy_match(preds[s], gt_sets[s], th,
                                   ignore.get(s, frozenset()) if ignore else frozenset())
                      for s in scan_ids])

    ap_at, cache = {}, {}
    for th in sorted(set(thresholds) | set(map_ladder)):
        cache[th] = pooled(th)
        ap_at[th] = average_precision(cache[th], num_gt, ap_mode)
    m_ap = float(np.mean([ap_at[t] for t in map_ladder]))
    base = cache[0.5] if 0.5 in cache else pooled(0.5)

    if miou_mode == "tp":
        ious = [i for i, t in zip(base.iou, base.is_tp) if t]
        m_iou = float(np.mean(ious)) if ious else (1.0 if num_gt == 0 and num_pred == 0 else 0.0)
    elif miou_mode == "gt":
        ious = [i for i, t in zip(base.iou, base.is_tp) if t]
        m_iou = float(sum(ious) / num_gt) if num_gt else 1.0
    else:
        raise ValueError(f"unknown mIoU mode {miou_mode!r}")

    per_difficulty = None
    if difficulties is not None:
        per_difficulty = {}
        for level in DIFFICULTIES:
            keep = _levels_included(level)
            ignore, n = {}, 0
            for s in scan_ids:
                labels = difficulties.get(s, {})
                ids = gt_sets[s].ids()
                ignore[s] = frozenset(i for i in ids if labels.get(i, "Ignored") not in keep)
                n += len(ids) - len(ignore[s])
            per_difficulty[level] = average_precision(pooled(difficulty_threshold, ignore), n, ap_mode)

    return MetricsReport(ap_at, m_ap, m_iou, num_gt, num_pred, base.num_tp, per_difficulty, ap_mode)


# ---------------------------------------------------------------------------
# Completion analysis

def _stats(values) -> tuple[float | None, float | None]:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        return None, None
    return float(v.mean()), float(v.std())


@dataclass
class CompletionStats:
    best_case_ratios: dict = field(default_factory=dict)       # instance -> ratio, low-area excluded
    best_case_inclusive: dict = field(default_factory=dict)    # instance -> ratio, all instances
    all_scan_ratios: dict = field(default_factory=dict)        # (scan, instance) -> ratio
    pred_ratios: list = field(default_factory=list)
    bins: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.5, 21))

    def summary(self) -> dict:
        best_mean, best_std = _stats(self.best_case_ratios.values())
        inc_mean, inc_std = _stats(self.best_case_inclusive.values())
        all_mean, all_std = _stats(self.all_scan_ratios.values())
        doc = {
            "best_case": {"mean": best_mean, "std": best_std, "count": len(self.best_case_ratios)},
            "best_case_inclusive": {"mean": inc_mean, "std": inc_std, "count": len(self.best_case_inclusive)},
            "all_scans": {"mean": all_mean, "std": all_std, "count": len(self.all_scan_ratios)},
        }
        if self.pred_ratios:
            p_mean, p_std = _stats(self.pred_ratios)
            doc["predictions"] = {"mean": p_mean, "std": p_std, "count": len(self.pred_ratios),
                                  "band": list(AREA_BAND), "fraction_in_band": self.fraction_in_band()}
        return doc

    def histogram(self, series: str, bins=None) -> tuple[np.ndarray, np.ndarray]:
        values = {"best_case": list(self.best_case_ratios.values()),
                  "best_case_inclusive": list(self.best_case_inclusive.values()),
                  "all_scans": list(self.all_scan_ratios.values()),
                  "predictions": self.pred_ratios}[series]
        edges = np.asarray(self.bins if bins is None else bins, dtype=np.float64)
        counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=edges)
        return edges, counts

    def fraction_in_band(self) -> float:
        if not self.pred_ratios:
            return float("nan")
        r = np.asarray(self.pred_ratios)
        return float(np.mean((r >= AREA_BAND[0]) & (r <= AREA_BAND[1])))


def completion_analysis(complete_masks: Mapping[str, InstanceMaskSet],
                        single_masks: Mapping[tuple, BinaryMask | None],
                        low_area_cutoff: int = 40, bins=None) -> CompletionStats:
    """Single-scan vs complete footprint area ratios.

    Every (scan, instance) with a complete mask gets the ratio
    A_single / A_complete (0 when the single-scan mask is missing or empty).
    The best case per instance is the maximum over scans; instances whose
    best single-scan area is below ``low_area_cutoff`` are left out of
    ``best_case_ratios`` but kept in ``best_case_inclusive``.
    """
    for key in single_masks:
        scan, inst = key
        if scan not in complete_masks or complete_masks[scan].get(inst) is None:
            raise KeyError(f"no complete mask for instance {inst} in scan {scan}")
    all_ratios = {}
    best: dict[int, tuple[float, int]] = {}
    for scan in sorted(complete_masks):
        for e in complete_masks[scan].entries:
            a_complete = e.mask.area
            if a_complete == 0:
                raise ValueError(f"empty complete mask for instance {e.instance_id} in scan {scan}")
            single = single_masks.get((scan, e.instance_id))
            a_single = 0 if single is None else single.area
            ratio = a_single / a_complete
            all_ratios[(scan, e.instance_id)] = ratio
            prev = best.get(e.instance_id)
            if prev is None or ratio > prev[0]:
                best[e.instance_id] = (ratio, a_single)
    stats = CompletionStats(all_scan_ratios=all_ratios)
    if bins is not None:
        stats.bins = np.asarray(bins, dtype=np.float64)
    for inst in sorted(best):
        ratio, a_single = best[inst]
        stats.best_case_inclusive[inst] = ratio
        if a_single >= low_area_cutoff:
            stats.best_case_ratios[inst] = ratio
    return stats


def prediction_area_analysis(pred_sets: Mapping[str, object], gt_sets: Mapping[str, InstanceMaskSet],
                             threshold: float = 0.5, stats: CompletionStats | None = None) -> CompletionStats:
    """A_pred / A_complete for every prediction matched to a ground truth at ``threshold``."""
    stats = stats or CompletionStats()
    for scan in sorted(gt_sets):
        preds = _as_scored(pred_sets.get(scan, []))
        outcome = greedy_match(preds, gt_sets[scan], threshold)
        order = _score_order([p.score for p in preds])
        for rank, (tp, gid) in enumerate(zip(outcome.is_tp, outcome.matched_gt)):
            if tp:
                pred = preds[order[rank]]
                stats.pred_ratios.append(pred.mask.area / gt_sets[scan].get(gid).mask.area)
    return stats


# ---------------------------------------------------------------------------
# Rendering

def instance_color(instance_id: int) -> tuple[int, int, int]:
    """Stable, well-saturated RGB color for an instance id."""
    digest = hashlib.sha256(str(int(instance_id)).encode()).digest()
    hue = int.from_bytes(digest[:2], "little") / 65536.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 1.0)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def render_overlay(scan: PointCloud, masks, grid: GridConfig, alpha: float = 0.5) -> np.ndarray:
    """H x W x 3 uint8 image: gray BEV occupancy with colored mask overlays.

    Image row i is grid row i (y increasing downwards in the image).
    ``masks`` is an InstanceMaskSet or a sequence of (score, mask) pairs;
    scored masks are colored by their position in the sequence.
    """
    occ = occupancy(scan.points[:, :2], grid) if len(scan) else np.zeros(grid.shape, bool)
    img = np.where(occ, 200.0, 0.0)[..., None].repeat(3, axis=2)
    if isinstance(masks, InstanceMaskSet):
        items = [(e.instance_id, e.mask) for e in masks.entries]
    else:
        items = [(i, sm.mask) for i, sm in enumerate(_as_scored(masks))]
    for inst, mask in items:
        color = np.array(instance_color(inst), dtype=np.float64)
        img[mask.data] = (1.0 - alpha) * img[mask.data] + alpha * color
    return np.round(img).astype(np.uint8)


def save_png(image: np.ndarray, path) -> None:
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an H x W x 3 uint8 image")
    Image.fromarray(image).save(path, format="PNG", optimize=False)
