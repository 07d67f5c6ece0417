"""
Set prediction matching and loss
--------------------------------
A prediction is a fixed set of queries, each with a class distribution
(last entry = ``no_object``) and a mask logit raster. Ground truths are
assigned to queries one-to-one by minimum total cost (Hungarian algorithm);
queries left over are supervised towards ``no_object`` with a down-weighted
classification term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .masks import BinaryMask, InstanceMaskSet
from .pillars import GridConfig

_LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class Query:
    class_probs: np.ndarray
    mask_logits: np.ndarray


@dataclass(frozen=True)
class SetPrediction:
    """Up to M query outputs on a common grid; class index 0 is car, the last is no_object."""

    queries: tuple
    grid: GridConfig

    def __post_init__(self):
        qs = []
        for q in self.queries:
            probs = np.asarray(q.class_probs, dtype=np.float64)
            logits = np.asarray(q.mask_logits, dtype=np.float64)
            if probs.ndim != 1 or probs.size < 2:
                raise ValueError("class_probs needs at least one class plus no_object")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-6:
                raise ValueError("class_probs must be a probability vector")
            if logits.shape != self.grid.shape:
                raise ValueError(f"mask logits {logits.shape} do not match grid {self.grid.shape}")
            if not np.all(np.isfinite(logits)):
                raise ValueError("mask logits must be finite")
            qs.append(Query(probs, logits))
        object.__setattr__(self, "queries", tuple(qs))

    def __len__(self):
        return len(self.queries)

    @classmethod
    def from_arrays(cls, class_probs, mask_logits, grid: GridConfig) -> "SetPrediction":
        return cls(tuple(Query(p, m) for p, m in zip(class_probs, mask_logits)), grid)

    @property
    def no_object_index(self) -> int:
        return self.queries[0].class_probs.size - 1 if self.queries else 1

    def probs(self) -> np.ndarray:
        return np.stack([q.class_probs for q in self.queries])

    def logits(self) -> np.ndarray:
        return np.stack([q.mask_logits for q in self.queries])


@dataclass(frozen=True)
class LossWeights:
    w_class: float = 2.0
    w_bce: float = 5.0
    w_dice: float = 5.0
    no_object_factor: float = 0.1

    def __post_init__(self):
        if min(self.w_class, self.w_bce, self.w_dice, self.no_object_factor) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class Assignment:
    pairs: tuple  # ((query, gt), ...) sorted by query
    num_queries: int
    num_gts: int

    def __post_init__(self):
        qs = [q for q, _ in self.pairs]
        gs = [g for _, g in self.pairs]
        if len(set(qs)) != len(qs) or len(set(gs)) != len(gs):
            raise ValueError("a query or ground truth is assigned twice")
        if any(not 0 <= q < self.num_queries for q in qs) or any(not 0 <= g < self.num_gts for g in gs):
            raise ValueError("assignment index out of range")

    def unmatched_queries(self) -> list[int]:
        used = {q for q, _ in self.pairs}
        return [q for q in range(self.num_queries) if q not in used]


@dataclass(frozen=True)
class LossBreakdown:
    class_loss: float
    bce_loss: float
    dice_loss: float
    no_object_loss: float  # unweighted mean over unmatched queries
    no_object_term: float  # its weighted share of ``total``
    total: float


# ---------------------------------------------------------------------------

def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    if a.grid != b.grid:
        raise ValueError("masks are on different grids")
    union = np.count_nonzero(a.data | b.data)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.data & b.data) / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (N, H, W) and (M, H, W) boolean stacks; empty/empty pairs give 1."""
    fa = a.reshape(len(a), -1).astype(np.float32)
    fb = b.reshape(len(b), -1).astype(np.float32)
    # float32 counts are exact below 2**24 pixels; divide in float64
    inter = (fa @ fb.T).astype(np.float64)
    union = fa.sum(1, dtype=np.float64)[:, None] + fb.sum(1, dtype=np.float64)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 1.0)


def _logit(threshold: float) -> float:
    return math.log(threshold / (1.0 - threshold))


def binarize(pred: SetPrediction, threshold: float = 0.5, drop_no_object: bool = False) -> list[tuple[float, BinaryMask]]:
    """(car score, mask) per query, where the mask keeps pixels with sigmoid(logit) > threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    cut = _logit(threshold)
    out = []
    for q in pred.queries:
        if drop_no_object and int(np.argmax(q.class_probs)) == q.class_probs.size - 1:
            continue
        out.append((float(q.class_probs[0]), BinaryMask(q.mask_logits > cut, pred.grid)))
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def mask_bce(logits: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Pairwise mean per-pixel BCE of (Q, P) logits against (G, P) targets -> (Q, G)."""
    g = np.asarray(gt, dtype=np.float64)
    pos = _softplus(-logits)  # -log sigmoid
    neg = _softplus(logits)   # -log(1 - sigmoid)
    return (pos @ g.T + neg @ (1.0 - g).T) / logits.shape[1]


def mask_dice(logits: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Pairwise 1 - (2 sum(p g) + 1) / (sum p + sum g + 1) -> (Q, G)."""
    g = np.asarray(gt, dtype=np.float64)
    p = _sigmoid(logits)
    num = 2.0 * (p @ g.T) + 1.0
    den = p.sum(1)[:, None] + g.sum(1)[None, :] + 1.0
    return 1.0 - num / den


def _paired_bce(logits, gt):
    return np.mean(np.where(gt, _softplus(-logits), _softplus(logits)), axis=1)


def _paired_dice(logits, gt):
    p = _sigmoid(logits)
    return 1.0 - (2.0 * (p * gt).sum(1) + 1.0) / (p.sum(1) + gt.sum(1) + 1.0)


def class_cost(probs: np.ndarray, labels: Sequence[int], mode: str = "neg_log") -> np.ndarray:
    """(Q, G) classification cost: -log p (default) or -p."""
    p = np.asarray(probs)[:, list(labels)]
    if mode == "neg_log":
        return -np.log(np.maximum(p, _LOG_CLAMP))
    if mode == "prob":
        return -p
    raise ValueError(f"unknown class cost mode {mode!r}")


def _subsample(pixels: int, sample: int | None, seed) -> np.ndarray | None:
    if sample is None or sample >= pixels:
        return None
    return np.sort(np.random.default_rng(seed).choice(pixels, size=sample, replace=False))


def cost_matrix(pred: SetPrediction, gts: InstanceMaskSet, weights: LossWeights = LossWeights(),
                class_mode: str = "neg_log", sample_pixels: int | None = None, seed=0) -> np.ndarray:
    """(num_queries, num_gts) matching cost."""
    if pred.grid != gts.grid:
        raise ValueError("prediction and ground truth are on different grids")
    q, g = len(pred), len(gts)
    if q == 0 or g == 0:
        return np.zeros((q, g))
    logits = pred.logits().reshape(q, -1)
    masks = gts.stack().reshape(g, -1)
    sel = _subsample(logits.shape[1], sample_pixels, seed)
    if sel is not None:
        logits, masks = logits[:, sel], masks[:, sel]
    labels = [e.class_label for e in gts.entries]
    return (weights.w_class * class_cost(pred.probs(), labels, class_mode)
            + weights.w_bce * mask_bce(logits, masks)
            + weights.w_dice * mask_dice(logits, masks))


def pair_cost(query: Query, gt_mask: BinaryMask, weights: LossWeights = LossWeights(),
              class_label: int = 0, class_mode: str = "neg_log") -> float:
    logits = np.asarray(query.mask_logits, dtype=np.float64)
    if logits.shape != gt_mask.data.shape:
        raise ValueError("query mask and ground truth have different shapes")
    lg = logits.reshape(1, -1)
    g = gt_mask.data.reshape(1, -1)
    c = class_cost(np.asarray(query.class_probs)[None], [class_label], class_mode)[0, 0]
    return float(weights.w_class * c + weights.w_bce * _paired_bce(lg, g)[0]
                 + weights.w_dice * _paired_dice(lg, g)[0])


# ---------------------------------------------------------------------------

def _shortest_augmenting(c: np.ndarray):
    """Optimal assignment of every row of an n x m (n <= m) matrix.

    Returns (col_of_row, u, v) with dual potentials satisfying
    c[i, j] - u[i] - v[j] >= 0, tight on the matched pairs; columns left
    unmatched keep v = 0.
    """
    n, m = c.shape
    # 1-based arrays; column 0 is the virtual start of each augmenting path
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    row_of = np.zeros(m + 1, dtype=np.int64)  # row matched to column j, 0 = free
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if row_of[j]:
            col_of_row[row_of[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _reroute(i, j, match, owner, tight, fixed_col) -> bool:
    """Give column j to row i, moving other rows along tight edges; False if impossible."""
    start, target = owner[j], match[i]
    parent = {}  # column -> previous column on the path (None at the start row)
    queue, seen = [(start, None)], {j}
    while queue:
        row, via = queue.pop(0)
        for col in np.flatnonzero(tight[row]):
            col = int(col)
            if col in seen or fixed_col[col]:
                continue
            seen.add(col)
            parent[col] = via
            if col == target:
                # shift every row on the path one column along
                while col is not None:
                    prev = parent[col]
                    r = owner[prev] if prev is not None else start
                    match[r], owner[col] = col, r
                    col = prev
                match[i], owner[j] = j, i
                return True
            queue.append((owner[col], col))
    return False


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment covering min(n, m) rows/columns.

    Shortest augmenting paths with dual potentials, O(n^2 m). Among optimal
    assignments the one whose sorted (row, col) list is lexicographically
    smallest is returned: rows are visited in order and each takes the lowest
    column (or, with more rows than columns, stays unmatched only if it must)
    that still admits an optimal completion on the tight edges.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a 2D matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    n, m = c.shape
    if n == 0 or m == 0:
        return []
    k = max(n, m)
    u, v = np.zeros(k), np.zeros(k)
    match = np.full(k, -1, dtype=np.int64)
    if n <= m:
        match[:n], u[:n], v[:m] = _shortest_augmenting(c)
    else:
        rows, v[:m], u[:n] = _shortest_augmenting(c.T)
        match[rows] = np.arange(m)
    # square zero-padded problem: these potentials stay optimal, so its optimal
    # assignments are exactly the perfect matchings on the tight edges
    padded = np.zeros((k, k))
    padded[:n, :m] = c
    tol = 1e-9 * (1.0 + float(np.abs(c).max()))
    tight = padded - u[:, None] - v[None, :] <= tol
    free_cols = sorted(set(range(k)) - set(match[match >= 0].tolist()))
    for r, col in zip(np.flatnonzero(match < 0), free_cols):
        match[r] = col
        tight[r, col] = True
    owner = np.empty(k, dtype=np.int64)
    owner[match] = np.arange(k)

    fixed_col = np.zeros(k, dtype=bool)
    for i in range(n):
        for j in np.flatnonzero(tight[i] & ~fixed_col):
            j = int(j)
            if j == match[i] or (j >= m and match[i] >= m):
                break
            if _reroute(i, j, match, owner, tight, fixed_col):
                break
        fixed_col[match[i]] = True
    return [(i, int(match[i])) for i in range(n) if match[i] < m]


def assignment_cost(cost, pairs) -> float:
    c = np.asarray(cost)
    return float(sum(c[i, j] for i, j in pairs))


def match_sets(pred: SetPrediction, gts: InstanceMaskSet, weights: LossWeights = LossWeights(),
               class_mode: str = "neg_log", sample_pixels: int | None = None, seed=0) -> Assignment:
    """Hungarian assignment of ground truths to queries; unmatched queries mean no_object."""
    if len(gts) > len(pred):
        raise ValueError(f"{len(gts)} ground truths but only {len(pred)} queries")
    cost = cost_matrix(pred, gts, weights, class_mode, sample_pixels, seed)
    return Assignment(tuple(hungarian(cost)), len(pred), len(gts))


def set_loss(pred: SetPrediction, gts: InstanceMaskSet, assignment: Assignment,
             weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Forward value of the set loss for a given assignment.

    Matched queries: mean -log p(gt class), mean mask BCE and mean Dice.
    Unmatched queries: mean -log p(no_object), weighted by
    ``no_object_factor * w_class``.
    """
    if assignment.num_queries != len(pred) or assignment.num_gts != len(gts):
        raise ValueError("assignment does not belong to this prediction / ground-truth pair")
    if pred.grid != gts.grid:
        raise ValueError("prediction and ground truth are on different grids")
    class_loss = bce = dice = no_obj = 0.0
    if assignment.pairs:
        qi = [q for q, _ in assignment.pairs]
        gi = [g for _, g in assignment.pairs]
        probs = pred.probs()[qi]
        labels = [gts.entries[g].class_label for g in gi]
        class_loss = float(np.mean(-np.log(np.maximum(probs[np.arange(len(qi)), labels], _LOG_CLAMP))))
        logits = pred.logits()[qi].reshape(len(qi), -1)
        masks = gts.stack()[gi].reshape(len(gi), -1)
        bce = float(np.mean(_paired_bce(logits, masks)))
        dice = float(np.mean(_paired_dice(logits, masks)))
    unmatched = assignment.unmatched_queries()
    if unmatched:
        p_none = pred.probs()[unmatched, pred.no_object_index]
        no_obj = float(np.mean(-np.log(np.maximum(p_none, _LOG_CLAMP))))
    no_obj_term = weights.no_object_factor * weights.w_class * no_obj
    total = weights.w_class * class_loss + weights.w_bce * bce + weights.w_dice * dice + no_obj_term
    return LossBreakdown(class_loss, bce, dice, no_obj, no_obj_term, total)
