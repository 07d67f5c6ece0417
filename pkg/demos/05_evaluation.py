# Mask AP / mIoU of noisy predictions against box-derived ground truth.
import os
import tempfile

import numpy as np
from scipy import ndimage

from maskbev_kit import (BinaryMask, GridConfig, evaluate_dataset, generate_masks_from_boxes, read_kitti_objects)
from maskbev_kit.cli import format_table
from maskbev_kit.evaluation import ScoredMask, average_precision
from maskbev_kit.synthetic import write_kitti_split

root = tempfile.mkdtemp()
ids = write_kitti_split(root, n_scans=6, seed=11)
base = os.path.join(root, "training")
grid = GridConfig.kitti()
gts = {s: generate_masks_from_boxes(read_kitti_objects(os.path.join(base, "label_2", f"{s}.txt"),
                                                       os.path.join(base, "calib", f"{s}.txt")), grid, scan_id=s)
       for s in ids}

# predictions: shifted ground truths with random confidences, plus one false alarm per scan
rng = np.random.default_rng(0)
preds = {}
for s, ms in gts.items():
    out = []
    for e in ms.entries:
        shifted = ndimage.shift(e.mask.data, rng.integers(-3, 4, 2), order=0)
        out.append(ScoredMask(float(rng.random()), BinaryMask(shifted, grid)))
    fa = np.zeros(grid.shape, bool)
    fa[240:260, 100:110] = True
    out.append(ScoredMask(float(rng.random()) * 0.5, BinaryMask(fa, grid)))
    preds[s] = out

report = evaluate_dataset(preds, gts)
print(format_table(report.to_json()))

# AP of a ranked list by hand: a false positive before the only true positive halves AP
print("[FP, TP] ->", average_precision([False, True], 1), " [TP, FP] ->", average_precision([True, False], 1))
