# Bipartite matching of mask queries to ground truths and the resulting set loss.
import numpy as np

from maskbev_kit import (BinaryMask, GridConfig, InstanceMaskSet, LossWeights, MaskEntry, SetPrediction,
                         hungarian, match_sets, set_loss)
from maskbev_kit.matching import cost_matrix

# the assignment solver on its own
cost = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
print("assignment:", hungarian(cost))

rng = np.random.default_rng(0)
grid = GridConfig(x_min=0, x_max=8, y_min=0, y_max=8, voxel_size=0.16)
gt = []
for k, (r, c) in enumerate([(5, 5), (25, 10), (12, 30)]):
    a = np.zeros(grid.shape, bool)
    a[r:r + 10, c:c + 15] = True
    gt.append(MaskEntry(k, 0, BinaryMask(a, grid)))
gts = InstanceMaskSet("demo", tuple(gt), grid)

# 8 queries: three roughly right, the rest noise
logits = rng.normal(-3, 1, (8, *grid.shape))
for q, e in zip((6, 1, 3), gt):
    logits[q][e.mask.data] += 6
probs = np.full((8, 2), [0.1, 0.9])
probs[[6, 1, 3]] = [0.8, 0.2]
pred = SetPrediction.from_arrays(probs, logits, grid)

print("cost matrix:\n", np.round(cost_matrix(pred, gts), 2))
a = match_sets(pred, gts)
print("query -> gt:", a.pairs)
print("unmatched (no_object):", a.unmatched_queries())

loss = set_loss(pred, gts, a)
print(loss)
print("no_object_factor doubled:", set_loss(pred, gts, a, LossWeights(no_object_factor=0.2)).no_object_term)
