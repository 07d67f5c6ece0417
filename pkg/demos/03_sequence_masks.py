# Complete vehicle footprints from a sequence: aggregate instance points in the
# world frame, then re-project them into each scan.
import os
import tempfile

from maskbev_kit import (GridConfig, aggregate_instances, generate_masks_from_instances, read_point_cloud,
                         read_poses, read_semantic_labels, single_scan_mask)
from maskbev_kit.evaluation import completion_analysis
from maskbev_kit.synthetic import write_semantickitti_sequence

root = tempfile.mkdtemp()
write_semantickitti_sequence(root, "08", n_scans=5, n_cars=6, seed=2)
seq = os.path.join(root, "sequences", "08")
poses = read_poses(os.path.join(seq, "poses.txt"), os.path.join(seq, "calib.txt"))
scans = [read_semantic_labels(os.path.join(seq, "labels", f"{k:06d}.label"),
                              read_point_cloud(os.path.join(seq, "velodyne", f"{k:06d}.bin")))
         for k in range(len(poses))]

grid = GridConfig.semantickitti()
agg = aggregate_instances(scans, poses)
print("instances seen in the sequence:", agg.ids())

complete, singles = {}, {}
for k, (scan, pose) in enumerate(zip(scans, poses)):
    sid = f"{k:06d}"
    complete[sid] = generate_masks_from_instances(agg, scan, pose, grid, scan_id=sid)
    for e in complete[sid].entries:
        singles[(sid, e.instance_id)] = single_scan_mask(scan, e.instance_id, grid)
    print(sid, {e.instance_id: e.mask.area for e in complete[sid].entries})

# a single sweep only sees the near side of each car
stats = completion_analysis(complete, singles)
print("best-case single/complete ratio:", stats.summary()["best_case"])
print("all scans:", stats.summary()["all_scans"])
