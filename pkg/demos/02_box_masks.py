# Footprint masks from KITTI 3D boxes, plus an overlay image for eyeballing.
import os
import tempfile

from maskbev_kit import GridConfig, generate_masks_from_boxes, read_kitti_objects, read_point_cloud, render_overlay
from maskbev_kit import read_mask_set, write_mask_set
from maskbev_kit.evaluation import save_png
from maskbev_kit.synthetic import write_kitti_split

root = tempfile.mkdtemp()
write_kitti_split(root, n_scans=1, seed=3)
base = os.path.join(root, "training")
boxes = read_kitti_objects(os.path.join(base, "label_2", "000000.txt"), os.path.join(base, "calib", "000000.txt"))
for b in boxes:
    print(f"car at ({b.center[0]:.2f}, {b.center[1]:.2f})  {b.length:.2f} x {b.width:.2f}  yaw {b.yaw:+.2f}")

grid = GridConfig.kitti()
masks = generate_masks_from_boxes(boxes, grid, scan_id="000000")
for e in masks.entries:
    print("instance", e.instance_id, "area", e.mask.area, "px")

# labels are stored as run-length encoded JSON
path = os.path.join(root, "000000.json")
write_mask_set(masks, path)
print("JSON size:", os.path.getsize(path), "bytes; reloaded", len(read_mask_set(path)), "masks")

png = os.path.join(root, "000000.png")
save_png(render_overlay(read_point_cloud(os.path.join(base, "velodyne", "000000.bin")), masks, grid), png)
print("overlay written to", png)
