# Pillar encoding of one LiDAR sweep into a BEV pseudo-image.
import os
import tempfile

import numpy as np

from maskbev_kit import GridConfig, encode_cloud, featurize, read_bev, read_point_cloud, voxelize, write_bev
from maskbev_kit.synthetic import write_kitti_split

root = tempfile.mkdtemp()
write_kitti_split(root, n_scans=1, seed=3)
cloud = read_point_cloud(os.path.join(root, "training", "velodyne", "000000.bin"))
print("points:", len(cloud), "intensity:", cloud.intensity is not None)

# 0.16 m cells over x [0, 80), y [-40, 40)
grid = GridConfig.kitti()
print("grid W x H:", grid.W, grid.H)

pillars = voxelize(cloud, grid)
print("non-empty pillars:", len(pillars), "max points per pillar:", pillars.indices.shape[1])

# per point: x y z, distance, offsets to the pillar center, offsets to the pillar mean, intensity
feats = featurize(cloud, pillars)
print("channels per point:", feats.num_channels)
valid = feats.valid_mask()
print("mean-offset sums (should be ~0):", np.abs((feats.features[..., 7:10] * valid[..., None]).sum(1)).max())

bev = encode_cloud(cloud, grid)
print("BEV tensor:", bev.data.shape, bev.data.dtype)

path = os.path.join(root, "scan.bevt")
write_bev(bev, path)
back = read_bev(path)
print("round trip identical:", np.array_equal(back.data, bev.data), "bytes:", os.path.getsize(path))
