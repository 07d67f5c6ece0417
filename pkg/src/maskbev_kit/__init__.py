"""BEV instance-mask toolkit: pillar encoding, mask labels, set matching and mask AP."""

__version__ = "0.1.0"

from .dataset_io import (CropRegion, FormatError, ObjectBox3D, PointCloud, Pose, SemanticScan,
                         crop_point_cloud, read_calib, read_kitti_objects, read_point_cloud, read_poses,
                         read_semantic_labels, write_kitti_objects, write_point_cloud, write_semantic_labels)
from .pillars import (BevTensor, GridConfig, PillarSet, PointFeatures, encode_cloud, featurize, max_reduce,
                      pixel_to_world, read_bev, scatter_to_bev, voxelize, world_to_pixel, write_bev)
from .masks import (AggregatedInstanceMap, BinaryMask, InstanceMaskSet, MaskEntry, MaskGenParams,
                    aggregate_instances, generate_masks_from_boxes, generate_masks_from_instances,
                    morphology, rasterize_box_footprint, read_mask_set, rle_decode, rle_encode,
                    single_scan_mask, write_mask_set)
from .matching import (LossWeights, Query, SetPrediction, binarize, cost_matrix, hungarian, iou_matrix,
                       mask_iou, match_sets, set_loss)
from .evaluation import (CompletionStats, MetricsReport, average_precision, completion_analysis,
                         evaluate_dataset, greedy_match, render_overlay)
from .augmentation import AugmentationConfig, InstanceBank, augment
from .config import ConfigError, ToolkitConfig, load_config
