import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from maskbev_kit.dataset_io import ObjectBox3D, PointCloud, Pose, SemanticScan
from maskbev_kit.masks import (BinaryMask, InstanceMaskSet, MaskEntry, MaskGenParams, aggregate_instances,
                               clean_mask, dumps_mask_set, generate_masks_from_boxes,
                               generate_masks_from_instances, mask_set_from_json, mask_set_to_json, morphology,
                               occupancy, rasterize_box_footprint, read_mask_set, rle_decode, rle_encode,
                               single_scan_mask, write_mask_set)
from maskbev_kit.pillars import GridConfig
from oracles import point_in_rect, rect_corners

KITTI = GridConfig.kitti()
SMALL = GridConfig(x_min=0.0, x_max=3.2, y_min=-1.6, y_max=1.6, voxel_size=0.16)
G12 = GridConfig(x_min=0.0, x_max=1.92, y_min=0.0, y_max=1.92, voxel_size=0.16)
G16 = GridConfig(x_min=0.0, x_max=2.56, y_min=0.0, y_max=2.56, voxel_size=0.16)


def brute_raster(box, grid):
    xs, ys = grid.cell_centers()
    return point_in_rect(xs, ys, rect_corners(box.center[0], box.center[1], box.length, box.width, box.yaw))


@pytest.mark.parametrize("yaw,rows,cols", [(0.0, 10, 25), (math.pi / 2, 25, 10)])
def test_axis_aligned_car_is_250_pixels(yaw, rows, cols):
    box = ObjectBox3D((20.09, 0.01, -0.9), 4.0, 1.6, 1.5, yaw)
    m = rasterize_box_footprint(box, KITTI)
    assert m.area == 250
    r, c = np.nonzero(m.data)
    assert (r.max() - r.min() + 1, c.max() - c.min() + 1) == (rows, cols)


def test_rasterization_matches_oracle_small_sample(rng):
    for _ in range(50):
        box = ObjectBox3D((rng.uniform(-2, 82), rng.uniform(-42, 42), 0.0), rng.uniform(0.5, 8),
                          rng.uniform(0.5, 4), 1.5, rng.uniform(-math.pi, math.pi))
        np.testing.assert_array_equal(rasterize_box_footprint(box, KITTI).data, brute_raster(box, KITTI))


def test_box_outside_grid_is_empty():
    assert rasterize_box_footprint(ObjectBox3D((-20.0, 0.0, 0.0), 4, 2, 1.5, 0.3), KITTI).area == 0


def test_box_masks_area_filter_only():
    tiny = ObjectBox3D((10.16, 0.08, -1.0), 0.1, 0.1, 1.0, 0.0)
    car = ObjectBox3D((20.09, 0.01, -0.9), 4.0, 1.6, 1.5, 0.0)
    ms = generate_masks_from_boxes([tiny, car], KITTI, scan_id="s")
    assert ms.ids() == [1] and ms.get(1).mask == rasterize_box_footprint(car, KITTI)
    kept = generate_masks_from_boxes([tiny], KITTI, MaskGenParams(min_area_pixels=0))
    assert kept.entries[0].mask.area == 1


def _block(shape=(12, 12), r0=2, r1=9, c0=3, c1=10):
    a = np.zeros(shape, dtype=bool)
    a[r0:r1, c0:c1] = True
    return a


def test_one_pixel_hole_closes_exactly():
    solid = _block()
    holed = solid.copy()
    holed[5, 6] = False
    closed = morphology(BinaryMask(holed, G12), "close", 3)
    np.testing.assert_array_equal(closed.data, solid)
    np.testing.assert_array_equal(clean_mask(holed, G12, MaskGenParams()).data, solid)


def test_opening_removes_thin_spur():
    a = _block()
    a[5, 10:12] = True
    np.testing.assert_array_equal(morphology(BinaryMask(a, G12), "open", 3).data, _block())


def test_morphology_rejects_bad_kernel():
    with pytest.raises(ValueError):
        morphology(BinaryMask(_block(), G12), "open", 2)
    with pytest.raises(ValueError):
        morphology(BinaryMask(_block(), G12), "blur", 3)


@settings(max_examples=60, deadline=None)
@given(arrays(bool, (16, 16)))
def test_open_close_idempotent(a):
    m = BinaryMask(a, G16)
    for op in ("open", "close"):
        once = morphology(m, op, 3)
        np.testing.assert_array_equal(morphology(once, op, 3).data, once.data)


def test_occupancy_ignores_out_of_range():
    pts = np.array([[0.01, -1.59], [3.19, 1.59], [3.2, 0.0], [-0.01, 0.0]])
    occ = occupancy(pts, SMALL)
    assert occ.sum() == 2 and occ[0, 0] and occ[19, 19]


@settings(max_examples=80)
@given(arrays(bool, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_rle_roundtrip(a):
    counts = rle_encode(a)
    assert sum(counts) == a.size
    assert all(c > 0 for c in counts[1:])
    np.testing.assert_array_equal(rle_decode(counts, a.shape), a)


def test_rle_starts_with_zero_run():
    a = np.array([[1, 1, 0], [0, 1, 1]], dtype=bool)
    assert rle_encode(a) == [0, 2, 2, 2]
    assert rle_encode(np.zeros((2, 2), bool)) == [4]


def test_rle_decode_rejects_wrong_total():
    with pytest.raises(ValueError):
        rle_decode([3, 2], (2, 2))


def _mask(grid, cells):
    a = np.zeros(grid.shape, dtype=bool)
    for r, c in cells:
        a[r, c] = True
    return BinaryMask(a, grid)


def test_mask_set_json_schema_and_roundtrip(tmp_path):
    ms = InstanceMaskSet("000007", (MaskEntry(3, 0, _mask(SMALL, [(0, 0), (0, 1)])),
                                    MaskEntry(9, 0, _mask(SMALL, [(5, 5)]))), SMALL)
    doc = mask_set_to_json(ms)
    assert set(doc) == {"scan_id", "grid", "instances"}
    assert doc["grid"]["H"] == 20 and doc["grid"]["W"] == 20
    assert doc["instances"][0] == {"id": 3, "class": 0, "rle": [0, 2, 398]}
    write_mask_set(ms, tmp_path / "m.json")
    back = read_mask_set(tmp_path / "m.json")
    assert back == ms
    assert dumps_mask_set(back) == (tmp_path / "m.json").read_text()


def test_scores_survive_json():
    ms = InstanceMaskSet("a", (MaskEntry(1, 0, _mask(SMALL, [(1, 1)]), score=0.25),), SMALL)
    back = mask_set_from_json(json.loads(dumps_mask_set(ms)))
    assert back.entries[0].score == 0.25
    defaulted = mask_set_from_json({**mask_set_to_json(ms), "instances": [
        {"id": 1, "class": 0, "rle": rle_encode(_mask(SMALL, [(1, 1)]).data)}]}, default_score=1.0)
    assert defaulted.entries[0].score == 1.0


def test_mask_set_validation():
    with pytest.raises(ValueError):
        InstanceMaskSet("a", (MaskEntry(1, 0, _mask(SMALL, [(0, 0)])), MaskEntry(1, 0, _mask(SMALL, [(1, 1)]))),
                        SMALL)
    with pytest.raises(ValueError):
        InstanceMaskSet("a", (MaskEntry(1, 0, _mask(KITTI, [(0, 0)])),), SMALL)
    with pytest.raises(ValueError):
        InstanceMaskSet("a", (MaskEntry(1, 0, BinaryMask(np.zeros(SMALL.shape, bool), SMALL)),), SMALL)


def _rect_points(x0, x1, y0, y1, step=0.04, z=-1.0):
    xs, ys = np.meshgrid(np.arange(x0 + step / 2, x1, step), np.arange(y0 + step / 2, y1, step))
    return np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, z)])


def _semantic(points, ids, sem=10):
    ids = np.asarray(ids)
    return SemanticScan(PointCloud(points), np.where(ids > 0, sem, 40), ids)


def test_area_filter_and_presence_filter():
    big = _rect_points(10.0, 12.0, 0.0, 1.6)  # 12.5 x 10 cells
    small = _rect_points(20.0, 20.5, 0.0, 0.5)
    scan = _semantic(np.concatenate([big, small]), [1] * len(big) + [2] * len(small))
    agg = aggregate_instances([scan], [Pose.identity()])
    ms = generate_masks_from_instances(agg, scan, Pose.identity(), KITTI)
    assert ms.ids() == [1]
    other = _semantic(small, [2] * len(small))
    assert generate_masks_from_instances(agg, other, Pose.identity(), KITTI).ids() == []
    no_presence = MaskGenParams(presence_filter=False)
    assert generate_masks_from_instances(agg, other, Pose.identity(), KITTI, no_presence).ids() == [1]


def test_non_vehicle_points_not_aggregated():
    pts = _rect_points(10.0, 12.0, 0.0, 1.6)
    scan = _semantic(pts, [4] * len(pts), sem=30)
    assert aggregate_instances([scan], [Pose.identity()]).ids() == []
    assert aggregate_instances([scan], [Pose.identity()], vehicle_classes=(30,)).ids() == [4]


def test_aggregation_completes_the_footprint():
    grid = KITTI
    # two scans from different poses each see one half of a parked car
    world = _rect_points(30.08, 34.08, -0.96, 0.96)
    half_a, half_b = world[world[:, 1] < 0], world[world[:, 1] >= 0]
    poses = [Pose.identity(), Pose(np.eye(3), np.array([5.0, 0.0, 0.0]))]
    scans = [_semantic(half_a, [7] * len(half_a)),
             _semantic(poses[1].inverse().apply(half_b), [7] * len(half_b))]
    agg = aggregate_instances(scans, poses)
    assert agg.scan_counts == {7: 2}
    full = generate_masks_from_instances(agg, scans[0], poses[0], grid).get(7).mask
    part = single_scan_mask(scans[0], 7, grid)
    assert full.area == 25 * 12 and part.area == 25 * 6
    assert (part.data <= full.data).all()
