import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maskbev_kit.dataset_io import (CropRegion, FormatError, ObjectBox3D, PointCloud, Pose, SemanticScan,
                                    crop_point_cloud, read_calib, read_kitti_objects, read_point_cloud,
                                    read_poses, read_semantic_labels, velo_to_cam, wrap_angle,
                                    write_kitti_objects, write_point_cloud, write_semantic_labels)
from maskbev_kit.synthetic import TR_VELO_TO_CAM, sequence_poses, write_calib


def test_point_cloud_roundtrip(tmp_path, rng):
    pts = rng.uniform(-50, 50, (1000, 3)).astype(np.float32)
    cloud = PointCloud(pts, rng.uniform(0, 1, 1000).astype(np.float32))
    path = tmp_path / "a.bin"
    write_point_cloud(cloud, path)
    assert os.path.getsize(path) == 16 * 1000
    back = read_point_cloud(path)
    np.testing.assert_array_equal(back.points, pts)
    np.testing.assert_array_equal(back.intensity, cloud.intensity.astype(np.float32))


def test_point_cloud_is_read_only(rng):
    cloud = PointCloud(rng.normal(size=(5, 3)))
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 1.0


def test_truncated_file_is_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * 20)
    with pytest.raises(FormatError):
        read_point_cloud(path)


def test_non_finite_record_reports_index(tmp_path):
    rec = np.zeros((4, 4), dtype="<f4")
    rec[2, 1] = np.nan
    path = tmp_path / "nan.bin"
    rec.tofile(path)
    with pytest.raises(FormatError, match="2"):
        read_point_cloud(path)


def test_intensity_clipped_to_unit_range(tmp_path):
    rec = np.array([[1, 2, 0, 1.5], [1, 2, 0, -0.2]], dtype="<f4")
    path = tmp_path / "i.bin"
    rec.tofile(path)
    np.testing.assert_array_equal(read_point_cloud(path).intensity, [1.0, 0.0])


def test_semantic_labels_roundtrip_and_bit_layout(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(3, 3)))
    words = np.array([(7 << 16) | 10, 40, (65535 << 16) | 252], dtype="<u4")
    path = tmp_path / "x.label"
    words.tofile(path)
    scan = read_semantic_labels(path, cloud)
    np.testing.assert_array_equal(scan.semantic_id, [10, 40, 252])
    np.testing.assert_array_equal(scan.instance_id, [7, 0, 65535])
    write_semantic_labels(scan, tmp_path / "y.label")
    assert (tmp_path / "y.label").read_bytes() == path.read_bytes()


def test_label_count_mismatch(tmp_path, rng):
    np.zeros(4, dtype="<u4").tofile(tmp_path / "x.label")
    with pytest.raises(FormatError):
        read_semantic_labels(tmp_path / "x.label", PointCloud(rng.normal(size=(5, 3))))


def test_crop_box_is_half_open():
    pts = np.array([[0.0, 0.0, 0.0], [80.0, 0.0, 0.0], [79.99, -40.0, -3.0], [10.0, 40.0, 0.0], [10, 0, 1.0]])
    kept = crop_point_cloud(PointCloud(pts), CropRegion.kitti())
    np.testing.assert_array_equal(kept.points, pts[[0, 2]])


def test_crop_radial_keeps_labels_aligned():
    pts = np.array([[39.0, 0.0, 0.0], [30.0, 30.0, 0.0], [-10.0, 5.0, 0.5]])
    scan = SemanticScan(PointCloud(pts), [10, 10, 40], [1, 2, 0])
    out = crop_point_cloud(scan, CropRegion.semantickitti())
    np.testing.assert_array_equal(out.instance_id, [1, 0])
    np.testing.assert_array_equal(out.semantic_id, [10, 40])


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi <= w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_pose_inverse_and_rigidity(rng):
    pose = sequence_poses(4)[3]
    pts = rng.normal(size=(50, 3))
    np.testing.assert_allclose(pose.inverse().apply(pose.apply(pts)), pts, atol=1e-12)
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 2.0, 1.0]), np.zeros(3))


def test_read_poses_recovers_lidar_frame(tmp_path):
    poses = sequence_poses(3)
    calib = tmp_path / "calib.txt"
    write_calib(calib, odometry=True)
    with open(tmp_path / "poses.txt", "w") as f:
        for p in poses:
            m = TR_VELO_TO_CAM @ p.matrix() @ np.linalg.inv(TR_VELO_TO_CAM)
            f.write(" ".join(repr(float(v)) for v in m[:3].ravel()) + "\n")
    back = read_poses(tmp_path / "poses.txt", calib)
    for a, b in zip(poses, back):
        np.testing.assert_allclose(a.matrix(), b.matrix(), atol=1e-12)


def test_read_poses_rejects_short_line(tmp_path):
    write_calib(tmp_path / "calib.txt", odometry=True)
    (tmp_path / "poses.txt").write_text("1 0 0 0 0 1 0 0 0 0 1\n")
    with pytest.raises(FormatError):
        read_poses(tmp_path / "poses.txt", tmp_path / "calib.txt")


def test_calib_accepts_both_keys(tmp_path):
    write_calib(tmp_path / "a.txt", odometry=True)
    write_calib(tmp_path / "b.txt", odometry=False)
    for name in ("a.txt", "b.txt"):
        np.testing.assert_allclose(velo_to_cam(read_calib(tmp_path / name)), TR_VELO_TO_CAM)


def test_kitti_label_conversion(tmp_path):
    write_calib(tmp_path / "calib.txt")
    # camera location is the bottom-face center; ry = 0 faces camera +x which is LiDAR -y
    line = "Car 0.00 0 -1.57 100.00 150.00 200.00 200.00 1.50 1.60 4.00 -2.02 1.00 20.27 0.00\n"
    (tmp_path / "l.txt").write_text(line + "Pedestrian 0 0 0 0 0 10 10 1.8 0.6 0.8 1 1 10 0\n")
    boxes = read_kitti_objects(tmp_path / "l.txt", tmp_path / "calib.txt")
    assert len(boxes) == 1
    b = boxes[0]
    # inverse of the axis swap: x = z_cam + 0.27, y = -(x_cam - 0.02), z = -(y_cam + 0.08)
    np.testing.assert_allclose(b.center, (20.54, 2.04, -(1.0 - 0.75) - 0.08), atol=1e-9)
    assert math.isclose(b.yaw, -math.pi / 2, abs_tol=1e-9)
    assert (b.length, b.width, b.height) == (4.0, 1.6, 1.5)
    assert b.image_bbox_height == 50.0


def test_kitti_label_roundtrip(tmp_path):
    write_calib(tmp_path / "calib.txt")
    boxes = [ObjectBox3D((12.3, -4.5, -0.9), 4.1, 1.7, 1.5, 0.7, image_bbox_height=30.0,
                         bbox2d=(1.0, 2.0, 3.0, 32.0), occluded=1, truncated=0.1)]
    write_kitti_objects(boxes, tmp_path / "l.txt", tmp_path / "calib.txt")
    back = read_kitti_objects(tmp_path / "l.txt", tmp_path / "calib.txt")
    np.testing.assert_allclose(back[0].center, boxes[0].center, atol=1e-5)
    assert math.isclose(back[0].yaw, 0.7, abs_tol=1e-5)
    assert back[0].occluded == 1 and back[0].image_bbox_height == 30.0


def test_kitti_label_too_few_fields(tmp_path):
    write_calib(tmp_path / "calib.txt")
    (tmp_path / "l.txt").write_text("Car 0 0 0 1 2 3\n")
    with pytest.raises(FormatError):
        read_kitti_objects(tmp_path / "l.txt", tmp_path / "calib.txt")


@settings(max_examples=50)
@given(st.floats(-3.2, 3.2), st.floats(2, 6), st.floats(1, 3))
def test_box_footprint_corners_are_rotated_rectangle(yaw, length, width):
    b = ObjectBox3D((5.0, -2.0, 0.0), length, width, 1.5, yaw)
    c = np.asarray(b.footprint_corners())
    np.testing.assert_allclose(c.mean(axis=0), (5.0, -2.0), atol=1e-9)
    sides = np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1)
    np.testing.assert_allclose(sorted(sides), sorted([length, length, width, width]), atol=1e-9)
