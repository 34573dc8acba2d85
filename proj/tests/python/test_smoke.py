# SPDX-License-Identifier: Apache-2.0
import math

import numpy as np
import pytest

import covis


def test_quat_dist_sign_invariant():
    q = covis.UnitQuat(0.5, 0.5, 0.5, 0.5)
    neg = covis.UnitQuat(-0.5, -0.5, -0.5, -0.5)
    assert covis.quat_dist(q, neg) == 0.0
    assert covis.quat_dist(covis.UnitQuat(), covis.UnitQuat.from_yaw(math.pi)) == pytest.approx(
        math.sqrt(2.0)
    )


def test_rot_geodesic_matches_trace_formula():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = covis.UnitQuat.normalized(*rng.normal(size=4))
        b = covis.UnitQuat.normalized(*rng.normal(size=4))
        w = abs(sum(x * y for x, y in zip(a.components(), b.components())))
        expected = math.degrees(2.0 * math.acos(min(1.0, w)))
        assert covis.rot_geodesic_deg(a, b) == pytest.approx(expected, abs=1e-6)


def test_relative_pose_planar():
    rel = covis.relative_pose(covis.Pose.planar(1.0, 1.0, math.pi / 2), covis.Pose.planar(1.0, 3.0, 0.0))
    assert list(rel.position) == pytest.approx([2.0, 0.0, 0.0], abs=1e-12)
    assert rel.rotation.yaw() == pytest.approx(-math.pi / 2)


def test_bad_quaternion_raises():
    with pytest.raises(ValueError):
        covis.UnitQuat(2.0, 0.0, 0.0, 0.0)


def test_gnll_unit_variance_is_half_squared_error():
    assert covis.gnll(1.0, 3.0, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        covis.gnll(0.0, 0.0, -1.0)


def test_youden_and_median():
    t, j = covis.youden_threshold([0.1, 0.2, 0.8, 0.9], [False, False, True, True])
    assert (t, j) == (0.8, 1.0)
    assert covis.lower_median([4.0, 1.0, 3.0, 2.0]) == 2.0


def test_dice_iou_identity():
    rng = np.random.default_rng(3)
    truth = rng.random((16, 16), dtype=np.float32)
    pred = rng.random((16, 16), dtype=np.float32)
    dice, iou = covis.dice_iou(truth, pred)
    a, b = truth > 0.5, pred > 0.5
    inter = np.logical_and(a, b).sum()
    assert iou == pytest.approx(inter / np.logical_or(a, b).sum())
    assert dice == pytest.approx(2.0 * inter / (a.sum() + b.sum()))


def test_transform_grid_identity():
    g = np.random.default_rng(1).random((64, 64), dtype=np.float32)
    out = covis.transform_grid(g, 6.0 / 64, covis.Pose())
    assert np.array_equal(out, g)


def test_frame_round_trip_and_corruption():
    wire = covis.encode_frame(0, 3, 41, 7, b"abc")
    assert len(wire) == 16 + 3 + 4
    f = covis.decode_frame(wire)
    assert (f["node_id"], f["seq"], f["superframe_idx"], f["payload"]) == (3, 41, 7, b"abc")
    bad = bytearray(wire)
    bad[17] ^= 0xFF
    with pytest.raises(ValueError):
        covis.decode_frame(bytes(bad))
    assert covis.crc32(b"123456789") == 0xCBF43926


def test_netbench_is_deterministic():
    cfg = {"n_nodes": 4, "n_slots": 4, "duration_s": 5.0, "seed": 11}
    a = covis.run_netbench(cfg)
    assert a == covis.run_netbench(cfg)
    assert all(r["collisions"] == 0 for r in a)


def test_formation_with_oracle_tracks():
    rows = covis.run_formation({"estimator": "oracle", "duration_s": 20.0, "transient_s": 5.0})
    assert len(rows) == 2
    assert all(r["median_err_m"] < 0.2 for r in rows)


def test_homing_with_oracle_completes():
    r = covis.run_homing({"estimator": "oracle"})
    assert r["completed"]
    assert all(a["reached"] for a in r["arrivals"])


def test_unknown_config_key():
    with pytest.raises(covis.ConfigError):
        covis.run_netbench({"no_such_key": 1})
    assert covis.default_config()["seed"] >= 0
