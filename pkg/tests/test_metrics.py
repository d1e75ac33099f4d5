import numpy as np
import pytest

from refmatte import (CameraIntrinsics, MetricReport, Pose, SymmetrySpec, add,
                      add_recall, add_s, ar_score, evaluate_instance,
                      mae_keypoints, mspd, mssd, project, render_depth,
                      rotation_from_rotvec, transform_points, vsd, vsd_recall)
from refmatte.metrics import (MSPD_THRESHOLDS, MSSD_THRESHOLDS,
                              VSD_TAU_FRACTIONS, VSD_THRESHOLDS, mspd_unit,
                              mssd_recall, mspd_recall, sample_model_points)
from refmatte.primitives import make_cylinder, make_icosphere

from _oracles import add_s_quadratic, vsd_count
from conftest import rng_for


def rand_pose(rng, spread=0.3):
    return Pose(rotation_from_rotvec(rng.normal(scale=spread, size=3)),
                np.array([rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                          rng.uniform(0.3, 0.5)]))


def test_add_pure_translation():
    rng = rng_for("add_shift")
    pts = rng.normal(size=(50, 3))
    gt = Pose(np.eye(3), np.array([0.0, 0.0, 0.4]))
    est = Pose(np.eye(3), np.array([0.01, 0.0, 0.4]))
    assert add(gt, est, pts) == pytest.approx(0.01, abs=1e-15)
    assert add(gt, gt, pts) == 0.0


def test_add_s_matches_quadratic_oracle():
    rng = rng_for("adds_oracle")
    for _ in range(10):
        pts = rng.normal(size=(int(rng.integers(10, 80)), 3))
        gt, est = rand_pose(rng), rand_pose(rng)
        fast = add_s(gt, est, pts)
        slow = add_s_quadratic(gt, est, pts)
        assert fast == pytest.approx(slow, abs=1e-9)
        assert fast <= add(gt, est, pts) + 1e-12


def test_add_s_forgives_symmetry():
    # square of points in the xy plane, rotated 90 degrees about z
    pts = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0], [0, -1.0, 0]])
    gt = Pose(np.eye(3), np.array([0.0, 0.0, 0.5]))
    est = Pose(rotation_from_rotvec(np.array([0.0, 0.0, np.pi / 2])),
               np.array([0.0, 0.0, 0.5]))
    assert add(gt, est, pts) == pytest.approx(np.sqrt(2.0), abs=1e-12)
    assert add_s(gt, est, pts) == pytest.approx(0.0, abs=1e-12)


def test_add_recall_strict_threshold():
    # exactly at the threshold does not count
    assert add_recall([0.1, 0.0999, 0.2], [1.0, 1.0, 1.0], 0.1) == pytest.approx(1 / 3)


def test_mssd_mspd_symmetry_invariance():
    rng = rng_for("mssd_sym")
    pts = rng.normal(scale=0.03, size=(60, 3))  # object-scale, stays in front
    intr = CameraIntrinsics(fx=170.0, fy=170.0, cx=64.0, cy=64.0,
                            width=128, height=128)
    s180 = rotation_from_rotvec(np.array([0.0, 0.0, np.pi]))
    sym = SymmetrySpec(rotations=(s180,))
    gt = rand_pose(rng)
    est = Pose(gt.rotation @ s180, gt.translation)  # differ by the symmetry
    assert mssd(gt, est, pts) > 0.1
    assert mssd(gt, est, pts, sym) == pytest.approx(0.0, abs=1e-9)
    assert mspd(gt, est, pts, intr) > 1.0
    assert mspd(gt, est, pts, intr, sym) == pytest.approx(0.0, abs=1e-7)
    # specifying a symmetry never hurts
    other = rand_pose(rng)
    assert mssd(gt, other, pts, sym) <= mssd(gt, other, pts) + 1e-12


def test_mssd_is_max_over_points():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    gt = Pose(np.eye(3), np.array([0.0, 0.0, 0.5]))
    est = Pose(rotation_from_rotvec(np.array([0.0, 0.0, np.pi / 2])),
               np.array([0.0, 0.0, 0.5]))
    # origin point does not move; the unit point travels sqrt(2)
    assert mssd(gt, est, pts) == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_continuous_symmetry_discretization():
    rng = rng_for("cont_sym")
    cyl = make_cylinder(0.04, 0.12, segments=64)
    sym = SymmetrySpec(continuous_axes=((0.0, 0.0, 1.0),), steps=64)
    assert len(sym.transforms()) == 64
    gt = Pose(np.eye(3), np.array([0.0, 0.0, 0.4]))
    est = Pose(rotation_from_rotvec(np.array([0.0, 0.0, rng.uniform(0, 2 * np.pi)])),
               np.array([0.0, 0.0, 0.4]))
    v = mssd(gt, est, cyl.vertices, sym)
    # worst-case half-step residual: r * sin(pi/steps) ~ 2e-3
    assert v <= 0.04 * np.pi / 64 + 1e-9
    assert mssd(gt, est, cyl.vertices) > 0.001


def test_symmetry_spec_validation():
    with pytest.raises(ValueError):
        SymmetrySpec(rotations=(np.eye(3) * 2.0,))
    with pytest.raises(ValueError):
        SymmetrySpec(continuous_axes=((0.0, 0.0, 0.0),))
    none = SymmetrySpec.none()
    assert not none.is_symmetric
    assert len(none.transforms()) == 1
    sym = SymmetrySpec(rotations=(rotation_from_rotvec(np.array([0, 0, np.pi])),))
    assert sym.is_symmetric
    # identity is inserted automatically
    assert any(np.allclose(t, np.eye(3)) for t in sym.transforms())


def test_vsd_hand_counts():
    gt = np.zeros((4, 4))
    est = np.zeros((4, 4))
    gt[0, :2] = 1.0          # two gt-only pixels
    est[1, :2] = 1.0         # two est-only pixels
    gt[2, :2] = 0.5          # two overlapping, equal depth
    est[2, :2] = 0.5
    gt[3, 0] = 0.5           # one overlapping, differing by 0.3
    est[3, 0] = 0.8
    for tau in (0.1, 0.2, 0.31):
        expect = vsd_count(gt, est, tau)
        assert vsd(gt, est, tau) == pytest.approx(expect, abs=1e-12)
    # tau below the 0.3 gap counts the bad pixel, above forgives it
    assert vsd(gt, est, 0.1) == pytest.approx(5.0 / 7.0, abs=1e-12)
    assert vsd(gt, est, 0.31) == pytest.approx(4.0 / 7.0, abs=1e-12)


def test_vsd_edge_cases():
    empty = np.zeros((4, 4))
    assert vsd(empty, empty, 0.1) == 0.0
    gt = np.zeros((4, 4))
    est = np.zeros((4, 4))
    gt[:2] = 1.0
    est[2:] = 1.0
    assert vsd(gt, est, 10.0) == 1.0  # disjoint silhouettes, any tau
    assert vsd(gt, gt, 1e-9) == 0.0


def test_vsd_monotone_in_tau(sphere, intr_small):
    gt_pose = Pose(np.eye(3), np.array([0.0, 0.0, 0.4]))
    est_pose = Pose(rotation_from_rotvec(np.array([0.0, 0.15, 0.0])),
                    np.array([0.002, 0.0, 0.405]))
    d_gt = render_depth(sphere, gt_pose, intr_small)
    d_est = render_depth(sphere, est_pose, intr_small)
    taus = VSD_TAU_FRACTIONS * sphere.diameter
    vals = [vsd(d_gt, d_est, float(t)) for t in taus]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[0] > vals[-1]  # strictly forgiving somewhere on this scene


def test_recall_grids():
    # value passing exactly half the thresholds scores 0.5
    diam = 1.0
    v = float(MSSD_THRESHOLDS[4] * diam + 1e-9)  # above 5 of 10 thresholds
    assert mssd_recall(v, diam) == pytest.approx(0.5)
    r = 2.0
    v = float(MSPD_THRESHOLDS[4] * r + 1e-9)
    assert mspd_recall(v, r) == pytest.approx(0.5)
    assert vsd_recall(np.zeros_like(VSD_TAU_FRACTIONS)) == pytest.approx(1.0)
    assert vsd_recall(np.ones_like(VSD_TAU_FRACTIONS)) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        vsd_recall(np.zeros(3))


def test_mspd_unit():
    intr = CameraIntrinsics(fx=100.0, fy=100.0, cx=320.0, cy=240.0,
                            width=640, height=480)
    assert mspd_unit(intr) == pytest.approx(800.0 / 640.0, abs=1e-12)


def test_mae_keypoints_hand_case(intr_small):
    rng = rng_for("mae")
    kps = np.column_stack([rng.uniform(-0.03, 0.03, 8), rng.uniform(-0.03, 0.03, 8),
                           rng.uniform(0.35, 0.45, 8)])
    gt2d = project(intr_small, kps)
    pose = Pose.identity()
    assert mae_keypoints(kps, pose, intr_small, gt2d) == pytest.approx(0.0, abs=1e-12)
    # constant 2 px x-shift averages to 1.0 over both coordinates
    shifted = gt2d + np.array([2.0, 0.0])
    assert mae_keypoints(kps, pose, intr_small, shifted) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        mae_keypoints(kps, pose, intr_small, gt2d[:3])


def test_sample_model_points():
    small = make_icosphere(0.05, 2)
    pts, resampled = sample_model_points(small)
    assert not resampled and pts.shape == small.vertices.shape
    pts2, resampled2 = sample_model_points(small, limit=100)
    assert resampled2 and pts2.shape == (100, 3)


def test_evaluate_instance_perfect(sphere, intr_small):
    pose = Pose(rotation_from_rotvec(np.array([0.1, 0.2, 0.0])),
                np.array([0.0, 0.0, 0.4]))
    row = evaluate_instance(sphere, pose, pose, intr_small, instance_id="s1")
    assert row["id"] == "s1"
    assert row["add"] == 0.0 and row["add_s"] == 0.0
    assert row["mssd"] == 0.0 and row["mspd"] == 0.0
    assert row["vsd_recall"] == 1.0 and row["ar"] == 1.0
    assert row["add_for_recall"] == row["add"]
    assert not row["symmetric"]
    assert row["diameter"] == pytest.approx(sphere.diameter)


def test_evaluate_instance_symmetric_uses_add_s(sphere, intr_small):
    sym = SymmetrySpec(rotations=(rotation_from_rotvec(np.array([0, 0, np.pi])),))
    pose = Pose(np.eye(3), np.array([0.0, 0.0, 0.4]))
    est = Pose(rotation_from_rotvec(np.array([0, 0, np.pi])),
               np.array([0.0, 0.0, 0.4]))
    row = evaluate_instance(sphere, pose, est, intr_small, sym=sym)
    assert row["symmetric"]
    assert row["add_for_recall"] == row["add_s"]
    assert row["mssd"] == pytest.approx(0.0, abs=1e-9)


def test_report_aggregation_and_csv(sphere, intr_small, tmp_path):
    rows = []
    for i, dz in enumerate((0.0, 0.002)):
        est = Pose(rotation_from_rotvec(np.array([0.0, 0.0, 0.0])),
                   np.array([0.0, 0.0, 0.4 + dz]))
        gt = Pose(np.eye(3), np.array([0.0, 0.0, 0.4]))
        rows.append(evaluate_instance(sphere, gt, est, intr_small,
                                      instance_id=f"i{i}"))
    report = MetricReport.from_instances(rows)
    assert report.aggregate["ar"] == pytest.approx(ar_score(rows))
    assert report.aggregate["add_recall_01d"] == pytest.approx(
        add_recall([r["add_for_recall"] for r in rows],
                   [r["diameter"] for r in rows]))
    report.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0].startswith("id,")
    assert len(lines) == 2 + len(rows)  # header, one row each, mean
    assert lines[1].startswith("i0,")
    assert lines[-1].startswith("Mean,")
    report.to_json(tmp_path / "r.json")
    import json
    j = json.loads((tmp_path / "r.json").read_text())
    assert set(j) == {"instances", "aggregate"}
    assert len(j["instances"]) == 2
