"""6D pose evaluation metrics.

ADD / ADD-S with the 0.1-diameter recall, symmetry-aware maximum surface and
projection distances (MSSD / MSPD), visible surface discrepancy (VSD) over
depth renders, the average-recall aggregate over the standard threshold
grids, and projected-keypoint MAE.

Threshold grids: VSD tau in {5..50}% of the diameter crossed with
correctness thresholds {0.05..0.5}; MSSD thresholds {5..50}% of the
diameter; MSPD thresholds {5r..50r} with r = image diagonal / 640. Recalls
use strict '<'.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (CameraIntrinsics, Pose, TriangleMesh, project,
                       rotation_from_rotvec, transform_points)
from .regions import farthest_point_sampling
from .render import render_depth

VSD_TAU_FRACTIONS = np.linspace(0.05, 0.50, 10)
VSD_THRESHOLDS = np.linspace(0.05, 0.50, 10)
MSSD_THRESHOLDS = np.linspace(0.05, 0.50, 10)
MSPD_THRESHOLDS = np.arange(5.0, 51.0, 5.0)

MAX_MODEL_POINTS = 10000


def mspd_unit(intr: CameraIntrinsics) -> float:
    """Resolution-normalized pixel unit r = image diagonal / 640."""
    return float(np.hypot(intr.width, intr.height) / 640.0)


@dataclass(frozen=True)
class SymmetrySpec:
    """Object symmetry: discrete rotations plus optional continuous axes.

    The identity is always part of the transform set. Continuous axes are
    discretized into ``steps`` rotations each.
    """

    rotations: tuple = ()
    continuous_axes: tuple = ()
    steps: int = 64

    def __post_init__(self):
        rots = []
        for r in self.rotations:
            r = np.asarray(r, dtype=np.float64)
            if r.shape != (3, 3) or not np.allclose(r @ r.T, np.eye(3),
                                                    atol=1e-6) \
                    or abs(np.linalg.det(r) - 1.0) > 1e-6:
                raise ValueError("symmetry transforms must be rotations")
            rots.append(r)
        if not any(np.allclose(r, np.eye(3), atol=1e-9) for r in rots):
            rots.insert(0, np.eye(3))
        object.__setattr__(self, "rotations", tuple(rots))
        axes = []
        for a in self.continuous_axes:
            a = np.asarray(a, dtype=np.float64)
            n = np.linalg.norm(a)
            if n == 0.0:
                raise ValueError("symmetry axis must be nonzero")
            axes.append(a / n)
        object.__setattr__(self, "continuous_axes", tuple(axes))
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def is_symmetric(self) -> bool:
        return len(self.rotations) > 1 or len(self.continuous_axes) > 0

    def transforms(self) -> np.ndarray:
        """All symmetry rotations as an (M, 3, 3) array, identity first."""
        out = list(self.rotations)
        for axis in self.continuous_axes:
            base = list(out)
            out = []
            for k in range(self.steps):
                a = rotation_from_rotvec(axis * (2.0 * np.pi * k / self.steps))
                out.extend(s @ a for s in base)
        return np.array(out)

    @staticmethod
    def none() -> "SymmetrySpec":
        return SymmetrySpec()


def add(pose_gt: Pose, pose_est: Pose, model_points: np.ndarray) -> float:
    """Mean distance between correspondingly transformed model points."""
    pts = np.asarray(model_points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("model point set is empty")
    d = transform_points(pose_gt, pts) - transform_points(pose_est, pts)
    return float(np.mean(np.linalg.norm(d, axis=1)))


def add_s(pose_gt: Pose, pose_est: Pose, model_points: np.ndarray) -> float:
    """Mean nearest-neighbor distance between the two transformed copies."""
    pts = np.asarray(model_points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("model point set is empty")
    gt = transform_points(pose_gt, pts)
    est = transform_points(pose_est, pts)
    dist, _ = cKDTree(est).query(gt, k=1)
    return float(np.mean(dist))


def add_recall(distances, diameters, threshold_fraction: float = 0.1) -> float:
    """Fraction of instances with distance strictly below f * diameter."""
    d = np.atleast_1d(np.asarray(distances, dtype=np.float64))
    dia = np.broadcast_to(np.asarray(diameters, dtype=np.float64), d.shape)
    return float(np.mean(d < threshold_fraction * dia))


def mssd(pose_gt: Pose, pose_est: Pose, model_points: np.ndarray,
         sym: Optional[SymmetrySpec] = None) -> float:
    """Min over symmetry transforms of the max per-point 3D distance."""
    pts = np.asarray(model_points, dtype=np.float64)
    est = transform_points(pose_est, pts)
    best = np.inf
    syms = (sym or SymmetrySpec.none()).transforms()
    for s in syms:
        gt = transform_points(pose_gt, pts @ s.T)
        best = min(best, float(np.max(np.linalg.norm(gt - est, axis=1))))
    return best


def mspd(pose_gt: Pose, pose_est: Pose, model_points: np.ndarray,
         intr: CameraIntrinsics, sym: Optional[SymmetrySpec] = None) -> float:
    """Min over symmetry transforms of the max projected distance (pixels)."""
    pts = np.asarray(model_points, dtype=np.float64)
    est2 = project(intr, transform_points(pose_est, pts))
    best = np.inf
    syms = (sym or SymmetrySpec.none()).transforms()
    for s in syms:
        gt2 = project(intr, transform_points(pose_gt, pts @ s.T))
        best = min(best, float(np.max(np.linalg.norm(gt2 - est2, axis=1))))
    return best


def vsd(depth_gt: np.ndarray, depth_est: np.ndarray, tau: float,
        mask_gt: Optional[np.ndarray] = None,
        mask_est: Optional[np.ndarray] = None) -> float:
    """Visible surface discrepancy with a step cost.

    Counts, over the union of the two visibility masks, pixels visible in
    only one map or with depth difference above tau. Masks default to
    depth > 0. An empty union scores 0.
    """
    mg = depth_gt > 0.0 if mask_gt is None else np.asarray(mask_gt, bool)
    me = depth_est > 0.0 if mask_est is None else np.asarray(mask_est, bool)
    union = mg | me
    n_union = int(union.sum())
    if n_union == 0:
        return 0.0
    inter = mg & me
    bad_depth = inter & (np.abs(depth_gt - depth_est) > tau)
    n_bad = int((union & ~inter).sum()) + int(bad_depth.sum())
    return n_bad / n_union


def vsd_recall(vsd_by_tau: np.ndarray) -> float:
    """Pass fraction over the tau x threshold grid for one instance."""
    v = np.asarray(vsd_by_tau, dtype=np.float64)
    if v.shape != VSD_TAU_FRACTIONS.shape:
        raise ValueError("expected one VSD value per tau grid entry")
    return float(np.mean(v[:, None] < VSD_THRESHOLDS[None, :]))


def mssd_recall(value: float, diameter: float) -> float:
    return float(np.mean(value < MSSD_THRESHOLDS * diameter))


def mspd_recall(value: float, r: float) -> float:
    return float(np.mean(value < MSPD_THRESHOLDS * r))


def mae_keypoints(gt_kps_3d: np.ndarray, pose_est: Pose,
                  intr: CameraIntrinsics, gt_kps_2d: np.ndarray) -> float:
    """Mean absolute per-coordinate error of projected keypoints (pixels)."""
    kps = np.asarray(gt_kps_3d, dtype=np.float64)
    ref = np.asarray(gt_kps_2d, dtype=np.float64)
    if kps.shape[0] != ref.shape[0] or kps.shape[0] == 0:
        raise ValueError("keypoint sets must be non-empty and matched")
    proj = project(intr, transform_points(pose_est, kps))
    return float(np.mean(np.abs(proj - ref)))


def sample_model_points(mesh: TriangleMesh,
                        limit: int = MAX_MODEL_POINTS) -> tuple:
    """Mesh vertices, FPS-downsampled above ``limit``; returns (points, resampled)."""
    v = mesh.vertices
    if v.shape[0] <= limit:
        return v, False
    return farthest_point_sampling(v, limit, seed=0), True


def evaluate_instance(mesh: TriangleMesh, pose_gt: Pose, pose_est: Pose,
                      intr: CameraIntrinsics,
                      sym: Optional[SymmetrySpec] = None,
                      keypoints_3d: Optional[np.ndarray] = None,
                      keypoints_2d: Optional[np.ndarray] = None,
                      vsd_resolution: Optional[tuple] = None,
                      instance_id: str = "") -> dict:
    """All per-instance metrics, depth renders included."""
    sym = sym or SymmetrySpec.none()
    pts, resampled = sample_model_points(mesh)
    d = mesh.diameter
    rec = {
        "id": instance_id,
        "diameter": d,
        "symmetric": sym.is_symmetric,
        "model_points_resampled": resampled,
        "add": add(pose_gt, pose_est, pts),
        "add_s": add_s(pose_gt, pose_est, pts),
        "mssd": mssd(pose_gt, pose_est, pts, sym),
        "mspd": mspd(pose_gt, pose_est, pts, intr, sym),
    }
    dg = render_depth(mesh, pose_gt, intr, vsd_resolution)
    de = render_depth(mesh, pose_est, intr, vsd_resolution)
    vsd_values = np.array([vsd(dg, de, tau=f * d) for f in VSD_TAU_FRACTIONS])
    rec["vsd_by_tau"] = vsd_values.tolist()
    rec["vsd_recall"] = vsd_recall(vsd_values)
    rec["mssd_recall"] = mssd_recall(rec["mssd"], d)
    rec["mspd_recall"] = mspd_recall(rec["mspd"], mspd_unit(intr))
    rec["ar"] = (rec["vsd_recall"] + rec["mssd_recall"]
                 + rec["mspd_recall"]) / 3.0
    rec["add_for_recall"] = rec["add_s"] if sym.is_symmetric else rec["add"]
    if keypoints_3d is not None and keypoints_2d is not None:
        rec["mae"] = mae_keypoints(keypoints_3d, pose_est, intr, keypoints_2d)
    return rec


def ar_score(instances) -> float:
    """Dataset AR: mean over instances of the per-instance three-way mean."""
    return float(np.mean([r["ar"] for r in instances]))


@dataclass
class MetricReport:
    """Per-instance metric rows plus dataset aggregates."""

    instances: list
    aggregate: dict = field(default_factory=dict)

    @staticmethod
    def from_instances(instances: list) -> "MetricReport":
        if not instances:
            return MetricReport(instances=[], aggregate={})
        agg = {
            "add_recall_01d": add_recall(
                [r["add_for_recall"] for r in instances],
                [r["diameter"] for r in instances]),
            "vsd_recall": float(np.mean([r["vsd_recall"] for r in instances])),
            "mssd_recall": float(np.mean([r["mssd_recall"] for r in instances])),
            "mspd_recall": float(np.mean([r["mspd_recall"] for r in instances])),
            "ar": ar_score(instances),
        }
        maes = [r["mae"] for r in instances if "mae" in r]
        if maes:
            agg["mae"] = float(np.mean(maes))
        return MetricReport(instances=instances, aggregate=agg)

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump({"instances": self.instances,
                       "aggregate": self.aggregate}, f, indent=2)
            f.write("\n")

    def to_csv(self, path) -> None:
        cols = ["id", "add", "add_s", "mssd", "mspd", "vsd_recall",
                "mssd_recall", "mspd_recall", "ar", "mae"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            for r in self.instances:
                w.writerow([r.get("id", "")]
                           + [f"{r[c]:.6f}" if c in r else "" for c in cols[1:]])
            if self.instances:
                mean_row = ["Mean"]
                for c in cols[1:]:
                    vals = [r[c] for r in self.instances if c in r]
                    mean_row.append(f"{np.mean(vals):.6f}" if vals else "")
                w.writerow(mean_row)
