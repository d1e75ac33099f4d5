"""Matting and pose loss functions as pure numerical oracles.

All map losses are L1. The default normalization is a mean over the gated
support (mask pixels for gated losses, all pixels for the mask loss) so
values are resolution-independent; reduction='sum' keeps the literal norm.
Flow differences sum over the two components per pixel, so a constant
(1, 0)-pixel flow error costs exactly 1.0 under the mean reduction.

Reductions use numpy's row-major pairwise summation, fixed and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compositing import Image, composite
from .render import RfaMaps


@dataclass(frozen=True)
class PoseDeltas:
    """Scale-invariant translation encoding: 2D center offset in crop units
    plus a zoom-scaled depth component."""

    delta_x: float
    delta_y: float
    delta_z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.delta_x, self.delta_y, self.delta_z])):
            raise ValueError("pose deltas must be finite")


def _check_same_size(gt: RfaMaps, est: RfaMaps) -> None:
    if (gt.width, gt.height) != (est.width, est.height):
        raise ValueError("ground-truth and estimate resolutions differ")


def _reduce(total: float, count: int, reduction: str) -> float:
    if reduction == "sum":
        return float(total)
    if reduction == "mean":
        return float(total / count) if count else 0.0
    raise ValueError("reduction must be 'mean' or 'sum'")


def loss_flow(gt: RfaMaps, est: RfaMaps, reduction: str = "mean") -> float:
    """Ground-truth-mask-gated L1 flow error; empty mask gives 0."""
    _check_same_size(gt, est)
    gate = gt.mask == 1
    diff = np.abs(est.flow - gt.flow).sum(axis=2)
    return _reduce(np.sum(diff[gate]), int(gate.sum()), reduction)


def loss_rho(gt: RfaMaps, est: RfaMaps, reduction: str = "mean") -> float:
    """Ground-truth-mask-gated L1 attenuation error."""
    _check_same_size(gt, est)
    gate = gt.mask == 1
    diff = np.abs(est.rho - gt.rho)
    return _reduce(np.sum(diff[gate]), int(gate.sum()), reduction)


def loss_mask(gt: RfaMaps, est: RfaMaps, reduction: str = "mean") -> float:
    """Ungated L1 visibility-mask error over the whole image.

    The estimate's mask may be continuous in [0, 1] (pre-threshold network
    output); the ground truth is binary.
    """
    _check_same_size(gt, est)
    diff = np.abs(est.mask.astype(np.float64) - gt.mask.astype(np.float64))
    return _reduce(np.sum(diff), diff.size, reduction)


def loss_inter(gt: RfaMaps, est: RfaMaps, reduction: str = "mean") -> float:
    """Intermediate-representation loss: flow + rho + mask terms."""
    return (loss_flow(gt, est, reduction) + loss_rho(gt, est, reduction)
            + loss_mask(gt, est, reduction))


def loss_rot(rot_gt: np.ndarray, rot_est: np.ndarray,
             model_points: np.ndarray) -> float:
    """Mean over model points of the L1 norm of (R_gt x - R_est x)."""
    pts = np.asarray(model_points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("model point set is empty")
    diff = pts @ rot_gt.T - pts @ rot_est.T
    return float(np.mean(np.sum(np.abs(diff), axis=1)))


def loss_center(deltas_gt: PoseDeltas, deltas_est: PoseDeltas) -> float:
    """L1 error of the scale-invariant 2D center offset."""
    return float(abs(deltas_gt.delta_x - deltas_est.delta_x)
                 + abs(deltas_gt.delta_y - deltas_est.delta_y))


def loss_z(deltas_gt: PoseDeltas, deltas_est: PoseDeltas) -> float:
    """L1 error of the zoom-scaled depth component."""
    return float(abs(deltas_gt.delta_z - deltas_est.delta_z))


def loss_pose(rot_gt, rot_est, model_points, deltas_gt: PoseDeltas,
              deltas_est: PoseDeltas) -> float:
    """Disentangled pose loss: rotation + center + depth terms."""
    return (loss_rot(rot_gt, rot_est, model_points)
            + loss_center(deltas_gt, deltas_est)
            + loss_z(deltas_gt, deltas_est))


def loss_comp(gt: RfaMaps, est: RfaMaps, background: Image,
              reduction: str = "mean") -> float:
    """Compositing consistency loss.

    Both mattes are composited onto the same background, each composite is
    gated by its own mask, and the L1 difference is averaged over the union
    of the two masks (and channels). Identical mattes give 0 on any
    background.
    """
    _check_same_size(gt, est)
    comp_gt = composite(gt, background).pixels * (gt.mask == 1)[..., None]
    comp_est = composite(est, background).pixels * (est.mask == 1)[..., None]
    union = (gt.mask == 1) | (est.mask == 1)
    diff = np.abs(comp_gt - comp_est).mean(axis=2)
    return _reduce(np.sum(diff[union]), int(union.sum()), reduction)


def loss_total(gt: RfaMaps, est: RfaMaps, background: Image = None,
               rot_gt=None, rot_est=None, model_points=None,
               deltas_gt: PoseDeltas = None, deltas_est: PoseDeltas = None,
               reduction: str = "mean") -> float:
    """Full training loss: intermediate + pose + compositing terms.

    The pose term needs rotations, model points and deltas; the compositing
    term needs a background. Terms whose inputs are absent contribute 0.
    """
    total = loss_inter(gt, est, reduction)
    if rot_gt is not None:
        total += loss_pose(rot_gt, rot_est, model_points, deltas_gt,
                           deltas_est)
    if background is not None:
        total += loss_comp(gt, est, background, reduction)
    return total
