"""Pose recovery from refractive mattes.

Two routes:

* render-and-compare: derivative-free search over a 6-parameter local chart
  (rotation-vector increment composed onto the start rotation, translation
  offset in units of the model diameter), scoring candidate poses by
  re-rendering their matte and comparing flow, attenuation and mask against
  the observation. The objective never reads background pixels, so the same
  observation scores identically in any environment.
* Orthogonal Procrustes: closed-form rigid alignment of matched 3D point
  sets, for keypoint-based ground-truth fitting.

The matching cost is the weighted sum of the shared per-map losses, whose
flow and rho terms are normalized by the observed mask's fixed pixel count:
observed pixels the candidate fails to cover cost their full observed
values, so the cost stays informative when silhouettes barely overlap and
never rewards a candidate for shrinking its silhouette away from hard rim
pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .geometry import (CameraIntrinsics, GeometryError, Pose, TriangleMesh,
                       rotation_from_rotvec)
from .losses import PoseDeltas, loss_flow, loss_mask, loss_rho
from .render import RenderConfig, RfaMaps, render_rfa


@dataclass(frozen=True)
class SolverOptions:
    """Render-and-compare settings.

    ``max_evaluations`` bounds the total objective evaluations across all
    starts; each start gets an equal share. Perturbation scales set both the
    multi-start spread and the initial simplex size.
    """

    w_flow: float = 1.0
    w_rho: float = 1.0
    w_mask: float = 1.0
    optimizer: str = "nelder-mead"
    max_evaluations: int = 1200
    tolerance: float = 1e-8
    multi_start: int = 8
    perturb_rot_deg: float = 15.0
    perturb_trans_frac: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if min(self.w_flow, self.w_rho, self.w_mask) < 0.0:
            raise ValueError("objective weights must be nonnegative")
        if self.w_flow == self.w_rho == self.w_mask == 0.0:
            raise ValueError("at least one objective weight must be positive")
        if self.optimizer not in ("nelder-mead", "finite-difference-gradient"):
            raise ValueError("unknown optimizer")
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")
        if self.multi_start < 1:
            raise ValueError("multi_start must be >= 1")


@dataclass
class SolveResult:
    """Best pose found, with bookkeeping.

    ``trace`` lists (evaluation_index, objective) at every new best, so it is
    non-increasing in the objective by construction.
    """

    pose: Pose
    objective: float
    evaluations: int
    converged: bool
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"pose": self.pose.to_dict(), "objective": self.objective,
                "evaluations": self.evaluations, "converged": self.converged,
                "trace": [[int(i), float(v)] for i, v in self.trace]}


def objective(candidate: Pose, observed: RfaMaps, mesh: TriangleMesh,
              intr: CameraIntrinsics, cfg: RenderConfig,
              opts: SolverOptions = None) -> float:
    """Matching cost of a candidate pose against an observed matte.

    Renders the candidate and returns
    w_flow * loss_flow + w_rho * loss_rho + w_mask * loss_mask with the
    observation in the reference slot. The flow and rho terms are summed
    over the observed mask and normalized by its fixed pixel count, so a
    candidate pays full price for every observed pixel it fails to cover;
    a candidate whose mask merely shrinks away from hard rim pixels cannot
    score better than one that covers them. Zero when the candidate
    reproduces the observation exactly.
    """
    if opts is None:
        opts = SolverOptions()
    rendered = render_rfa(mesh, candidate, intr, cfg)
    return (opts.w_flow * loss_flow(observed, rendered)
            + opts.w_rho * loss_rho(observed, rendered)
            + opts.w_mask * loss_mask(observed, rendered))


def _perturbed_start(init: Pose, rng, rot_deg: float, trans_frac: float,
                     diameter: float) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.radians(rot_deg) * rng.uniform(0.0, 1.0)
    dirn = rng.normal(size=3)
    dirn /= np.linalg.norm(dirn)
    step = trans_frac * diameter * rng.uniform(0.0, 1.0)
    return Pose(rotation_from_rotvec(axis * angle) @ init.rotation,
                init.translation + dirn * step)


def solve_pose(observed: RfaMaps, mesh: TriangleMesh, intr: CameraIntrinsics,
               cfg: RenderConfig, init: Pose,
               opts: SolverOptions = None) -> SolveResult:
    """Recover the pose that generated an observed matte.

    Runs ``opts.multi_start`` local searches: start 0 from ``init``
    unperturbed, the rest from seeded random perturbations of it. Every
    objective evaluation is tracked, so the returned pose is the best point
    ever visited (ties to the earliest start). Candidates that fail to
    render (e.g. pushed past the background plane) score +inf instead of
    aborting the search. ``converged`` is False only if nothing scored at
    least as well as ``init`` itself.
    """
    if opts is None:
        opts = SolverOptions()
    diam = mesh.diameter
    rng = np.random.Generator(np.random.Philox(opts.seed))

    state = {"best": np.inf, "best_pose": init, "evals": 0, "trace": []}

    def score(pose: Pose) -> float:
        try:
            val = objective(pose, observed, mesh, intr, cfg, opts)
        except ValueError:
            val = np.inf
        if not np.isfinite(val):
            val = np.inf
        state["evals"] += 1
        if val < state["best"]:
            state["best"] = val
            state["best_pose"] = pose
            state["trace"].append((state["evals"], val))
        return val

    init_obj = score(init)

    def run_local(center: Pose, rot_step: float, trn_step: float,
                  budget: int):
        """One optimizer pass on the chart centered at ``center``; returns
        the best pose seen during this pass."""
        local = {"best": np.inf, "pose": center}
        r0, t0 = center.rotation, center.translation

        def f(x):
            pose = Pose(rotation_from_rotvec(x[:3]) @ r0, t0 + x[3:] * diam)
            val = score(pose)
            if val < local["best"]:
                local["best"] = val
                local["pose"] = pose
            return val

        if opts.optimizer == "nelder-mead":
            simplex = np.zeros((7, 6))
            for i in range(6):
                simplex[i + 1, i] = rot_step if i < 3 else trn_step
            minimize(f, np.zeros(6), method="Nelder-Mead",
                     options={"maxfev": budget, "fatol": opts.tolerance,
                              "xatol": 1e-10, "initial_simplex": simplex,
                              "adaptive": True})
        else:
            minimize(f, np.zeros(6), method="L-BFGS-B",
                     options={"maxfun": budget, "ftol": opts.tolerance,
                              "eps": 1e-3})
        return local["pose"]

    rot_scale = max(np.radians(opts.perturb_rot_deg), 1e-3)
    trn_scale = max(opts.perturb_trans_frac, 1e-4)
    # budget split: starts share 70%, each start explores with a full-scale
    # simplex then re-contracts at its own best; the last 30% refines the
    # overall winner through a multi-scale cascade (a fresh simplex per
    # scale re-expands directions the earlier passes contracted too soon,
    # which matters for weakly observed ones like depth)
    polish_budget = max(1, (3 * opts.max_evaluations) // 10)
    per_start = max(1, (opts.max_evaluations - polish_budget)
                    // opts.multi_start)

    for s in range(opts.multi_start):
        remaining = opts.max_evaluations - polish_budget - state["evals"]
        if remaining <= 0:
            break
        if s == 0:
            start = init
        else:
            start = _perturbed_start(init, rng, opts.perturb_rot_deg,
                                     opts.perturb_trans_frac, diam)
        budget = min(per_start, remaining)
        explore = max(1, (6 * budget) // 10)
        mid = run_local(start, rot_scale, trn_scale, explore)
        if budget - explore > 0:
            run_local(mid, 0.25 * rot_scale, 0.25 * trn_scale,
                      budget - explore)

    # rotation converges far faster than depth (its objective slope is
    # orders of magnitude steeper), so the cascade keeps rotation steps fine
    # while translation re-explores coarsely, then tightens both
    cascade = ((0.08, 0.5), (0.08, 0.2), (0.03, 0.08), (0.01, 0.03))
    for rot_mult, trn_mult in cascade:
        leftover = opts.max_evaluations - state["evals"]
        if leftover <= 0:
            break
        share = min(leftover, max(1, polish_budget // len(cascade)))
        run_local(state["best_pose"], rot_mult * rot_scale,
                  trn_mult * trn_scale, share)

    return SolveResult(pose=state["best_pose"], objective=state["best"],
                       evaluations=state["evals"],
                       converged=bool(state["best"] <= init_obj),
                       trace=state["trace"])


def procrustes(src, dst) -> Pose:
    """Rigid least-squares alignment: find (R, t) with dst ~ R src + t.

    Rotation only (determinant +1, reflections excluded), no scale. Needs at
    least 3 non-collinear source points; degenerate input raises.
    """
    s = np.asarray(src, dtype=np.float64)
    d = np.asarray(dst, dtype=np.float64)
    if s.shape != d.shape or s.ndim != 2 or s.shape[1] != 3:
        raise ValueError("src and dst must be matching (N, 3) arrays")
    if s.shape[0] < 3:
        raise GeometryError("need at least 3 point pairs")
    cs = s.mean(axis=0)
    cd = d.mean(axis=0)
    sc = s - cs
    sv = np.linalg.svd(sc, compute_uv=False)
    if sv[1] <= 1e-10 * sv[0]:
        raise GeometryError(
            "source points are collinear: rotation about the line is "
            "unobservable")
    h = sc.T @ (d - cd)
    u, _, vt = np.linalg.svd(h)
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, sign]) @ u.T
    return Pose(r, cd - r @ cs)


@dataclass(frozen=True)
class CropBox:
    """Square image crop: center (cx, cy) and side length in pixels."""

    cx: float
    cy: float
    size: float

    def __post_init__(self):
        if self.size <= 0.0:
            raise ValueError("crop size must be positive")


def encode_site(pose: Pose, intr: CameraIntrinsics, crop: CropBox) -> PoseDeltas:
    """Scale-invariant translation encoding.

    (delta_x, delta_y) is the projected object center's offset from the crop
    center in crop-size units; delta_z is t_z scaled by the crop-to-image
    zoom (a full-image crop leaves t_z unchanged).
    """
    tx, ty, tz = pose.translation
    if tz <= 0.0:
        raise ValueError("object center must be in front of the camera")
    u = intr.fx * tx / tz + intr.cx
    v = intr.fy * ty / tz + intr.cy
    zoom = crop.size / max(intr.width, intr.height)
    return PoseDeltas(delta_x=(u - crop.cx) / crop.size,
                      delta_y=(v - crop.cy) / crop.size,
                      delta_z=tz * zoom)


def decode_site(deltas: PoseDeltas, intr: CameraIntrinsics,
                crop: CropBox) -> np.ndarray:
    """Invert encode_site back to the translation vector."""
    zoom = crop.size / max(intr.width, intr.height)
    tz = deltas.delta_z / zoom
    u = crop.cx + deltas.delta_x * crop.size
    v = crop.cy + deltas.delta_y * crop.size
    return np.array([(u - intr.cx) * tz / intr.fx,
                     (v - intr.cy) * tz / intr.fy, tz])


def init_from_mask(mask: np.ndarray, intr: CameraIntrinsics,
                   depth: float) -> Pose:
    """Coarse init: identity rotation, mask centroid back-projected at a
    user-supplied depth. Heuristic for when no detector pose is available."""
    ys, xs = np.nonzero(np.asarray(mask) == 1)
    if xs.size == 0:
        raise ValueError("mask is empty: nothing to initialize from")
    if depth <= 0.0:
        raise ValueError("depth must be positive")
    u, v = float(xs.mean()), float(ys.mean())
    return Pose(np.eye(3), np.array([(u - intr.cx) * depth / intr.fx,
                                     (v - intr.cy) * depth / intr.fy, depth]))
