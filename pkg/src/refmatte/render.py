"""Refractive matte rendering.

Casts one primary ray per pixel center through a closed transparent mesh,
refracting at every interface (Snell) and attenuating by the unpolarized
Fresnel transmittance, then intersects the exit ray with the background plane
z = d. Per pixel this yields:

  flow: background pixel hit by the refracted ray minus the background pixel
        the straight ray through the same pixel would hit (signed, in pixels)
  rho:  product of Fresnel transmittances over all interface events
  mask: 1 where the primary ray hits the object

The maps depend only on mesh, pose, intrinsics and IOR; no background texture
enters the computation, so they are identical in any environment. Attenuation
is interface-only (colorless glass, no volumetric absorption).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit, prange

from .bvh import _first_hit, build_bvh
from .geometry import CameraIntrinsics, MeshError, Pose, TriangleMesh

STATUS_OK = 0
STATUS_TIR = 1
STATUS_CAPPED = 2
STATUS_PARALLEL = 3

TIR = None  # sentinel returned by refract_direction on total internal reflection


def refract_direction(incident: np.ndarray, normal: np.ndarray, eta: float):
    """Snell refraction of a unit incident direction at a unit normal.

    ``eta`` is the ratio n1/n2 of the media the ray leaves and enters. The
    normal may face either way; it is flipped to oppose the incident ray.
    Returns the unit refracted direction, or None on total internal
    reflection (eta * sin(theta_i) > 1).
    """
    d = np.asarray(incident, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    cos_i = -float(d @ n)
    if cos_i < 0.0:
        n = -n
        cos_i = -cos_i
    k = 1.0 - eta * eta * (1.0 - cos_i * cos_i)
    if k < 0.0:
        return TIR
    out = eta * d + (eta * cos_i - np.sqrt(k)) * n
    return out / np.linalg.norm(out)


def fresnel_transmittance(cos_i: float, eta: float) -> float:
    """Unpolarized Fresnel transmittance T = 1 - (R_s + R_p)/2.

    ``cos_i`` is the cosine of the incidence angle (in (0, 1]); ``eta`` the
    n1/n2 ratio. Returns 0 under total internal reflection.
    """
    if not 0.0 < cos_i <= 1.0:
        raise ValueError("cos_i must lie in (0, 1]")
    k = 1.0 - eta * eta * (1.0 - cos_i * cos_i)
    if k < 0.0:
        return 0.0
    cos_t = np.sqrt(k)
    r_s = (eta * cos_i - cos_t) / (eta * cos_i + cos_t)
    r_p = (eta * cos_t - cos_i) / (eta * cos_t + cos_i)
    return float(1.0 - 0.5 * (r_s * r_s + r_p * r_p))


@dataclass(frozen=True)
class RenderConfig:
    """Rendering parameters.

    ``plane_depth`` is the camera-frame z of the background plane and must lie
    beyond the object. ``resolution`` (W, H), when set, overrides the
    intrinsics' image size with proportionally scaled focal lengths and
    principal point. TIR policy 'terminate' zeroes rho at total internal
    reflection; 'reflect' follows the reflected path instead.
    """

    ior: float = 1.5
    plane_depth: float = 1.0
    resolution: Optional[tuple[int, int]] = None
    max_bounces: int = 8
    tir_policy: str = "terminate"

    def __post_init__(self):
        if self.ior < 1.0:
            raise ValueError("ior must be >= 1")
        if self.plane_depth <= 0.0:
            raise ValueError("plane_depth must be positive")
        if self.max_bounces < 2:
            raise ValueError("max_bounces must be >= 2 (entry + exit)")
        if self.tir_policy not in ("terminate", "reflect"):
            raise ValueError("tir_policy must be 'terminate' or 'reflect'")

    def to_dict(self) -> dict:
        return {"ior": self.ior, "plane_depth": self.plane_depth,
                "resolution": list(self.resolution) if self.resolution else None,
                "max_bounces": self.max_bounces, "tir_policy": self.tir_policy}

    @staticmethod
    def from_dict(d: dict) -> "RenderConfig":
        res = d.get("resolution")
        return RenderConfig(ior=float(d.get("ior", 1.5)),
                            plane_depth=float(d.get("plane_depth", 1.0)),
                            resolution=tuple(res) if res else None,
                            max_bounces=int(d.get("max_bounces", 8)),
                            tir_policy=str(d.get("tir_policy", "terminate")))


@dataclass
class RfaMaps:
    """Refractive flow / attenuation / visibility triple.

    flow is (H, W, 2) with per-pixel (dx, dy) in pixels, rho (H, W) in [0, 1],
    mask (H, W) in {0, 1}. flow and rho are zero outside the mask.
    """

    flow: np.ndarray
    rho: np.ndarray
    mask: np.ndarray

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    def validate(self) -> None:
        h, w = self.mask.shape
        if self.flow.shape != (h, w, 2) or self.rho.shape != (h, w):
            raise ValueError("map shapes disagree")
        off = self.mask == 0
        if np.any(self.flow[off] != 0.0) or np.any(self.rho[off] != 0.0):
            raise ValueError("flow/rho must be zero outside the mask")
        if np.any(self.rho < 0.0) or np.any(self.rho > 1.0):
            raise ValueError("rho out of [0, 1]")
        if not np.all(np.isfinite(self.flow)):
            raise ValueError("flow contains non-finite values")


@dataclass
class RenderStats:
    """Per-render diagnostics (pixel counts by outcome)."""

    mask_pixels: int = 0
    tir_terminated: int = 0
    bounce_capped: int = 0
    plane_parallel: int = 0

    invalid_mask: np.ndarray = field(default=None, repr=False)


@njit(cache=True)
def _refract_event(dx, dy, dz, nx, ny, nz, ior, tir_reflect):
    """One interface event; returns (new direction, transmittance, status).

    Entering vs leaving the glass is decided by the sign of d.n against the
    outward normal. status: 0 refracted, 1 reflected (TIR), 2 terminated.
    """
    cosi = -(dx * nx + dy * ny + dz * nz)
    if cosi >= 0.0:
        eta = 1.0 / ior
    else:
        eta = ior
        nx = -nx
        ny = -ny
        nz = -nz
        cosi = -cosi
    k = 1.0 - eta * eta * (1.0 - cosi * cosi)
    if k < 0.0:
        if not tir_reflect:
            return 0.0, 0.0, 0.0, 0.0, 2
        rx = dx + 2.0 * cosi * nx
        ry = dy + 2.0 * cosi * ny
        rz = dz + 2.0 * cosi * nz
        return rx, ry, rz, 1.0, 1
    cost = np.sqrt(k)
    rs = (eta * cosi - cost) / (eta * cosi + cost)
    rp = (eta * cost - cosi) / (eta * cost + cosi)
    T = 1.0 - 0.5 * (rs * rs + rp * rp)
    ox = eta * dx + (eta * cosi - cost) * nx
    oy = eta * dy + (eta * cosi - cost) * ny
    oz = eta * dz + (eta * cosi - cost) * nz
    inv = 1.0 / np.sqrt(ox * ox + oy * oy + oz * oz)
    return ox * inv, oy * inv, oz * inv, T, 0


@njit(cache=True, parallel=True)
def _trace_rfa(o_obj, dirs_obj, px, py, R, tvec, normals, eps, ior, plane_d,
               max_bounces, tir_reflect, fx, fy, cx, cy,
               node_min, node_max, node_left, node_right,
               node_start, node_count, tri_order, va, vb, vc,
               out_flow, out_rho, out_mask, out_status):
    n_rays = dirs_obj.shape[0]
    for i in prange(n_rays):
        dx = dirs_obj[i, 0]
        dy = dirs_obj[i, 1]
        dz = dirs_obj[i, 2]
        t, face = _first_hit(o_obj[0], o_obj[1], o_obj[2], dx, dy, dz, eps,
                             node_min, node_max, node_left, node_right,
                             node_start, node_count, tri_order, va, vb, vc)
        if face < 0:
            out_mask[i] = 0
            out_flow[i, 0] = 0.0
            out_flow[i, 1] = 0.0
            out_rho[i] = 0.0
            out_status[i] = STATUS_OK
            continue
        out_mask[i] = 1
        ox = o_obj[0] + t * dx
        oy = o_obj[1] + t * dy
        oz = o_obj[2] + t * dz
        rho = 1.0
        events = 0
        status = STATUS_OK
        while face >= 0:
            if events >= max_bounces:
                status = STATUS_CAPPED
                break
            ndx, ndy, ndz, T, ev = _refract_event(
                dx, dy, dz, normals[face, 0], normals[face, 1],
                normals[face, 2], ior, tir_reflect)
            if ev == 2:
                status = STATUS_TIR
                break
            dx, dy, dz = ndx, ndy, ndz
            rho *= T
            events += 1
            ox += eps * dx
            oy += eps * dy
            oz += eps * dz
            t, face = _first_hit(ox, oy, oz, dx, dy, dz, eps,
                                 node_min, node_max, node_left, node_right,
                                 node_start, node_count, tri_order, va, vb, vc)
            if face >= 0:
                ox += t * dx
                oy += t * dy
                oz += t * dz
        if status != STATUS_OK:
            out_flow[i, 0] = 0.0
            out_flow[i, 1] = 0.0
            out_rho[i] = 0.0
            out_status[i] = status
            continue
        # exit point and direction back to the camera frame
        pcx = R[0, 0] * ox + R[0, 1] * oy + R[0, 2] * oz + tvec[0]
        pcy = R[1, 0] * ox + R[1, 1] * oy + R[1, 2] * oz + tvec[1]
        pcz = R[2, 0] * ox + R[2, 1] * oy + R[2, 2] * oz + tvec[2]
        dcx = R[0, 0] * dx + R[0, 1] * dy + R[0, 2] * dz
        dcy = R[1, 0] * dx + R[1, 1] * dy + R[1, 2] * dz
        dcz = R[2, 0] * dx + R[2, 1] * dy + R[2, 2] * dz
        if dcz <= 1e-12:
            out_flow[i, 0] = 0.0
            out_flow[i, 1] = 0.0
            out_rho[i] = 0.0
            out_status[i] = STATUS_PARALLEL
            continue
        s = (plane_d - pcz) / dcz
        if s < 0.0:
            out_flow[i, 0] = 0.0
            out_flow[i, 1] = 0.0
            out_rho[i] = 0.0
            out_status[i] = STATUS_PARALLEL
            continue
        bx = pcx + s * dcx
        by = pcy + s * dcy
        u = fx * bx / plane_d + cx
        v = fy * by / plane_d + cy
        out_flow[i, 0] = u - px[i]
        out_flow[i, 1] = v - py[i]
        out_rho[i] = rho
        out_status[i] = STATUS_OK


def _effective_intrinsics(intr: CameraIntrinsics,
                          resolution: Optional[tuple[int, int]]) -> CameraIntrinsics:
    if resolution is None or tuple(resolution) == (intr.width, intr.height):
        return intr
    w, h = resolution
    sx, sy = w / intr.width, h / intr.height
    return CameraIntrinsics(intr.fx * sx, intr.fy * sy, intr.cx * sx,
                            intr.cy * sy, w, h)


def _camera_rays(intr: CameraIntrinsics, pose: Pose):
    """Unit primary directions through every pixel center, in the object frame."""
    xs = np.arange(intr.width, dtype=np.float64)
    ys = np.arange(intr.height, dtype=np.float64)
    px, py = np.meshgrid(xs, ys)
    px = px.ravel()
    py = py.ravel()
    d = np.stack([(px - intr.cx) / intr.fx, (py - intr.cy) / intr.fy,
                  np.ones_like(px)], axis=1)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d_obj = d @ pose.rotation  # row-vector form of R^T d
    o_obj = -(pose.translation @ pose.rotation)
    return o_obj, np.ascontiguousarray(d_obj), d, px, py


def render_rfa(mesh: TriangleMesh, pose: Pose, intr: CameraIntrinsics,
               cfg: RenderConfig, with_stats: bool = False):
    """Render the refractive flow / attenuation / visibility maps.

    Returns RfaMaps, or (RfaMaps, RenderStats) when ``with_stats`` is set.
    Raises MeshError for non-closed meshes and ValueError when the background
    plane does not lie beyond the object.
    """
    if not mesh.closed:
        raise MeshError("refractive rendering requires a closed mesh")
    z_max = pose.apply(mesh.vertices)[:, 2].max()
    if cfg.plane_depth <= z_max:
        raise ValueError(
            f"background plane at z={cfg.plane_depth} is not beyond the "
            f"object (max z = {z_max:.6g})")
    eintr = _effective_intrinsics(intr, cfg.resolution)
    w, h = eintr.width, eintr.height
    accel = build_bvh(mesh)
    o_obj, d_obj, _, px, py = _camera_rays(eintr, pose)

    n = w * h
    flow = np.zeros((n, 2), dtype=np.float64)
    rho = np.zeros(n, dtype=np.float64)
    mask = np.zeros(n, dtype=np.uint8)
    status = np.zeros(n, dtype=np.uint8)
    eps = max(1e-12, 1e-7 * mesh.diameter)
    _trace_rfa(o_obj, d_obj, px, py,
               np.ascontiguousarray(pose.rotation),
               np.ascontiguousarray(pose.translation),
               accel["normals"], eps, cfg.ior, cfg.plane_depth,
               cfg.max_bounces, cfg.tir_policy == "reflect",
               eintr.fx, eintr.fy, eintr.cx, eintr.cy,
               accel["node_min"], accel["node_max"], accel["node_left"],
               accel["node_right"], accel["node_start"], accel["node_count"],
               accel["tri_order"], accel["va"], accel["vb"], accel["vc"],
               flow, rho, mask, status)
    maps = RfaMaps(flow=flow.reshape(h, w, 2), rho=rho.reshape(h, w),
                   mask=mask.reshape(h, w))
    if not with_stats:
        return maps
    status = status.reshape(h, w)
    stats = RenderStats(
        mask_pixels=int(maps.mask.sum()),
        tir_terminated=int((status == STATUS_TIR).sum()),
        bounce_capped=int((status == STATUS_CAPPED).sum()),
        plane_parallel=int((status == STATUS_PARALLEL).sum()),
        invalid_mask=status == STATUS_PARALLEL)
    return maps, stats


def render_depth(mesh: TriangleMesh, pose: Pose, intr: CameraIntrinsics,
                 resolution: Optional[tuple[int, int]] = None) -> np.ndarray:
    """First-hit z-depth per pixel (meters); 0 where the mesh is missed."""
    from .bvh import first_hit_batch

    eintr = _effective_intrinsics(intr, resolution)
    o_obj, d_obj, d_cam, _, _ = _camera_rays(eintr, pose)
    origins = np.broadcast_to(o_obj, d_obj.shape)
    eps = max(1e-12, 1e-7 * mesh.diameter)
    t, face = first_hit_batch(mesh, origins, d_obj, t_min=eps)
    depth = np.where(face >= 0, t * d_cam[:, 2], 0.0)
    return depth.reshape(eintr.height, eintr.width)
