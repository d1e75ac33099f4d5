"""Bounding-volume hierarchy and watertight ray-triangle intersection.

The BVH is built once per mesh in object space (median split on centroids,
deterministic); rays are transformed into object space for traversal. The
per-triangle test is the shear-based watertight formulation, so closed meshes
cannot leak rays through shared edges, which interior path marching relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .geometry import MeshError, Pose, Ray, TriangleMesh

_LEAF_SIZE = 4
_MAX_STACK = 64


@dataclass(frozen=True)
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    face_index: int


def build_bvh(mesh: TriangleMesh):
    """Flat-array BVH for a mesh, cached on the mesh instance."""
    cached = mesh._accel.get("bvh")
    if cached is not None:
        return cached

    verts, faces = mesh.vertices, mesh.faces
    tri = verts[faces]  # (F, 3, 3)
    tri_min = tri.min(axis=1)
    tri_max = tri.max(axis=1)
    centroids = tri.mean(axis=1)
    order = np.arange(len(faces), dtype=np.int64)

    node_min, node_max = [], []
    node_left, node_right = [], []
    node_start, node_count = [], []

    # explicit stack of (lo, hi, slot); children are appended after their
    # parent so indices are stable and the build is fully deterministic
    stack = [(0, len(faces), -1, False)]
    while stack:
        lo, hi, parent, is_right = stack.pop()
        idx = len(node_min)
        sel = order[lo:hi]
        node_min.append(tri_min[sel].min(axis=0))
        node_max.append(tri_max[sel].max(axis=0))
        node_left.append(-1)
        node_right.append(-1)
        if parent >= 0:
            if is_right:
                node_right[parent] = idx
            else:
                node_left[parent] = idx
        if hi - lo <= _LEAF_SIZE:
            node_start.append(lo)
            node_count.append(hi - lo)
            continue
        node_start.append(0)
        node_count.append(0)
        cen = centroids[sel]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        loc = np.argsort(cen[:, axis], kind="stable")
        order[lo:hi] = sel[loc]
        mid = (lo + hi) // 2
        stack.append((mid, hi, idx, True))
        stack.append((lo, mid, idx, False))

    accel = dict(
        node_min=np.ascontiguousarray(node_min, dtype=np.float64),
        node_max=np.ascontiguousarray(node_max, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int64),
        node_right=np.asarray(node_right, dtype=np.int64),
        node_start=np.asarray(node_start, dtype=np.int64),
        node_count=np.asarray(node_count, dtype=np.int64),
        tri_order=order,
        va=np.ascontiguousarray(tri[:, 0]),
        vb=np.ascontiguousarray(tri[:, 1]),
        vc=np.ascontiguousarray(tri[:, 2]),
        normals=np.ascontiguousarray(mesh.face_normals),
    )
    mesh._accel["bvh"] = accel
    return accel


@njit(cache=True)
def _ray_setup(dx, dy, dz):
    """Axis permutation and shear constants for the watertight test."""
    ax, ay, az = abs(dx), abs(dy), abs(dz)
    if az >= ax and az >= ay:
        kz = 2
    elif ay >= ax:
        kz = 1
    else:
        kz = 0
    kx = kz + 1
    if kx == 3:
        kx = 0
    ky = kx + 1
    if ky == 3:
        ky = 0
    d = (dx, dy, dz)
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sx = d[kx] / d[kz]
    sy = d[ky] / d[kz]
    sz = 1.0 / d[kz]
    return kx, ky, kz, sx, sy, sz


@njit(cache=True)
def _intersect_tri(ox, oy, oz, kx, ky, kz, sx, sy, sz, va, vb, vc, fi, t_min, t_best):
    """Watertight single-triangle test; returns hit distance or -1."""
    o = (ox, oy, oz)
    a0 = va[fi, 0] - o[0]
    a1 = va[fi, 1] - o[1]
    a2 = va[fi, 2] - o[2]
    b0 = vb[fi, 0] - o[0]
    b1 = vb[fi, 1] - o[1]
    b2 = vb[fi, 2] - o[2]
    c0 = vc[fi, 0] - o[0]
    c1 = vc[fi, 1] - o[1]
    c2 = vc[fi, 2] - o[2]
    A = (a0, a1, a2)
    B = (b0, b1, b2)
    C = (c0, c1, c2)
    akz = A[kz]
    bkz = B[kz]
    ckz = C[kz]
    axs = A[kx] - sx * akz
    ays = A[ky] - sy * akz
    bxs = B[kx] - sx * bkz
    bys = B[ky] - sy * bkz
    cxs = C[kx] - sx * ckz
    cys = C[ky] - sy * ckz
    u = cxs * bys - cys * bxs
    v = axs * cys - ays * cxs
    w = bxs * ays - bys * axs
    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return -1.0
    det = u + v + w
    if det == 0.0:
        return -1.0
    t_scaled = u * sz * akz + v * sz * bkz + w * sz * ckz
    t = t_scaled / det
    if t <= t_min or t >= t_best:
        return -1.0
    return t


@njit(cache=True)
def _slab_test(ox, oy, oz, ix, iy, iz, bmin, bmax, t_best):
    """Ray-AABB overlap in [0, t_best] with precomputed inverse direction."""
    t0 = (bmin[0] - ox) * ix
    t1 = (bmax[0] - ox) * ix
    if t0 > t1:
        t0, t1 = t1, t0
    lo = t0
    hi = t1
    t0 = (bmin[1] - oy) * iy
    t1 = (bmax[1] - oy) * iy
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > lo:
        lo = t0
    if t1 < hi:
        hi = t1
    t0 = (bmin[2] - oz) * iz
    t1 = (bmax[2] - oz) * iz
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > lo:
        lo = t0
    if t1 < hi:
        hi = t1
    return hi >= lo and lo < t_best and hi > 0.0


@njit(cache=True)
def _first_hit(ox, oy, oz, dx, dy, dz, t_min,
               node_min, node_max, node_left, node_right,
               node_start, node_count, tri_order, va, vb, vc):
    """Nearest intersection along a ray; returns (t, face index) or (inf, -1)."""
    kx, ky, kz, sx, sy, sz = _ray_setup(dx, dy, dz)
    ix = 1e300 if dx == 0.0 else 1.0 / dx
    iy = 1e300 if dy == 0.0 else 1.0 / dy
    iz = 1e300 if dz == 0.0 else 1.0 / dz
    t_best = np.inf
    best_face = np.int64(-1)
    stack = np.empty(_MAX_STACK, dtype=np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_test(ox, oy, oz, ix, iy, iz, node_min[node], node_max[node],
                          t_best):
            continue
        if node_left[node] < 0:
            s = node_start[node]
            for k in range(node_count[node]):
                fi = tri_order[s + k]
                t = _intersect_tri(ox, oy, oz, kx, ky, kz, sx, sy, sz,
                                   va, vb, vc, fi, t_min, t_best)
                if t > 0.0:
                    t_best = t
                    best_face = fi
        else:
            stack[top] = node_left[node]
            top += 1
            stack[top] = node_right[node]
            top += 1
    return t_best, best_face


@njit(cache=True, parallel=True)
def _first_hit_batch(origins, dirs, t_min,
                     node_min, node_max, node_left, node_right,
                     node_start, node_count, tri_order, va, vb, vc,
                     out_t, out_face):
    for i in prange(origins.shape[0]):
        t, fi = _first_hit(origins[i, 0], origins[i, 1], origins[i, 2],
                           dirs[i, 0], dirs[i, 1], dirs[i, 2], t_min,
                           node_min, node_max, node_left, node_right,
                           node_start, node_count, tri_order, va, vb, vc)
        out_t[i] = t
        out_face[i] = fi


def first_hit_batch(mesh: TriangleMesh, origins: np.ndarray, dirs: np.ndarray,
                    t_min: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hits for N object-space rays: (t, face index), -1 on miss."""
    accel = build_bvh(mesh)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    out_t = np.empty(len(origins), dtype=np.float64)
    out_face = np.empty(len(origins), dtype=np.int64)
    _first_hit_batch(origins, dirs, t_min,
                     accel["node_min"], accel["node_max"], accel["node_left"],
                     accel["node_right"], accel["node_start"], accel["node_count"],
                     accel["tri_order"], accel["va"], accel["vb"], accel["vc"],
                     out_t, out_face)
    return out_t, out_face


def ray_mesh_intersect(ray: Ray, mesh: TriangleMesh, pose: Pose | None = None):
    """Nearest hit of a camera-frame ray with a posed mesh, or None.

    The returned normal is the outward face normal (in the ray's frame);
    a hit from inside has normal.dot(direction) > 0, which callers use for
    exit detection.
    """
    if pose is None:
        pose = Pose.identity()
    inv = pose.inverse()
    o_obj = inv.apply(ray.origin)
    d_obj = inv.rotation @ ray.direction
    t, face = first_hit_batch(mesh, o_obj[None, :], d_obj[None, :])
    if face[0] < 0:
        return None
    t0 = float(t[0])
    point = ray.origin + t0 * ray.direction
    normal = pose.rotation @ mesh.face_normals[face[0]]
    return Hit(t=t0, point=point, normal=normal, face_index=int(face[0]))
