"""Surface-region attention maps.

Splits the visible surface into K regions: anchors are farthest-point-sampled
on the model's vertices, every visible pixel gets the label of its nearest
anchor in the object frame. The labeling rides on a dense correspondence
render (first-hit object coordinates), so region boundaries rotate with the
object and the label histogram is stable under the object's own symmetries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bvh import first_hit_batch
from .geometry import CameraIntrinsics, GeometryError, Pose, TriangleMesh
from .render import _camera_rays, _effective_intrinsics


@dataclass
class CorrespondenceMap:
    """Per-pixel object-frame hit coordinates, normalized to [0,1]^3 by the
    model's axis-aligned bounds. valid = 1 where the mesh was hit."""

    coords: np.ndarray
    valid: np.ndarray
    bounds: tuple


@dataclass
class RegionMap:
    """Per-pixel region labels: 0 = background, 1..K = nearest-anchor id."""

    labels: np.ndarray
    anchors: np.ndarray
    K: int

    def validate(self) -> None:
        if self.labels.max(initial=0) > self.K or self.labels.min(initial=0) < 0:
            raise ValueError("labels out of range")
        if self.anchors.shape != (self.K, 3):
            raise ValueError("anchor array must be (K, 3)")


def farthest_point_sampling(points: np.ndarray, K: int,
                            seed: int = 0) -> np.ndarray:
    """Greedy farthest-point subset of ``points``.

    Starts at the point nearest the centroid, then repeatedly takes the point
    maximizing its distance to the chosen set. Fully deterministic; the seed
    is consumed only to break exact distance ties.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be (N, 3)")
    n = pts.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    rng = np.random.Generator(np.random.Philox(seed))

    def pick(scores, prefer_min):
        best = scores.min() if prefer_min else scores.max()
        tied = np.flatnonzero(scores == best)
        return int(tied[0] if tied.size == 1 else rng.choice(tied))

    centroid = pts.mean(axis=0)
    first = pick(np.linalg.norm(pts - centroid, axis=1), prefer_min=True)
    chosen = [first]
    min_d = np.linalg.norm(pts - pts[first], axis=1)
    for _ in range(1, K):
        nxt = pick(min_d, prefer_min=False)
        if min_d[nxt] == 0.0:
            raise GeometryError(
                "cannot sample K pairwise-distinct anchors: fewer than K "
                "distinct points")
        chosen.append(nxt)
        min_d = np.minimum(min_d, np.linalg.norm(pts - pts[nxt], axis=1))
    return pts[chosen].copy()


def render_correspondence(mesh: TriangleMesh, pose: Pose,
                          intr: CameraIntrinsics,
                          resolution=None) -> CorrespondenceMap:
    """First-hit object-frame coordinates per pixel, AABB-normalized."""
    eintr = _effective_intrinsics(intr, resolution)
    o_obj, d_obj, _, _, _ = _camera_rays(eintr, pose)
    origins = np.broadcast_to(o_obj, d_obj.shape)
    eps = max(1e-12, 1e-7 * mesh.diameter)
    t, face = first_hit_batch(mesh, origins, d_obj, t_min=eps)
    hit = face >= 0
    pts = origins + np.where(hit, t, 0.0)[:, None] * d_obj
    bmin, bmax = mesh.bounds
    ext = np.where(bmax - bmin > 0.0, bmax - bmin, 1.0)
    norm = (pts - bmin) / ext
    norm[~hit] = 0.0
    h, w = eintr.height, eintr.width
    return CorrespondenceMap(coords=norm.reshape(h, w, 3),
                             valid=hit.reshape(h, w).astype(np.uint8),
                             bounds=(bmin.copy(), bmax.copy()))


def regions_from_correspondence(corr: CorrespondenceMap, anchors: np.ndarray,
                                bounds=None) -> RegionMap:
    """Label every valid pixel with its nearest anchor (object frame).

    Distance ties go to the lowest anchor index.
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    bmin, bmax = bounds if bounds is not None else corr.bounds
    ext = np.where(bmax - bmin > 0.0, bmax - bmin, 1.0)
    pts = bmin + corr.coords * ext
    h, w = corr.valid.shape
    best_d = np.full((h, w), np.inf)
    best_l = np.zeros((h, w), dtype=np.int32)
    for k in range(anchors.shape[0]):
        d = np.sum((pts - anchors[k]) ** 2, axis=2)
        upd = d < best_d
        best_d[upd] = d[upd]
        best_l[upd] = k + 1
    labels = np.where(corr.valid == 1, best_l, 0).astype(np.int32)
    return RegionMap(labels=labels, anchors=anchors, K=anchors.shape[0])


def build_region_map(mesh: TriangleMesh, pose: Pose, intr: CameraIntrinsics,
                     K: int = 64, seed: int = 0, resolution=None) -> RegionMap:
    """FPS anchors + correspondence render + classification in one call."""
    anchors = farthest_point_sampling(mesh.vertices, K, seed)
    corr = render_correspondence(mesh, pose, intr, resolution)
    return regions_from_correspondence(corr, anchors)
