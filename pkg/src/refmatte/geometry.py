"""Meshes, rigid transforms, pinhole camera and ray primitives.

Everything here is immutable after construction and safe to share across
threads. Units are meters throughout; pixel coordinates are continuous with
integer values at pixel centers.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ORTHO_TOL = 1e-9


class MeshError(Exception):
    """Invalid mesh topology or geometry."""


class GeometryError(Exception):
    """Invalid geometric input (bad rotation, non-positive depth, ...)."""


@dataclass(frozen=True)
class Pose:
    """Rigid transform object->camera: x_cam = R @ x_obj + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise GeometryError("rotation determinant is not +1 (reflection?)")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        R.setflags(write=False)
        t.setflags(write=False)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (N,3) or (3,) points into the camera frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self.compose(other)).apply(x) == self.apply(other.apply(x))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(),
                "translation": self.translation.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.asarray(d["rotation"], dtype=np.float64),
                    np.asarray(d["translation"], dtype=np.float64))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def load(path) -> "Pose":
        return Pose.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: u = fx*x/z + cx, v = fy*y/z + cy."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise GeometryError("principal point outside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @staticmethod
    def from_dict(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]),
                                float(d["cy"]), int(d["width"]), int(d["height"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def load(path) -> "CameraIntrinsics":
        return CameraIntrinsics.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            raise GeometryError("ray direction must be unit length")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


def transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    """R @ x + t for each point; accepts (N,3) or (3,)."""
    return pose.apply(points)


def project(intr: CameraIntrinsics, points: np.ndarray) -> np.ndarray:
    """Project camera-frame points to continuous pixel coordinates.

    Raises on non-positive depth; accepts (N,3) or (3,).
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 2]
    if np.any(z <= 0):
        raise GeometryError("cannot project points with non-positive depth")
    uv = np.stack([intr.fx * p[:, 0] / z + intr.cx,
                   intr.fy * p[:, 1] / z + intr.cy], axis=-1)
    return uv[0] if single else uv


def unproject(intr: CameraIntrinsics, pixels: np.ndarray, depth) -> np.ndarray:
    """Back-project continuous pixels at the given depth(s) to camera frame."""
    uv = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    z = np.broadcast_to(np.asarray(depth, dtype=np.float64), uv.shape[:1])
    pts = np.stack([(uv[:, 0] - intr.cx) / intr.fx * z,
                    (uv[:, 1] - intr.cy) / intr.fy * z, z], axis=-1)
    return pts[0] if np.asarray(pixels).ndim == 1 else pts


def _face_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    n = np.cross(e1, e2)
    lengths = np.linalg.norm(n, axis=1)
    if np.any(lengths < 1e-14):
        bad = int(np.argmin(lengths))
        raise MeshError(f"face {bad} has zero area")
    return n / lengths[:, None]


def _diameter(vertices: np.ndarray) -> float:
    """Max pairwise vertex distance; via convex hull for large meshes."""
    pts = vertices
    if len(pts) > 1500:
        from scipy.spatial import ConvexHull

        pts = pts[ConvexHull(pts).vertices]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


def _edge_use_counts(faces: np.ndarray) -> dict:
    counts: dict = {}
    for tri in faces:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            counts[key] = counts.get(key, 0) + 1
    return counts


@dataclass(frozen=True)
class TriangleMesh:
    """Watertight triangle surface in object frame.

    Face normals are recomputed from the winding order (counter-clockwise seen
    from outside); ``closed`` is true when every edge is shared by exactly two
    faces, which refraction requires.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray
    diameter: float
    closed: bool
    _accel: dict = field(default_factory=dict, compare=False, repr=False)

    @staticmethod
    def from_arrays(vertices, faces, warn_open: bool = True) -> "TriangleMesh":
        v = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64).reshape(-1, 3))
        f = np.ascontiguousarray(np.asarray(faces, dtype=np.int64).reshape(-1, 3))
        if len(v) < 3 or len(f) < 1:
            raise MeshError("mesh needs at least 3 vertices and 1 face")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshError("face index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("degenerate face with repeated vertex index")
        normals = _face_normals(v, f)
        closed = all(c == 2 for c in _edge_use_counts(f).values())
        if not closed and warn_open:
            warnings.warn("mesh is not closed; refractive rendering will reject it",
                          stacklevel=3)
        diam = _diameter(v)
        if diam <= 0:
            raise MeshError("mesh diameter must be positive")
        v.setflags(write=False)
        f.setflags(write=False)
        normals.setflags(write=False)
        return TriangleMesh(v, f, normals, diam, closed)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def _parse_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "v":
            if len(tok) < 4:
                raise MeshError(f"OBJ line {lineno}: vertex needs 3 coordinates")
            verts.append([float(x) for x in tok[1:4]])
        elif tok[0] == "f":
            idx = [int(t.split("/", 1)[0]) for t in tok[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            if len(idx) < 3:
                raise MeshError(f"OBJ line {lineno}: face needs >= 3 vertices")
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise MeshError("OBJ file contains no geometry")
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def _parse_ply(text: str) -> tuple[np.ndarray, np.ndarray]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshError("not a PLY file")
    n_vert = n_face = None
    i = 1
    in_vertex_props = False
    vertex_props = []
    while i < len(lines):
        tok = lines[i].strip().split()
        i += 1
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise MeshError("only ASCII PLY is supported")
        elif tok[0] == "element":
            in_vertex_props = tok[1] == "vertex"
            if tok[1] == "vertex":
                n_vert = int(tok[2])
            elif tok[1] == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and in_vertex_props:
            vertex_props.append(tok[-1])
        elif tok[0] == "end_header":
            break
    if n_vert is None or n_face is None:
        raise MeshError("PLY header missing vertex or face element")
    try:
        xyz = [vertex_props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise MeshError("PLY vertex element lacks x/y/z properties") from None
    verts = np.empty((n_vert, 3), dtype=np.float64)
    for k in range(n_vert):
        vals = lines[i + k].split()
        verts[k] = [float(vals[j]) for j in xyz]
    i += n_vert
    faces = []
    for k in range(n_face):
        vals = [int(x) for x in lines[i + k].split()]
        cnt, idx = vals[0], vals[1:]
        if cnt != len(idx) or cnt < 3:
            raise MeshError(f"PLY face {k} is malformed")
        for j in range(1, cnt - 1):
            faces.append([idx[0], idx[j], idx[j + 1]])
    return verts, np.asarray(faces, dtype=np.int64)


def load_mesh(path) -> TriangleMesh:
    """Load an OBJ or ASCII-PLY mesh (units: meters).

    Normals come from the winding order, not the file; polygons are
    fan-triangulated. Non-closed meshes load with a warning but are rejected
    by the refractive renderer.
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(p)
    text = p.read_text()
    suffix = p.suffix.lower()
    if suffix == ".obj":
        verts, faces = _parse_obj(text)
    elif suffix == ".ply":
        verts, faces = _parse_ply(text)
    else:
        raise MeshError(f"unsupported mesh format: {suffix!r} (use .obj or .ply)")
    return TriangleMesh.from_arrays(verts, faces)


def save_mesh_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def rotation_from_rotvec(rv: np.ndarray) -> np.ndarray:
    """Rodrigues formula: rotation matrix for an axis-angle 3-vector."""
    rv = np.asarray(rv, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(rv)
    if theta < 1e-12:
        K = _skew(rv)
        return np.eye(3) + K  # first-order term; exact at theta -> 0
    K = _skew(rv / theta)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in radians."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotation_from_quaternion(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a quaternion (w, x, y, z); normalizes first."""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])
