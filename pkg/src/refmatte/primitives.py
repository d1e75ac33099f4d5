"""Procedural closed meshes for tests, demos and synthetic datasets."""

from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh


def make_box(size_x: float, size_y: float, size_z: float) -> TriangleMesh:
    """Axis-aligned closed box centered at the origin, outward winding."""
    hx, hy, hz = size_x / 2.0, size_y / 2.0, size_z / 2.0
    v = np.array([
        [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
        [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
    ])
    # two triangles per face, CCW seen from outside
    f = np.array([
        [0, 2, 1], [0, 3, 2],  # z = -hz
        [4, 5, 6], [4, 6, 7],  # z = +hz
        [0, 1, 5], [0, 5, 4],  # y = -hy
        [3, 7, 6], [3, 6, 2],  # y = +hy
        [0, 4, 7], [0, 7, 3],  # x = -hx
        [1, 2, 6], [1, 6, 5],  # x = +hx
    ])
    return TriangleMesh.from_arrays(v, f)


def make_cube(edge: float = 1.0) -> TriangleMesh:
    return make_box(edge, edge, edge)


def make_slab(width: float, height: float, thickness: float) -> TriangleMesh:
    """Thin parallel-faced plate (faces normal to z), centered at origin."""
    return make_box(width, height, thickness)


def make_icosphere(radius: float = 0.5, subdivisions: int = 2) -> TriangleMesh:
    """Geodesic sphere from a subdivided icosahedron (20 * 4**n faces)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts[0])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        verts, faces = _subdivide_on_sphere(verts, faces)
    return TriangleMesh.from_arrays(verts * radius, faces)


def _subdivide_on_sphere(verts, faces):
    midpoint_cache: dict = {}
    verts = list(map(np.asarray, verts))

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in midpoint_cache:
            m = (verts[a] + verts[b]) / 2.0
            verts.append(m / np.linalg.norm(m))
            midpoint_cache[key] = len(verts) - 1
        return midpoint_cache[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.asarray(verts), np.asarray(new_faces, dtype=np.int64)


def make_cylinder(radius: float, height: float, segments: int = 48) -> TriangleMesh:
    """Closed cylinder with axis along z, centered at origin.

    Rotationally symmetric up to the segment discretization; used with a
    continuous-axis symmetry spec in evaluation.
    """
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bot = np.column_stack([ring, np.full(segments, -height / 2.0)])
    top = np.column_stack([ring, np.full(segments, height / 2.0)])
    verts = np.vstack([bot, top, [[0, 0, -height / 2.0]], [[0, 0, height / 2.0]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]  # wall
        faces.append([cb, j, i])                  # bottom cap, normal -z
        faces.append([ct, segments + i, segments + j])  # top cap, normal +z
    return TriangleMesh.from_arrays(verts, np.asarray(faces, dtype=np.int64))
