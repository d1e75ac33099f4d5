import numpy as np
import pytest

from refmatte import GeometryError, Pose, Ray
from refmatte.bvh import build_bvh, first_hit_batch, ray_mesh_intersect
from refmatte.primitives import (make_box, make_cube, make_cylinder,
                                 make_icosphere, make_slab)

from _oracles import intersect_brute
from conftest import rng_for


@pytest.mark.parametrize("mesh_fn", [
    lambda: make_cube(0.1),
    lambda: make_box(0.1, 0.14, 0.08),
    lambda: make_slab(0.4, 0.4, 0.02),
    lambda: make_icosphere(0.05, 2),
    lambda: make_cylinder(0.04, 0.12),
])
def test_primitives_closed_outward(mesh_fn):
    mesh = mesh_fn()
    assert mesh.closed
    centers = mesh.vertices[mesh.faces].mean(axis=1) - mesh.centroid
    dots = np.einsum("ij,ij->i", centers, mesh.face_normals)
    assert np.all(dots > -1e-12)  # outward winding everywhere


def test_primitive_dimensions():
    box = make_box(0.1, 0.14, 0.08)
    lo, hi = box.bounds
    np.testing.assert_allclose(hi - lo, [0.1, 0.14, 0.08], atol=1e-15)
    sph = make_icosphere(radius=0.25, subdivisions=3)
    r = np.linalg.norm(sph.vertices, axis=1)
    np.testing.assert_allclose(r, 0.25, atol=1e-12)  # all vertices on the sphere
    cyl = make_cylinder(0.04, 0.12, segments=48)
    lo, hi = cyl.bounds
    assert hi[2] - lo[2] == pytest.approx(0.12, abs=1e-15)
    assert hi[0] == pytest.approx(0.04, abs=1e-12)


def test_icosphere_subdivision_counts():
    # 20 * 4^s faces
    for s, faces in [(0, 20), (1, 80), (2, 320)]:
        assert make_icosphere(0.5, s).faces.shape[0] == faces


def test_bvh_matches_brute_force():
    rng = rng_for("bvh_brute")
    for mesh in (make_icosphere(0.05, 2), make_box(0.1, 0.14, 0.08)):
        origins = np.column_stack([rng.uniform(-0.08, 0.08, 120),
                                   rng.uniform(-0.08, 0.08, 120),
                                   np.full(120, -0.5)])
        targets = rng.uniform(-0.04, 0.04, size=(120, 3))
        dirs = targets - origins
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t, f = first_hit_batch(mesh, origins, dirs)
        hits = 0
        for i in range(len(origins)):
            bt, bf = intersect_brute(mesh, origins[i], dirs[i])
            if bf < 0:
                assert f[i] == -1
            else:
                hits += 1
                assert f[i] == bf
                assert t[i] == pytest.approx(bt, abs=1e-10)
        assert hits > 60  # scene set up so most rays hit


def test_bvh_interior_origin_and_t_min():
    mesh = make_cube(0.2)
    o = np.zeros((1, 3))
    d = np.array([[0.0, 0.0, 1.0]])
    t, f = first_hit_batch(mesh, o, d)
    assert f[0] >= 0 and t[0] == pytest.approx(0.1, abs=1e-12)
    # t_min past the first face finds nothing beyond the cube
    t2, f2 = first_hit_batch(mesh, o, d, t_min=0.15)
    assert f2[0] == -1


def test_watertight_shared_edge():
    # rays aimed exactly at shared cube edges must still hit something
    mesh = make_cube(0.2)
    edges = np.array([[0.1, 0.0, 0.1], [0.0, 0.1, 0.1], [0.1, 0.1, 0.0]])
    origins = np.tile([[0.0, 0.0, -1.0]], (3, 1)) + np.array(
        [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    dirs = edges - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t, f = first_hit_batch(mesh, origins, dirs)
    assert np.all(f >= 0)


def test_ray_mesh_intersect_with_pose():
    mesh = make_icosphere(0.05, 2)
    pose = Pose(rotation=np.eye(3), translation=np.array([0.0, 0.0, 0.4]))
    ray = Ray(origin=np.zeros(3), direction=np.array([0.0, 0.0, 1.0]))
    hit = ray_mesh_intersect(ray, mesh, pose)
    assert hit is not None
    assert hit.t == pytest.approx(0.35, abs=1e-3)  # facet radius slightly under 0.05
    miss = Ray(origin=np.array([1.0, 0.0, 0.0]), direction=np.array([0.0, 0.0, 1.0]))
    assert ray_mesh_intersect(miss, mesh, pose) is None


def test_ray_direction_must_be_unit():
    with pytest.raises(GeometryError):
        Ray(origin=np.zeros(3), direction=np.array([0.0, 0.0, 2.0]))


def test_bvh_cached_per_mesh():
    mesh = make_icosphere(0.05, 1)
    b1 = build_bvh(mesh)
    b2 = build_bvh(mesh)
    assert b1 is b2
