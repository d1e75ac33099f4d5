"""Shared fixtures.

The numba kernels compile on first use; the session-scoped warmup below
pays that cost once up front so the timed tests measure steady-state work.
"""

import numpy as np
import pytest

from refmatte import CameraIntrinsics, Pose, RenderConfig, render_rfa
from refmatte.primitives import make_box, make_icosphere


@pytest.fixture(scope="session")
def intr_small() -> CameraIntrinsics:
    return CameraIntrinsics(fx=170.0, fy=170.0, cx=64.0, cy=64.0, width=128, height=128)


@pytest.fixture(scope="session")
def intr_mid() -> CameraIntrinsics:
    return CameraIntrinsics(fx=400.0, fy=400.0, cx=128.0, cy=128.0, width=256, height=256)


@pytest.fixture(scope="session")
def sphere():
    return make_icosphere(radius=0.05, subdivisions=2)


@pytest.fixture(scope="session")
def box():
    return make_box(0.10, 0.14, 0.08)


@pytest.fixture(scope="session")
def pose_front() -> Pose:
    return Pose(rotation=np.eye(3), translation=np.array([0.0, 0.0, 0.4]))


@pytest.fixture(scope="session", autouse=True)
def _jit_warmup():
    # Compile every numba kernel on a tiny scene before any test timer starts.
    intr = CameraIntrinsics(fx=40.0, fy=40.0, cx=16.0, cy=16.0, width=32, height=32)
    mesh = make_icosphere(radius=0.05, subdivisions=1)
    pose = Pose(rotation=np.eye(3), translation=np.array([0.0, 0.0, 0.4]))
    render_rfa(mesh, pose, intr, RenderConfig(ior=1.5, plane_depth=0.8))


def rng_for(name: str) -> np.random.Generator:
    """Deterministic per-test stream derived from the test name."""
    seed = np.frombuffer(name.encode()[:8].ljust(8, b"\0"), dtype=np.uint64)[0]
    return np.random.Generator(np.random.Philox(key=int(seed)))
