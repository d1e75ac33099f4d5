"""Scene configuration, pose sampling, and dataset manifests.

All randomness flows from one 64-bit seed through counter-based Philox
streams (one child stream per scene), so sampling is reproducible and
independent of evaluation order. Rotations are drawn uniformly on SO(3) via
normalized 4-component Gaussian quaternions; translations uniformly in a
box-shaped frustum slab in front of the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, Pose, rotation_from_quaternion
from .render import RenderConfig

MANIFEST_VERSION = 1


def random_rotation(rng) -> np.ndarray:
    """Uniform random rotation (Gaussian quaternion construction)."""
    return rotation_from_quaternion(rng.normal(size=4))


def sample_pose(rng, z_range=(0.3, 0.5), xy_fraction: float = 0.25,
                intr: CameraIntrinsics = None) -> Pose:
    """Random pose: uniform rotation, translation in a frustum box.

    z is uniform in ``z_range``; x and y are uniform within
    ``xy_fraction`` of the frustum half-width at that depth (so the object
    center stays comfortably inside the view).
    """
    r = random_rotation(rng)
    z = rng.uniform(*z_range)
    if intr is not None:
        half_w = xy_fraction * z * intr.width / (2.0 * intr.fx)
        half_h = xy_fraction * z * intr.height / (2.0 * intr.fy)
    else:
        half_w = half_h = xy_fraction * z * 0.5
    t = np.array([rng.uniform(-half_w, half_w),
                  rng.uniform(-half_h, half_h), z])
    return Pose(r, t)


@dataclass
class SceneConfig:
    """Everything one render needs, file paths included."""

    mesh: str
    pose: Pose
    intrinsics: CameraIntrinsics
    render: RenderConfig
    out_dir: str
    seed: int = 0
    background: str = None
    region_count: int = 64

    def to_dict(self) -> dict:
        return {"mesh": self.mesh, "pose": self.pose.to_dict(),
                "intrinsics": self.intrinsics.to_dict(),
                "render": self.render.to_dict(), "out_dir": self.out_dir,
                "seed": self.seed, "background": self.background,
                "region_count": self.region_count}


@dataclass
class DatasetManifest:
    """Index of generated scenes; every path is relative to the manifest."""

    seed: int
    mesh: str
    intrinsics: dict
    render: dict
    scenes: list = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def add_scene(self, scene_id: str, pose: Pose, files: dict) -> None:
        if any(s["id"] == scene_id for s in self.scenes):
            raise ValueError(f"duplicate scene id {scene_id!r}")
        self.scenes.append({"id": scene_id, "pose": pose.to_dict(),
                            "files": dict(sorted(files.items()))})

    def to_dict(self) -> dict:
        return {"version": self.version, "seed": self.seed,
                "mesh": self.mesh, "intrinsics": self.intrinsics,
                "render": self.render, "scenes": self.scenes}

    @staticmethod
    def from_dict(d: dict) -> "DatasetManifest":
        m = DatasetManifest(seed=int(d["seed"]), mesh=d["mesh"],
                            intrinsics=d["intrinsics"], render=d["render"],
                            version=int(d.get("version", MANIFEST_VERSION)))
        m.scenes = list(d["scenes"])
        return m

    def save(self, path) -> None:
        from .imgio import save_json
        save_json(path, self.to_dict())

    @staticmethod
    def load(path) -> "DatasetManifest":
        from .imgio import load_json
        return DatasetManifest.from_dict(load_json(path))

    def resolve(self, path, manifest_path) -> Path:
        """Join a manifest-relative path onto the manifest's directory."""
        return Path(manifest_path).parent / path


def scene_rng(seed: int, index: int):
    """Independent per-scene stream from the dataset seed."""
    return np.random.Generator(np.random.Philox(key=seed, counter=index))
