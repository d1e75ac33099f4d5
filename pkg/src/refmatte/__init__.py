"""Refractive environment matting and pose tools for transparent objects.

Physically-based rendering of refractive flow, attenuation and visibility
maps for closed glass meshes, gray-code environment matting, matte
compositing, render-and-compare pose recovery and standard 6D pose metrics.
"""

from .compositing import Image, composite, sample_background
from .geometry import (CameraIntrinsics, GeometryError, MeshError, Pose, Ray,
                       TriangleMesh, load_mesh, project, rotation_angle,
                       rotation_from_quaternion, rotation_from_rotvec,
                       save_mesh_obj, transform_points, unproject)
from .graycode import (DecodedFlow, GrayCodePatternSet, capture_from_maps,
                       capture_through_object, decode_flow, generate_patterns)
from .losses import (PoseDeltas, loss_center, loss_comp, loss_flow,
                     loss_inter, loss_mask, loss_pose, loss_rho, loss_rot,
                     loss_total, loss_z)
from .manifest import DatasetManifest, SceneConfig, random_rotation, sample_pose
from .metrics import (MetricReport, SymmetrySpec, add, add_recall, add_s,
                      ar_score, evaluate_instance, mae_keypoints, mspd,
                      mspd_recall, mspd_unit, mssd, mssd_recall,
                      sample_model_points, vsd, vsd_recall)
from .regions import (CorrespondenceMap, RegionMap, build_region_map,
                      farthest_point_sampling, regions_from_correspondence,
                      render_correspondence)
from .render import (RenderConfig, RenderStats, RfaMaps, fresnel_transmittance,
                     refract_direction, render_depth, render_rfa)
from .solver import (CropBox, SolveResult, SolverOptions, decode_site,
                     encode_site, init_from_mask, objective, procrustes,
                     solve_pose)

__version__ = "0.1.0"

__all__ = [
    "Image", "composite", "sample_background",
    "CameraIntrinsics", "GeometryError", "MeshError", "Pose", "Ray",
    "TriangleMesh", "load_mesh", "project", "rotation_angle",
    "rotation_from_quaternion", "rotation_from_rotvec", "save_mesh_obj",
    "transform_points", "unproject",
    "DecodedFlow", "GrayCodePatternSet", "capture_from_maps",
    "capture_through_object", "decode_flow", "generate_patterns",
    "PoseDeltas", "loss_center", "loss_comp", "loss_flow", "loss_inter",
    "loss_mask", "loss_pose", "loss_rho", "loss_rot", "loss_total", "loss_z",
    "DatasetManifest", "SceneConfig", "random_rotation", "sample_pose",
    "MetricReport", "SymmetrySpec", "add", "add_recall", "add_s", "ar_score",
    "evaluate_instance", "mae_keypoints", "mspd", "mspd_recall",
    "mspd_unit", "mssd", "mssd_recall", "sample_model_points", "vsd",
    "vsd_recall",
    "CorrespondenceMap", "RegionMap", "build_region_map",
    "farthest_point_sampling", "regions_from_correspondence",
    "render_correspondence",
    "RenderConfig", "RenderStats", "RfaMaps", "fresnel_transmittance",
    "refract_direction", "render_depth", "render_rfa",
    "CropBox", "SolveResult", "SolverOptions", "decode_site", "encode_site",
    "init_from_mask", "objective", "procrustes", "solve_pose",
    "__version__",
]
