"""Command-line interface.

Subcommands: render (matte + regions + depth for one scene), composite
(matte onto a background), gen-dataset (N sampled scenes + manifest), solve
(pose recovery from observed maps), eval (metric report from a manifest, or
loss report with --losses), selftest (fast analytic oracle suite).

Meshes are in meters; poses map object to camera frame (camera at the
origin, +z forward, +y down in image coordinates). All outputs are
deterministic for a fixed --seed; --threads only affects speed, never
results. The REFMATTE_THREADS environment variable supplies the default
thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .compositing import Image, composite
from .geometry import CameraIntrinsics, Pose, load_mesh
from .imgio import (config_hash, load_json, read_flow_pfm, read_image_png,
                    read_mask_png, read_pfm, save_json, write_flow_pfm,
                    write_image_png, write_labels_png, write_mask_png,
                    write_pfm)
from .manifest import DatasetManifest, sample_pose, scene_rng
from .metrics import MetricReport, SymmetrySpec, evaluate_instance
from .regions import (farthest_point_sampling, regions_from_correspondence,
                      render_correspondence)
from .render import RenderConfig, RfaMaps, render_depth, render_rfa
from .solver import SolverOptions, init_from_mask, solve_pose

DEFAULT_RESOLUTION = (1080, 720)
DEFAULT_FOCAL = 800.0


def _parse_resolution(text: str):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"resolution must look like 1080x720, got {text!r}")


def _default_intrinsics(resolution) -> CameraIntrinsics:
    w, h = resolution
    return CameraIntrinsics(DEFAULT_FOCAL, DEFAULT_FOCAL,
                            (w - 1) / 2.0, (h - 1) / 2.0, w, h)


def _load_intrinsics(args) -> CameraIntrinsics:
    if args.intrinsics:
        intr = CameraIntrinsics.load(args.intrinsics)
    else:
        intr = _default_intrinsics(args.resolution or DEFAULT_RESOLUTION)
    return intr


def _apply_threads(args) -> None:
    n = args.threads
    if n is None:
        env = os.environ.get("REFMATTE_THREADS")
        n = int(env) if env else None
    if n is None:
        return
    import numba
    limit = numba.config.NUMBA_NUM_THREADS
    if n > limit:
        print(f"warning: {n} threads requested but only {limit} available; "
              f"using {limit}", file=sys.stderr)
        n = limit
    numba.set_num_threads(max(1, n))


def _render_config(args) -> RenderConfig:
    return RenderConfig(ior=args.ior, plane_depth=args.plane_depth,
                        resolution=args.resolution,
                        max_bounces=args.max_bounces,
                        tir_policy=args.tir_policy)


def _add_common_render_args(p) -> None:
    p.add_argument("--intrinsics", help="camera intrinsics JSON "
                   "(default: synthesized pinhole at --resolution, "
                   f"focal {DEFAULT_FOCAL:g})")
    p.add_argument("--resolution", type=_parse_resolution, default=None,
                   metavar="WxH",
                   help="render resolution override (default 1080x720 when "
                        "no intrinsics file is given, else the intrinsics "
                        "size)")
    p.add_argument("--ior", type=float, default=1.5,
                   help="index of refraction (default 1.5)")
    p.add_argument("--plane-depth", type=float, default=1.0,
                   help="background plane z in meters (default 1.0)")
    p.add_argument("--max-bounces", type=int, default=8)
    p.add_argument("--tir-policy", choices=["terminate", "reflect"],
                   default="terminate")


def _write_scene(out_dir: Path, mesh, pose, intr, cfg, anchors,
                 scene_config: dict, background=None) -> dict:
    """Render one scene and write all artifacts; returns relative paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    maps, stats = render_rfa(mesh, pose, intr, cfg, with_stats=True)
    if stats.mask_pixels == 0:
        print(f"warning: empty scene (object not visible) in {out_dir}",
              file=sys.stderr)
    depth = render_depth(mesh, pose, intr, cfg.resolution)
    corr = render_correspondence(mesh, pose, intr, cfg.resolution)
    regions = regions_from_correspondence(corr, anchors)

    write_flow_pfm(out_dir / "flow.pfm", maps.flow)
    write_pfm(out_dir / "rho.pfm", maps.rho)
    write_mask_png(out_dir / "mask.png", maps.mask)
    write_pfm(out_dir / "depth.pfm", depth)
    write_labels_png(out_dir / "regions.png", regions.labels)
    pose.save(out_dir / "pose.json")
    files = {"flow": "flow.pfm", "rho": "rho.pfm", "mask": "mask.png",
             "depth": "depth.pfm", "regions": "regions.png",
             "pose": "pose.json", "meta": "meta.json"}
    if background is not None:
        comp = composite(maps, background)
        write_image_png(out_dir / "composite.png", comp.pixels)
        files["composite"] = "composite.png"
    meta = {"version": __version__, "config": scene_config,
            "config_hash": config_hash(scene_config),
            "anchors": np.asarray(anchors).tolist(),
            "stats": {"mask_pixels": stats.mask_pixels,
                      "tir_terminated": stats.tir_terminated,
                      "bounce_capped": stats.bounce_capped,
                      "plane_parallel": stats.plane_parallel}}
    save_json(out_dir / "meta.json", meta)
    return files


def cmd_render(args) -> int:
    _apply_threads(args)
    mesh = load_mesh(args.mesh)
    pose = Pose.load(args.pose)
    intr = _load_intrinsics(args)
    cfg = _render_config(args)
    anchors = farthest_point_sampling(mesh.vertices,
                                      min(args.regions,
                                          mesh.vertices.shape[0]),
                                      seed=args.seed)
    background = None
    if args.background:
        background = Image(read_image_png(args.background))
    scene_config = {"mesh": args.mesh, "pose": pose.to_dict(),
                    "intrinsics": intr.to_dict(), "render": cfg.to_dict(),
                    "regions": int(anchors.shape[0]), "seed": args.seed}
    _write_scene(Path(args.out), mesh, pose, intr, cfg, anchors,
                 scene_config, background)
    return 0


def cmd_composite(args) -> int:
    matte_dir = Path(args.matte)
    flow = read_flow_pfm(matte_dir / "flow.pfm").astype(np.float64)
    rho = read_pfm(matte_dir / "rho.pfm").astype(np.float64)
    mask = read_mask_png(matte_dir / "mask.png")
    maps = RfaMaps(flow=flow, rho=rho, mask=mask)
    bg_pixels = read_image_png(args.background)
    h, w = mask.shape
    if bg_pixels.shape[:2] != (h, w):
        if not args.resize_bg:
            print(f"error: background {bg_pixels.shape[1]}x"
                  f"{bg_pixels.shape[0]} does not match matte {w}x{h}; "
                  f"pass --resize-bg to rescale", file=sys.stderr)
            return 1
        from PIL import Image as PILImage
        src = PILImage.fromarray(
            np.rint(np.clip(bg_pixels, 0, 1) * 255).astype(np.uint8))
        bg_pixels = np.asarray(
            src.resize((w, h), PILImage.BILINEAR)).astype(np.float64) / 255.0
    out = composite(maps, Image(bg_pixels))
    write_image_png(args.out, out.pixels)
    return 0


def cmd_gen_dataset(args) -> int:
    _apply_threads(args)
    mesh = load_mesh(args.mesh)
    intr = _load_intrinsics(args)
    cfg = _render_config(args)
    from .render import _effective_intrinsics
    eintr = _effective_intrinsics(intr, cfg.resolution)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    anchors = farthest_point_sampling(mesh.vertices,
                                      min(args.regions,
                                          mesh.vertices.shape[0]),
                                      seed=args.seed)
    background = None
    if args.background:
        background = Image(read_image_png(args.background))
    man = DatasetManifest(seed=args.seed, mesh=args.mesh,
                          intrinsics=intr.to_dict(), render=cfg.to_dict())
    z_lo, z_hi = args.z_range
    for i in range(args.count):
        rng = scene_rng(args.seed, i)
        pose = sample_pose(rng, z_range=(z_lo, z_hi),
                           xy_fraction=args.xy_fraction, intr=eintr)
        scene_id = f"scene_{i:04d}"
        scene_config = {"mesh": args.mesh, "pose": pose.to_dict(),
                        "intrinsics": intr.to_dict(),
                        "render": cfg.to_dict(),
                        "regions": int(anchors.shape[0]),
                        "seed": args.seed, "index": i}
        files = _write_scene(out_root / scene_id, mesh, pose, intr, cfg,
                             anchors, scene_config, background)
        man.add_scene(scene_id, pose,
                      {k: f"{scene_id}/{v}" for k, v in files.items()})
    man.save(out_root / "manifest.json")
    return 0


def _load_matte(matte_dir: Path) -> RfaMaps:
    maps = RfaMaps(
        flow=read_flow_pfm(matte_dir / "flow.pfm").astype(np.float64),
        rho=read_pfm(matte_dir / "rho.pfm").astype(np.float64),
        mask=read_mask_png(matte_dir / "mask.png"))
    maps.validate()
    return maps


def cmd_solve(args) -> int:
    _apply_threads(args)
    mesh = load_mesh(args.mesh)
    intr = _load_intrinsics(args)
    cfg = _render_config(args)
    observed = _load_matte(Path(args.matte))
    if args.init:
        init = Pose.load(args.init)
    elif args.init_depth:
        init = init_from_mask(observed.mask, intr, args.init_depth)
    else:
        print("error: pass --init pose.json or --init-depth Z",
              file=sys.stderr)
        return 1
    opts = SolverOptions(w_flow=args.w_flow, w_rho=args.w_rho,
                         w_mask=args.w_mask, optimizer=args.optimizer,
                         max_evaluations=args.max_evaluations,
                         tolerance=args.tolerance,
                         multi_start=args.multi_start,
                         perturb_rot_deg=args.perturb_rot,
                         perturb_trans_frac=args.perturb_trans,
                         seed=args.seed)
    result = solve_pose(observed, mesh, intr, cfg, init, opts)
    save_json(args.out, result.to_dict())
    return 0


def _load_symmetry(path) -> SymmetrySpec:
    d = load_json(path)
    return SymmetrySpec(rotations=tuple(d.get("rotations", [])),
                        continuous_axes=tuple(d.get("continuous_axes", [])),
                        steps=int(d.get("steps", 64)))


def cmd_eval(args) -> int:
    _apply_threads(args)
    if args.losses:
        return _eval_losses(args)
    man = DatasetManifest.load(args.manifest)
    mesh_path = man.resolve(man.mesh, args.manifest)
    if not mesh_path.exists():
        mesh_path = Path(man.mesh)
    mesh = load_mesh(mesh_path)
    intr = CameraIntrinsics.from_dict(man.intrinsics)
    sym = _load_symmetry(args.sym) if args.sym else None
    if args.estimates == "gt":
        est_poses = {s["id"]: Pose.from_dict(s["pose"]) for s in man.scenes}
    else:
        est_poses = {k: Pose.from_dict(v)
                     for k, v in load_json(args.estimates).items()}
    instances = []
    for s in man.scenes:
        if s["id"] not in est_poses:
            print(f"warning: no estimate for {s['id']}, skipping",
                  file=sys.stderr)
            continue
        instances.append(evaluate_instance(
            mesh, Pose.from_dict(s["pose"]), est_poses[s["id"]], intr,
            sym=sym, vsd_resolution=args.vsd_resolution,
            instance_id=s["id"]))
    report = MetricReport.from_instances(instances)
    if args.out_json:
        report.to_json(args.out_json)
    if args.out_csv:
        report.to_csv(args.out_csv)
    print(json.dumps(report.aggregate, indent=2, sort_keys=True))
    return 0


def _eval_losses(args) -> int:
    from .losses import (loss_comp, loss_flow, loss_inter, loss_mask,
                         loss_rho)
    gt = _load_matte(Path(args.gt_matte))
    est = _load_matte(Path(args.est_matte))
    out = {"flow": loss_flow(gt, est), "rho": loss_rho(gt, est),
           "mask": loss_mask(gt, est), "inter": loss_inter(gt, est)}
    if args.background:
        bg = Image(read_image_png(args.background))
        out["comp"] = loss_comp(gt, est, bg)
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out_json:
        with open(args.out_json, "w") as f:
            f.write(text + "\n")
    print(text)
    return 0


def cmd_selftest(args) -> int:
    _apply_threads(args)
    failures = []

    def check(name, ok):
        print(f"{'ok' if ok else 'FAIL'}: {name}")
        if not ok:
            failures.append(name)

    from .graycode import capture_from_maps, decode_flow, generate_patterns
    from .losses import PoseDeltas
    from .primitives import make_slab
    from .render import fresnel_transmittance, refract_direction
    from .solver import CropBox, decode_site, encode_site, procrustes

    n = 1.5
    d = np.array([np.sin(np.radians(30.0)), 0.0, np.cos(np.radians(30.0))])
    r = refract_direction(d, np.array([0.0, 0.0, -1.0]), 1.0 / n)
    theta_t = np.degrees(np.arcsin(np.sin(np.radians(30.0)) / n))
    check("snell 30deg into glass",
          r is not None and abs(np.degrees(np.arcsin(
              np.hypot(r[0], r[1]))) - theta_t) < 1e-9)
    check("tir beyond critical angle",
          refract_direction(np.array([np.sin(np.radians(45.0)), 0.0,
                                      np.cos(np.radians(45.0))]),
                            np.array([0.0, 0.0, -1.0]), n) is None)
    check("fresnel normal incidence 0.96",
          abs(fresnel_transmittance(1.0, 1.0 / n) - 0.96) < 1e-12)

    from .geometry import Pose as P, CameraIntrinsics as CI, \
        rotation_from_rotvec as rr
    mesh = make_slab(0.3, 0.3, 0.02)
    theta = np.radians(30.0)
    pose = P(rr(np.array([0.0, theta, 0.0])), np.array([0.0, 0.0, 0.3]))
    intr = CI(200.0, 200.0, 32.0, 32.0, 64, 64)
    cfg = RenderConfig(ior=n, plane_depth=0.6)
    maps = render_rfa(mesh, pose, intr, cfg)
    th_r = np.arcsin(np.sin(theta) / n)
    expect = 200.0 * 0.02 * np.sin(theta - th_r) / np.cos(th_r) / 0.6
    got = abs(maps.flow[32, 32, 0])
    check("slab displacement closed form", abs(got - expect) < 0.5)

    pats = generate_patterns(64, 64)
    dec = decode_flow(capture_from_maps(pats, maps), pats, maps.mask)
    sel = (maps.mask == 1) & (dec.valid == 1)
    err = np.abs(dec.flow[sel] - maps.flow[sel])
    check("gray-code roundtrip 1px", sel.any() and float(err.max()) <= 1.0)

    rng = np.random.default_rng(0)
    src = rng.normal(size=(10, 3))
    rot = rr(np.array([0.3, -0.5, 0.2]))
    t = np.array([0.1, 0.2, -0.3])
    rec = procrustes(src, src @ rot.T + t)
    check("procrustes exact recovery",
          np.abs(rec.rotation - rot).max() < 1e-9
          and np.abs(rec.translation - t).max() < 1e-9)

    bg = Image(rng.uniform(size=(64, 64, 3)))
    empty = RfaMaps(flow=np.zeros((64, 64, 2)), rho=np.zeros((64, 64)),
                    mask=np.zeros((64, 64), np.uint8))
    check("empty matte passthrough",
          np.array_equal(composite(empty, bg).pixels, bg.pixels))

    crop = CropBox(40.0, 28.0, 48.0)
    pd = encode_site(pose, intr, crop)
    back = decode_site(pd, intr, crop)
    check("site encode/decode roundtrip",
          np.abs(back - pose.translation).max() < 1e-12)

    print(f"{'FAILED' if failures else 'passed'}: "
          f"{len(failures)} failure(s)" if failures else "all checks passed")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="refmatte",
        description="Refractive matte rendering, environment matting, "
                    "compositing, pose recovery and evaluation for "
                    "transparent objects (meshes in meters).")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_threads_seed(p, seed_default=0):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: REFMATTE_THREADS env "
                            "or library default); never changes results")
        p.add_argument("--seed", type=int, default=seed_default)

    p = sub.add_parser("render", help="render matte maps for one scene")
    p.add_argument("--mesh", required=True)
    p.add_argument("--pose", required=True, help="pose JSON")
    _add_common_render_args(p)
    p.add_argument("--regions", type=int, default=64,
                   help="surface region count (default 64)")
    p.add_argument("--background", default=None,
                   help="optional background PNG; adds composite.png")
    p.add_argument("--out", required=True, help="output directory")
    add_threads_seed(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("composite", help="composite a matte onto a background")
    p.add_argument("--matte", required=True,
                   help="directory with flow.pfm, rho.pfm, mask.png")
    p.add_argument("--background", required=True)
    p.add_argument("--resize-bg", action="store_true",
                   help="rescale background instead of erroring on mismatch")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_composite, threads=None, seed=0)

    p = sub.add_parser("gen-dataset", help="sample and render N scenes")
    p.add_argument("--mesh", required=True)
    _add_common_render_args(p)
    p.add_argument("-n", "--count", type=int, required=True)
    p.add_argument("--regions", type=int, default=64)
    p.add_argument("--background", default=None)
    p.add_argument("--z-range", type=lambda s: tuple(
        float(x) for x in s.split(",")), default=(0.3, 0.5),
        metavar="LO,HI", help="depth range for sampled poses (m)")
    p.add_argument("--xy-fraction", type=float, default=0.25,
                   help="lateral frustum fraction for sampled centers")
    p.add_argument("--out", required=True)
    add_threads_seed(p)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("solve", help="recover pose from observed maps")
    p.add_argument("--mesh", required=True)
    p.add_argument("--matte", required=True,
                   help="directory with observed flow.pfm, rho.pfm, mask.png")
    _add_common_render_args(p)
    p.add_argument("--init", default=None, help="initial pose JSON")
    p.add_argument("--init-depth", type=float, default=None,
                   help="fallback init: mask centroid back-projected at "
                        "this depth (m), identity rotation (heuristic)")
    p.add_argument("--optimizer", choices=["nelder-mead",
                                           "finite-difference-gradient"],
                   default="nelder-mead")
    p.add_argument("--max-evaluations", type=int, default=1200)
    p.add_argument("--multi-start", type=int, default=8)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--w-flow", type=float, default=1.0)
    p.add_argument("--w-rho", type=float, default=1.0)
    p.add_argument("--w-mask", type=float, default=1.0)
    p.add_argument("--perturb-rot", type=float, default=15.0,
                   help="multi-start rotation spread, degrees")
    p.add_argument("--perturb-trans", type=float, default=0.10,
                   help="multi-start translation spread, diameter fraction")
    p.add_argument("--out", required=True, help="result JSON path")
    add_threads_seed(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="metric report from manifest + estimates")
    p.add_argument("--manifest")
    p.add_argument("--estimates",
                   help="JSON {scene_id: pose}; literal 'gt' evaluates "
                        "ground truth against itself")
    p.add_argument("--sym", default=None, help="symmetry spec JSON")
    p.add_argument("--vsd-resolution", type=_parse_resolution, default=None,
                   metavar="WxH", help="downscaled depth renders for VSD")
    p.add_argument("--out-json", default=None)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--losses", action="store_true",
                   help="loss-report mode: compare two matte directories")
    p.add_argument("--gt-matte", default=None)
    p.add_argument("--est-matte", default=None)
    p.add_argument("--background", default=None,
                   help="background PNG for the compositing loss")
    add_threads_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest", help="run fast analytic oracle checks")
    add_threads_seed(p)
    p.set_defaults(func=cmd_selftest)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
