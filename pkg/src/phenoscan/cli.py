"""Command line front end.

Every subcommand reads one INI config (``-c``); ``--set section.key=value``
overrides single entries.  Logs go to stderr, results to files or stdout.

Exit status: 0 success, 2 bad input or usage, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, load_config

log = logging.getLogger("phenoscan")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

VIEW_RE = re.compile(r"cam(\d+)_tilt(\d+)_pan(\d+)")


class InputError(Exception):
    """Missing or malformed input; reported with exit status 2."""


def _need_file(p: Path | None, what: str) -> Path:
    if p is None:
        raise InputError(f"no {what} path configured")
    if not p.is_file():
        raise InputError(f"{what} not found: {p}")
    return p


def _need_dir(p: Path | None, what: str) -> Path:
    if p is None:
        raise InputError(f"no {what} directory configured")
    if not p.is_dir():
        raise InputError(f"{what} directory not found: {p}")
    return p


def _view_files(folder: Path, suffix: str) -> dict[tuple[int, int, int], Path]:
    out = {}
    for f in sorted(folder.glob(f"*{suffix}")):
        m = VIEW_RE.fullmatch(f.stem)
        if m is None:
            log.warning("ignoring %s: name is not cam<k>_tilt<j>_pan<i>", f.name)
            continue
        out[tuple(int(g) for g in m.groups())] = f
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_calibrate(cfg: PipelineConfig, args) -> int:
    from .calib import calibrate_rig, read_corners, save_calibration
    from .silhouette import read_pgm

    corners = _need_file(cfg.path("corners"), "corner file")
    obs = read_corners(corners)
    if len(obs.uv) == 0:
        raise InputError(f"{corners}: no corner observations")
    target = cfg.target()
    # image sizes help the intrinsic initialisation; take them from the masks when present
    sizes = {}
    mdir = cfg.path("masks")
    if mdir is not None and mdir.is_dir():
        for (k, _, _), f in _view_files(mdir, ".pgm").items():
            if k not in sizes:
                h, w = read_pgm(f).shape
                sizes[k] = (w, h)
    t0 = time.perf_counter()
    rig, rep = calibrate_rig(target, obs, sizes, refine=cfg["calibrate", "refine"])
    log.info("calibration took %.1f s", time.perf_counter() - t0)
    out = cfg.path("calibration")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_calibration(out, rig)
    print(f"rms_initial_px,{rep.initial_rms:.6f}")
    print(f"rms_final_px,{rep.final_rms:.6f}")
    for k, K in sorted(rig.intrinsics.items()):
        print(f"camera{k}_focal_px,{K.f:.4f}")
    return EXIT_OK


def cmd_segment(cfg: PipelineConfig, args) -> int:
    from .silhouette import read_ppm, segment, write_mask

    imgs = _view_files(_need_dir(cfg.path("images"), "image"), ".ppm")
    if not imgs:
        raise InputError(f"no cam<k>_tilt<j>_pan<i>.ppm images in {cfg.path('images')}")
    bg_path = cfg.path("backgrounds")
    if bg_path is None:
        raise InputError("no backgrounds path configured")
    params = cfg.score_params()
    out = cfg.path("masks")
    out.mkdir(parents=True, exist_ok=True)
    cache = {}
    fractions = []
    for (k, j, i), f in imgs.items():
        bf = bg_path if bg_path.is_file() else bg_path / f"cam{k}_tilt{j}.ppm"
        if not bf.is_file():
            raise InputError(f"background not found: {bf}")
        if bf not in cache:
            cache[bf] = read_ppm(bf)
        img = read_ppm(f)
        if img.shape != cache[bf].shape:
            log.warning("skipping %s: size %s differs from background %s", f.name, img.shape[:2], cache[bf].shape[:2])
            continue
        mask = segment(img, cache[bf], params)
        write_mask(out / f"{f.stem}.pgm", mask)
        fractions.append(mask.mean())
        log.debug("%s: foreground %.4f", f.name, fractions[-1])
    if not fractions:
        raise InputError("no image could be segmented")
    fr = np.array(fractions)
    print(f"masks,{len(fr)}")
    print(f"foreground_fraction_min,{fr.min():.6f}")
    print(f"foreground_fraction_mean,{fr.mean():.6f}")
    print(f"foreground_fraction_max,{fr.max():.6f}")
    return EXIT_OK


def load_masks(folder: Path, rig) -> dict:
    """Masks keyed by (camera, tilt, pan), checked against the calibration."""
    from .silhouette import read_mask

    files = _view_files(folder, ".pgm")
    if not files:
        raise InputError(f"no cam<k>_tilt<j>_pan<i>.pgm masks in {folder}")
    masks, shapes = {}, {}
    for key, f in files.items():
        k, j, i = key
        if (k, j) not in rig.base_poses:
            raise InputError(f"{f.name}: camera {k} tilt {j} is not in the calibration")
        if i >= len(rig.pan_angles):
            raise InputError(f"{f.name}: pan {i} is beyond the {len(rig.pan_angles)} calibrated pan angles")
        m = read_mask(f)
        K = rig.intrinsics[k]
        want = shapes.setdefault(k, (K.height, K.width) if K.width and K.height else m.shape)
        if m.shape != want:
            raise InputError(f"inconsistent mask dimensions: {f.name} is {m.shape[1]}x{m.shape[0]}, "
                             f"camera {k} expects {want[1]}x{want[0]}")
        masks[key] = m
    return masks


def reconstruct(cfg: PipelineConfig, rig, masks):
    """Masks and calibration to (octree, mesh)."""
    from .carve import CarveConfig, carve, initial_bbox, marching_cubes, refined_bbox, remove_pot, views_from_masks

    r = cfg.values["reconstruct"]
    ccfg = cfg.carve_config()
    views = views_from_masks(masks, rig, r["crop_margin"])
    if ccfg.tolerance >= len(views):
        log.warning("tolerance %d >= %d views: nothing can be carved, the hull is the full box",
                    ccfg.tolerance, len(views))
    t0 = time.perf_counter()
    box = initial_bbox(masks, rig)
    log.info("initial box %s .. %s mm", np.round(box.lo, 1), np.round(box.hi, 1))
    coarse = CarveConfig(min(r["refine_resolution"], ccfg.resolution), ccfg.tolerance, ccfg.margin_px)
    box = refined_bbox(box, views, coarse)
    log.info("refined box %s .. %s mm", np.round(box.lo, 1), np.round(box.hi, 1))
    t1 = time.perf_counter()
    tree = carve(box, views, ccfg)
    t2 = time.perf_counter()
    for st in tree.stats:
        log.info("level %(level)d: %(tested)d nodes tested, %(full)d full, %(split)d split, "
                 "%(discarded)d discarded (%(seconds).3f s)", st)
    log.info("%d views, %d^3 grid (voxel %.3f mm): bbox %.2f s, carve %.2f s",
             len(views), ccfg.resolution, tree.grid.h, t1 - t0, t2 - t1)
    cyl = cfg.pot()
    if cyl is not None:
        n0 = tree.count()
        tree = remove_pot(tree, cyl)
        log.info("pot removal: %d -> %d voxels", n0, tree.count())
    n = tree.count()
    log.info("hull: %d voxels", n)
    if n == 0:
        from .carve import EmptyVolumeError

        raise EmptyVolumeError("the carved hull is empty")
    mesh = marching_cubes(tree)
    log.info("mesh: %d vertices, %d faces (%.2f s)", mesh.n_vertices, mesh.n_faces, time.perf_counter() - t2)
    return tree, mesh


def cmd_reconstruct(cfg: PipelineConfig, args) -> int:
    from .calib import load_calibration
    from .carve import write_rle
    from .mesh import write_ply

    rig = load_calibration(_need_file(cfg.path("calibration"), "calibration file"))
    masks = load_masks(_need_dir(cfg.path("masks"), "mask"), rig)
    tree, mesh = reconstruct(cfg, rig, masks)
    out = cfg.path("mesh")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ply(out, mesh)
    vox = cfg.path("voxels")
    if vox is not None:
        write_rle(vox, tree.grid, tree.to_dense())
    print(f"voxels,{tree.count()}")
    print(f"vertices,{mesh.n_vertices}")
    print(f"faces,{mesh.n_faces}")
    return EXIT_OK


def cmd_measure(cfg: PipelineConfig, args) -> int:
    from .mesh import read_ply
    from .meshan import epsilon, format_report, measure_mesh, read_truth

    mesh = read_ply(_need_file(cfg.path("mesh"), "mesh"))
    if mesh.n_faces == 0:
        raise InputError(f"{cfg.path('mesh')}: mesh is empty")
    truth = None
    tp = cfg.path("truth")
    if tp is not None:
        try:
            truth = read_truth(_need_file(tp, "truth table"))
        except ValueError as exc:
            raise InputError(str(exc)) from None
    t0 = time.perf_counter()
    leaves, _, _ = measure_mesh(mesh, cfg.measure_config())
    log.info("measured %d leaves in %.1f s", len(leaves), time.perf_counter() - t0)
    text = format_report(leaves, truth)
    out = cfg.path("report")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    print(f"leaves,{len(leaves)}")
    if truth is not None:
        eps, _ = epsilon(leaves, truth)
        print(f"epsilon,{eps:.6f}")
    return EXIT_OK


def cmd_synth(cfg: PipelineConfig, args) -> int:
    from .synth import write_scene

    out = Path(args.out)
    try:
        summary = write_scene(out, cfg)
    except OSError as exc:
        raise InputError(f"cannot write scene to {out}: {exc}") from None
    for k in ("masks", "corners", "leaves"):
        print(f"{k},{summary[k]}")
    return EXIT_OK


def cmd_evaluate(cfg: PipelineConfig, args) -> int:
    from .calib import load_calibration
    from .synth import write_scene

    tmp = None
    if args.workdir:
        work = Path(args.workdir)
    else:
        tmp = tempfile.TemporaryDirectory(prefix="phenoscan-")
        work = Path(tmp.name)
    try:
        write_scene(work, cfg)
        scene = load_config(work / "config.ini")
        if args.truth_calibration:
            scene.values["paths"]["calibration"] = "calibration_truth.json"
        else:
            _quiet(cmd_calibrate, scene, args)
        if scene["synth", "images"]:
            _quiet(cmd_segment, scene, args)
        rig = load_calibration(scene.path("calibration"))
        masks = load_masks(scene.path("masks"), rig)
        _, mesh = reconstruct(scene, rig, masks)
        from .meshan import epsilon, measure_mesh, read_truth

        truth = read_truth(scene.path("truth"))
        leaves, _, _ = measure_mesh(mesh, scene.measure_config())
        eps, _ = epsilon(leaves, truth)
    finally:
        if tmp is not None:
            tmp.cleanup()
    print(f"views,{len(masks)}")
    print(f"leaves,{len(leaves)}")
    print(f"epsilon,{eps:.6f}")
    return EXIT_OK


def _quiet(fn, cfg, args):
    """Run a subcommand with its stdout lines sent to the log instead."""
    import contextlib
    import io

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        fn(cfg, args)
    for line in buf.getvalue().splitlines():
        log.info("%s: %s", fn.__name__[4:], line)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="pipeline config (INI); defaults apply without one")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config entry (repeatable)")
    common.add_argument("--threads", type=int, help="cap on worker threads (0 = all cores)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="phenoscan", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="calibrate cameras and turntable axis from corners")
    sub.add_parser("segment", parents=[common], help="background-score images into masks")
    r = sub.add_parser("reconstruct", parents=[common], help="carve the visual hull and mesh it")
    r.add_argument("--resolution", type=int, help="grid resolution (power of two)")
    r.add_argument("--tolerance", type=int, help="views allowed to reject a kept voxel")
    sub.add_parser("measure", parents=[common], help="segment the mesh into leaves and measure them")
    s = sub.add_parser("synth", parents=[common], help="write a synthetic scan")
    s.add_argument("out", help="output directory")
    s.add_argument("--tilts", type=int, help="number of tilt positions")
    s.add_argument("--seed", type=int)
    e = sub.add_parser("evaluate", parents=[common], help="synth, full pipeline and epsilon in one go")
    e.add_argument("--workdir", help="keep the intermediate files here")
    e.add_argument("--tilts", type=int, help="number of tilt positions")
    e.add_argument("--seed", type=int)
    e.add_argument("--resolution", type=int)
    e.add_argument("--tolerance", type=int)
    e.add_argument("--truth-calibration", action="store_true", help="skip calibration and use the generator's")
    return p


COMMANDS = {
    "calibrate": cmd_calibrate,
    "segment": cmd_segment,
    "reconstruct": cmd_reconstruct,
    "measure": cmd_measure,
    "synth": cmd_synth,
    "evaluate": cmd_evaluate,
}

# flag name -> config entry it overrides
_FLAG_KEYS = {
    "resolution": ("reconstruct", "resolution"),
    "tolerance": ("reconstruct", "tolerance"),
    "tilts": ("synth", "tilts"),
    "seed": ("synth", "seed"),
}


def _setup_logging(verbose: int, quiet: bool) -> None:
    level = logging.WARNING if quiet else (logging.DEBUG if verbose > 1 else logging.INFO)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def _set_threads(n: int | None) -> None:
    if not n:
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    from .calib import CalibrationError, CornerFileError
    from .carve import CarveError
    from .mesh import MeshError
    from .meshan import NoRegionsError, NoSeedError, RegionTooSmallError

    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose, args.quiet)
    try:
        cfg = load_config(args.config, args.set)
        for flag, (sec, key) in _FLAG_KEYS.items():
            val = getattr(args, flag, None)
            if val is not None:
                cfg.set(sec, key, str(val))
        _set_threads(args.threads if args.threads is not None else cfg["run", "threads"])
        return COMMANDS[args.command](cfg, args)
    except (InputError, ConfigError, CornerFileError, MeshError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (CalibrationError, CarveError, NoSeedError, NoRegionsError, RegionTooSmallError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
