"""Write a complete synthetic scan to a directory the CLI reads verbatim.

Layout::

    config.ini                 pipeline config pointing at the files below
    corners.csv                chessboard corner observations
    calibration_truth.json     generator calibration (canonical gauge)
    truth.csv                  per-leaf truth, centroids in world mm
    masks/cam{k}_tilt{j}_pan{i:03d}.pgm
    images/..., backgrounds/cam{k}_tilt{j}.ppm   (only with images = true)
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..calib.io import save_calibration, write_corners
from ..config import PipelineConfig
from ..meshan.metrics import LeafMeasurements
from ..meshan.pipeline import TruthLeaf, write_truth
from ..silhouette import write_mask, write_ppm
from .composite import make_composite
from .plant import default_plant, make_plant_mesh, plant_rig
from .render import render_silhouette
from .rig import render_corner_observations, truth_rig

log = logging.getLogger(__name__)


def view_name(k: int, j: int, i: int) -> str:
    return f"cam{k}_tilt{j}_pan{i:03d}"


def scene_from_config(cfg: PipelineConfig):
    """Rig spec of the calibration session, the plant, and the tilt indices the scan uses.

    The chessboard is recorded at every calibration tilt even when the plant
    is scanned at fewer, so view names index the calibration tilts.
    """
    s = cfg.values["synth"]
    tilts = cfg.calibration_tilt_angles()
    scan = sorted({tilts.index(a) for a in cfg.tilt_angles()})
    rig = plant_rig(
        n_cameras=s["n_cameras"],
        tilt_deg=tilts,
        n_pans=s["n_pans"],
        ring_radius=s["ring_radius"],
        camera_offset_deg=s["camera_offset_deg"],
    )
    plant = default_plant(s["seed"], s["leaf_spacing"], s["leaf_elevation_deg"], s["leaf_bend_deg"])
    return rig, plant, scan


def write_scene(out_dir, cfg: PipelineConfig) -> dict:
    """Generate and write every artifact; returns a small summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = cfg.values["synth"]
    target = cfg.target()
    rig_spec, plant, scan = scene_from_config(cfg)
    rig, M = truth_rig(rig_spec, target)

    obs, _ = render_corner_observations(rig_spec, target, s["corner_noise"], s["seed"])
    write_corners(out / "corners.csv", obs)
    save_calibration(out / "calibration_truth.json", rig)

    mesh, truth = make_plant_mesh(plant)
    world = mesh.transformed(M)
    rows = [TruthLeaf(name, LeafMeasurements(L, W, P, A), M.apply(c)) for name, L, W, P, A, c in truth]
    write_truth(out / "truth.csv", rows)

    (out / "masks").mkdir(exist_ok=True)
    if s["images"]:
        (out / "images").mkdir(exist_ok=True)
        (out / "backgrounds").mkdir(exist_ok=True)
    n = 0
    for (k, j) in rig.nodes:
        if j not in scan:
            continue
        K = rig.intrinsics[k]
        if s["images"]:
            rng = np.random.default_rng([s["seed"], k, j])
            _, bg = make_composite(np.zeros((K.height, K.width), bool), rng)
            write_ppm(out / "backgrounds" / f"cam{k}_tilt{j}.ppm", bg)
        for i in range(len(rig.pan_angles)):
            mask = render_silhouette(world, rig.pose_for_view(k, j, i), K)
            write_mask(out / "masks" / f"{view_name(k, j, i)}.pgm", mask)
            if s["images"]:
                rng = np.random.default_rng([s["seed"], k, j, i, 1])
                img, _ = make_composite(mask, rng)
                write_ppm(out / "images" / f"{view_name(k, j, i)}.ppm", img)
            n += 1
    log.info("wrote %d masks for %d camera positions", n, len(scan) * rig_spec.n_cameras)

    scene_cfg = PipelineConfig(out, {sec: dict(v) for sec, v in cfg.values.items()})
    p = scene_cfg.values["paths"]
    p.update(corners="corners.csv", masks="masks", images="images", backgrounds="backgrounds", truth="truth.csv")
    cut = plant.pot_cut().transformed(M)
    r = scene_cfg.values["reconstruct"]
    r.update(pot_p0=tuple(float(x) for x in cut.p0), pot_p1=tuple(float(x) for x in cut.p1),
             pot_r0=float(cut.r0), pot_r1=float(cut.r1))
    (out / "config.ini").write_text(scene_cfg.to_ini(), encoding="utf-8")
    return {"masks": n, "leaves": len(rows), "corners": len(obs)}
