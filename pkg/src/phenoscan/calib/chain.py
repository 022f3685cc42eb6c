"""Full calibration chain: mono -> stereo -> axis -> world -> refine."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..geom import Pose
from .mono import MonoResult, calibrate_mono
from .refine import RefineReport, refine_all, reprojection_rms
from .turntable import (
    calibrate_stereo,
    canonicalize_gauge,
    check_pan_direction,
    derive_world_pose,
    estimate_axis,
    flip_axis,
    infer_pan_angles,
    spanning_tree,
    target_zero_pose,
    world_target_poses,
)
from .types import AxisEstimate, CornerObservations, RigCalibration, TargetModel

log = logging.getLogger(__name__)


@dataclass
class CalibrationReport:
    initial_rms: float
    final_rms: float
    mono: dict[int, MonoResult]
    axis: AxisEstimate
    stereo_spread: dict = field(default_factory=dict)  # (parent, child) -> (max rad, max mm)
    zero_pose_spread: tuple[float, float] = (0.0, 0.0)
    refine: RefineReport | None = None


def corner_orbits(target: TargetModel, views: dict) -> list[np.ndarray]:
    """Camera-frame positions of each corner over the pan views where it was seen."""
    per_corner = defaultdict(list)
    P = target.points
    for pose, ids in views.values():
        X = pose.apply(P[ids])
        for c, x in zip(ids.tolist(), X):
            per_corner[c].append(x)
    return [np.array(per_corner[c]) for c in sorted(per_corner)]


def calibrate_rig(
    target: TargetModel,
    obs: CornerObservations,
    image_sizes: dict | None = None,
    refine: bool = True,
    ref: tuple[int, int] | None = None,
) -> tuple[RigCalibration, CalibrationReport]:
    obs.validate(target)
    angles = obs.pan_angles()
    nodes = obs.nodes()
    if not nodes:
        raise ValueError("no corner observations")
    ref = ref if ref is not None else nodes[0]
    image_sizes = image_sizes or {}

    mono = {}
    extr = defaultdict(dict)  # node -> pan -> camera_from_target
    ids_of = {}
    for k in sorted({n[0] for n in nodes}):
        res = calibrate_mono(target, obs.select(camera=k), image_sizes.get(k))
        mono[k] = res
        for (j, i), pose in res.poses.items():
            extr[(k, j)][i] = pose
    for (k, j, i), (ids, _) in obs.views().items():
        ids_of[(k, j, i)] = ids
    nodes = [n for n in nodes if extr.get(n)]

    counts = {}
    for a in nodes:
        for b in nodes:
            if a < b:
                counts[(a, b)] = len(set(extr[a]) & set(extr[b]))
    rel = {ref: Pose.identity()}
    spread = {}
    for parent, child in spanning_tree(nodes, counts, ref):
        s = calibrate_stereo(extr[parent], extr[child])
        rel[child] = s.pose.compose(rel[parent])
        spread[(parent, child)] = (s.max_rot, s.max_trans)

    ref_views = {i: (p, ids_of[(ref[0], ref[1], i)]) for i, p in extr[ref].items()}
    axis = estimate_axis(corner_orbits(target, ref_views))
    base_ref = derive_world_pose(axis)
    if not check_pan_direction(base_ref, world_target_poses(base_ref, extr[ref]), angles):
        axis = flip_axis(axis)
    log.info(
        "axis normal %s, center %s mm (normal spread %.2e rad over %d orbits)",
        np.round(axis.normal, 6),
        np.round(axis.center, 3),
        axis.normal_spread,
        len(axis.radii),
    )
    base = {n: derive_world_pose(axis, rel[n] if n != ref else None) for n in nodes}

    wt = {}
    for n in nodes:
        for i, p in world_target_poses(base[n], extr[n]).items():
            wt[(n[0], n[1], i)] = p
    zc = target_zero_pose(wt, angles)
    base, T0 = canonicalize_gauge(base, zc.pose, target, ref)
    intr = {k: m.intrinsics for k, m in mono.items()}
    rig = RigCalibration(intr, base, T0, infer_pan_angles(angles))
    rms0 = reprojection_rms(rig, target, obs)
    log.info("initial rig estimate: rms %.4f px", rms0)
    report = CalibrationReport(rms0, rms0, mono, axis, spread, (zc.max_rot, zc.max_trans))
    if refine:
        rig, rr = refine_all(rig, target, obs, ref=ref)
        report.final_rms = rr.final_rms
        report.refine = rr
    else:
        rig.rms = rms0
    return rig, report
