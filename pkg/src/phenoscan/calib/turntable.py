"""Turntable geometry: stereo chaining, rotation axis, world frame and target pose."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..geom import Pose, chordal_mean_rotation, rodrigues, rot_y, rotation_angle
from .types import AxisEstimate, CalibrationError, DegenerateGeometryError, TargetModel

log = logging.getLogger(__name__)

Y = np.array([0.0, 1.0, 0.0])


@dataclass
class PoseConsensus:
    """Rotation-averaged pose plus the per-sample disagreement."""

    pose: Pose
    rot_spread: np.ndarray  # radians, per sample
    trans_spread: np.ndarray  # mm, per sample
    keys: list = field(default_factory=list)

    @property
    def max_rot(self) -> float:
        return float(self.rot_spread.max()) if self.rot_spread.size else 0.0

    @property
    def max_trans(self) -> float:
        return float(self.trans_spread.max()) if self.trans_spread.size else 0.0


def average_poses(poses, keys=None) -> PoseConsensus:
    """Chordal-mean rotation and arithmetic-mean translation."""
    poses = list(poses)
    if not poses:
        raise ValueError("cannot average an empty set of poses")
    R = chordal_mean_rotation([p.R for p in poses])
    t = np.mean([p.t for p in poses], axis=0)
    rs = np.array([rotation_angle(R.T @ p.R) for p in poses])
    ts = np.array([np.linalg.norm(p.t - t) for p in poses])
    return PoseConsensus(Pose(R, t), rs, ts, list(keys) if keys is not None else [])


def calibrate_stereo(extr_a: dict, extr_b: dict) -> PoseConsensus:
    """Relative pose taking frame A to frame B from shared target views.

    ``extr_a`` and ``extr_b`` map a view key (pan index) to the
    camera-from-target pose seen by each camera.  Every shared key gives
    ``B_i ⊗ A_i^-1``; the samples are averaged.
    """
    shared = sorted(set(extr_a) & set(extr_b))
    if not shared:
        raise CalibrationError("no shared views between the two cameras")
    rel = [extr_b[i].compose(extr_a[i].inverse()) for i in shared]
    return average_poses(rel, shared)


def fit_orbit_plane(points) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares plane through 3-D points: (unit normal with n_y >= 0, centroid)."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(P) < 3:
        raise DegenerateGeometryError("plane fit needs at least 3 points")
    c = P.mean(axis=0)
    B = P - c
    _, s, Vt = np.linalg.svd(B, full_matrices=True)
    if len(s) < 2 or s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateGeometryError("orbit points are collinear")
    n = Vt[2]
    n = n / np.linalg.norm(n)
    if n[1] < 0 or (n[1] == 0 and _first_nonzero(n) < 0):
        n = -n
    return n, c


def _first_nonzero(v):
    nz = np.nonzero(np.abs(v) > 0)[0]
    return v[nz[0]] if len(nz) else 0.0


def axis_alignment(n) -> np.ndarray:
    """Rotation vector of the minimal rotation taking unit ``n`` onto +y.

    Parallel input gives the zero vector; anti-parallel input gives a
    half turn about the x-axis.
    """
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n)
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
        raise ValueError("axis_alignment expects a unit vector")
    n = n / norm
    c = np.cross(n, Y)
    s = np.linalg.norm(c)
    d = float(n @ Y)
    if s < 1e-15:
        return np.zeros(3) if d > 0 else np.array([np.pi, 0.0, 0.0])
    omega = np.arctan2(s, d)
    return omega * c / s


def fit_circle(points2d) -> tuple[np.ndarray, float]:
    """Linear least-squares circle fit: ``(center, radius)`` in the input's axes."""
    P = np.asarray(points2d, dtype=float).reshape(-1, 2)
    if len(P) < 3:
        raise DegenerateGeometryError("circle fit needs at least 3 points")
    m = P.mean(axis=0)
    Q = P - m
    A = np.column_stack([2.0 * Q, np.ones(len(Q))])
    b = np.sum(Q * Q, axis=1)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise DegenerateGeometryError("circle points are collinear")
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    center = sol[:2]
    r2 = sol[2] + center @ center
    if r2 <= 0:
        raise DegenerateGeometryError("circle fit has no real radius")
    return center + m, float(np.sqrt(r2))


def estimate_axis(orbits: list[np.ndarray], min_points: int = 3) -> AxisEstimate:
    """Rotation axis from corner orbits given in one camera frame.

    Each entry of ``orbits`` holds the positions of one target corner over
    the pan angles where it was detected.  Plane normals are averaged; the
    circle centers found in the aligned frame are averaged as well.
    """
    usable = [np.asarray(o, dtype=float) for o in orbits if len(o) >= min_points]
    if not usable:
        raise DegenerateGeometryError("no corner orbit has enough points")
    normals = []
    for o in usable:
        n, _ = fit_orbit_plane(o)
        normals.append(n)
    normals = np.array(normals)
    n = normals.mean(axis=0)
    n /= np.linalg.norm(n)
    spread = float(np.max(np.arccos(np.clip(normals @ n, -1.0, 1.0))))
    rv = axis_alignment(n)
    Rw = rodrigues(rv)
    centers, radii, ys = [], [], []
    for o in usable:
        L = o @ Rw.T
        (z0, x0), r = fit_circle(L[:, [2, 0]])
        centers.append((x0, z0))
        radii.append(r)
        ys.append(L[:, 1].mean())
    x0, z0 = np.mean(centers, axis=0)
    t0 = np.array([x0, float(np.mean(ys)), z0])
    return AxisEstimate(n, Rw.T @ t0, rv, t0, np.array(radii), spread)


def derive_world_pose(axis: AxisEstimate, stereo: Pose | None = None) -> Pose:
    """Camera-from-world pose ``[R_w^T | R_w^T t0]`` of the camera the axis was measured in.

    With ``stereo`` (that camera -> another camera or tilt) the result is the
    chained pose of the other camera.
    """
    Rt = rodrigues(axis.rotvec).T
    base = Pose(Rt, Rt @ axis.t0)
    return base if stereo is None else stereo.compose(base)


def world_target_poses(base: Pose, extr: dict) -> dict:
    """World-from-target pose of every view: ``(K xi_W)^-1 ⊗ K xi_T``."""
    inv = base.inverse()
    return {key: inv.compose(p) for key, p in extr.items()}


def target_zero_pose(world_target: dict, pan_angles: dict) -> PoseConsensus:
    """Consensus target pose at zero pan from per-view world-from-target poses.

    Each estimate is de-rotated by ``[R_theta^T | 0]``.  ``pan_angles`` maps
    the same keys (or the pan component of tuple keys) to radians.
    """
    if not world_target:
        raise ValueError("no target pose estimates given")
    keys = sorted(world_target)
    derot = []
    for key in keys:
        theta = pan_angles[key[-1] if isinstance(key, tuple) else key]
        derot.append(Pose(rot_y(-theta)).compose(world_target[key]))
    return average_poses(derot, keys)


def gauge_transform(base_poses: dict, target_zero: Pose, target: TargetModel, ref) -> Pose:
    """Map from the given world frame to the canonical one.

    The world frame may rotate about and slide along its y-axis without
    changing any image.  The rotation is fixed by making the reference
    camera's world rotation the minimal one taking its axis estimate onto
    +y; the slide by putting the target centroid at world y = 0 at zero pan.
    """
    Rref = base_poses[ref].R
    n = Rref @ Y
    G = rodrigues(axis_alignment(n / np.linalg.norm(n))) @ Rref
    # G fixes y up to rounding; rebuild it as an exact y rotation
    G = rot_y(np.arctan2(G[0, 2], G[0, 0]))
    s = (G @ target_zero.apply(target.centroid))[1]
    return Pose(G, np.array([0.0, -s, 0.0]))


def canonicalize_gauge(base_poses: dict, target_zero: Pose, target: TargetModel, ref) -> tuple[dict, Pose]:
    """Re-express base poses and target pose in the canonical world frame."""
    M = gauge_transform(base_poses, target_zero, target, ref)
    Minv = M.inverse()
    out = {k: p.compose(Minv) for k, p in base_poses.items()}
    return out, M.compose(target_zero)


def spanning_tree(nodes, shared_counts: dict, root) -> list[tuple]:
    """Maximum spanning tree edges ``(parent, child)`` in breadth order from ``root``.

    ``shared_counts[(a, b)]`` is the number of pan views both nodes saw.
    Ties break towards the lexicographically smaller edge.
    """
    nodes = sorted(nodes)
    if root not in nodes:
        raise CalibrationError(f"reference node {root} has no observations")
    in_tree = {root}
    edges = []
    while len(in_tree) < len(nodes):
        best = None
        for a in sorted(in_tree):
            for b in nodes:
                if b in in_tree:
                    continue
                w = shared_counts.get((a, b), shared_counts.get((b, a), 0))
                if w > 0 and (best is None or w > best[0]):
                    best = (w, a, b)
        if best is None:
            missing = [n for n in nodes if n not in in_tree]
            raise CalibrationError(f"nodes {missing} share no views with the rest of the rig")
        in_tree.add(best[2])
        edges.append((best[1], best[2]))
    return edges


def check_pan_direction(base: Pose, world_target: dict, pan_angles: dict) -> bool:
    """True when the views de-rotate consistently with the +theta convention."""
    if len(world_target) < 2:
        return True
    fwd = target_zero_pose(world_target, pan_angles).max_rot
    flipped = {k: -v for k, v in pan_angles.items()}
    rev = target_zero_pose(world_target, flipped).max_rot
    return fwd <= rev


def flip_axis(axis: AxisEstimate) -> AxisEstimate:
    n = -axis.normal
    rv = axis_alignment(n)
    t0 = rodrigues(rv) @ axis.center
    warnings.warn(
        "turntable rotates clockwise about the upward-facing axis estimate; using the flipped axis",
        RuntimeWarning,
        stacklevel=2,
    )
    return AxisEstimate(n, axis.center, rv, t0, axis.radii, axis.normal_spread)


def infer_pan_angles(angles: dict[int, float]) -> tuple[float, ...]:
    """Pan angle for every index from 0 up to a full revolution when spacing is uniform.

    Indices where the board was never seen carry no angle in the corner
    file; with uniform spacing they are filled in.  Otherwise only the
    observed range is returned, with NaN for unknown entries.
    """
    idx = np.array(sorted(angles))
    vals = np.array([angles[i] for i in idx])
    nz = idx > 0
    zero_ok = np.all(np.abs(vals[~nz]) < 1e-9)
    if nz.any() and zero_ok:
        step = vals[nz] / idx[nz]
        if np.ptp(step) < 1e-9:
            d = float(step.mean())
            n = int(round(2 * np.pi / d)) if d > 0 else 0
            if n > idx.max() and abs(n * d - 2 * np.pi) < 1e-6:
                return tuple(float(i * d) for i in range(n))
    out = [float("nan")] * (int(idx.max()) + 1)
    for i, a in zip(idx, vals):
        out[int(i)] = float(a)
    return tuple(out)
