"""Parametric turntable rig and chessboard corner rendering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..calib.turntable import gauge_transform
from ..calib.types import CornerObservations, RigCalibration, TargetModel
from ..geom import CameraIntrinsics, Pose, rot_y


def _default_intrinsics():
    return (
        CameraIntrinsics(1400.0, 515.3, 508.7, -0.05, 0.01, 1024, 1024),
        CameraIntrinsics(1420.0, 509.1, 514.2, -0.04, 0.008, 1024, 1024),
    )


@dataclass
class RigSpec:
    """Cameras on a tilting arc around a pivot on the turntable axis.

    World frame: y along the turntable axis pointing down (the image-down
    direction of a level camera), origin on the axis.  Camera ``k`` at tilt
    ``j`` sits at elevation ``tilt_deg[j] + k * camera_offset_deg`` above
    the pivot, ``ring_radius`` mm away, looking at the pivot.
    """

    n_cameras: int = 2
    tilt_deg: tuple[float, ...] = (0.0, 11.25, 22.5, 33.75, 45.0)
    n_pans: int = 36
    ring_radius: float = 500.0
    camera_offset_deg: float = 40.0
    intrinsics: tuple[CameraIntrinsics, ...] = field(default_factory=_default_intrinsics)
    pivot_y: float = 0.0
    # chessboard mounted on the turntable
    board_offset: float = 50.0  # board centre distance from the axis (mm)
    board_y: float = 0.0
    board_elevation_deg: float = 35.0  # tilt of the board normal above horizontal
    max_obliquity_deg: float = 58.0  # detector gives up beyond this viewing angle

    def __post_init__(self):
        if self.n_pans < 3:
            raise ValueError("need at least 3 pans per revolution")
        if len(self.intrinsics) < self.n_cameras:
            raise ValueError("one intrinsics entry per camera is required")
        vals = list(self.tilt_deg) + [self.ring_radius, self.camera_offset_deg]
        if not np.all(np.isfinite(vals)):
            raise ValueError("rig angles and distances must be finite")

    @property
    def pan_angles(self) -> tuple[float, ...]:
        return tuple(2.0 * np.pi * i / self.n_pans for i in range(self.n_pans))

    def elevation(self, camera: int, tilt: int) -> float:
        return np.radians(self.tilt_deg[tilt] + camera * self.camera_offset_deg)


def look_at(center, target, down=(0.0, 1.0, 0.0)) -> Pose:
    """Camera-from-world pose of a camera at ``center`` looking at ``target``.

    The image x-axis stays horizontal and the image y-axis points towards
    ``down``.
    """
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross(down, z)
    if np.linalg.norm(x) < 1e-12:
        # looking straight along the axis: any horizontal x will do
        x = np.array([1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.vstack([x, y, z])
    return Pose(R, -R @ center)


def rig_base_poses(spec: RigSpec) -> dict[tuple[int, int], Pose]:
    pivot = np.array([0.0, spec.pivot_y, 0.0])
    out = {}
    for k in range(spec.n_cameras):
        for j in range(len(spec.tilt_deg)):
            e = spec.elevation(k, j)
            c = pivot + spec.ring_radius * np.array([0.0, -np.sin(e), -np.cos(e)])
            out[(k, j)] = look_at(c, pivot)
    return out


def board_zero_pose(spec: RigSpec, target: TargetModel) -> Pose:
    """World-from-target pose at zero pan.

    The printed face looks along the target's -z axis, towards camera 0 and
    tilted upward by ``board_elevation_deg``.
    """
    e = np.radians(spec.board_elevation_deg)
    z_t = np.array([0.0, np.sin(e), np.cos(e)])  # into the board
    x_t = np.array([1.0, 0.0, 0.0])
    y_t = np.cross(z_t, x_t)
    R = np.column_stack([x_t, y_t, z_t])
    centre = np.array([0.0, spec.board_y, -spec.board_offset])
    return Pose(R, centre - R @ target.centroid)


def truth_rig(spec: RigSpec, target: TargetModel) -> tuple[RigCalibration, Pose]:
    """Ground-truth calibration in the canonical world gauge.

    Also returns the map from the generator's physical frame to that gauge,
    needed to place scene geometry consistently.
    """
    base = rig_base_poses(spec)
    T0 = board_zero_pose(spec, target)
    M = gauge_transform(base, T0, target, (0, 0))
    Minv = M.inverse()
    base = {k: p.compose(Minv) for k, p in base.items()}
    intr = {k: spec.intrinsics[k] for k in range(spec.n_cameras)}
    return RigCalibration(intr, base, M.compose(T0), spec.pan_angles, 0.0), M


def render_corner_observations(
    spec: RigSpec,
    target: TargetModel,
    noise: float = 0.0,
    seed: int = 0,
) -> tuple[CornerObservations, RigCalibration]:
    """Project every corner through the ground-truth rig.

    A board view is dropped when its printed face is seen at more than
    ``max_obliquity_deg``; single corners falling outside the image are
    dropped.  Gaussian pixel noise of std ``noise`` is added per coordinate.
    """
    rig, _ = truth_rig(spec, target)
    P = target.points
    rng = np.random.default_rng(seed)
    cos_max = np.cos(np.radians(spec.max_obliquity_deg))
    cols = {name: [] for name in ("camera", "tilt", "pan", "pan_angle", "corner", "uv")}
    for (k, j) in rig.nodes:
        K = rig.intrinsics[k]
        for i, theta in enumerate(rig.pan_angles):
            A = rig.camera_pose_at(k, j, theta).compose(rig.target_zero_pose)
            X = A.apply(P)
            if np.any(X[:, 2] <= 0):
                continue
            face = A.R @ np.array([0.0, 0.0, -1.0])
            view = -X.mean(axis=0)
            if face @ view < cos_max * np.linalg.norm(view):
                continue
            m = X[:, :2] / X[:, 2:3]
            uv = K.distort_normalized(m)
            inside = (uv[:, 0] >= 0) & (uv[:, 0] <= K.width - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= K.height - 1)
            # radial distortion folds back far outside the image; keep only the monotone zone
            r2 = np.sum(m * m, axis=1)
            inside &= 1 + 3 * K.d1 * r2 + 5 * K.d2 * r2 * r2 > 0
            ids = np.nonzero(inside)[0]
            if len(ids) == 0:
                continue
            n = len(ids)
            cols["camera"].append(np.full(n, k))
            cols["tilt"].append(np.full(n, j))
            cols["pan"].append(np.full(n, i))
            cols["pan_angle"].append(np.full(n, theta))
            cols["corner"].append(ids)
            cols["uv"].append(uv[ids])
    if not cols["camera"]:
        raise ValueError("the target is never visible with this rig geometry")
    arrays = {name: np.concatenate(v) for name, v in cols.items()}
    if noise > 0:
        arrays["uv"] = arrays["uv"] + rng.normal(scale=noise, size=arrays["uv"].shape)
    return CornerObservations(**arrays), rig


def visibility_fractions(obs: CornerObservations, n_pans: int) -> dict:
    """Fraction of pans in which each (camera, tilt) node saw the board."""
    out = {}
    for node in obs.nodes():
        sel = obs.select(camera=node[0], tilt=node[1])
        out[node] = len(np.unique(sel.pan)) / n_pans
    return out


def turntable_points(points, theta: float) -> np.ndarray:
    """World points carried by the turntable to pan ``theta``."""
    return np.asarray(points, dtype=float) @ rot_y(theta).T
