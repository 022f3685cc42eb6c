"""Data types shared by the calibration steps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geom import CameraIntrinsics, Pose, rot_y


class CalibrationError(RuntimeError):
    """Base class for calibration failures."""


class DegenerateGeometryError(CalibrationError):
    """Input geometry does not constrain the requested quantity."""


class NonConvergenceError(CalibrationError):
    """Nonlinear refinement failed to converge."""


class RankDeficiencyWarning(UserWarning):
    """Some parameters are unobservable from the observations."""


@dataclass(frozen=True)
class TargetModel:
    """Planar chessboard: ``rows x cols`` inner corners on a ``square`` mm grid.

    Corner ``id = r * cols + c`` sits at ``(c * square, r * square, 0)``.
    """

    rows: int
    cols: int
    square: float

    def __post_init__(self):
        if self.rows < 3 or self.cols < 3:
            raise ValueError("target needs at least 3x3 corners")
        if not self.square > 0:
            raise ValueError("square size must be positive")

    @property
    def n_corners(self) -> int:
        return self.rows * self.cols

    @property
    def points(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n_corners), self.cols)
        return np.column_stack([c * self.square, r * self.square, np.zeros(self.n_corners)])

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


ViewKey = tuple  # (camera, tilt, pan)


@dataclass
class CornerObservations:
    """Flat table of detected corners, one row per (view, corner)."""

    camera: np.ndarray
    tilt: np.ndarray
    pan: np.ndarray
    pan_angle: np.ndarray  # radians
    corner: np.ndarray
    uv: np.ndarray  # (N, 2) pixels

    def __post_init__(self):
        self.camera = np.asarray(self.camera, dtype=np.int64).reshape(-1)
        self.tilt = np.asarray(self.tilt, dtype=np.int64).reshape(-1)
        self.pan = np.asarray(self.pan, dtype=np.int64).reshape(-1)
        self.pan_angle = np.asarray(self.pan_angle, dtype=float).reshape(-1)
        self.corner = np.asarray(self.corner, dtype=np.int64).reshape(-1)
        self.uv = np.asarray(self.uv, dtype=float).reshape(-1, 2)
        n = len(self.camera)
        if not all(len(a) == n for a in (self.tilt, self.pan, self.pan_angle, self.corner, self.uv)):
            raise ValueError("observation columns have different lengths")

    def __len__(self) -> int:
        return len(self.camera)

    def validate(self, target: TargetModel) -> None:
        if np.any((self.corner < 0) | (self.corner >= target.n_corners)):
            raise ValueError("observation references a corner id outside the target")
        angles = self.pan_angles()
        vals = np.array([angles[i] for i in sorted(angles)])
        if np.any(np.diff(vals) <= 0):
            raise ValueError("pan angles must increase strictly with pan index")

    def pan_angles(self) -> dict[int, float]:
        """Pan angle of each pan index; the same index must mean the same angle everywhere."""
        out: dict[int, float] = {}
        for i, a in zip(self.pan.tolist(), self.pan_angle.tolist()):
            prev = out.setdefault(i, a)
            if abs(prev - a) > 1e-9:
                raise ValueError(f"pan index {i} carries two different angles")
        return out

    def subset(self, mask) -> "CornerObservations":
        m = np.asarray(mask)
        return CornerObservations(
            self.camera[m], self.tilt[m], self.pan[m], self.pan_angle[m], self.corner[m], self.uv[m]
        )

    def select(self, camera=None, tilt=None) -> "CornerObservations":
        m = np.ones(len(self), dtype=bool)
        if camera is not None:
            m &= self.camera == camera
        if tilt is not None:
            m &= np.isin(self.tilt, np.atleast_1d(tilt))
        return self.subset(m)

    def nodes(self) -> list[tuple[int, int]]:
        """Sorted (camera, tilt) pairs present."""
        pairs = {(int(k), int(j)) for k, j in zip(self.camera, self.tilt)}
        return sorted(pairs)

    def views(self) -> dict[ViewKey, tuple[np.ndarray, np.ndarray]]:
        """Map (camera, tilt, pan) -> (corner ids, uv) with ids sorted."""
        keys = np.column_stack([self.camera, self.tilt, self.pan])
        order = np.lexsort((self.corner, self.pan, self.tilt, self.camera))
        keys = keys[order]
        out = {}
        if len(order) == 0:
            return out
        brk = np.nonzero(np.any(np.diff(keys, axis=0) != 0, axis=1))[0] + 1
        for idx in np.split(np.arange(len(order)), brk):
            sel = order[idx]
            k = tuple(int(x) for x in keys[idx[0]])
            out[k] = (self.corner[sel], self.uv[sel])
        return out


@dataclass(frozen=True)
class AxisEstimate:
    """Turntable axis seen from the reference camera.

    ``normal`` and ``center`` are in the reference camera frame; ``rotvec`` is
    the alignment rotation taking ``normal`` onto +y and ``t0`` the orbit
    center expressed in that aligned frame.
    """

    normal: np.ndarray
    center: np.ndarray
    rotvec: np.ndarray
    t0: np.ndarray
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    normal_spread: float = 0.0


@dataclass
class RigCalibration:
    """Intrinsics per camera and a base (pan = 0) pose per (camera, tilt).

    ``base_poses[(k, j)]`` maps world points into camera ``k`` at tilt ``j``
    when the turntable is at zero; ``target_zero_pose`` maps target points
    into the world at zero pan.
    """

    intrinsics: dict[int, CameraIntrinsics]
    base_poses: dict[tuple[int, int], Pose]
    target_zero_pose: Pose
    pan_angles: tuple[float, ...] = ()
    rms: float | None = None

    def __post_init__(self):
        for key, pose in self.base_poses.items():
            if not pose.is_valid():
                raise ValueError(f"base pose {key} is not a valid rigid transform")
            if key[0] not in self.intrinsics:
                raise ValueError(f"no intrinsics for camera {key[0]}")

    def camera_pose_at(self, camera: int, tilt: int, theta: float) -> Pose:
        return camera_pose_at(self, camera, tilt, theta)

    def pose_for_view(self, camera: int, tilt: int, pan: int) -> Pose:
        return camera_pose_at(self, camera, tilt, self.pan_angles[pan])

    @property
    def nodes(self) -> list[tuple[int, int]]:
        return sorted(self.base_poses)


def turntable_rotation(theta: float) -> Pose:
    """World rotation of the turntable by ``theta`` about the world y-axis."""
    return Pose(rot_y(theta), np.zeros(3))


def camera_pose_at(rig: RigCalibration, camera: int, tilt: int, theta: float) -> Pose:
    """Camera-from-world pose when the turntable has turned by ``theta``.

    The target and world stay fixed, so the camera is carried around the
    y-axis instead: ``base ⊗ [R_theta | 0]``.  For a chained camera the base
    pose already includes its stereo offset.
    """
    if not np.isfinite(theta):
        raise ValueError("pan angle must be finite")
    try:
        base = rig.base_poses[(camera, tilt)]
    except KeyError:
        raise KeyError(f"no calibration for camera {camera}, tilt {tilt}") from None
    return base.compose(turntable_rotation(theta))
