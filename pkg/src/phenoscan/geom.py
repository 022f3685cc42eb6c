"""Rigid-motion and camera-model algebra.

Conventions
-----------
A :class:`Pose` ``[R | t]`` maps a point expressed in its source frame into
its destination frame: ``x_dst = R @ x_src + t``.  Poses are named
``dst_from_src`` in the rest of the package, e.g. the pose of a camera
relative to the world maps world points into the camera frame.

Rotations are stored as matrices.  Angle-axis vectors (direction = axis,
magnitude = angle in radians) are the parameterization handed to optimizers.

Camera frames follow the usual vision convention: x right, y down, z along
the optical axis.  Pixel ``(u, v)`` has ``u`` along image columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CameraIntrinsics",
    "DistortionError",
    "PointBehindCameraError",
    "Pose",
    "canonical_rotvec",
    "chordal_mean_rotation",
    "nearest_rotation",
    "project",
    "rodrigues",
    "rot_y",
    "rotation_angle",
    "rotvec_from_matrix",
    "skew",
    "undistort_point",
]

_UNDISTORT_MAX_ITER = 20
_UNDISTORT_TOL_PX = 1e-9
_UNDISTORT_ACCEPT_PX = 1e-6


class PointBehindCameraError(ValueError):
    """A point with z <= 0 was handed to the projection model."""


class DistortionError(ArithmeticError):
    """Distortion inversion failed to converge."""


def skew(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rodrigues(rv) -> np.ndarray:
    """Rotation matrix of an angle-axis vector.

    The zero vector maps to the identity; small angles use the series form
    of the coefficients so the result stays orthonormal to machine precision.
    """
    rv = np.asarray(rv, dtype=float).reshape(3)
    if not np.all(np.isfinite(rv)):
        raise ValueError("rotation vector must be finite")
    theta2 = float(rv @ rv)
    theta = np.sqrt(theta2)
    if theta < 1e-4:
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    K = skew(rv)
    return np.eye(3) + a * K + b * (K @ K)


def rodrigues_batch(rv: np.ndarray) -> np.ndarray:
    """Vectorized angle-axis -> matrix for an (M, 3) array."""
    theta2 = np.sum(rv * rv, axis=1)
    theta = np.sqrt(theta2)
    small = theta < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1 - theta2 / 6 + theta2**2 / 120, np.sin(theta) / np.where(small, 1, theta))
        b = np.where(small, 0.5 - theta2 / 24 + theta2**2 / 720, (1 - np.cos(theta)) / np.where(small, 1, theta2))
    K = np.zeros((len(rv), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -rv[:, 2], rv[:, 1]
    K[:, 1, 0], K[:, 1, 2] = rv[:, 2], -rv[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -rv[:, 1], rv[:, 0]
    return np.eye(3) + a[:, None, None] * K + b[:, None, None] * (K @ K)


def _positive_axis(axis: np.ndarray) -> np.ndarray:
    # lexicographically positive representative of +/- axis
    for c in axis:
        if abs(c) > 1e-12:
            return axis if c > 0 else -axis
    return axis


def rotvec_from_matrix(R) -> np.ndarray:
    """Inverse of :func:`rodrigues` with the angle canonicalized to [0, pi].

    At exactly pi the axis sign is ambiguous; the lexicographically positive
    axis is returned.
    """
    R = np.asarray(R, dtype=float)
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    vee = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_t = 0.5 * np.linalg.norm(vee)
    theta = np.arctan2(sin_t, cos_t)
    if theta < 1e-4:
        # theta/sin(theta) series; vee = 2 sin(theta) * axis
        return 0.5 * (1.0 + theta * theta / 6.0) * vee
    if np.pi - theta > 1e-4:
        return theta / (2.0 * np.sin(theta)) * vee
    # near pi: recover the axis from the symmetric part, R + R^T = 2 cos I + 2(1-cos) aa^T
    S = 0.5 * (R + R.T) - cos_t * np.eye(3)
    k = int(np.argmax(np.diag(S)))
    axis = S[:, k] / np.sqrt(max(S[k, k], 1e-300))
    axis /= np.linalg.norm(axis)
    # fix the sign with the antisymmetric part when it carries information
    if axis @ vee < 0:
        axis = -axis
    if np.pi - theta < 1e-12:
        axis = _positive_axis(axis)
    return theta * axis


def canonical_rotvec(rv) -> np.ndarray:
    return rotvec_from_matrix(rodrigues(rv))


def rotation_angle(R) -> float:
    """Angle of the rotation ``R`` in radians."""
    return float(np.linalg.norm(rotvec_from_matrix(R)))


def rot_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def nearest_rotation(M) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def chordal_mean_rotation(Rs) -> np.ndarray:
    """Chordal L2 mean: the rotation nearest to the arithmetic mean matrix."""
    Rs = np.asarray(Rs, dtype=float)
    if Rs.ndim != 3 or len(Rs) == 0:
        raise ValueError("need at least one rotation")
    if len(Rs) == 1:
        return Rs[0].copy()
    return nearest_rotation(Rs.mean(axis=0))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> R x + t`` (translation in mm)."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _frozen(self.R).reshape(3, 3)
        t = _frozen(self.t).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_rotvec(cls, rv, t=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(rodrigues(rv), t)

    @classmethod
    def from_params(cls, p) -> "Pose":
        """Pose from the 6-vector ``[r0, r1, r2, t0, t1, t2]``."""
        p = np.asarray(p, dtype=float)
        return cls(rodrigues(p[:3]), p[3:6])

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @property
    def rotvec(self) -> np.ndarray:
        return rotvec_from_matrix(self.R)

    def params(self) -> np.ndarray:
        return np.concatenate([self.rotvec, self.t])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def compose(self, other: "Pose") -> "Pose":
        """``self ⊗ other``: apply ``other`` first, then ``self``."""
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    __matmul__ = compose

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t)

    def apply(self, x) -> np.ndarray:
        """Transform a point or an (N, 3) array of points."""
        x = np.asarray(x, dtype=float)
        return x @ self.R.T + self.t

    @property
    def center(self) -> np.ndarray:
        """Origin of the destination frame expressed in the source frame.

        For a camera-from-world pose this is the camera center in the world.
        """
        return -self.R.T @ self.t

    def is_valid(self, tol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.R.T @ self.R, np.eye(3), atol=tol)
            and abs(np.linalg.det(self.R) - 1.0) < tol
        )

    def allclose(self, other: "Pose", rtol_rad: float = 1e-9, atol_mm: float = 1e-9) -> bool:
        dr = rotation_angle(self.R.T @ other.R)
        dt = float(np.linalg.norm(self.t - other.t))
        return dr <= rtol_rad and dt <= atol_mm

    def __repr__(self) -> str:
        rv = np.array2string(self.rotvec, precision=6)
        t = np.array2string(self.t, precision=4)
        return f"Pose(rotvec={rv}, t={t})"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Single-focal pinhole with two radial distortion terms.

    ``width``/``height`` are optional; when given, the principal point must
    lie inside the image.
    """

    f: float
    cu: float
    cv: float
    d1: float = 0.0
    d2: float = 0.0
    width: int | None = None
    height: int | None = None

    def __post_init__(self):
        vals = (self.f, self.cu, self.cv, self.d1, self.d2)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("intrinsics must be finite")
        if self.f <= 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        if abs(self.d1) >= 1 or abs(self.d2) >= 1:
            raise ValueError("distortion coefficients must satisfy |d| < 1")
        if self.width is not None and self.height is not None:
            if not (0 <= self.cu <= self.width and 0 <= self.cv <= self.height):
                raise ValueError("principal point outside the image")

    @classmethod
    def from_params(cls, p, width=None, height=None) -> "CameraIntrinsics":
        f, cu, cv, d1, d2 = (float(x) for x in p)
        return cls(f, cu, cv, d1, d2, width, height)

    def params(self) -> np.ndarray:
        return np.array([self.f, self.cu, self.cv, self.d1, self.d2])

    def matrix(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.cu], [0.0, self.f, self.cv], [0.0, 0.0, 1.0]])

    def distort_normalized(self, m) -> np.ndarray:
        """Pixel coordinates of normalized image points ``m = (x/z, y/z)``."""
        m = np.asarray(m, dtype=float)
        r2 = np.sum(m * m, axis=-1, keepdims=True)
        g = 1.0 + self.d1 * r2 + self.d2 * r2 * r2
        return self.f * m * g + np.array([self.cu, self.cv])


def project(k: CameraIntrinsics, p_cam) -> np.ndarray:
    """Project camera-frame point(s) to pixels with radial distortion."""
    p = np.asarray(p_cam, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0):
        raise PointBehindCameraError("point behind the camera (z <= 0)")
    m = p[..., :2] / z[..., None]
    return k.distort_normalized(m)


def undistort_point(k: CameraIntrinsics, pixel) -> np.ndarray:
    """Normalized ray ``(x, y, 1)`` whose projection is ``pixel``.

    Solves the scalar radial equation ``r (1 + d1 r^2 + d2 r^4) = r_d`` by
    Newton iteration (at most 20 steps); accepts one pixel or an (N, 2) array.
    Raises :class:`DistortionError` when the radial map is not invertible at
    the pixel or the round trip misses by more than 1e-6 px.
    """
    px = np.asarray(pixel, dtype=float)
    single = px.ndim == 1
    px = np.atleast_2d(px)
    md = (px - np.array([k.cu, k.cv])) / k.f
    rd = np.sqrt(np.sum(md * md, axis=1))
    r = rd.copy()
    for _ in range(_UNDISTORT_MAX_ITER):
        r2 = r * r
        h = r * (1.0 + k.d1 * r2 + k.d2 * r2 * r2) - rd
        dh = 1.0 + 3.0 * k.d1 * r2 + 5.0 * k.d2 * r2 * r2
        if np.any(dh <= 0):
            raise DistortionError("radial distortion not invertible at this pixel")
        r = r - h / dh
        if k.f * np.abs(h).max(initial=0.0) <= _UNDISTORT_TOL_PX:
            break
    scale = np.divide(r, rd, out=np.ones_like(rd), where=rd > 0)
    m = md * scale[:, None]
    r2 = np.sum(m * m, axis=1, keepdims=True)
    resid = k.f * np.abs(m * (1.0 + k.d1 * r2 + k.d2 * r2 * r2) - md).max(initial=0.0)
    if not resid <= _UNDISTORT_ACCEPT_PX or not np.all(np.isfinite(m)):
        raise DistortionError("distortion inversion did not converge; pixel outside model validity")
    ray = np.concatenate([m, np.ones((len(m), 1))], axis=1)
    return ray[0] if single else ray
