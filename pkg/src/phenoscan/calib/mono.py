"""Single-camera calibration from planar target views.

Closed-form initialization follows Zhang's homography method, specialized
to the camera model used here (one focal length, no skew), followed by a
joint reprojection refinement that adds the two radial terms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..geom import CameraIntrinsics, Pose, nearest_rotation, rodrigues_batch
from .lm import levenberg_marquardt
from .types import CornerObservations, DegenerateGeometryError, NonConvergenceError, TargetModel

log = logging.getLogger(__name__)


@dataclass
class MonoResult:
    intrinsics: CameraIntrinsics
    poses: dict[tuple[int, int], Pose]  # (tilt, pan) -> camera_from_target
    rms: float
    n_views: int


def _normalizer(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    s = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - c, axis=1)), 1e-12)
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def homography_dlt(src, dst) -> np.ndarray:
    """Plane-to-image homography by the normalized direct linear transform."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if len(src) < 4:
        raise DegenerateGeometryError("homography needs at least 4 points")
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = np.column_stack([src, np.ones(len(src))]) @ Ts.T
    d = np.column_stack([dst, np.ones(len(dst))]) @ Td.T
    n = len(s)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = s
    A[0::2, 6:9] = -d[:, :1] * s
    A[1::2, 3:6] = s
    A[1::2, 6:9] = -d[:, 1:2] * s
    _, sv, Vt = np.linalg.svd(A)
    if sv[-2] < 1e-10 * sv[0]:
        raise DegenerateGeometryError("homography is not unique (collinear points?)")
    H = np.linalg.inv(Td) @ Vt[-1].reshape(3, 3) @ Ts
    return H / H[2, 2]


def _vij(H, i, j):
    h = H
    return np.array(
        [
            h[0, i] * h[0, j],
            h[0, i] * h[1, j] + h[1, i] * h[0, j],
            h[1, i] * h[1, j],
            h[2, i] * h[0, j] + h[0, i] * h[2, j],
            h[2, i] * h[1, j] + h[1, i] * h[2, j],
            h[2, i] * h[2, j],
        ]
    )


def intrinsics_from_homographies(Hs, center=(0.0, 0.0), scale=1.0) -> tuple[float, float, float]:
    """Closed-form ``(f, cu, cv)`` from homographies (zero skew, unit aspect).

    With ``B = K^-T K^-1`` restricted to ``B11 = B22``, ``B12 = 0`` each
    homography contributes two linear constraints on ``(b1, b2, b3, b4)``.
    ``center``/``scale`` describe a pixel normalization applied before the
    solve for conditioning; results are returned in pixels.
    """
    N = np.array([[1.0 / scale, 0.0, -center[0] / scale], [0.0, 1.0 / scale, -center[1] / scale], [0, 0, 1.0]])
    rows = []
    for H in Hs:
        Hn = N @ H
        Hn = Hn / np.linalg.norm(Hn)
        v12 = _vij(Hn, 0, 1)
        d = _vij(Hn, 0, 0) - _vij(Hn, 1, 1)
        for v in (v12, d):
            rows.append([v[0] + v[2], v[3], v[4], v[5]])
    V = np.array(rows)
    _, sv, Vt = np.linalg.svd(V)
    if len(sv) < 4 or sv[-2] < 1e-9 * sv[0]:
        raise DegenerateGeometryError("views do not constrain the intrinsics (near-degenerate poses)")
    b1, b2, b3, b4 = Vt[-1]
    if abs(b1) < 1e-12:
        raise DegenerateGeometryError("views do not constrain the focal length")
    if b1 < 0:
        b1, b2, b3, b4 = -b1, -b2, -b3, -b4
    cu, cv = -b2 / b1, -b3 / b1
    f2 = b4 / b1 - cu * cu - cv * cv
    if not f2 > 0:
        raise DegenerateGeometryError("closed-form focal length is not real")
    return float(np.sqrt(f2) * scale), float(cu * scale + center[0]), float(cv * scale + center[1])


def extrinsics_from_homography(K: np.ndarray, H: np.ndarray) -> Pose:
    A = np.linalg.solve(K, H)
    lam = 2.0 / (np.linalg.norm(A[:, 0]) + np.linalg.norm(A[:, 1]))
    if A[2, 2] * lam < 0:
        lam = -lam
    r1, r2, t = lam * A[:, 0], lam * A[:, 1], lam * A[:, 2]
    R = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return Pose(R, t)


def _project_batch(params, R, t, pts):
    f, cu, cv, d1, d2 = params
    pc = np.einsum("nij,nj->ni", R, pts) + t
    m = pc[:, :2] / pc[:, 2:3]
    r2 = np.sum(m * m, axis=1, keepdims=True)
    return f * m * (1.0 + d1 * r2 + d2 * r2 * r2) + np.array([cu, cv])


def calibrate_mono(
    target: TargetModel,
    obs: CornerObservations,
    image_size: tuple[int, int] | None = None,
    refine: bool = True,
) -> MonoResult:
    """Intrinsics and per-view target poses for one camera.

    ``obs`` must hold a single camera id; views are keyed by (tilt, pan).
    """
    cams = np.unique(obs.camera)
    if len(cams) != 1:
        raise ValueError("calibrate_mono expects observations of exactly one camera")
    pts3 = target.points
    views = {}
    for (k, j, i), (ids, uv) in obs.views().items():
        if len(ids) < 4:
            continue
        xy = pts3[ids, :2]
        # reject views whose corners are all on one line
        sv = np.linalg.svd(xy - xy.mean(axis=0), compute_uv=False)
        if sv[1] < 1e-9 * sv[0]:
            continue
        views[(j, i)] = (ids, uv)
    if len(views) < 3:
        raise DegenerateGeometryError(f"need at least 3 usable views, got {len(views)}")

    Hs = {key: homography_dlt(pts3[ids, :2], uv) for key, (ids, uv) in views.items()}
    all_uv = np.concatenate([uv for _, uv in views.values()])
    if image_size is not None:
        center = (image_size[0] / 2.0, image_size[1] / 2.0)
        scale = float(max(image_size))
    else:
        center = tuple(all_uv.mean(axis=0))
        scale = float(np.ptp(all_uv, axis=0).max())
    f, cu, cv = intrinsics_from_homographies(list(Hs.values()), center, scale)
    K = np.array([[f, 0, cu], [0, f, cv], [0, 0, 1.0]])
    poses = {key: extrinsics_from_homography(K, H) for key, H in Hs.items()}
    keys = sorted(views)
    log.info("camera %d: closed-form f=%.2f c=(%.2f, %.2f) from %d views", cams[0], f, cu, cv, len(keys))

    ids_all = np.concatenate([views[k][0] for k in keys])
    uv_all = np.concatenate([views[k][1] for k in keys])
    view_of = np.concatenate([np.full(len(views[k][0]), n) for n, k in enumerate(keys)])
    P = pts3[ids_all]

    R0 = np.array([poses[k].R for k in keys])

    def unpack(x):
        # rotations are parameterized as small corrections to the initial ones
        rv = x[5:].reshape(-1, 6)
        return x[:5], rodrigues_batch(rv[:, :3]) @ R0, rv[:, 3:]

    def residuals(x):
        intr, Rs, ts = unpack(x)
        pred = _project_batch(intr, Rs[view_of], ts[view_of], P)
        return (pred - uv_all).ravel()

    x0 = np.concatenate([[f, cu, cv, 0.0, 0.0]] + [np.r_[0.0, 0.0, 0.0, poses[k].t] for k in keys])
    if refine:
        res = levenberg_marquardt(residuals, x0, cost_floor=1e-24 * len(P))
        x = res.x
    else:
        x = x0
    r = residuals(x)
    rms = float(np.sqrt(np.mean(r * r)))
    intr, Rs, ts = unpack(x)
    if not (intr[0] > 0 and abs(intr[3]) < 1 and abs(intr[4]) < 1):
        raise NonConvergenceError(f"camera {cams[0]}: refinement left the valid intrinsics (f={intr[0]:.4g}, "
                                  f"d=({intr[3]:.3g}, {intr[4]:.3g})); the views are too similar")
    w, h = image_size if image_size is not None else (None, None)
    K_out = CameraIntrinsics.from_params(intr, w, h)
    poses = {k: Pose(Rs[n], ts[n]) for n, k in enumerate(keys)}
    for k, p in poses.items():
        z = p.apply(pts3[views[k][0]])[:, 2]
        if np.any(z <= 0):
            raise DegenerateGeometryError(f"view {k}: target placed behind the camera")
    log.info("camera %d: refined f=%.3f rms=%.4f px", cams[0], K_out.f, rms)
    return MonoResult(K_out, poses, rms, len(keys))


__all__ = [
    "MonoResult",
    "calibrate_mono",
    "extrinsics_from_homography",
    "homography_dlt",
    "intrinsics_from_homographies",
]
