"""Ideal silhouettes of meshes and spheres through the distorted camera model."""

from __future__ import annotations

from functools import lru_cache

import numba
import numpy as np

from ..geom import CameraIntrinsics, Pose, PointBehindCameraError, undistort_point
from ..mesh import TriMesh


@lru_cache(maxsize=8)
def _ray_map(k: CameraIntrinsics, width: int, height: int) -> np.ndarray:
    """Normalized undistorted coordinates of every pixel centre, (H, W, 2)."""
    vv, uu = np.mgrid[0:height, 0:width]
    px = np.column_stack([uu.ravel(), vv.ravel()]).astype(float)
    m = undistort_point(k, px)[:, :2]
    out = m.reshape(height, width, 2)
    out.setflags(write=False)
    return out


def pixel_rays(k: CameraIntrinsics, size=None) -> np.ndarray:
    w, h = size if size is not None else (k.width, k.height)
    if w is None or h is None:
        raise ValueError("image size unknown")
    return _ray_map(k, int(w), int(h))


@numba.njit(cache=True)
def _raster(mask, rays, m, uv, faces, pad):
    h, w = mask.shape
    for t in range(faces.shape[0]):
        a, b, c = faces[t, 0], faces[t, 1], faces[t, 2]
        u0 = min(uv[a, 0], uv[b, 0], uv[c, 0]) - pad
        u1 = max(uv[a, 0], uv[b, 0], uv[c, 0]) + pad
        v0 = min(uv[a, 1], uv[b, 1], uv[c, 1]) - pad
        v1 = max(uv[a, 1], uv[b, 1], uv[c, 1]) + pad
        j0 = max(int(np.ceil(u0)), 0)
        j1 = min(int(np.floor(u1)), w - 1)
        i0 = max(int(np.ceil(v0)), 0)
        i1 = min(int(np.floor(v1)), h - 1)
        if j0 > j1 or i0 > i1:
            continue
        ax, ay = m[a, 0], m[a, 1]
        bx, by = m[b, 0], m[b, 1]
        cx, cy = m[c, 0], m[c, 1]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        s = 1.0 if area > 0 else -1.0
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                if mask[i, j]:
                    continue
                px = rays[i, j, 0]
                py = rays[i, j, 1]
                e0 = s * ((bx - ax) * (py - ay) - (by - ay) * (px - ax))
                e1 = s * ((cx - bx) * (py - by) - (cy - by) * (px - bx))
                e2 = s * ((ax - cx) * (py - cy) - (ay - cy) * (px - cx))
                if e0 >= 0 and e1 >= 0 and e2 >= 0:
                    mask[i, j] = True


def render_silhouette(mesh: TriMesh, pose: Pose, k: CameraIntrinsics, size=None) -> np.ndarray:
    """Boolean mask of pixels whose viewing ray hits any triangle.

    Triangles project to straight-edged triangles in undistorted normalized
    coordinates, so each pixel centre is undistorted once and tested there;
    that is exact under the radial model.  Candidate pixels come from the
    distorted vertex bounds, widened for the slight bending of edges.
    """
    w, h = size if size is not None else (k.width, k.height)
    mask = np.zeros((int(h), int(w)), dtype=bool)
    if mesh.n_faces == 0:
        return mask
    X = pose.apply(mesh.vertices)
    used = np.unique(mesh.faces)
    if np.any(X[used, 2] <= 1e-6):
        raise PointBehindCameraError("mesh reaches behind the camera")
    m = np.zeros((len(X), 2))
    m[used] = X[used, :2] / X[used, 2:3]
    uv = k.distort_normalized(m)
    span = np.ptp(uv[mesh.faces], axis=1).max(axis=1)
    pad = 1.0 + 0.02 * float(span.max())
    _raster(mask, pixel_rays(k, (w, h)), m, uv, mesh.faces, pad)
    return mask


def render_sphere_mask(center, radius: float, pose: Pose, k: CameraIntrinsics, size=None) -> np.ndarray:
    """Exact silhouette of a sphere: pixels whose ray passes within ``radius`` of its centre."""
    w, h = size if size is not None else (k.width, k.height)
    c = pose.apply(center)
    if c[2] <= radius:
        raise PointBehindCameraError("sphere reaches behind the camera")
    rays = pixel_rays(k, (w, h))
    d = np.concatenate([rays, np.ones(rays.shape[:2] + (1,))], axis=2)
    d /= np.linalg.norm(d, axis=2, keepdims=True)
    along = d @ c
    dist2 = c @ c - along * along
    return (dist2 <= radius * radius) & (along > 0)
