"""Small carving scenes with known geometry."""

from __future__ import annotations

import numpy as np

from ..carve import Bbox3, CarveView, make_view
from ..geom import CameraIntrinsics, Pose
from .render import render_silhouette, render_sphere_mask
from .rig import look_at


def ring_cameras(n: int, distance: float = 500.0, elevations_deg=(0.0, 40.0), f: float = 1400.0,
                 size: int = 1024, d1: float = -0.05, d2: float = 0.01, target=(0.0, 0.0, 0.0)):
    """Cameras on horizontal rings around ``target``, ``n`` per elevation, world +y down."""
    k = CameraIntrinsics(f, size / 2 - 0.5 + 3.3, size / 2 - 0.5 - 2.1, d1, d2, size, size)
    tgt = np.asarray(target, float)
    out = []
    for e in np.radians(elevations_deg):
        for a in 2 * np.pi * np.arange(n) / n:
            c = tgt + distance * np.array([np.cos(e) * np.sin(a), -np.sin(e), -np.cos(e) * np.cos(a)])
            out.append((look_at(c, tgt), k))
    return out


def sphere_views(cams, center=(0.0, 0.0, 0.0), radius: float = 100.0, crop_margin=32) -> list[CarveView]:
    return [make_view(render_sphere_mask(center, radius, p, k), p, k, n, crop_margin) for n, (p, k) in enumerate(cams)]


def mesh_views(mesh, cams, crop_margin=32) -> list[CarveView]:
    return [make_view(render_silhouette(mesh, p, k), p, k, n, crop_margin) for n, (p, k) in enumerate(cams)]


def random_blob_scene(rng: np.random.Generator, n_views: int = 12, n_spheres: int = 3):
    """A few overlapping spheres seen from random cameras; returns (views, box)."""
    centers = rng.uniform(-60, 60, size=(n_spheres, 3))
    radii = rng.uniform(20, 60, size=n_spheres)
    from .shapes import icosphere, merge

    mesh = merge([icosphere(2, r, c) for c, r in zip(centers, radii)])
    cams = []
    k = CameraIntrinsics(rng.uniform(500, 900), 160 + rng.normal(), 120 + rng.normal(), rng.uniform(-0.1, 0), 0.0, 320, 240)
    for _ in range(n_views):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        cams.append((look_at(d * rng.uniform(450, 700), rng.normal(scale=10, size=3)), k))
    box = Bbox3(mesh.vertices.min(axis=0) - rng.uniform(5, 40, 3), mesh.vertices.max(axis=0) + rng.uniform(5, 40, 3))
    return mesh_views(mesh, cams), box
