"""Primitive meshes for test scenes."""

from __future__ import annotations

import numpy as np

from ..mesh import TriMesh


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4), (11, 10, 2),
         (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5),
         (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}
        new = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriMesh(np.array(verts) * radius + np.asarray(center, float), np.array(faces))


def frustum(p0, p1, r0: float, r1: float, segments: int = 48, rings: int = 8) -> TriMesh:
    """Closed tapered cylinder from ``p0`` (radius ``r0``) to ``p1`` (radius ``r1``)."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    a = p1 - p0
    L = np.linalg.norm(a)
    a /= L
    e = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u = np.cross(a, e)
    u /= np.linalg.norm(u)
    w = np.cross(a, u)
    ang = 2 * np.pi * np.arange(segments) / segments
    circ = np.outer(np.cos(ang), u) + np.outer(np.sin(ang), w)
    verts = []
    for s in np.linspace(0.0, 1.0, rings + 1):
        verts.append(p0 + s * L * a + (r0 + s * (r1 - r0)) * circ)
    verts = np.concatenate(verts + [p0[None], p1[None]])
    faces = []
    for r in range(rings):
        for i in range(segments):
            j = (i + 1) % segments
            a0, a1 = r * segments + i, r * segments + j
            b0, b1 = a0 + segments, a1 + segments
            faces += [(a0, b1, a1), (a0, b0, b1)]
    c0, c1 = len(verts) - 2, len(verts) - 1
    top = rings * segments
    for i in range(segments):
        j = (i + 1) % segments
        faces.append((c0, i, j))
        faces.append((c1, top + j, top + i))
    mesh = TriMesh(verts, np.array(faces))
    if mesh.volume() < 0:
        mesh.faces = mesh.faces[:, ::-1].copy()
    return mesh


def merge(meshes) -> TriMesh:
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += m.n_vertices
    if not verts:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    return TriMesh(np.concatenate(verts), np.concatenate(faces))


def grid_patch(length: float, width: float, nx: int, ny: int) -> TriMesh:
    """Flat rectangle ``[0, length] x [0, width]`` in the z = 0 plane."""
    xs = np.linspace(0, length, nx + 1)
    ys = np.linspace(0, width, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    idx = np.arange(X.size).reshape(nx + 1, ny + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh(verts, faces)
