"""Marching cubes over binary voxel occupancy.

The 256-case table is generated rather than typed in: on each cube face
the sign changes are joined by segments (diagonal faces keep the two
inside corners apart), the segments chain into closed loops around the
cube, and each loop is triangulated without diagonals lying on a cube
face.  Neighbouring cubes see the same face rule, so the surface is
closed; segments are oriented so that triangle normals point from
occupied to empty space.
"""

from __future__ import annotations

import numba
import numpy as np

from ..mesh import TriMesh
from .volume import EmptyVolumeError, VoxelGrid, VoxelOctree

CORNERS = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)])
EDGES = np.array([(c, c | (1 << a)) for a in range(3) for c in range(8) if not c & (1 << a)])
EDGE_AXIS = np.repeat(np.arange(3), 4)


def _edge_id(c0: int, c1: int) -> int:
    a, b = min(c0, c1), max(c0, c1)
    for n, (p, q) in enumerate(EDGES):
        if p == a and q == b:
            return n
    raise KeyError((c0, c1))


def _faces():
    out = []
    for a in range(3):
        b, c = [x for x in range(3) if x != a]
        for side in (0, 1):
            ring = []
            for bb, cc in ((0, 0), (1, 0), (1, 1), (0, 1)):
                ring.append((side << a) | (bb << b) | (cc << c))
            n = np.zeros(3)
            n[a] = 1.0 if side else -1.0
            out.append((ring, n))
    return out


def _case_triangles(case: int) -> list[tuple[int, int, int]]:
    inside = [(case >> c) & 1 for c in range(8)]
    mid = CORNERS[EDGES].mean(axis=1)
    nxt = {}
    for ring, normal in _faces():
        flags = [inside[c] for c in ring]
        crossings = [n for n in range(4) if flags[n] != flags[(n + 1) % 4]]
        segs = []
        if len(crossings) == 2:
            e = [_edge_id(ring[n], ring[(n + 1) % 4]) for n in crossings]
            ins = [ring[n] for n in range(4) if flags[n]]
            segs.append((e[0], e[1], CORNERS[ins].mean(axis=0)))
        elif len(crossings) == 4:
            for n in range(4):
                if flags[n]:
                    e0 = _edge_id(ring[n], ring[(n + 1) % 4])
                    e1 = _edge_id(ring[n], ring[(n + 3) % 4])
                    segs.append((e0, e1, CORNERS[ring[n]].astype(float)))
        for e0, e1, inner in segs:
            a, b = mid[e0], mid[e1]
            if np.cross(normal, b - a) @ (inner - a) > 0:
                e0, e1 = e1, e0
            nxt[e0] = e1
    tris = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        e = nxt[start]
        while e != start:
            loop.append(e)
            seen.add(e)
            e = nxt[e]
        tris.extend(_triangulate(loop))
    return tris


def _edge_faces(e: int) -> set:
    c0, c1 = EDGES[e]
    return {n for n, (ring, _) in enumerate(_faces()) if c0 in ring and c1 in ring}


def _triangulate(loop: list[int]) -> list[tuple[int, int, int]]:
    """Triangles of a cyclic loop whose inner diagonals never lie on a cube face.

    A diagonal on a face would also be produced by the neighbouring cube and
    leave an edge shared by four triangles.
    """
    if len(loop) == 3:
        return [tuple(loop)]
    for k in range(len(loop)):
        a = loop[k]
        rest = loop[k:] + loop[:k]
        if all(not (_edge_faces(a) & _edge_faces(b)) for b in rest[2:-1]):
            return [(a, rest[n], rest[n + 1]) for n in range(1, len(rest) - 1)]
    # no clean fan: clip an ear whose new diagonal is off the faces, then recurse
    n = len(loop)
    for k in range(n):
        a, b, c = loop[k - 1], loop[k], loop[(k + 1) % n]
        if not (_edge_faces(a) & _edge_faces(c)):
            rest = [e for e in loop if e != b]
            return [(a, b, c)] + _triangulate(rest)
    raise AssertionError(f"cannot triangulate loop {loop}")


def build_table() -> tuple[np.ndarray, np.ndarray]:
    """``(tri_count[256], tri_edges[256, max, 3])`` with -1 padding."""
    cases = [_case_triangles(c) for c in range(256)]
    m = max(len(t) for t in cases)
    table = np.full((256, m, 3), -1, dtype=np.int8)
    count = np.zeros(256, dtype=np.int64)
    for c, tris in enumerate(cases):
        count[c] = len(tris)
        if tris:
            table[c, : len(tris)] = tris
    return count, table


TRI_COUNT, TRI_TABLE = build_table()


@numba.njit(cache=True)
def _case(occ, x, y, z):
    c = 0
    for n in range(8):
        if occ[x + (n & 1), y + ((n >> 1) & 1), z + ((n >> 2) & 1)]:
            c |= 1 << n
    return c


@numba.njit(cache=True, parallel=True)
def _slab_counts(occ, tri_count):
    X, Y, Z = occ.shape
    out = np.zeros(X - 1, dtype=np.int64)
    for x in numba.prange(X - 1):
        n = 0
        for y in range(Y - 1):
            for z in range(Z - 1):
                n += tri_count[_case(occ, x, y, z)]
        out[x] = n
    return out


@numba.njit(cache=True, parallel=True)
def _emit(occ, tri_count, tri_table, corners, edges, edge_axis, starts, keys):
    X, Y, Z = occ.shape
    for x in numba.prange(X - 1):
        t = starts[x]
        for y in range(Y - 1):
            for z in range(Z - 1):
                c = _case(occ, x, y, z)
                for n in range(tri_count[c]):
                    for m in range(3):
                        e = tri_table[c, n, m]
                        c0 = edges[e, 0]
                        px = x + corners[c0, 0]
                        py = y + corners[c0, 1]
                        pz = z + corners[c0, 2]
                        keys[t, m] = ((px * Y + py) * Z + pz) * 3 + edge_axis[e]
                    t += 1


def marching_cubes(volume, grid: VoxelGrid | None = None) -> TriMesh:
    """Closed triangle mesh around occupied voxels (world mm when a grid is given).

    ``volume`` is a :class:`VoxelOctree` or a boolean array.  The array is
    padded by one empty voxel, so the result is watertight even where the
    occupancy touches the box.  Vertices sit at midpoints between
    neighbouring voxel centres.
    """
    if isinstance(volume, VoxelOctree):
        grid = volume.grid
        occ = volume.to_dense()
    else:
        occ = np.asarray(volume, dtype=bool)
    if occ.ndim != 3:
        raise ValueError("occupancy must be a 3-D array")
    if not occ.any():
        raise EmptyVolumeError("no occupied voxels to mesh")
    pad = np.pad(occ, 1).astype(np.uint8)
    counts = _slab_counts(pad, TRI_COUNT)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    keys = np.empty((int(counts.sum()), 3), dtype=np.int64)
    _emit(pad, TRI_COUNT, TRI_TABLE, CORNERS, EDGES, EDGE_AXIS, starts, keys)
    uniq, inv = np.unique(keys, return_inverse=True)
    X, Y, Z = pad.shape
    axis = uniq % 3
    p = uniq // 3
    pts = np.column_stack([p // (Y * Z), (p // Z) % Y, p % Z]).astype(float)
    pts[np.arange(len(pts)), axis] += 0.5
    # padded index p is voxel p - 1, whose centre sits at p - 0.5 voxel units
    pts -= 0.5
    if grid is not None:
        pts = grid.origin + pts * grid.h
    return TriMesh(pts, inv.reshape(-1, 3))
