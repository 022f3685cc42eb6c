"""Curvature-constrained region growing from flat seed patches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from ..mesh import TriMesh
from .attributes import VertexAttributes


class NoSeedError(RuntimeError):
    """No flat patch is large enough to seed a region."""


@dataclass
class RegionLabeling:
    """``labels[v]`` is the region of vertex ``v`` (0 = unassigned).

    ``seeds[r - 1]`` is the lowest vertex id of region ``r``'s seed patch
    and ``hops[v]`` the breadth-first distance from that patch (-1 when
    unassigned).
    """

    labels: np.ndarray
    seeds: np.ndarray
    seed_sizes: np.ndarray
    hops: np.ndarray

    @property
    def n_regions(self) -> int:
        return len(self.seeds)

    def region_ids(self) -> list[int]:
        return list(range(1, self.n_regions + 1))

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_regions + 1)[1:]


def _neighbours(indptr, indices, verts):
    """All (source, neighbour) pairs for the CSR adjacency rows ``verts``."""
    start, stop = indptr[verts], indptr[verts + 1]
    cnt = stop - start
    src = np.repeat(verts, cnt)
    off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    return src, indices[np.repeat(start, cnt) + off]


def grow_regions(adj, labels, hops, admissible, start_hop: int = 0) -> None:
    """Level-synchronous multi-source BFS, updating ``labels``/``hops`` in place.

    Unlabelled admissible vertices join the region of an adjacent frontier
    vertex; when several regions reach a vertex in the same step (equal hop
    distance) the lowest region id wins.
    """
    indptr, indices = adj.indptr, adj.indices
    frontier = np.flatnonzero((labels > 0) & (hops == start_hop))
    level = start_hop
    while len(frontier):
        level += 1
        src, nb = _neighbours(indptr, indices, frontier)
        ok = (labels[nb] == 0) & admissible[nb]
        src, nb = src[ok], nb[ok]
        if not len(nb):
            break
        reg = labels[src]
        order = np.lexsort((reg, nb))
        nb, reg = nb[order], reg[order]
        first = np.ones(len(nb), dtype=bool)
        first[1:] = nb[1:] != nb[:-1]
        nb, reg = nb[first], reg[first]
        labels[nb] = reg
        hops[nb] = level
        frontier = nb


def segment_mesh(
    mesh: TriMesh,
    attrs: VertexAttributes,
    curvature_threshold: float,
    min_seed: int = 50,
    growth: float = 2.0,
) -> RegionLabeling:
    """Seed regions on flat patches, then grow them over moderately curved vertices.

    Seeds are the connected components of ``{curvature < threshold}`` with at
    least ``min_seed`` vertices, numbered by decreasing size (then lowest
    vertex id).  Growth admits vertices with curvature below
    ``growth * threshold``.
    """
    if not curvature_threshold > 0:
        raise ValueError("curvature threshold must be positive")
    if growth < 1:
        raise ValueError("growth multiple must be >= 1")
    n = mesh.n_vertices
    used = np.zeros(n, dtype=bool)
    used[mesh.faces.ravel()] = True
    curv = np.asarray(attrs.curvature)
    adj = mesh.adjacency()
    flat = used & (curv < curvature_threshold)
    idx = np.flatnonzero(flat)
    labels = np.zeros(n, dtype=np.int64)
    hops = np.full(n, -1, dtype=np.int64)
    if len(idx) == 0:
        raise NoSeedError(f"no vertex has curvature below {curvature_threshold:g}")
    nc, comp = connected_components(adj[idx][:, idx], directed=False)
    sizes = np.bincount(comp, minlength=nc)
    lowest = np.full(nc, n, dtype=np.int64)
    np.minimum.at(lowest, comp, idx)
    good = np.flatnonzero(sizes >= min_seed)
    if len(good) == 0:
        raise NoSeedError(
            f"largest flat patch has {sizes.max()} vertices, fewer than {min_seed}; raise the threshold"
        )
    good = good[np.lexsort((lowest[good], -sizes[good]))]
    rid = np.zeros(nc, dtype=np.int64)
    rid[good] = np.arange(1, len(good) + 1)
    labels[idx] = rid[comp]
    hops[labels > 0] = 0
    grow_regions(adj, labels, hops, used & (curv < growth * curvature_threshold))
    return RegionLabeling(labels, lowest[good], sizes[good], hops)


def attach_unassigned(mesh: TriMesh, labeling: RegionLabeling, max_hops: int) -> RegionLabeling:
    """Extend regions into unassigned vertices up to ``max_hops`` edges away.

    Region growing stops where curvature rises, a few vertices short of a
    leaf's rim.  This pass lets the faces of a slab claim the rim band
    without any curvature test; opposite faces meet along the rim ridge.
    Competing claims follow the same rule as growth (nearest, then lowest
    id).  The result is meant for measurement, not for seeding.
    """
    labels = labeling.labels.copy()
    hops = np.where(labels > 0, 0, -1)
    if max_hops > 0:
        used = np.zeros(mesh.n_vertices, dtype=bool)
        used[mesh.faces.ravel()] = True
        adj = mesh.adjacency()
        indptr, indices = adj.indptr, adj.indices
        frontier = np.flatnonzero(labels > 0)
        for level in range(1, max_hops + 1):
            src, nb = _neighbours(indptr, indices, frontier)
            ok = (labels[nb] == 0) & used[nb]
            src, nb = src[ok], nb[ok]
            if not len(nb):
                break
            reg = labels[src]
            order = np.lexsort((reg, nb))
            nb, reg = nb[order], reg[order]
            first = np.ones(len(nb), dtype=bool)
            first[1:] = nb[1:] != nb[:-1]
            nb, reg = nb[first], reg[first]
            labels[nb] = reg
            hops[nb] = level
            frontier = nb
    return RegionLabeling(labels, labeling.seeds, labeling.seed_sizes, hops)


def attach_rims(mesh: TriMesh, labeling: RegionLabeling, groups, max_hops: int = 64) -> RegionLabeling:
    """Attach each slab's rim band to its two faces, and nothing beyond it.

    All regions first claim unassigned vertices freely (up to ``max_hops``).
    For a pair of opposite faces the fronts meet along the rim; the median
    hop count of the meeting vertices estimates the rim half-width, and
    attached vertices farther out than that (at the stem, or towards other
    organs) are released again.  Regions without a partner use the median
    over all pairs.
    """
    full = attach_unassigned(mesh, labeling, max_hops)
    lab, hops = full.labels, full.hops
    e, _ = mesh.edges()
    a, b = lab[e[:, 0]], lab[e[:, 1]]
    limit = {}
    for g in groups:
        if len(g) != 2:
            continue
        r, s = g
        touch = ((a == r) & (b == s)) | ((a == s) & (b == r))
        h = np.concatenate([hops[e[touch, 0]], hops[e[touch, 1]]])
        h = h[h > 0]
        if len(h):
            limit[r] = limit[s] = int(np.ceil(np.median(h)))
    default = int(np.ceil(np.median(list(limit.values())))) if limit else 0
    cap = np.zeros(int(lab.max(initial=0)) + 1, dtype=np.int64)
    for r in range(1, len(cap)):
        cap[r] = limit.get(r, default)
    keep = (lab > 0) & (hops <= cap[lab])
    out = np.where(keep, lab, 0)
    return RegionLabeling(out, labeling.seeds, labeling.seed_sizes, np.where(keep, hops, -1))
