"""Grouping the two faces of hull leaves and matching leaves to a truth table."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from ..mesh import TriMesh


@dataclass(frozen=True)
class RegionSummary:
    region: int
    n_vertices: int
    centroid: np.ndarray
    normal: np.ndarray  # area-weighted mean, unit


def summarize_regions(mesh: TriMesh, labels: np.ndarray) -> list[RegionSummary]:
    fc = mesh.face_cross()
    flab = labels[mesh.faces]
    same = (flab[:, 0] == flab[:, 1]) & (flab[:, 1] == flab[:, 2])
    out = []
    for r in range(1, int(labels.max(initial=0)) + 1):
        sel = labels == r
        if not sel.any():
            continue
        f = same & (flab[:, 0] == r)
        n = fc[f].sum(axis=0)
        ln = np.linalg.norm(n)
        out.append(RegionSummary(r, int(sel.sum()), mesh.vertices[sel].mean(axis=0), n / ln if ln > 0 else n))
    return out


def pair_faces(
    mesh: TriMesh,
    labels: np.ndarray,
    max_gap: float,
    min_overlap: float = 0.3,
    max_normal_dot: float = -0.3,
) -> list[tuple[int, ...]]:
    """Pair regions that are the opposite faces of one thin slab.

    Two regions pair when their mean normals point apart and a fraction
    ``min_overlap`` of the smaller one lies within ``max_gap`` mm of the
    other.  Pairs are taken greedily by decreasing overlap; leftovers stay
    single.  Returns sorted id tuples ordered by their lowest id.
    """
    summ = {s.region: s for s in summarize_regions(mesh, labels)}
    ids = sorted(summ)
    trees = {r: cKDTree(mesh.vertices[labels == r]) for r in ids}
    cand = []
    for i, r in enumerate(ids):
        for s in ids[i + 1:]:
            if summ[r].normal @ summ[s].normal > max_normal_dot:
                continue
            small, big = (r, s) if summ[r].n_vertices <= summ[s].n_vertices else (s, r)
            d, _ = trees[big].query(trees[small].data, k=1, distance_upper_bound=max_gap)
            ov = float(np.mean(np.isfinite(d)))
            if ov >= min_overlap:
                cand.append((-ov, r, s))
    cand.sort()
    taken = set()
    groups = []
    for _, r, s in cand:
        if r in taken or s in taken:
            continue
        taken |= {r, s}
        groups.append((r, s))
    groups += [(r,) for r in ids if r not in taken]
    return sorted(groups)


def match_to_truth(measured_centroids, truth_centroids, max_distance: float = np.inf):
    """Assign measured leaves to truth leaves by minimum total centroid distance.

    Returns ``{truth index: measured index}``; pairs farther apart than
    ``max_distance`` are left unmatched.
    """
    A = np.asarray(measured_centroids, dtype=float).reshape(-1, 3)
    B = np.asarray(truth_centroids, dtype=float).reshape(-1, 3)
    if not len(A) or not len(B):
        return {}
    C = np.linalg.norm(B[:, None, :] - A[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(C)
    return {int(r): int(c) for r, c in zip(rows, cols) if C[r, c] <= max_distance}
