"""Per-view outside tests shared by the octree and dense carvers.

A finest voxel is outside a view when the signed distance sampled at its
projected centre is below ``-(r_v + margin)``, where ``r_v`` bounds the
projected radius of the voxel.  Coarse nodes are classified with bounds
that hold for every finest voxel centre inside them, so they never
disagree with the per-voxel rule.
"""

from __future__ import annotations

import math

import numba
import numpy as np

OUT, UNDECIDED, IN = -1, 0, 1

# nearer than this (mm) to the camera plane a voxel is treated as unseen
_ZMIN = 1.0
# Lipschitz constant of the sampled field w.r.t. pixel displacement, with
# slack for float32 rounding of the stored distances
_LIP = math.sqrt(2.0) * 1.001


@numba.njit(cache=True, inline="always")
def _sample(buf, off, h, w, u, v):
    """Bilinear sample, extended beyond the stored window by the L1 distance."""
    uc = min(max(u, 0.0), w - 1.0)
    vc = min(max(v, 0.0), h - 1.0)
    ext = abs(u - uc) + abs(v - vc)
    i0 = int(math.floor(vc))
    j0 = int(math.floor(uc))
    i1 = min(i0 + 1, h - 1)
    j1 = min(j0 + 1, w - 1)
    fy = vc - i0
    fx = uc - j0
    s00 = buf[off + i0 * w + j0]
    s01 = buf[off + i0 * w + j1]
    s10 = buf[off + i1 * w + j0]
    s11 = buf[off + i1 * w + j1]
    top = (1.0 - fx) * s00 + fx * s01
    bot = (1.0 - fx) * s10 + fx * s11
    return (1.0 - fy) * top + fy * bot - ext


@numba.njit(cache=True, inline="always")
def view_test(P, G, buf, v, cx, cy, cz, rho, rho_v, margin, eps):
    """Classify the voxel centres within ``rho`` of ``c`` against view ``v``.

    ``rho == 0`` is the exact finest-level rule and never returns UNDECIDED.
    """
    px = P[v, 0] * cx + P[v, 1] * cy + P[v, 2] * cz + P[v, 9]
    py = P[v, 3] * cx + P[v, 4] * cy + P[v, 5] * cz + P[v, 10]
    pz = P[v, 6] * cx + P[v, 7] * cy + P[v, 8] * cz + P[v, 11]
    if pz - rho - rho_v <= _ZMIN:
        if rho == 0.0:
            return IN
        return UNDECIDED
    f = P[v, 12]
    d1 = P[v, 15]
    d2 = P[v, 16]
    mx = px / pz
    my = py / pz
    r2 = mx * mx + my * my
    g = 1.0 + d1 * r2 + d2 * r2 * r2
    u = f * mx * g + P[v, 13] - G[v, 3]
    vv = f * my * g + P[v, 14] - G[v, 4]
    s = _sample(buf, G[v, 0], G[v, 1], G[v, 2], u, vv)
    pn = math.sqrt(px * px + py * py + pz * pz)
    ad1 = abs(d1)
    ad2 = abs(d2)
    if rho == 0.0:
        dm = rho_v * pn / (pz * (pz - rho_v))
        R = math.sqrt(r2) + dm
        rv = f * (1.0 + 3.0 * ad1 * R * R + 5.0 * ad2 * R ** 4) * dm
        return OUT if s < -(rv + margin) else IN
    dm = rho * pn / (pz * (pz - rho))
    dmv = rho_v * (pn + rho) / ((pz - rho) * (pz - rho - rho_v))
    R = math.sqrt(r2) + dm + dmv
    lip = f * (1.0 + 3.0 * ad1 * R * R + 5.0 * ad2 * R ** 4)
    D = _LIP * lip * dm
    if s + D < -(lip * dmv + margin) - eps:
        return OUT
    if s - D >= -margin + eps:
        return IN
    return UNDECIDED


@numba.njit(cache=True, inline="always")
def _popcount(x):
    n = 0
    one = np.uint64(1)
    while x:
        x &= x - one
        n += 1
    return n


@numba.njit(cache=True, parallel=True)
def classify_nodes(coords, size, counts, masks, P, G, buf, origin, h, dims, tol, margin, eps):
    """One octree level.

    ``masks`` flags the views still undecided for each node (64 per word)
    and ``counts`` the views already known to reject every voxel of it;
    both are updated in place.  Returns 0 (discard), 1 (every voxel
    survives) or 2 (split) per node.
    """
    n = coords.shape[0]
    nv = P.shape[0]
    state = np.empty(n, dtype=np.int8)
    rho_v = 0.5 * math.sqrt(3.0) * h
    for a in numba.prange(n):
        lo0 = coords[a, 0] * size
        lo1 = coords[a, 1] * size
        lo2 = coords[a, 2] * size
        hi0 = min(lo0 + size, dims[0]) - 1
        hi1 = min(lo1 + size, dims[1]) - 1
        hi2 = min(lo2 + size, dims[2]) - 1
        if hi0 < lo0 or hi1 < lo1 or hi2 < lo2:
            state[a] = 0
            continue
        cx = origin[0] + ((lo0 + hi0) * 0.5 + 0.5) * h
        cy = origin[1] + ((lo1 + hi1) * 0.5 + 0.5) * h
        cz = origin[2] + ((lo2 + hi2) * 0.5 + 0.5) * h
        e0 = (hi0 - lo0) * 0.5 * h
        e1 = (hi1 - lo1) * 0.5 * h
        e2 = (hi2 - lo2) * 0.5 * h
        rho = math.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
        cnt = counts[a]
        open_ = 0
        for wd in range(masks.shape[1]):
            open_ += _popcount(masks[a, wd])
        dead = cnt > tol
        for v in range(nv):
            if dead or cnt + open_ <= tol:
                break
            wd = v >> 6
            bit = np.uint64(1) << np.uint64(v & 63)
            if not (masks[a, wd] & bit):
                continue
            r = view_test(P, G, buf, v, cx, cy, cz, rho, rho_v, margin, eps)
            if r == UNDECIDED:
                continue
            masks[a, wd] &= ~bit
            open_ -= 1
            if r == OUT:
                cnt += 1
                dead = cnt > tol
        counts[a] = cnt
        if dead:
            state[a] = 0
        elif cnt + open_ <= tol:
            state[a] = 1
        else:
            state[a] = 2
    return state


@numba.njit(cache=True, parallel=True)
def carve_dense_kernel(P, G, buf, origin, h, dims, tol, margin, eps):
    out = np.zeros((dims[0], dims[1], dims[2]), dtype=np.bool_)
    nv = P.shape[0]
    rho_v = 0.5 * math.sqrt(3.0) * h
    for i in numba.prange(dims[0]):
        cx = origin[0] + ((i + i) * 0.5 + 0.5) * h
        for j in range(dims[1]):
            cy = origin[1] + ((j + j) * 0.5 + 0.5) * h
            for k in range(dims[2]):
                cz = origin[2] + ((k + k) * 0.5 + 0.5) * h
                cnt = 0
                for v in range(nv):
                    if view_test(P, G, buf, v, cx, cy, cz, 0.0, rho_v, margin, eps) == OUT:
                        cnt += 1
                        if cnt > tol:
                            break
                out[i, j, k] = cnt <= tol
    return out


@numba.njit(cache=True, parallel=True)
def outside_counts(P, G, buf, pts, h, margin):
    """Number of views rejecting each finest voxel centred at ``pts``."""
    n = pts.shape[0]
    out = np.zeros(n, dtype=np.int32)
    rho_v = 0.5 * math.sqrt(3.0) * h
    for a in numba.prange(n):
        c = 0
        for v in range(P.shape[0]):
            if view_test(P, G, buf, v, pts[a, 0], pts[a, 1], pts[a, 2], 0.0, rho_v, margin, 0.0) == OUT:
                c += 1
        out[a] = c
    return out
