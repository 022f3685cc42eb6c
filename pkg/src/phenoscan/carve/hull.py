"""Visual hull carving: bounding boxes, octree and dense carvers, pot removal."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from ..geom import CameraIntrinsics, Pose, undistort_point
from ..silhouette import distance_transform
from . import kernel
from .volume import Bbox3, CarveError, EmptyVolumeError, TaperedCylinder, VoxelGrid, VoxelOctree

log = logging.getLogger(__name__)

# coarse-node decisions keep this many pixels of slack beyond the bounds
_EPS_PX = 1e-3


@dataclass(frozen=True)
class CarveConfig:
    resolution: int = 512
    tolerance: int = 3  # views a voxel may fall outside of and still survive
    margin_px: float = 0.0  # silhouette slack beyond the projected voxel radius

    def __post_init__(self):
        r = self.resolution
        if r < 1 or r & (r - 1):
            raise ValueError(f"resolution must be a power of 2, got {r}")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if not self.margin_px >= 0:
            raise ValueError("margin_px must be >= 0")


@dataclass
class CarveView:
    """One silhouette with its camera.

    ``sdf`` may be a window of the full-image field whose top-left pixel is
    at ``origin = (u0, v0)``; samples beyond the window are extended
    conservatively (see :func:`kernel._sample`).
    """

    pose: Pose  # camera-from-world
    intrinsics: CameraIntrinsics
    sdf: np.ndarray
    origin: tuple = (0, 0)
    key: tuple | None = None
    mask: np.ndarray | None = None


def make_view(mask, pose: Pose, intrinsics: CameraIntrinsics, key=None, crop_margin: int | None = 32) -> CarveView:
    """Distance field of ``mask``, cropped to its foreground plus ``crop_margin`` px."""
    mask = np.asarray(mask, dtype=bool)
    # float32 storage halves memory; the kernel's slack covers the rounding
    sdf = distance_transform(mask).astype(np.float32)
    origin = (0, 0)
    if crop_margin is not None and mask.any() and not mask.all():
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        r0, r1 = max(rows[0] - crop_margin, 0), min(rows[-1] + crop_margin + 1, mask.shape[0])
        c0, c1 = max(cols[0] - crop_margin, 0), min(cols[-1] + crop_margin + 1, mask.shape[1])
        sdf = np.ascontiguousarray(sdf[r0:r1, c0:c1])
        origin = (int(c0), int(r0))
    return CarveView(pose, intrinsics, sdf, origin, key, mask)


def views_from_masks(masks: dict, rig, crop_margin: int | None = 32) -> list[CarveView]:
    """``masks[(camera, tilt, pan)]`` -> carve views posed by the calibration."""
    out = []
    for key in sorted(masks):
        k, j, i = key
        out.append(make_view(masks[key], rig.pose_for_view(k, j, i), rig.intrinsics[k], key, crop_margin))
    return out


def _pack(views) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not views:
        raise CarveError("no views to carve with")
    P = np.empty((len(views), 17))
    G = np.empty((len(views), 5), dtype=np.int64)
    chunks, off = [], 0
    for n, vw in enumerate(views):
        k = vw.intrinsics
        P[n, :9] = vw.pose.R.ravel()
        P[n, 9:12] = vw.pose.t
        P[n, 12:] = (k.f, k.cu, k.cv, k.d1, k.d2)
        h, w = vw.sdf.shape
        G[n] = (off, h, w, vw.origin[0], vw.origin[1])
        chunks.append(np.asarray(vw.sdf, dtype=np.float32).ravel())
        off += h * w
    return P, G, np.concatenate(chunks)


def _grid(box: Bbox3, cfg: CarveConfig) -> VoxelGrid:
    if not isinstance(box, Bbox3):
        raise CarveError("carving needs a Bbox3")
    return VoxelGrid.cover(box, cfg.resolution)


def carve(box: Bbox3, views, cfg: CarveConfig = CarveConfig()) -> VoxelOctree:
    """Octree visual hull.

    Nodes are tested level by level; a node is dropped once more than
    ``cfg.tolerance`` views provably reject all of its voxels, kept whole
    once at most ``tolerance`` views can still reject any of them, and
    split otherwise.  Views already decided for a node are not re-tested
    in its children.
    """
    grid = _grid(box, cfg)
    P, G, buf = _pack(views)
    nv = len(views)
    words = (nv + 63) // 64
    dims = np.array(grid.dims, dtype=np.int64)
    origin = np.asarray(grid.origin, dtype=float)
    coords = np.zeros((1, 3), dtype=np.int64)
    counts = np.zeros(1, dtype=np.int32)
    masks = np.zeros((1, words), dtype=np.uint64)
    for v in range(nv):
        masks[0, v >> 6] |= np.uint64(1) << np.uint64(v & 63)
    tree = VoxelOctree(grid)
    offs = np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=np.int64)
    for level in range(grid.depth + 1):
        t0 = time.perf_counter()
        size = grid.resolution >> level
        state = kernel.classify_nodes(
            coords, size, counts, masks, P, G, buf, origin, grid.h, dims, cfg.tolerance, cfg.margin_px, _EPS_PX
        )
        full = state == 1
        split = state == 2
        if full.any():
            tree.full[level] = coords[full]
        st = dict(level=level, tested=len(coords), full=int(full.sum()), split=int(split.sum()),
                  discarded=int((state == 0).sum()), seconds=time.perf_counter() - t0)
        tree.stats.append(st)
        log.debug("octree level %(level)d: %(tested)d tested, %(full)d full, %(split)d split", st)
        if not split.any():
            break
        parent = coords[split]
        coords = (2 * parent[:, None, :] + offs[None]).reshape(-1, 3)
        counts = np.repeat(counts[split], 8)
        masks = np.repeat(masks[split], 8, axis=0)
    return tree


def carve_dense(box: Bbox3, views, cfg: CarveConfig = CarveConfig()) -> np.ndarray:
    """Per-voxel evaluation of the carving rule over the whole grid (the octree's oracle)."""
    grid = _grid(box, cfg)
    P, G, buf = _pack(views)
    dims = np.array(grid.dims, dtype=np.int64)
    return kernel.carve_dense_kernel(
        P, G, buf, np.asarray(grid.origin, dtype=float), grid.h, dims, cfg.tolerance, cfg.margin_px, _EPS_PX
    )


def outside_counts(grid: VoxelGrid, views, idx, margin_px: float = 0.0) -> np.ndarray:
    """Rejecting-view count of finest voxels ``idx`` (diagnostics)."""
    P, G, buf = _pack(views)
    pts = grid.centers(np.asarray(idx).reshape(-1, 3))
    return kernel.outside_counts(P, G, buf, np.ascontiguousarray(pts), grid.h, margin_px)


# ---------------------------------------------------------------------------
# bounding boxes


def _most_horizontal(rig, nodes) -> tuple[int, int]:
    """(camera, tilt) whose optical axis is most perpendicular to the turntable axis."""
    best, best_c = None, np.inf
    for node in nodes:
        z = rig.base_poses[node].R[2]  # optical axis in world coordinates
        c = abs(z[1])
        if c < best_c - 1e-12:
            best, best_c = node, c
    return best


def _axis_row_crossing(pose: Pose, k: CameraIntrinsics, v_target: float, lim: float) -> float:
    """World y on the turntable axis whose projection lies on image row ``v_target``.

    Only axis points inside the monotone zone of the radial distortion are
    considered; the row crossing is bracketed on a coarse scan and bisected.
    """
    def row(y):
        p = pose.apply(np.column_stack([np.zeros_like(y), y, np.zeros_like(y)]))
        m = p[:, :2] / p[:, 2:3]
        r2 = np.sum(m * m, axis=1)
        ok = (p[:, 2] > 0) & (1 + 3 * k.d1 * r2 + 5 * k.d2 * r2 * r2 > 0)
        return k.distort_normalized(m)[:, 1] - v_target, ok

    ys = np.linspace(-lim, lim, 4001)
    fs, ok = row(ys)
    hit = np.flatnonzero(ok[:-1] & ok[1:] & (np.sign(fs[:-1]) != np.sign(fs[1:])))
    if len(hit) == 0:
        raise CarveError("silhouette extent does not cross the projected turntable axis")
    # nearest crossing to the origin
    n = hit[np.argmin(np.abs(ys[hit]))]
    a, b, fa = ys[n], ys[n + 1], fs[n]
    for _ in range(100):
        m = 0.5 * (a + b)
        fm = row(np.array([m]))[0][0]
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
        if b - a < 1e-9:
            break
    return 0.5 * (a + b)


def initial_bbox(masks: dict, rig, node=None) -> Bbox3:
    """Box from the silhouettes of one (camera, tilt), normally the most horizontal one.

    The union of that camera's masks over all pans gives a rectangle; its
    top and bottom rows are carried back to the turntable axis for the
    height range, and its largest horizontal distance from the projected
    axis, back-projected at the world origin, bounds x and z.
    """
    nodes = sorted({(k, j) for k, j, _ in masks})
    if not nodes:
        raise EmptyVolumeError("no masks given")
    node = node or _most_horizontal(rig, nodes)
    sel = [m for (k, j, _), m in masks.items() if (k, j) == node]
    union = np.zeros_like(np.asarray(sel[0], dtype=bool))
    for m in sel:
        union |= np.asarray(m, dtype=bool)
    if not union.any():
        raise EmptyVolumeError("no foreground in any mask of the reference camera")
    rows = np.flatnonzero(union.any(axis=1))
    cols = np.flatnonzero(union.any(axis=0))
    # pixel edges, not centres, bound the silhouette
    v0, v1 = rows[0] - 0.5, rows[-1] + 0.5
    u0, u1 = cols[0] - 0.5, cols[-1] + 0.5
    pose = rig.base_poses[node]
    K = rig.intrinsics[node[0]]
    depth = float(pose.t[2])
    lim = 3.0 * depth
    ya = _axis_row_crossing(pose, K, v0, lim)
    yb = _axis_row_crossing(pose, K, v1, lim)
    y0, y1 = min(ya, yb), max(ya, yb)
    # half width in mm at the origin's depth, on the row of the origin
    ray = undistort_point(K, np.array([[u0, K.cv], [u1, K.cv]]))
    o = pose.apply([0.0, 0.0, 0.0])
    xs = ray[:, 0] * o[2] - o[0]
    half = float(np.max(np.abs(xs)))
    return Bbox3((-half, y0, -half), (half, y1, half))


def refined_bbox(box: Bbox3, views, cfg: CarveConfig = CarveConfig(resolution=128)) -> Bbox3:
    """Tight bounds of a coarse carve inside ``box``, padded by one voxel."""
    tree = carve(box, views, cfg)
    occ = tree.to_dense()
    if not occ.any():
        raise EmptyVolumeError("nothing survived the coarse carve")
    idx = np.argwhere(occ)
    g = tree.grid
    lo = g.origin + (idx.min(axis=0) - 1) * g.h
    hi = g.origin + (idx.max(axis=0) + 2) * g.h
    return Bbox3(np.maximum(lo, box.lo), np.minimum(hi, box.hi))


# ---------------------------------------------------------------------------
# pot removal


def remove_pot(tree: VoxelOctree, cyl: TaperedCylinder) -> VoxelOctree:
    """Empty every voxel whose centre lies inside ``cyl``.

    Full nodes entirely inside the frustum (all 8 extreme voxel centres
    inside; the frustum is convex) are dropped, nodes clear of its bounding
    box are kept, and straddling nodes are split down to single voxels.
    """
    g = tree.grid
    cb = cyl.bbox()
    dims = np.array(g.dims)
    offs = np.array(list(np.ndindex(2, 2, 2)), dtype=np.int64)
    kept: dict[int, list] = {}
    pending = dict(tree.full)
    for level in range(g.depth + 1):
        c = pending.get(level)
        if c is None or len(c) == 0:
            continue
        s = tree.node_size(level)
        lo = c * s
        hi = np.minimum(lo + s, dims) - 1
        valid = np.all(hi >= lo, axis=1)
        c, lo, hi = c[valid], lo[valid], hi[valid]
        clo, chi = g.centers(lo), g.centers(hi)
        clear = np.any((chi < cb.lo) | (clo > cb.hi), axis=1)
        corners = np.stack([np.where(offs[n].astype(bool), chi, clo) for n in range(8)], axis=1)
        inside = cyl.contains(corners).all(axis=1)
        if level == g.depth:
            keep = ~inside
        else:
            keep = clear & ~inside
            mixed = ~clear & ~inside
            if mixed.any():
                kids = (2 * c[mixed][:, None, :] + offs[None]).reshape(-1, 3)
                prev = pending.get(level + 1)
                pending[level + 1] = kids if prev is None else np.concatenate([prev, kids])
        if keep.any():
            kept[level] = c[keep]
    return VoxelOctree(g, {lv: v.astype(np.int64) for lv, v in sorted(kept.items())}, list(tree.stats))
