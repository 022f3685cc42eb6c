"""Boxes, voxel octrees, pot cylinders and the run-length voxel dump."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CarveError(RuntimeError):
    """Carving could not produce a usable volume."""


class EmptyVolumeError(CarveError):
    pass


@dataclass(frozen=True)
class Bbox3:
    """Axis-aligned box in world mm."""

    min: tuple
    max: tuple

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=float).reshape(3)
        hi = np.asarray(self.max, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box corners must be finite")
        if np.any(hi <= lo):
            raise ValueError(f"degenerate box: min {lo} max {hi}")
        object.__setattr__(self, "min", tuple(lo.tolist()))
        object.__setattr__(self, "max", tuple(hi.tolist()))

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.min)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.max)

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, other: "Bbox3", tol: float = 0.0) -> bool:
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def intersect(self, other: "Bbox3") -> "Bbox3":
        return Bbox3(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def grid(self, resolution: int) -> "VoxelGrid":
        return VoxelGrid.cover(self, resolution)


@dataclass(frozen=True)
class VoxelGrid:
    """Cubic voxels of edge ``h`` anchored at ``origin``.

    The longest box side is split into ``resolution`` voxels; shorter sides
    get ``ceil(side / h)`` voxels, so the grid covers the box.
    """

    origin: np.ndarray
    h: float
    resolution: int
    dims: tuple

    @classmethod
    def cover(cls, box: Bbox3, resolution: int) -> "VoxelGrid":
        if resolution < 1 or resolution & (resolution - 1):
            raise ValueError(f"resolution must be a power of 2, got {resolution}")
        h = float(box.size.max()) / resolution
        dims = tuple(int(min(resolution, max(1, np.ceil(s / h - 1e-9)))) for s in box.size)
        return cls(box.lo, h, resolution, dims)

    @property
    def depth(self) -> int:
        return int(self.resolution).bit_length() - 1

    def centers(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.h

    def bbox(self) -> Bbox3:
        return Bbox3(self.origin, self.origin + np.array(self.dims) * self.h)


@dataclass
class VoxelOctree:
    """Occupancy as a set of full octree nodes.

    ``full[level]`` holds the integer coordinates of full nodes at that
    level; a level-``l`` node spans ``resolution >> l`` finest voxels per
    axis.  Nodes not listed and not covered by a full ancestor are empty;
    intermediate (mixed) nodes are implicit.  ``stats`` records per-level
    counts of tested, full, split and discarded nodes.
    """

    grid: VoxelGrid
    full: dict = field(default_factory=dict)
    stats: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return self.grid.depth

    def node_size(self, level: int) -> int:
        return self.grid.resolution >> level

    def count(self) -> int:
        n = 0
        dims = np.array(self.grid.dims)
        for level, c in self.full.items():
            s = self.node_size(level)
            lo = c * s
            hi = np.minimum(lo + s, dims)
            n += int(np.prod(hi - lo, axis=1).sum())
        return n

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.grid.dims, dtype=bool)
        for level, c in self.full.items():
            s = self.node_size(level)
            if s == 1:
                out[c[:, 0], c[:, 1], c[:, 2]] = True
                continue
            for x, y, z in c * s:
                out[x : x + s, y : y + s, z : z + s] = True
        return out

    @classmethod
    def from_dense(cls, grid: VoxelGrid, occ: np.ndarray) -> "VoxelOctree":
        """Merge complete 2x2x2 blocks bottom-up into full parent nodes."""
        occ = np.asarray(occ, dtype=bool)
        if occ.shape != tuple(grid.dims):
            raise ValueError("occupancy shape does not match the grid")
        n = grid.resolution
        cur = np.zeros((n, n, n), dtype=bool)
        cur[: occ.shape[0], : occ.shape[1], : occ.shape[2]] = occ
        full = {}
        level = grid.depth
        while True:
            if level == 0:
                if cur.any():
                    full[0] = np.zeros((1, 3), dtype=np.int64)
                break
            m = cur.shape[0] // 2
            blocks = cur.reshape(m, 2, m, 2, m, 2).all(axis=(1, 3, 5))
            # complete blocks move up a level; padding beyond the grid is never full
            up = blocks.copy()
            keep = cur & ~np.repeat(np.repeat(np.repeat(up, 2, 0), 2, 1), 2, 2)
            idx = np.argwhere(keep)
            if len(idx):
                full[level] = idx.astype(np.int64)
            cur = up
            level -= 1
        return cls(grid, {k: v for k, v in sorted(full.items())})

    def centers(self) -> np.ndarray:
        return self.grid.centers(np.argwhere(self.to_dense()))


@dataclass(frozen=True)
class TaperedCylinder:
    """Cone frustum between ``p0`` (radius ``r0``) and ``p1`` (radius ``r1``)."""

    p0: tuple
    p1: tuple
    r0: float
    r1: float

    def __post_init__(self):
        if not (self.r0 > 0 and self.r1 > 0):
            raise ValueError("cylinder radii must be positive")
        a = np.asarray(self.p1, dtype=float) - np.asarray(self.p0, dtype=float)
        if np.linalg.norm(a) == 0:
            raise ValueError("cylinder axis has zero length")
        object.__setattr__(self, "p0", tuple(np.asarray(self.p0, dtype=float).tolist()))
        object.__setattr__(self, "p1", tuple(np.asarray(self.p1, dtype=float).tolist()))

    def contains(self, pts) -> np.ndarray:
        p0 = np.array(self.p0)
        a = np.array(self.p1) - p0
        L = np.linalg.norm(a)
        a = a / L
        d = np.asarray(pts, dtype=float) - p0
        s = d @ a
        radial = np.linalg.norm(d - s[..., None] * a, axis=-1)
        frac = s / L
        return (frac >= 0) & (frac <= 1) & (radial <= self.r0 + frac * (self.r1 - self.r0))

    def transformed(self, pose) -> "TaperedCylinder":
        return TaperedCylinder(pose.apply(np.array(self.p0)), pose.apply(np.array(self.p1)), self.r0, self.r1)

    def bbox(self) -> Bbox3:
        p0, p1 = np.array(self.p0), np.array(self.p1)
        r = max(self.r0, self.r1)
        return Bbox3(np.minimum(p0, p1) - r, np.maximum(p0, p1) + r)


# ---------------------------------------------------------------------------
# run-length dump


def write_rle(path, grid: VoxelGrid, occ: np.ndarray) -> None:
    """Text dump: header lines, then alternating empty/full run lengths over C-order voxels."""
    flat = np.asarray(occ, dtype=bool).ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds)
    if flat.size and flat[0]:
        runs = np.concatenate([[0], runs])
    box = grid.bbox()
    lines = [
        "phenoscan-voxels 1",
        "box " + " ".join(repr(float(v)) for v in (*box.min, *box.max)),
        f"voxel {grid.h!r}",
        f"resolution {grid.resolution}",
        "dims " + " ".join(str(d) for d in grid.dims),
        "runs " + " ".join(str(int(r)) for r in runs),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_rle(path) -> tuple[VoxelGrid, np.ndarray]:
    fields = {}
    for ln in Path(path).read_text(encoding="ascii").splitlines():
        key, _, rest = ln.partition(" ")
        fields[key] = rest.split()
    if "phenoscan-voxels" not in fields:
        raise ValueError(f"{path}: not a voxel dump")
    lo = np.array([float(v) for v in fields["box"][:3]])
    dims = tuple(int(v) for v in fields["dims"])
    grid = VoxelGrid(lo, float(fields["voxel"][0]), int(fields["resolution"][0]), dims)
    runs = np.array([int(v) for v in fields.get("runs", [])], dtype=np.int64)
    vals = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(vals, runs)
    if flat.size != int(np.prod(dims)):
        raise ValueError(f"{path}: run lengths do not cover the grid")
    return grid, flat.reshape(dims)
