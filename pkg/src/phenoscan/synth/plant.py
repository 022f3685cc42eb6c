"""Parametric plastic-plant stand-in: pot, stem and ruled-surface leaves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ..carve import TaperedCylinder
from ..mesh import TriMesh
from .rig import RigSpec
from .shapes import frustum, merge

# length, width, perimeter, area (mm, mm²) of the three plastic leaf sizes
LEAF_CLASSES = {
    "B": (152.6, 74.5, 350.89, 8535.6),
    "C": (186.9, 96.6, 436.16, 13303.4),
    "D": (221.0, 115.6, 519.1, 18868.0),
}


class OverlapWarning(UserWarning):
    """Generated leaves come closer than the requested clearance."""


def outline_exponent(length: float, width: float, area: float) -> float:
    """Exponent ``a`` of the half-width profile ``(W/2) (1 - |x|^a)`` matching ``area``.

    The outline area is ``L W a / (a + 1)``.
    """
    r = area / (length * width)
    if not 0.5 < r < 1.0:
        raise ValueError(f"area ratio {r:.3f} outside the outline family (0.5, 1)")
    return r / (1.0 - r)


@dataclass(frozen=True)
class LeafSpec:
    """One leaf: outline size, placement on the stem and midrib droop.

    A straight petiole leaves the stem at height ``y`` (world y, down
    positive) along ``azimuth``, rising ``elevation`` above horizontal.  The
    blade's midrib continues from its end and bends downward with
    curvature ``droop`` (1/mm).  The lateral direction stays horizontal, so
    the blade is a ruled, developable surface.  Truth values describe the
    blade only.
    """

    length: float
    width: float
    area: float
    azimuth: float  # rad
    y: float
    elevation: float  # rad
    droop: float = 0.0
    name: str = ""
    petiole: float = 25.0  # stalk length between stem and blade (mm)
    petiole_radius: float = 1.5

    @property
    def exponent(self) -> float:
        return outline_exponent(self.length, self.width, self.area)

    def half_width(self, s):
        """Half width at arc length ``s`` from the base."""
        x = 2.0 * np.asarray(s, dtype=float) / self.length - 1.0
        return 0.5 * self.width * (1.0 - np.abs(np.clip(x, -1, 1)) ** self.exponent)

    def perimeter(self) -> float:
        """Outline length (numerical; isometric under the droop bending)."""
        a = self.exponent
        L, b = self.length, 0.5 * self.width

        def speed(x):
            dy = b * a * x ** (a - 1)  # slope magnitude per unit x on [0, 1]
            return np.sqrt((L / 2) ** 2 + dy**2)

        half, _ = integrate.quad(speed, 0.0, 1.0, limit=200)
        return 4.0 * half

    def truth(self) -> tuple[float, float, float, float]:
        return (self.length, self.width, self.perimeter(), self.area)

    def frame(self, stem_radius: float = 0.0):
        """Base point, initial midrib direction, lateral and bending-normal directions."""
        ca, sa = np.cos(self.azimuth), np.sin(self.azimuth)
        out = np.array([ca, 0.0, sa])
        up = np.array([0.0, -1.0, 0.0])
        d0 = np.cos(self.elevation) * out + np.sin(self.elevation) * up
        lat = np.array([-sa, 0.0, ca])
        nrm = np.cross(lat, d0)  # upward-ish normal in the bending plane
        base = np.array([0.0, self.y, 0.0]) + (stem_radius + self.petiole) * out
        return base, d0, lat, nrm

    def petiole_mesh(self, stem_radius: float = 0.0) -> TriMesh | None:
        if self.petiole <= 0:
            return None
        base, d0, _, _ = self.frame(stem_radius)
        start = base - (self.petiole + 0.5 * stem_radius) * d0
        return frustum(start, base, self.petiole_radius, self.petiole_radius, 12, 4)

    def midrib(self, s, stem_radius: float = 0.0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        base, d0, _, nrm = self.frame(stem_radius)
        k = self.droop
        if abs(k) < 1e-12:
            return base + s[..., None] * d0
        # circle of radius 1/k bending from d0 towards -nrm
        return base + (np.sin(k * s) / k)[..., None] * d0 - ((1 - np.cos(k * s)) / k)[..., None] * nrm

    def surface(self, s, w, stem_radius: float = 0.0) -> np.ndarray:
        _, _, lat, _ = self.frame(stem_radius)
        return self.midrib(s, stem_radius) + np.asarray(w, dtype=float)[..., None] * lat

    def mesh(self, n_len: int = 80, n_wid: int = 12, stem_radius: float = 0.0) -> TriMesh:
        s = np.linspace(0.0, self.length, n_len + 1)
        t = np.linspace(-1.0, 1.0, n_wid + 1)
        S, T = np.meshgrid(s, t, indexing="ij")
        P = self.surface(S, T * self.half_width(S), stem_radius).reshape(-1, 3)
        idx = np.arange(P.shape[0]).reshape(n_len + 1, n_wid + 1)
        a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
        faces = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
        return TriMesh(P, faces).remove_degenerate(1e-9)

    def centroid(self, stem_radius: float = 0.0) -> np.ndarray:
        """Area-weighted centroid of the leaf surface."""
        s = np.linspace(0.0, self.length, 401)
        wts = 2 * self.half_width(s)
        mid = self.midrib(s, stem_radius)
        return (wts[:, None] * mid).sum(axis=0) / wts.sum()


@dataclass
class SceneSpec:
    """Pot, stem and leaves in the physical frame of :class:`RigSpec` (y down)."""

    leaves: list = field(default_factory=list)
    stem_radius: float = 4.0
    stem_top: float = -230.0
    pot_top: float = 80.0
    pot_bottom: float = 200.0
    pot_radius_top: float = 75.0
    pot_radius_bottom: float = 60.0

    @property
    def pot(self) -> TaperedCylinder:
        return TaperedCylinder((0.0, self.pot_bottom, 0.0), (0.0, self.pot_top, 0.0),
                               self.pot_radius_bottom, self.pot_radius_top)

    def pot_cut(self, clearance: float = 3.0) -> TaperedCylinder:
        """Slightly enlarged pot cylinder used for removal; stops ``clearance`` above the rim."""
        return TaperedCylinder((0.0, self.pot_bottom + 20.0, 0.0), (0.0, self.pot_top - clearance, 0.0),
                               self.pot_radius_bottom + 15.0, self.pot_radius_top + 15.0)


def default_plant(seed: int = 0, spacing: float = 35.0, elevation_deg: float = 15.0, bend_deg: float = 30.0) -> SceneSpec:
    """12 leaves (4 B, 2 C, 6 D) on a spiral, large leaves low on the stem.

    ``bend_deg`` is the mean total turn of each midrib from base to tip.
    """
    rng = np.random.default_rng(seed)
    classes = ["D"] * 6 + ["C"] * 2 + ["B"] * 4
    golden = np.radians(137.5)
    leaves = []
    y0 = 40.0
    for n, cls in enumerate(classes):
        L, W, _, A = LEAF_CLASSES[cls]
        elev = np.radians(elevation_deg + rng.uniform(-4, 4))
        bend = np.radians(bend_deg + rng.uniform(-6, 6))
        az = n * golden + rng.uniform(-0.05, 0.05)
        leaves.append(LeafSpec(L, W, A, az, y0 - n * spacing, elev, bend / L, f"{cls}{n}"))
    top = y0 - (len(classes) - 1) * spacing - 30.0
    return SceneSpec(leaves, stem_top=top)


def plant_rig(**kw) -> RigSpec:
    """Turntable rig sized for the plant (1 m ring, 1K x 1K images); ``kw`` overrides fields."""
    from ..geom import CameraIntrinsics

    intr = (
        CameraIntrinsics(1150.0, 515.3, 508.7, -0.05, 0.01, 1024, 1024),
        CameraIntrinsics(1170.0, 509.1, 514.2, -0.04, 0.008, 1024, 1024),
    )
    args = dict(ring_radius=1000.0, intrinsics=intr, pivot_y=-120.0, board_y=-120.0)
    args.update(kw)
    return RigSpec(**args)


def make_plant_mesh(spec: SceneSpec, with_pot: bool = True, clearance: float = 2.0):
    """Mesh of the whole plant and the truth table of its leaves.

    Returns ``(mesh, truth)`` with one row per leaf:
    ``(name, length, width, perimeter, area, centroid)``.
    """
    parts = [frustum((0.0, spec.pot_top, 0.0), (0.0, spec.stem_top, 0.0), spec.stem_radius, spec.stem_radius, 16, 30)]
    if with_pot:
        parts.append(frustum((0.0, spec.pot_bottom, 0.0), (0.0, spec.pot_top, 0.0),
                             spec.pot_radius_bottom, spec.pot_radius_top, 64, 4))
    truth = []
    clouds = []
    for leaf in spec.leaves:
        m = leaf.mesh(stem_radius=spec.stem_radius)
        parts.append(m)
        pet = leaf.petiole_mesh(spec.stem_radius)
        if pet is not None:
            parts.append(pet)
        clouds.append(m.vertices)
        L, W, P, A = leaf.truth()
        truth.append((leaf.name, L, W, P, A, leaf.centroid(spec.stem_radius)))
    _check_clearance(spec, clouds, clearance)
    return merge(parts), truth


def _check_clearance(spec: SceneSpec, clouds, clearance: float) -> None:
    from scipy.spatial import cKDTree

    # ignore the first few mm of each leaf, where all leaves meet the stem
    far = [c[np.linalg.norm(c[:, [0, 2]], axis=1) > 4 * spec.stem_radius + 30] for c in clouds]
    trees = [cKDTree(c) for c in far]
    for a in range(len(far)):
        for b in range(a + 1, len(far)):
            if len(far[a]) and len(far[b]) and trees[a].query(far[b], k=1)[0].min() < clearance:
                warnings.warn(f"leaves {spec.leaves[a].name} and {spec.leaves[b].name} overlap", OverlapWarning)
