"""Hull mesh -> leaf table: smoothing, segmentation, face pairing, metrics."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..mesh import TriMesh, taubin_smooth
from .attributes import compute_attributes
from .leaves import match_to_truth, pair_faces
from .metrics import LeafMeasurements, MetricOptions, RegionTooSmallError, leaf_metrics, relative_error
from .segment import attach_rims, segment_mesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasureConfig:
    curvature_threshold: float = 0.015  # 1/mm
    min_seed: int = 50
    growth: float = 2.0
    smoothing_iterations: int = 10  # Taubin passes on the hull mesh
    curvature_smoothing: int = 20  # averaging passes on the curvature vector
    double_sided: bool = True
    pair_gap: float = 15.0  # mm, max distance between the two faces of a leaf
    min_component: int = 500  # vertices; smaller hull pieces are debris
    min_leaf_area: float = 500.0  # mm², smaller groups are not reported

    def __post_init__(self):
        if not self.curvature_threshold > 0:
            raise ValueError("curvature_threshold must be positive")
        if self.growth < 1:
            raise ValueError("growth must be >= 1")


@dataclass
class Leaf:
    regions: tuple[int, ...]
    metrics: LeafMeasurements
    centroid: np.ndarray

    @property
    def id(self) -> int:
        return self.regions[0]


@dataclass
class TruthLeaf:
    name: str
    metrics: LeafMeasurements
    centroid: np.ndarray | None = None


class NoRegionsError(RuntimeError):
    """Segmentation produced no measurable leaf."""


def drop_debris(mesh: TriMesh, min_vertices: int) -> TriMesh:
    n, lab = mesh.components()
    if n <= 1:
        return mesh
    sizes = np.bincount(lab[lab >= 0], minlength=n)
    keep = sizes >= min_vertices
    if not keep.any():
        keep[np.argmax(sizes)] = True
    return mesh.submesh(keep[lab[mesh.faces[:, 0]]])


def measure_mesh(mesh: TriMesh, cfg: MeasureConfig = MeasureConfig(), opts: MetricOptions = MetricOptions()):
    """Segment ``mesh`` and measure every leaf.

    Returns ``(leaves, work_mesh, labels)``; leaves are ordered by region id.
    """
    if mesh.n_faces == 0:
        raise NoRegionsError("mesh is empty")
    m = drop_debris(mesh, cfg.min_component)
    if cfg.smoothing_iterations:
        m = taubin_smooth(m, cfg.smoothing_iterations)
    attrs = compute_attributes(m, cfg.curvature_smoothing)
    seg = segment_mesh(m, attrs, cfg.curvature_threshold, cfg.min_seed, cfg.growth)
    log.info("segmentation: %d regions, %.1f%% of vertices unassigned", seg.n_regions, 100 * np.mean(seg.labels == 0))
    if cfg.double_sided:
        groups = pair_faces(m, seg.labels, cfg.pair_gap)
        seg = attach_rims(m, seg, groups)
    else:
        groups = [(r,) for r in seg.region_ids()]
    leaves = []
    for g in groups:
        try:
            lm = leaf_metrics(m, seg, g, double_sided=cfg.double_sided and len(g) == 2, opts=opts)
        except (RegionTooSmallError, ValueError) as exc:
            log.debug("regions %s skipped: %s", g, exc)
            continue
        if lm.area < cfg.min_leaf_area:
            continue
        cen = m.vertices[np.isin(seg.labels, g)].mean(axis=0)
        leaves.append(Leaf(tuple(int(r) for r in g), lm, cen))
    if not leaves:
        raise NoRegionsError("no leaf-sized region found")
    log.info("measured %d leaves from %d face groups", len(leaves), len(groups))
    return leaves, m, seg.labels


def match_leaves(leaves: list[Leaf], truth: list[TruthLeaf]) -> dict[int, int]:
    """``{truth index: leaf index}``, by centroid when the truth has them, else by metrics."""
    if truth and all(t.centroid is not None for t in truth):
        return match_to_truth([l.centroid for l in leaves], [t.centroid for t in truth])
    from scipy.optimize import linear_sum_assignment

    T = np.array([t.metrics.as_tuple() for t in truth])
    L = np.array([l.metrics.as_tuple() for l in leaves]).reshape(-1, 4)
    if not len(L) or not len(T):
        return {}
    C = (np.abs(T[:, None, :] - L[None, :, :]) / T[:, None, :]).mean(axis=2)
    r, c = linear_sum_assignment(C)
    return {int(a): int(b) for a, b in zip(r, c)}


def epsilon(leaves: list[Leaf], truth: list[TruthLeaf]) -> tuple[float, dict[int, int]]:
    """Average relative error over every truth value; unmatched truth leaves count as zero measurements."""
    match = match_leaves(leaves, truth)
    T, Mv = [], []
    for i, t in enumerate(truth):
        T.append(t.metrics.as_tuple())
        Mv.append(leaves[match[i]].metrics.as_tuple() if i in match else (0.0,) * 4)
    return relative_error(T, Mv), match


# ---------------------------------------------------------------------------
# files

REPORT_COLUMNS = ["region", "length_mm", "width_mm", "perimeter_mm", "area_mm2"]
TRUTH_COLUMNS = ["leaf", "length_mm", "width_mm", "perimeter_mm", "area_mm2"]


def format_report(leaves: list[Leaf], truth: list[TruthLeaf] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    eps = None
    names = {}
    if truth:
        eps, match = epsilon(leaves, truth)
        names = {li: truth[ti].name for ti, li in match.items()}
    w.writerow(REPORT_COLUMNS + (["truth_leaf"] if truth else []))
    for i, l in enumerate(leaves):
        row = [l.id] + [f"{v:.3f}" for v in l.metrics.as_tuple()]
        if truth:
            row.append(names.get(i, ""))
        w.writerow(row)
    if eps is not None:
        buf.write(f"# epsilon,{eps:.6f}\n")
    return buf.getvalue()


def read_truth(path) -> list[TruthLeaf]:
    """Truth table: ``leaf,length_mm,width_mm,perimeter_mm,area_mm2[,cx,cy,cz]``."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty truth table")
    header = [h.strip() for h in rows[0]]
    if header[:5] != TRUTH_COLUMNS:
        raise ValueError(f"{path}: header must start with {','.join(TRUTH_COLUMNS)}")
    has_c = header[5:8] == ["cx", "cy", "cz"]
    for n, r in enumerate(rows[1:], start=2):
        try:
            vals = [float(x) for x in r[1:5]]
            cen = np.array([float(x) for x in r[5:8]]) if has_c else None
            out.append(TruthLeaf(r[0].strip(), LeafMeasurements(*vals), cen))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{n}: bad truth row ({exc})") from None
    return out


def write_truth(path, truth: list[TruthLeaf]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_c = all(t.centroid is not None for t in truth)
        w.writerow(TRUTH_COLUMNS + (["cx", "cy", "cz"] if has_c else []))
        for t in truth:
            row = [t.name] + [f"{v:.6f}" for v in t.metrics.as_tuple()]
            if has_c:
                row += [f"{v:.6f}" for v in t.centroid]
            w.writerow(row)
