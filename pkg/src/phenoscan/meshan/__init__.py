"""Leaf segmentation and measurement on hull meshes."""

from .attributes import NonManifoldError, VertexAttributes, compute_attributes, vertex_areas
from .leaves import match_to_truth, pair_faces
from .metrics import (
    LeafMeasurements,
    MetricOptions,
    RegionTooSmallError,
    boundary_loops,
    leaf_metrics,
    relative_error,
)
from .pipeline import (
    Leaf,
    MeasureConfig,
    NoRegionsError,
    TruthLeaf,
    epsilon,
    format_report,
    measure_mesh,
    read_truth,
    write_truth,
)
from .segment import NoSeedError, RegionLabeling, attach_rims, attach_unassigned, segment_mesh

__all__ = [name for name in dir() if not name.startswith("_")]
