"""Visual hull reconstruction."""

from .hull import (
    CarveConfig,
    CarveView,
    carve,
    carve_dense,
    initial_bbox,
    make_view,
    outside_counts,
    refined_bbox,
    remove_pot,
    views_from_masks,
)
from .mcubes import marching_cubes
from .volume import (
    Bbox3,
    CarveError,
    EmptyVolumeError,
    TaperedCylinder,
    VoxelGrid,
    VoxelOctree,
    read_rle,
    write_rle,
)

__all__ = [name for name in dir() if not name.startswith("_")]
