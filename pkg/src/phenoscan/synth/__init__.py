"""Synthetic rigs, scenes and renderers with known ground truth."""

from .composite import f1_score, make_composite, plant_colour
from .plant import (
    LEAF_CLASSES,
    LeafSpec,
    OverlapWarning,
    SceneSpec,
    default_plant,
    make_plant_mesh,
    outline_exponent,
    plant_rig,
)
from .render import render_silhouette, render_sphere_mask
from .rig import RigSpec, look_at, render_corner_observations, truth_rig, visibility_fractions
from .scene_io import scene_from_config, view_name, write_scene
from .scenes import mesh_views, random_blob_scene, ring_cameras, sphere_views
from .shapes import frustum, grid_patch, icosphere, merge

__all__ = [name for name in dir() if not name.startswith("_")]
