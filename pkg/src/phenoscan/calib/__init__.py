"""Camera and turntable calibration."""

from .chain import CalibrationReport, calibrate_rig, corner_orbits
from .io import (
    CornerFileError,
    load_calibration,
    read_corners,
    save_calibration,
    write_corners,
)
from .lm import LMResult, levenberg_marquardt
from .mono import MonoResult, calibrate_mono, homography_dlt
from .refine import RefineReport, refine_all, reprojection_rms
from .turntable import (
    average_poses,
    axis_alignment,
    calibrate_stereo,
    canonicalize_gauge,
    derive_world_pose,
    estimate_axis,
    fit_circle,
    fit_orbit_plane,
    target_zero_pose,
    world_target_poses,
)
from .types import (
    AxisEstimate,
    CalibrationError,
    CornerObservations,
    DegenerateGeometryError,
    NonConvergenceError,
    RankDeficiencyWarning,
    RigCalibration,
    TargetModel,
    camera_pose_at,
    turntable_rotation,
)

__all__ = [name for name in dir() if not name.startswith("_")]
