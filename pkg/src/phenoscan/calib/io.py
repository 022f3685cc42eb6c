"""Corner observation files and calibration reports."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..geom import CameraIntrinsics, Pose, rodrigues
from .types import CornerObservations, RigCalibration


class CornerFileError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = str(path)
        self.lineno = lineno


def read_corners(path) -> CornerObservations:
    """Parse ``camera, tilt, pan, pan_angle_deg, corner, u, v`` records."""
    path = Path(path)
    cols = [[] for _ in range(7)]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 7:
                raise CornerFileError(path, lineno, f"expected 7 fields, got {len(parts)}")
            try:
                ints = [int(parts[n]) for n in (0, 1, 2, 4)]
                floats = [float(parts[n]) for n in (3, 5, 6)]
            except ValueError as exc:
                raise CornerFileError(path, lineno, str(exc)) from None
            if not all(math.isfinite(v) for v in floats):
                raise CornerFileError(path, lineno, "non-finite value")
            if min(ints) < 0:
                raise CornerFileError(path, lineno, "negative index")
            for n, v in zip((0, 1, 2, 4), ints):
                cols[n].append(v)
            for n, v in zip((3, 5, 6), floats):
                cols[n].append(v)
    uv = np.column_stack([cols[5], cols[6]]) if cols[5] else np.zeros((0, 2))
    return CornerObservations(cols[0], cols[1], cols[2], np.radians(cols[3]), cols[4], uv)


def write_corners(path, obs: CornerObservations) -> None:
    deg = np.degrees(obs.pan_angle)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# camera_id, tilt_index, pan_index, pan_angle_deg, corner_id, u, v\n")
        for n in range(len(obs)):
            # repr of a Python float round-trips exactly
            fh.write(
                f"{obs.camera[n]},{obs.tilt[n]},{obs.pan[n]},{float(deg[n])!r},{obs.corner[n]},"
                f"{float(obs.uv[n, 0])!r},{float(obs.uv[n, 1])!r}\n"
            )


def _pose_dict(p: Pose) -> dict:
    return {"rotvec": p.rotvec.tolist(), "R": p.R.ravel().tolist(), "t": p.t.tolist()}


def _pose_from(d: dict) -> Pose:
    # the matrix is stored for lossless round trips; the angle-axis form is for readers
    if "R" in d:
        return Pose(np.array(d["R"], dtype=float).reshape(3, 3), d["t"])
    return Pose(rodrigues(d["rotvec"]), d["t"])


def calibration_to_dict(rig: RigCalibration) -> dict:
    cams = {}
    for k, c in sorted(rig.intrinsics.items()):
        cams[str(k)] = {
            "f": c.f,
            "cu": c.cu,
            "cv": c.cv,
            "d1": c.d1,
            "d2": c.d2,
            "width": c.width,
            "height": c.height,
        }
    base = [
        dict(camera=k, tilt=j, **_pose_dict(p)) for (k, j), p in sorted(rig.base_poses.items())
    ]
    return {
        "intrinsics": cams,
        "base_poses": base,
        "target_zero_pose": _pose_dict(rig.target_zero_pose),
        "pan_angles_rad": [None if math.isnan(a) else a for a in rig.pan_angles],
        "rms_px": rig.rms,
    }


def calibration_from_dict(d: dict) -> RigCalibration:
    intr = {
        int(k): CameraIntrinsics(v["f"], v["cu"], v["cv"], v["d1"], v["d2"], v.get("width"), v.get("height"))
        for k, v in d["intrinsics"].items()
    }
    base = {(int(b["camera"]), int(b["tilt"])): _pose_from(b) for b in d["base_poses"]}
    pans = tuple(float("nan") if a is None else float(a) for a in d.get("pan_angles_rad", []))
    return RigCalibration(intr, base, _pose_from(d["target_zero_pose"]), pans, d.get("rms_px"))


def save_calibration(path, rig: RigCalibration) -> None:
    Path(path).write_text(json.dumps(calibration_to_dict(rig), indent=2) + "\n", encoding="utf-8")


def load_calibration(path) -> RigCalibration:
    return calibration_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
