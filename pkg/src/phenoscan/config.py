"""Pipeline configuration: one INI file shared by every subcommand.

Relative paths are resolved against the directory holding the config
file.  Unknown sections or keys are errors, so typos fail loudly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    s = s.strip()
    return tuple(float(x) for x in s.split(",")) if s else ()


def _opt_float(s: str):
    return float(s) if s.strip() else None


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "paths": {
        "corners": (str, "corners.csv"),
        "calibration": (str, "calibration.json"),
        "images": (str, "images"),
        "backgrounds": (str, "backgrounds"),
        "masks": (str, "masks"),
        "mesh": (str, "hull.ply"),
        "voxels": (str, ""),
        "report": (str, "report.csv"),
        "truth": (str, ""),
    },
    "target": {"rows": (int, 7), "cols": (int, 10), "square": (float, 40.0)},
    "calibrate": {"refine": (_bool, True)},
    "segment": {
        "alpha": (float, 0.1),
        "beta": (float, 0.5),
        "gamma": (float, 0.4),
        "t": (float, 5.0),
        "min_component": (int, 25),
    },
    "reconstruct": {
        "resolution": (int, 512),
        "tolerance": (int, 3),
        "margin_px": (float, 0.0),
        "refine_resolution": (int, 128),
        "crop_margin": (int, 32),
        "pot_p0": (_floats, ()),
        "pot_p1": (_floats, ()),
        "pot_r0": (_opt_float, None),
        "pot_r1": (_opt_float, None),
    },
    "measure": {
        "curvature_threshold": (float, 0.015),
        "min_seed": (int, 50),
        "growth": (float, 2.0),
        "smoothing_iterations": (int, 10),
        "curvature_smoothing": (int, 20),
        "double_sided": (_bool, True),
        "pair_gap": (float, 15.0),
        "min_component": (int, 500),
        "min_leaf_area": (float, 500.0),
    },
    "synth": {
        "seed": (int, 0),
        "n_cameras": (int, 2),
        "tilts": (int, 1),
        "calib_tilts": (int, 5),
        "tilt_deg": (_floats, ()),
        "max_tilt_deg": (float, 45.0),
        "n_pans": (int, 36),
        "ring_radius": (float, 1000.0),
        "camera_offset_deg": (float, 40.0),
        "corner_noise": (float, 0.2),
        "images": (_bool, False),
        "leaf_spacing": (float, 35.0),
        "leaf_elevation_deg": (float, 15.0),
        "leaf_bend_deg": (float, 30.0),
    },
    "run": {"threads": (int, 0)},
}


@dataclass
class PipelineConfig:
    base_dir: Path
    values: dict = field(default_factory=dict)
    source: Path | None = None

    def __getitem__(self, key: tuple[str, str]):
        s, k = key
        return self.values[s][k]

    def path(self, key: str) -> Path | None:
        p = self.values["paths"][key]
        if not p:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown setting [{section}] {key}")
        parser = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None

    # --- typed views ---------------------------------------------------------

    def score_params(self):
        from .silhouette import ScoreParams

        s = self.values["segment"]
        return ScoreParams(s["alpha"], s["beta"], s["gamma"], s["t"], s["min_component"])

    def carve_config(self, resolution: int | None = None):
        from .carve import CarveConfig

        r = self.values["reconstruct"]
        return CarveConfig(resolution or r["resolution"], r["tolerance"], r["margin_px"])

    def pot(self):
        from .carve import TaperedCylinder

        r = self.values["reconstruct"]
        given = [bool(r["pot_p0"]), bool(r["pot_p1"]), r["pot_r0"] is not None, r["pot_r1"] is not None]
        if not any(given):
            return None
        if not all(given) or len(r["pot_p0"]) != 3 or len(r["pot_p1"]) != 3:
            raise ConfigError("pot cylinder needs pot_p0, pot_p1 (x, y, z) and pot_r0, pot_r1")
        return TaperedCylinder(r["pot_p0"], r["pot_p1"], r["pot_r0"], r["pot_r1"])

    def measure_config(self):
        from .meshan import MeasureConfig

        return MeasureConfig(**self.values["measure"])

    def target(self):
        from .calib.types import TargetModel

        t = self.values["target"]
        return TargetModel(t["rows"], t["cols"], t["square"])

    def tilt_angles(self) -> tuple[float, ...]:
        """Tilt angles (deg) the scan uses."""
        s = self.values["synth"]
        if s["tilt_deg"]:
            return tuple(s["tilt_deg"])
        return _spread(s["tilts"], s["max_tilt_deg"], "tilts")

    def calibration_tilt_angles(self) -> tuple[float, ...]:
        """Tilt angles (deg) of the calibration session: evenly spread ones plus every scan tilt."""
        s = self.values["synth"]
        both = set(_spread(s["calib_tilts"], s["max_tilt_deg"], "calib_tilts")) | set(self.tilt_angles())
        return tuple(sorted(both))

    def to_ini(self) -> str:
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for k in keys:
                lines.append(f"{k} = {_format(self.values[sec][k])}")
            lines.append("")
        return "\n".join(lines)


def _spread(n: int, top: float, key: str) -> tuple[float, ...]:
    if n < 1:
        raise ConfigError(f"[synth] {key} must be >= 1")
    return tuple(float(a) for a in np.linspace(0.0, top, n)) if n > 1 else (0.0,)


def _format(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def default_config(base_dir=".") -> PipelineConfig:
    vals = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    return PipelineConfig(Path(base_dir), vals)


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Defaults, then the file (if any), then ``section.key=value`` overrides."""
    if path is None:
        cfg = default_config(Path.cwd())
    else:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = default_config(path.resolve().parent)
        cfg.source = path
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{sec}]")
            for k, v in cp.items(sec):
                cfg.set(sec, k, v)
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        lhs, v = ov.split("=", 1)
        sec, k = lhs.strip().split(".", 1)
        cfg.set(sec, k.strip(), v.strip())
    return cfg
