"""Turntable plant scanning: calibration, silhouettes, visual hull and leaf measurement."""

import numba

# the bundled TBB is too old for numba; fall back to OpenMP or the work queue quietly
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

__version__ = "0.1.0"
