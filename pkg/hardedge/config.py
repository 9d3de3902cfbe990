"""Centralized configuration values for the hard-edge toolkit."""

import os
from pathlib import Path

OUTPUT_DIR = Path(os.getenv("HARDEDGE_OUTPUT_DIR", Path.cwd()))

DEFAULT_TAIL_TOL = float(os.getenv("HARDEDGE_TAIL_TOL", "1e-13"))
DEFAULT_MAX_TERMS = int(os.getenv("HARDEDGE_MAX_TERMS", "500"))
DEFAULT_QUAD_POINTS = int(os.getenv("HARDEDGE_QUAD_POINTS", "64"))
DEFAULT_T_MIN = float(os.getenv("HARDEDGE_T_MIN", "1e-3"))
DEFAULT_ZERO_TOL = float(os.getenv("HARDEDGE_ZERO_TOL", "1e-12"))
DEFAULT_SEED = int(os.getenv("HARDEDGE_SEED", "20240607"))
DEFAULT_WORKERS = int(os.getenv("HARDEDGE_WORKERS", "1"))
DEFAULT_CDF_POINTS = int(os.getenv("HARDEDGE_CDF_POINTS", "2048"))
LOG_LEVEL = os.getenv("HARDEDGE_LOG_LEVEL", "WARNING").upper()

MAX_ALPHA = 50.0
QUAD_ORDER = 8
BESSEL_X_MAX = 1e8
BESSEL_I_X_MAX = 700.0
SERIES_SWITCH = 2.0

# Euler-Maruyama defaults; steps above COARSE_STEP get a warning attached.
COARSE_STEP = 0.01
LIMIT_MAX_STEP = 0.005
MIN_STEP = 1e-10
CHUNK_SIZE = 8192

KS_SIGNIFICANCE = 0.01
MIN_STATISTICAL_SAMPLES = 10_000
