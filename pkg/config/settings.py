"""
Process-level defaults

Every value can be overridden with an environment variable of the same name prefixed
PLATE_DUAL_ (for example PLATE_DUAL_LOG_LEVEL=DEBUG), read once at import after load_dotenv().
"""

import os

from dotenv import load_dotenv

load_dotenv()

ENV_PREFIX = "PLATE_DUAL_"


def _env(name: str, default, cast=str):
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw == "":
        return default
    return cast(raw)


# Report schema stamped into every report and solution snapshot
SCHEMA_VERSION = "1.0"

LOG_LEVEL = _env("LOG_LEVEL", "INFO")
OUTPUT_DIR = _env("OUTPUT_DIR", "out")

# Certificate
DELTA_PD = _env("DELTA_PD", 1e-6, float)

# Duality
EPS3 = _env("EPS3", 0.5, float)
MAX_K_DOUBLINGS = _env("MAX_K_DOUBLINGS", 20, int)
J2_SAMPLES = _env("J2_SAMPLES", 100, int)
WEAK_DUALITY_TRIALS = _env("WEAK_DUALITY_TRIALS", 200, int)
CONCAVITY_DIRECTIONS = _env("CONCAVITY_DIRECTIONS", 100, int)
SUP_INF_SAMPLES = _env("SUP_INF_SAMPLES", 50, int)
FENCHEL_YOUNG_SAMPLES = _env("FENCHEL_YOUNG_SAMPLES", 20, int)

# Acceptance tolerances
GAP_TOL = _env("GAP_TOL", 1e-6, float)
L_IDENTITY_TOL = _env("L_IDENTITY_TOL", 1e-10, float)
GRADCHECK_TOL = _env("GRADCHECK_TOL", 1e-5, float)
GRADCHECK_SAMPLES = _env("GRADCHECK_SAMPLES", 20, int)
GRADCHECK_DIRECTIONS = _env("GRADCHECK_DIRECTIONS", 5, int)
COERCIVITY_SAMPLES = _env("COERCIVITY_SAMPLES", 100, int)
COERCIVITY_TOL = _env("COERCIVITY_TOL", 1e-10, float)
TENSOR_SAMPLES = _env("TENSOR_SAMPLES", 10000, int)

# 3D grids above this node count per axis are rejected
MAX_GRID3 = _env("MAX_GRID3", 17, int)
