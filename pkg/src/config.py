"""
Configuration module - Load environment variables safely.
"""

import os
from dotenv import load_dotenv

# Load .env file if exists
load_dotenv()

# Output directory for reports (CLI --output wins over this)
OUTPUT_DIR = os.getenv("COMPATCLF_OUTPUT_DIR", "./output")

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

# Simulation defaults (scenario files override per run)
SIM_DT = float(os.getenv("SIM_DT", "1e-3"))
SIM_HORIZON = float(os.getenv("SIM_HORIZON", "20"))
CONV_TOL = float(os.getenv("CONV_TOL", "1e-3"))
STALL_TOL = float(os.getenv("STALL_TOL", "1e-5"))  # speed below which a run counts as stalled
STALL_STEPS = int(os.getenv("STALL_STEPS", "50"))
WORKERS = int(os.getenv("WORKERS", "1"))

# Numerical tolerances
REAL_ROOT_TOL = float(os.getenv("REAL_ROOT_TOL", "1e-8"))
PSD_TOL = float(os.getenv("PSD_TOL", "1e-9"))
MULTIPLIER_TOL = float(os.getenv("MULTIPLIER_TOL", "1e-7"))
CLEARANCE_TOL = float(os.getenv("CLEARANCE_TOL", "1e-6"))
MARGINAL_TOL = float(os.getenv("MARGINAL_TOL", "1e-7"))
DEFINITENESS_GRID = int(os.getenv("DEFINITENESS_GRID", "400"))

# Compatibilization
COMPAT_EPSILON = float(os.getenv("COMPAT_EPSILON", "1.1"))
COMPAT_ROUNDS = int(os.getenv("COMPAT_ROUNDS", "8"))

# Adaptive shape controller
SHAPE_P = float(os.getenv("SHAPE_P", "1.0"))
SHAPE_GAMMA = float(os.getenv("SHAPE_GAMMA", "5.0"))
SHAPE_PD_FLOOR = float(os.getenv("SHAPE_PD_FLOOR", "1e-6"))
REGION_HYSTERESIS = int(os.getenv("REGION_HYSTERESIS", "3"))
SHAPE_CONV_TOL = float(os.getenv("SHAPE_CONV_TOL", "1e-2"))  # |H(pi) - H_ref|_F required for convergence

__all__ = [
    "OUTPUT_DIR",
    "LOG_LEVEL",
    "SIM_DT",
    "SIM_HORIZON",
    "CONV_TOL",
    "STALL_TOL",
    "STALL_STEPS",
    "WORKERS",
    "REAL_ROOT_TOL",
    "PSD_TOL",
    "MULTIPLIER_TOL",
    "CLEARANCE_TOL",
    "MARGINAL_TOL",
    "DEFINITENESS_GRID",
    "COMPAT_EPSILON",
    "COMPAT_ROUNDS",
    "SHAPE_P",
    "SHAPE_GAMMA",
    "SHAPE_PD_FLOOR",
    "REGION_HYSTERESIS",
    "SHAPE_CONV_TOL",
]
