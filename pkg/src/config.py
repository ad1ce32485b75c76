"""
Global settings for the reservoir size-reduction bench.
Protocol defaults live here; paths and worker counts can be overridden
through the environment or a local .env file.
"""

from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parents[1]

# Paths
OUT_DIR = Path(os.getenv("RCBENCH_OUT_DIR", str(PROJECT_ROOT / "results")))
DB_PATH = Path(os.getenv("RCBENCH_DB_PATH", str(PROJECT_ROOT / "data" / "bench.db")))

# Runtime
WORKERS = max(1, int(os.getenv("RCBENCH_WORKERS", "1")))
LOG_LEVEL = os.getenv("RCBENCH_LOG_LEVEL", "INFO").upper()

# Benchmark protocol (2000 train / 3000 test / 200 free-run steps, 10 trials)
TRAIN_LEN = 2000
TEST_LEN = 3000
WASHOUT = 200
TRIALS = 10
N_STAR = 100

# Default hyperparameters when tuning is off
RHO_IN = 0.1
RHO_RES = 0.9
RHO_DRIFT = 0.9

# Datasets
HENON_TRANSIENT = 500
HENON_NOISE_STD = 0.05
HENON_DIVERGENCE = 10.0
NARMA_DIVERGENCE = 1.0e3
DATASET_RETRIES = 16

# Weight initialisation
DEGENERATE_DRAW_RETRIES = 8
DEGENERATE_RADIUS = 1.0e-12

# IPC
IPC_WASHOUT = 1000
IPC_T_STEPS = 100_000
IPC_TAU_MAX = 25
IPC_MAX_ORDER = 5
IPC_FULL_ORDER_LIMIT = 5
IPC_BATCH_SIZE = 32
THRESHOLD_CHANCE_MULTIPLE = 70.0
IPC_BOUND_SLACK = 0.02

# Hyperparameter search
SEARCH_BUDGET = 64
SEARCH_SEED = 20240611
VALIDATION_SEEDS = 3
SEARCH_BOUNDS: dict[str, tuple[float, float]] = {
    "rho_in": (0.05, 2.0),
    "rho_res": (0.1, 1.4),
    "rho_drift": (0.1, 1.4),
}
SEARCH_LOG_AXES = frozenset({"rho_in"})

# Output
CSV_SCHEMA_VERSION = "1"
TRIAL_CSV_COLUMNS = ("task", "scheme", "P", "Q", "n_star", "n_res", "trial", "seed", "nmse")
SWEEP_CSV_COLUMNS = ("axis", "value", "mean_nmse", "std_nmse", "trials")
IPC_CSV_COLUMNS = ("order", "tau", "capacity")
# One file per sweep: a "trial" row per trial, then a "summary" row per swept value
SWEEP_REPORT_CSV_COLUMNS = (
    "row", "axis", "value", "task", "scheme", "P", "Q", "n_star", "n_res", "trial", "seed", "nmse", "std_nmse", "trials",
)
