"""Configuration constants and defaults."""

import os
from pathlib import Path

# Numerical tolerances
ROW_SUM_TOL = 1e-12
BELIEF_TOL = 1e-9
PRUNE_TOL = 1e-12
TIE_TOL = 1e-12
ALPHA_CONCAVITY_SLACK = 1e-12

# Solver defaults
DEFAULT_REPRESENTATION = "alpha"
MAX_GRID_NODES = 10**5
CSV_ALPHA_RESOLUTION = 4

# Enumeration budgets
MAX_TREE_NODES = 10**6
MAX_STRATEGY_COUNT = 10**5

# Learning
SMOOTHING_PSEUDO_COUNT = 1.0
TV_THRESHOLD = 0.05
EM_STEPS_PER_UPDATE = 5
EM_TOLERANCE = 1e-9

# Gaussian example
EXAMPLE_RHO = 0.5
EXAMPLE_GAIN_GRID = (-2.0, 2.0, 0.01)
EXAMPLE_SAMPLES = 10**6
REFERENCE_GAIN_U2 = 0.5

# Output
CSV_SIGNIFICANT_DIGITS = 12
SOLUTION_FORMAT = "sepcon.solution"
SOLUTION_VERSION = 1
OUTPUT_ENV_VAR = "SEPCON_OUT"
OUTPUT_DIR = Path(os.environ.get(OUTPUT_ENV_VAR, "runs"))

# Paths
FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"
