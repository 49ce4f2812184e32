"""Configuration settings for the Krylov chain statistics pipeline."""

import os
from dotenv import load_dotenv

CODE_VERSION = "0.2.0"

# Load environment variables
load_dotenv()

# File paths
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(BASE_DIR, "data")
RAW_OUTPUTS_DIR = os.path.join(DATA_DIR, "raw_outputs")
RESULTS_DIR = os.path.join(DATA_DIR, "results")
SPECTRUM_CACHE_DIR = os.getenv("KRYLOV_SPECTRUM_CACHE", os.path.join(DATA_DIR, "spectra"))

# Billiard geometry
SINAI_PLACEMENTS = ("vertex", "centroid")
SINAI_CUT_SCALE = {
    "vertex": 0.5,    # a=1 removes a 60 degree sector of radius L/2
    "centroid": 0.25  # disk stays inside the triangle (inradius is 0.2887 L)
}

# Grid and eigensolver
GRID_DIAGONAL_DIVISIONS = 128  # starting h = bounding-box diagonal / 128
GRID_CONVERGENCE_TOL = 0.01  # relative change of the N_max-th level between h and h/2
MAX_GRID_REFINEMENTS = 4
MIN_NODES_PER_LEVEL = 5  # n_levels <= 0.2 * interior nodes
DENSE_SOLVER_LIMIT = 2000  # interior nodes
RITZ_TOL = 1e-8

# Lanczos recursion
BREAKDOWN_TOL = 1e-12  # relative to b_1
REORTH_MODES = ("none", "full", "partial")
PARTIAL_REORTH_THRESHOLD = 1e-8

# Sampling
DEFAULT_MASTER_SEED = 20240917
DEFAULT_SAMPLES = 5000
SAMPLE_CHUNK_SIZE = 25  # fixed chunking keeps reductions independent of worker count
PREMATURE_BREAKDOWN_LIMIT = 0.01  # fraction of samples allowed to break down inside the window
WISHART_POOL_LIMIT = 2_000_000  # pooled off-diagonal products kept for diagnostics
BN_DUMP_SAMPLES = 3  # samples per ensemble written as `n b_n` files when dumping

# Distribution fitting
KS_ALPHA = 0.01
KS_MIN_SAMPLES = 35  # below this the asymptotic KS decision is flagged low-power
DEFAULT_BIN_RULE = "freedman_diaconis"

# Ensemble groups reported by the separation analysis
ENSEMBLES = ("GOE", "GUE", "URE", "UIM", "UCP")
ENSEMBLE_GROUPS = {
    "real_like": ("GOE", "URE", "UIM"),
    "complex_like": ("GUE", "UCP")
}
SEPARATION_Z_WITHIN = 3.0  # members of a group agree within this many combined standard errors
SEPARATION_Z_BETWEEN = 10.0  # groups count as separated beyond this

# Experiment presets. `window_multiples` and `max_steps_multiple` scale with N_max;
# `window` and `max_steps` are absolute coefficient indices.
PRESETS = {
    "correlation": {"n_max": 50, "window_multiples": (5, 10), "max_steps_multiple": 10},
    "distribution": {"n_max": 100, "window_multiples": (5, 10), "max_steps_multiple": 10},
    "alternate_window": {"n_max": 100, "window_multiples": (10, 15), "max_steps_multiple": 15},
    "wishart_small": {"n_max": 15, "window_multiples": (5, 10), "max_steps_multiple": 10},
    "chi_square": {"n_max": 5, "window": (1, 15), "max_steps": 15}
}

# Spectrum cache file format
SPECTRUM_FORMAT = "krylov-spectrum"
SPECTRUM_FORMAT_VERSION = 1
