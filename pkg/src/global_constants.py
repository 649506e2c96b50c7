#!/usr/bin/env python3
"""
Global constants for sdsmatch - scalable diversity similarity matching.

This module contains all application-wide constants used throughout the
codebase. All constants follow the ALL_CAPS naming convention for easy
identification.
"""

import math

# Matching defaults
DEFAULT_PATCH_SIZE = 2
DEFAULT_LAMBDA = 1.0
DEFAULT_RANK_RADIUS = 3
DEFAULT_ANN_K = 5
DEFAULT_DENOM_GUARD = 1.0
DEFAULT_MEASURE = "sds"

# Measure names
MEASURE_NAMES = ("sds", "nsds", "ddis", "sddis", "bbs", "dis", "ssd", "sad")

# Distance modes
APPEARANCE_RANK = "appearance_rank"
APPEARANCE_LOCATION = "appearance_location"
APPEARANCE_ONLY = "appearance_only"
DISTANCE_MODES = (APPEARANCE_RANK, APPEARANCE_LOCATION, APPEARANCE_ONLY)

# SDS radius scaling: template offsets times the per-axis grid ratio, or
# template radii times s (area) or sqrt(s)
RADIUS_SCALING_AXIS = "axis"
RADIUS_SCALING_AREA = "area"
RADIUS_SCALING_SQRT = "sqrt"
RADIUS_SCALINGS = (RADIUS_SCALING_AXIS, RADIUS_SCALING_AREA,
                   RADIUS_SCALING_SQRT)
DEFAULT_RADIUS_SCALING = RADIUS_SCALING_AXIS

# Scale grid defaults (both axes)
DEFAULT_SCALE_MIN = 0.5
DEFAULT_SCALE_MAX = 2.0
DEFAULT_SCALE_STEP = 0.1
SCALE_DECIMALS = 10  # rounding applied to generated scale factors

# Above this feature dimension the k-d tree is replaced by a linear scan
KDTREE_MAX_DIM = 20
KDTREE_LEAF_SIZE = 16
TIE_RADIUS_SLACK = 1e-9

# Pixel normalisation
UINT8_MAX = 255.0
UINT16_MAX = 65535.0
PGM_MAX_VALUE = 255

# Benchmark settings
DEFAULT_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(1, 20))
MAX_SKIPPED_FRACTION = 0.2
ANNOTATION_COLUMNS = ("ref_path", "tx", "ty", "tw", "th", "target_path",
                      "gx", "gy", "gw", "gh", "tag")
CURVES_FILE_NAME = "curves.csv"
AUC_FILE_NAME = "auc.csv"
PER_PAIR_FILE_NAME = "per_pair.csv"
ANNOTATION_FILE_NAME = "pairs.csv"

# Synthetic suite defaults
SYNTH_BACKGROUND_SIZE = 96
SYNTH_TEMPLATE_SIZE = 24
SYNTH_REFERENCE_SIZE = 48
SYNTH_BACKGROUNDS = 3
SYNTH_TEMPLATES = 3
SYNTH_ANGLES_DEG = (0.0, 30.0, 60.0, 90.0)
SYNTH_SCALES = (0.6, 1.0, 1.5, 1.9)
SYNTH_OCCLUSIONS = (0.0, 0.2)
SYNTH_NOISE_SIGMA = 0.0
SYNTH_TEXTURE_SMOOTHING = 1.5

# Statlab defaults
STATLAB_TRIALS = 200
STATLAB_SET_SIZE = 100
STATLAB_TARGET_SIZE = 200
STATLAB_MU_GRID = tuple(round(0.25 * i, 2) for i in range(0, 17))
STATLAB_SIGMA_GRID = tuple(round(0.25 * i, 2) for i in range(1, 17))
STATLAB_SCALE_GRID = tuple(round(0.5 + 0.1 * i, 1) for i in range(16))
STATLAB_GT_SCALES = (0.7, 1.0, 1.8)
STATLAB_BACKGROUND_RANGE = (0.0, 10.0)
STATLAB_SIGMA2_GRID = (0.25, 1.0, 4.0, 10.0)
STATLAB_THETA_GRID = (0.0, -math.pi / 4, -math.pi / 2,
                      -3 * math.pi / 4, -math.pi)
POINT_RANK_RADIUS_2D = 1.0  # neighbourhood radius in coordinate units

# Files and environment
EFFECTIVE_CONFIG_FILE_NAME = "effective_config.json"
MATCH_RECORD_FILE_NAME = "match.json"
SCORE_MAP_CSV_NAME = "score_map.csv"
SCORE_MAP_PGM_NAME = "score_map.pgm"
CACHE_DIR_ENV = "SDS_CACHE_DIR"
CACHE_FILE_SUFFIX = ".npz"

# Exit codes
EXIT_OK = 0
EXIT_INTERNAL_ERROR = 1
EXIT_USAGE_ERROR = 2

# Display formatting
DISPLAY_LINE_WIDTH = 70

# Test constants
TEST_SEED = 1234
TEST_SMALL_TRIALS = 12
TEST_SCALE_TRIALS = 10
TEST_ROTATION_TRIALS = 50
TEST_TOLERANCE = 1e-9
TEST_TEXTURE_SIZE = 24
TEST_TEMPLATE_BOX = (8, 6, 8, 8)
