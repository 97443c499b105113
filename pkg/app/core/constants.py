"""
Constants for the MPPI-IPDDP trajectory planner.
"""

# Physics
GRAVITY = 9.81

# IPDDP defaults
DEFAULT_MU_INIT = 1.0
DEFAULT_KAPPA = 10.0
DEFAULT_MU_MIN = 1e-8
DEFAULT_MU_STOP = 1e-6
DEFAULT_MU_LINEAR_RATE = 0.2
DEFAULT_MU_SUPERLINEAR_POWER = 1.2
DEFAULT_TAU = 0.995
DEFAULT_RHO_INIT = 1e-6
DEFAULT_RHO_MAX = 1e8
DEFAULT_RHO_INCREASE = 10.0
DEFAULT_RHO_DECREASE = 5.0
DEFAULT_IPDDP_MAX_ITERS = 100
DEFAULT_STEP_EXPONENTS = 11  # alpha in {2^-j : j = 0..10}
DEFAULT_FILTER_MARGIN = 1e-8
FILTER_MAX_VIOLATION_FACTOR = 1e4
FILTER_MIN_VIOLATION_FACTOR = 1e-4
FILTER_GAMMA_VIOLATION = 1e-5
FILTER_GAMMA_OBJECTIVE = 1e-5
SWITCHING_DELTA = 1.0
SWITCHING_POWER_OBJECTIVE = 2.3
SWITCHING_POWER_VIOLATION = 1.1
ARMIJO_ETA = 1e-4
ROUNDOFF_FACTOR = 10.0 * 2.220446049250313e-16
DEFAULT_MIN_SLACK = 1e-2
CONE_NORM_EPS = 1e-6
FD_STEP = 1e-5

# Corridor defaults
DEFAULT_INFLATE_ITERS = 5
DEFAULT_CORRIDOR_TOL = 1e-3
BISECTION_STEPS = 60
CORRIDOR_REFINE_STEPS = 33
FREE_RADIUS_MARGIN = 1e-6

# Planner defaults
DEFAULT_OUTER_MAX_ITERS = 30
DEFAULT_OUTER_TOL = 1e-3
DEFAULT_MPPI_RETRIES = 3
DEFAULT_MPPI_ITERATIONS = 1
DEFAULT_CORRIDOR_WEIGHT = 0.001

# Random stream tags
STREAM_MPPI = 0
STREAM_CORRIDOR = 1

# Status constants
STATUS_CONVERGED = "converged"
STATUS_MAX_ITERS = "max_iters"
STATUS_FAILED = "failed"

# Exit codes
EXIT_CONVERGED = 0
EXIT_USAGE = 1
EXIT_MAX_ITERS = 2
EXIT_FAILED = 3

# Model identifiers
MODEL_DIFF_DRIVE = "diff_drive"
MODEL_QUADROTOR = "quadrotor_point_mass"

# Output files
TRAJECTORY_FILE = "trajectory.csv"
CORRIDOR_FILE = "corridors.csv"
TRACE_FILE = "trace.jsonl"
REPORT_FILE = "report.json"
METADATA_FILE = "metadata.json"
SCENARIO_SUFFIX = ".toml"
