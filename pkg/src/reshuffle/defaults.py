"""Thresholds and experiment grids used by the validation suite.

Bump ``VERSION`` whenever a value changes so reports stay comparable.
"""

VERSION = "1"

SEEDS = tuple(range(20))
K_FINAL = 100_000
FIT_WINDOW = (1_000, K_FINAL)
R = 1.0
S = 0.75

# stepsize scale per fixture; others fall back to 1 / max_i L_i
FIXTURE_R = {"example1": 1.0, "quad7": 0.1, "smooth1": 0.5}

# permutation-mean identity and oracle values
IDENTITY_ATOL = 1e-12

# ||E_k - alpha_k v(sigma_k)|| / alpha_k^2 over this window must not grow
DECOMPOSITION_WINDOW = (100, K_FINAL)
DECOMPOSITION_MAX_SLOPE = 0.05

# median ||k^s (xbar_{q,k} - x*) - L|| <= LIMIT_REL * ||L|| + LIMIT_ABS
LIMIT_QS = ((1.0, 0.75), (0.5, 0.75), (0.5, 0.6))
LIMIT_SWEEP_S = (0.6, 0.9)
LIMIT_REL = 0.10
LIMIT_ABS = 0.02

# averaged f-gap slopes, suffix fraction shared by RR and SGD
SEPARATION_Q = 0.5
RR_GAP_SLOPE = (-1.7, -1.3)
SGD_GAP_SLOPE_MIN = -1.2

# dist_K * K^s <= ENVELOPE_SLACK * R * M / c
ENVELOPE_SLACK = 1.5

# BIRR on a geometric grid (the fit needs at least five points)
BIRR_Q = 0.5
BIRR_K_GRID = (1_000, 3_162, 10_000, 31_623, 100_000)
BIRR_DIST_SLOPE_MAX = -0.85
BIRR_GAP_SLOPE_MAX = -1.7
BIRR_WIN_FRACTION = 0.8

# averaging identities
STREAMING_RTOL = 1e-12
SUFFIX_ATOL = 1e-10

# suffix mean of (x_j - x_{j+1}) / alpha_j, scaled, must not grow
INCREMENT_K_GRID = BIRR_K_GRID
INCREMENT_MAX_SLOPE = 0.05

# partial sum of alpha_j^2 against R^2 zeta(2s)
ZETA_K = 10_000_000
ZETA_RTOL = 1e-3
