from oamtomo import __version__

GENERATOR = f"{__package__} v{__version__}"

# Tolerances
UNITARY_ATOL = 1e-12
GATE_ATOL = 1e-10
STATE_ATOL = 1e-12
PSD_ATOL = 1e-10
FIDELITY_ATOL = 1e-8

# AHST reference grid
GRID_SIZE = 512
GRID_EXTENT = 8.0  # half-width, in units of w0
MIN_SAMPLES_PER_WAIST = 16
TRUNCATION_TOL = 1e-12
NOISY_WEIGHT_CAP = 1e3
MAX_WEIGHT_EXPONENT = 700.0  # exp(700) is close to the float64 limit
INTENSITY_ATOL = 1e-12  # intensities below -INTENSITY_ATOL are set to 0
