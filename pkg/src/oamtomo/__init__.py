# ruff: noqa: F401
import importlib.metadata

try:
    # __package__ allows for the case where __name__ is "__main__"
    __version__ = importlib.metadata.version(__package__ or __name__)
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0"


# So user can do e.g.
#   from oamtomo import make_basis, full_helicity_sorter, run_full_qst
from .circuits import (
    Circuit,
    compose,
    full_helicity_sorter,
    gate_hx,
    gate_hy,
    gate_phase,
    hs_even_cascade,
    hs_even_slm,
    hs_odd,
    oam_sorter,
    partial_helicity_sorter,
    radial_mode_sorter,
    routing_table,
)
from .config import AhstConfig, ExperimentConfig, NoiseConfig, StateSpec, load_config
from .errors import (
    CapacityError,
    ConfigError,
    FormatError,
    InvalidArgumentError,
    InvariantViolation,
    OamtomoError,
    PreconditionError,
    ResolutionError,
    TruncationError,
)
from .hilbert import fidelity, make_basis, nearest_psd, pure_state, trace_distance
from .models import BasisSpec, Grid, IntensityGrid, MarginalSet, ModeIndex, TomographyReport
from .tomography import assemble_full_density, run_full_qst
