"""pkam: invariant tori of presymplectic maps by a spectral quasi-Newton method."""

from . import errors
from .cohomology import remove_average, solve_difference
from .diagnostics import (nondegeneracy_report, offgrid_invariance,
                          orbit_shadow_error, twist_matrix, vanishing_average)
from .diophantine import Frequency, divisor_floor, scan_divisors
from .fourier import (FourierSeries, TorusEmbedding, differentiate, grid_compose,
                      grid_product)
from .geometry import (PresymplecticStructure, flux, lagrangian_defect,
                       verify_presymplectic)
from .models import MapFamily, coupled_standard_family, finite_difference_family
from .newton import (SolveConfig, SolveResult, StepReport, continue_in_parameter,
                     invariance_error, kam_step, solve, solve_linearized)
from .reducibility import ReducedFrame, build_frame, lagrangian_residual_frame
from .torus_io import load_torus, save_torus
from .uniqueness import align_phase

__version__ = "0.1.0"

__all__ = [
    "FourierSeries", "TorusEmbedding", "differentiate", "grid_compose", "grid_product",
    "PresymplecticStructure", "flux", "lagrangian_defect", "verify_presymplectic",
    "Frequency", "scan_divisors", "divisor_floor",
    "remove_average", "solve_difference",
    "ReducedFrame", "build_frame", "lagrangian_residual_frame",
    "SolveConfig", "SolveResult", "StepReport", "invariance_error",
    "solve_linearized", "kam_step", "solve", "continue_in_parameter",
    "vanishing_average", "twist_matrix", "nondegeneracy_report",
    "offgrid_invariance", "orbit_shadow_error",
    "align_phase",
    "MapFamily", "coupled_standard_family", "finite_difference_family",
    "load_torus", "save_torus",
    "errors",
]
