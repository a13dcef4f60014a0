"""Localized orthogonal decomposition (LOD) generalized FEM for parabolic problems
with rough, high-contrast diffusion coefficients on the unit square."""

from ._kernels import BACKEND_NAME
from .assembly import (ClementMatrix, FemOperators, assemble, clement, coarse_galerkin_operators,
                       interior_prolongation, interpolate, l2_project_coarse, load_vector)
from .coeff import CoeffField, constant_field, load_field, random_field, save_field, value_at
from .errors import (BlowUpError, ConfigParseError, ConfigurationError, ConvergenceError,
                     DomainError, LodError, SaddlePointError, SolverError, StageError)
from .harness import (ConvergenceReport, ExperimentConfig, decay_study, fit_order, read_config,
                      read_report, run_experiment, write_config, write_report)
from .linalg import SolveReport, cg_solve, energy_norm, l2_norm, saddle_solve
from .lod import (CorrectorSet, MultiscaleSpace, build_global_space, build_space,
                  compute_correctors, corrector_decay, global_correctors, ms_ritz_project)
from .mesh import MeshPair, Patch, TriMesh, build_mesh, build_pair, patch
from .timestep import (Schedule, Trajectory, allen_cahn, backward_euler_linear,
                       backward_euler_semilinear, ms_initial_projection)

__version__ = "0.1.0"
