"""Overlapping Schwarz preconditioners with spectral coarse spaces for the 2D Helmholtz wave guide."""
from .assembly import GlobalSystem, assemble_global, assemble_local
from .coarse import CoarseKind, CoarseSpec, assemble_coarse
from .harness import ExperimentConfig, ExperimentReport, run_experiment
from .linalg import gmres_right_preconditioned
from .media import MediumKind, MediumSpec
from .mesh import Mesh, build_unit_square_mesh, wavenumber_for_resolution
from .partition import Decomposition, PouKind, build_decomposition
from .precond import OrasPreconditioner, build_oras

__version__ = "0.1.0"
