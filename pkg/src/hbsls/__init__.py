"""Fast semi-direct least squares for hierarchically block separable
kernel matrices."""

from .geometry import PointSet, ellipse, make_geometry
from .kernels import KernelSpec, dense_matrix
from .skeleton import CompressedMatrix, CompressionConfig, compress
from .solver import (SolverConfig, prepare, pseudoinverse_apply,
                     solve_equality_lstsq, solve_overdetermined,
                     solve_underdetermined)
from .update import ModificationSpec, build_augmented, solve_augmented_gmres

__version__ = "0.1.0"
