"""Partial-data inverse problems for biharmonic operators with tensor perturbations.

Submodules
----------
tensor_core      symmetric tensors, delta products and traces, pairings
null_recovery    tensors from their values on the complex null cone
grid, pde_solver clamped bilaplacian on the unit square, normal traces
cgo              oscillating solutions vanishing on the inaccessible boundary
semilinear       semilinear forward map, DN data, mixed divided differences
reconstruct      integral identities and least-squares coefficient recovery
"""
from .grid import DnData, GridDomain, ScalarField, Segment
from .null_recovery import NullVector, make_null_vector, recover_general, standard_probe_set
from .pde_solver import ClampedSolver, boundary_normal_traces, dn_data, solve_clamped
from .semilinear import CoefficientModel, PolyTensorField, dn_map, mixed_difference, solve_semilinear
from .tensor_core import SymTensor, trace_free_decompose

__version__ = "0.1.0"

__all__ = [
    "ClampedSolver", "CoefficientModel", "DnData", "GridDomain", "NullVector",
    "PolyTensorField", "ScalarField", "Segment", "SymTensor", "boundary_normal_traces",
    "dn_data", "dn_map", "make_null_vector", "mixed_difference", "recover_general",
    "solve_clamped", "solve_semilinear", "standard_probe_set", "trace_free_decompose",
]
