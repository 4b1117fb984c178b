"""Parameter identification for one-dimensional nonlocal diffusion."""

from .assembly import assemble_system, apply_volume_constraint, check_quadrature
from .experiments import case_spec, convergence_table, run_identification
from .inverse import Problem, StateField, objective_and_gradient, solve_adjoint, solve_state
from .kernel import KernelSpec, fractional, integrable
from .mesh import Mesh1D, build_uniform
from .optimizer import BfgsConfig, minimize
from .theta import AdmissibleBox, Basis, ThetaField

__all__ = [
    "AdmissibleBox", "Basis", "BfgsConfig", "KernelSpec", "Mesh1D", "Problem", "StateField",
    "ThetaField", "apply_volume_constraint", "assemble_system", "build_uniform", "case_spec",
    "check_quadrature", "convergence_table", "fractional", "integrable", "minimize",
    "objective_and_gradient", "run_identification", "solve_adjoint", "solve_state",
]
