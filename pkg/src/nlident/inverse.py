"""Reduced-space identification: state solve, adjoint solve, objective and gradient.

With the state u(theta) eliminated, the matching functional

    J(theta) = 1/2 ||u(theta) - u_hat||^2_{L2(Omega)}  (+ beta * jump penalty)

has gradient ``dJ/dc_k = -B(psi_k; u, w)`` where w solves the adjoint problem
with the residual u - u_hat as source and vanishes on the interaction layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import (
    NonlocalSystem,
    OmegaQuadrature,
    PairQuadrature,
    apply_volume_constraint,
    load_vector,
)
from .banded import Factor
from .kernel import KernelSpec
from .mesh import Mesh1D, from_description
from .theta import ThetaField, jump_penalty, jump_penalty_grad


@dataclass(frozen=True)
class StateField:
    """Continuous piecewise-linear function given by its nodal values."""

    mesh: Mesh1D
    values: np.ndarray = field(repr=False)

    def __call__(self, x):
        return np.interp(x, self.mesh.nodes, self.values)

    def to_record(self) -> dict:
        return {"mesh": self.mesh.describe(), "values": np.asarray(self.values).tolist()}

    @classmethod
    def from_record(cls, rec: dict) -> "StateField":
        return cls(from_description(rec["mesh"]), np.asarray(rec["values"], dtype=float))


@dataclass(frozen=True)
class ObjectiveReport:
    j_match: float
    j_reg: float
    grad: np.ndarray = field(repr=False)

    @property
    def j_total(self) -> float:
        return self.j_match + self.j_reg


@dataclass
class Problem:
    """Discrete identification problem on a fixed state mesh.

    ``target`` is a callable on Omega (closed form or a fine StateField).
    With ``require_positive`` off, a parameter is accepted whenever the
    interior stiffness block stays positive definite, which lets an
    unconstrained optimizer pass through small non-positive values.
    ``theta_breaks`` are the parameter mesh nodes, handed to the quadrature so
    it resolves the kinks of piecewise parameters.
    """

    mesh: Mesh1D
    kernel: KernelSpec
    f: object
    g: object
    target: object = None
    beta: float = 0.0
    threads: int = 0
    require_positive: bool = True
    theta_breaks: tuple = ()
    quad: PairQuadrature = field(init=False, repr=False)

    def __post_init__(self):
        self.quad = PairQuadrature(self.mesh, self.kernel, threads=self.threads,
                                   z_breaks=self.theta_breaks)
        self.load_full = load_vector(self.mesh, self.f)
        self._factor_key = None
        if self.target is not None:
            breaks = [self.mesh.nodes]
            if hasattr(self.target, "mesh"):
                breaks.append(self.target.mesh.nodes)
            oq = OmegaQuadrature.on(self.mesh.a, self.mesh.b, *breaks)
            self.omega_quad = oq
            self.target_q = np.asarray(self.target(oq.x), dtype=float)
            self.interp_q = _interp_matrix(self.mesh, oq.x)

    # -- linear algebra, one factorisation per theta -------------------------
    def _prepare(self, theta):
        key = _theta_key(theta)
        if key is not None and key == self._factor_key:
            return self._reduced, self._factor
        a = self.quad.stiffness(theta, check_positive=self.require_positive)
        system = NonlocalSystem(self.mesh, self.kernel, a, self.load_full)
        self._reduced = apply_volume_constraint(system, self.g)
        self._factor = Factor(self._reduced.matrix)
        self._stiffness = a
        self._factor_key = key
        return self._reduced, self._factor

    def stiffness(self, theta):
        self._prepare(theta)
        return self._stiffness

    def solve_state(self, theta) -> StateField:
        red, fac = self._prepare(theta)
        u = red.pinned.copy()
        u[red.interior] = fac.solve(red.rhs)
        return StateField(self.mesh, u)

    def residual(self, u: StateField) -> np.ndarray:
        """dJ/du over all nodes: P^T W (P u - u_hat)."""
        e = self.interp_q @ u.values - self.target_q
        return self.interp_q.T @ (self.omega_quad.w * e)

    def j_match(self, u: StateField) -> float:
        e = self.interp_q @ u.values - self.target_q
        return 0.5 * float(np.dot(self.omega_quad.w, e * e))

    def solve_adjoint(self, theta, u: StateField) -> StateField:
        red, fac = self._prepare(theta)
        w = np.zeros(self.mesh.n_nodes)
        w[red.interior] = fac.solve(self.residual(u)[red.interior])
        return StateField(self.mesh, w)

    def objective_and_gradient(self, theta: ThetaField) -> ObjectiveReport:
        u = self.solve_state(theta)
        w = self.solve_adjoint(theta, u)
        grad = -self.quad.param_pairing(theta.mesh, theta.basis, u.values, w.values)
        j_reg = 0.0
        if self.beta:
            j_reg = jump_penalty(theta, self.beta)
            grad = grad + jump_penalty_grad(theta, self.beta)
        return ObjectiveReport(self.j_match(u), j_reg, grad)


def _theta_key(theta):
    if isinstance(theta, ThetaField):
        return ("field", tuple(theta.mesh.describe().items()), theta.basis.value,
                theta.coeffs.tobytes())
    if isinstance(theta, (int, float)):
        return ("const", float(theta))
    return None


def _interp_matrix(mesh: Mesh1D, x) -> sp.csr_matrix:
    e = mesh.locate(x)
    nodes = mesh.nodes
    t = (x - nodes[e]) / (nodes[e + 1] - nodes[e])
    rows = np.arange(x.size)
    return sp.csr_matrix(
        (np.concatenate([1 - t, t]), (np.concatenate([rows, rows]), np.concatenate([e, e + 1]))),
        shape=(x.size, mesh.n_nodes),
    )


# module-level wrappers -------------------------------------------------------


def solve_state(theta, problem: Problem) -> StateField:
    return problem.solve_state(theta)


def solve_adjoint(theta, u: StateField, problem: Problem) -> StateField:
    return problem.solve_adjoint(theta, u)


def objective_and_gradient(theta: ThetaField, problem: Problem) -> ObjectiveReport:
    return problem.objective_and_gradient(theta)
