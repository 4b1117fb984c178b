"""Finite-dimensional diffusion parameters theta(x, y) = theta((x + y) / 2).

Free coefficients live on Omega only. Values on the interaction layer are
always derived: the linear basis extends the affine piece of the adjacent
element outwards, the constant basis copies the adjacent element value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh1D, from_description


class Basis(str, Enum):
    LINEAR = "linear"
    CONSTANT = "constant"


@dataclass(frozen=True)
class AdmissibleBox:
    theta_lo: float
    theta_hi: float
    w1inf_bound: float = np.inf

    def __post_init__(self):
        if not 0 < self.theta_lo <= self.theta_hi:
            raise ValueError("need 0 < theta_lo <= theta_hi")


def n_coeffs(mesh: Mesh1D, basis: Basis) -> int:
    j = mesh.interior_elem_count
    return j + 1 if Basis(basis) is Basis.LINEAR else j


def basis_matrix(mesh: Mesh1D, basis: Basis, z) -> sp.csr_matrix:
    """Sparse matrix B with B @ coeffs = theta(z) for each point of z (flattened)."""
    z = np.asarray(z, dtype=float).ravel()
    if np.any(z < mesh.lo) or np.any(z > mesh.hi):
        raise ValueError(f"theta evaluated outside [{mesh.lo}, {mesh.hi}]")
    k = mesh.constraint_elem_count_per_side
    j = mesh.interior_elem_count
    omega_nodes = mesh.nodes[k : k + j + 1]
    # element of Omega used for each point; outside Omega use the adjacent one
    e = np.searchsorted(omega_nodes, z, side="left") - 1
    e = np.clip(e, 0, j - 1)
    rows = np.arange(z.size)
    if Basis(basis) is Basis.CONSTANT:
        return sp.csr_matrix((np.ones(z.size), (rows, e)), shape=(z.size, j))
    x0, x1 = omega_nodes[e], omega_nodes[e + 1]
    t = (z - x0) / (x1 - x0)
    data = np.concatenate([1.0 - t, t])
    r = np.concatenate([rows, rows])
    c = np.concatenate([e, e + 1])
    return sp.csr_matrix((data, (r, c)), shape=(z.size, j + 1))


@dataclass(frozen=True)
class ThetaField:
    mesh: Mesh1D
    basis: Basis
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (n_coeffs(self.mesh, self.basis),):
            raise ValueError(
                f"{self.basis.value} basis on {self.mesh.interior_elem_count} elements "
                f"needs {n_coeffs(self.mesh, self.basis)} coefficients, got {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, z):
        return evaluate(self, z)

    def with_coeffs(self, coeffs) -> "ThetaField":
        return replace(self, coeffs=np.asarray(coeffs, dtype=float))

    def to_record(self) -> dict:
        return {
            "basis": self.basis.value,
            "mesh": self.mesh.describe(),
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ThetaField":
        return cls(from_description(rec["mesh"]), Basis(rec["basis"]), rec["coeffs"])


def evaluate(t: ThetaField, z):
    out = basis_matrix(t.mesh, t.basis, z) @ t.coeffs
    return float(out[0]) if np.ndim(z) == 0 else out.reshape(np.shape(z))


def eval_two_point(t: ThetaField, x, y):
    return evaluate(t, 0.5 * (np.asarray(x, dtype=float) + np.asarray(y, dtype=float)))


def interpolate(func, mesh: Mesh1D, basis: Basis) -> ThetaField:
    """Nodal interpolant (linear) or midpoint sample (constant) of ``func``."""
    k = mesh.constraint_elem_count_per_side
    j = mesh.interior_elem_count
    omega_nodes = mesh.nodes[k : k + j + 1]
    if Basis(basis) is Basis.LINEAR:
        pts = omega_nodes
    else:
        pts = 0.5 * (omega_nodes[:-1] + omega_nodes[1:])
    return ThetaField(mesh, basis, np.asarray(func(pts), dtype=float))


def constant(value: float, mesh: Mesh1D, basis: Basis) -> ThetaField:
    return ThetaField(mesh, basis, np.full(n_coeffs(mesh, basis), float(value)))


def _jump_operator(mesh: Mesh1D, basis: Basis) -> sp.csr_matrix:
    k = mesh.constraint_elem_count_per_side
    j = mesh.interior_elem_count
    nodes = mesh.nodes[k : k + j + 1]
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    e = basis_matrix(mesh, basis, mids)
    return (e[:-1] - e[1:]).tocsr()


def jump_penalty(t: ThetaField, beta: float) -> float:
    """beta * sum of squared jumps between midpoint values of adjacent elements."""
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    d = _jump_operator(t.mesh, t.basis) @ t.coeffs
    return float(beta * d @ d)


def jump_penalty_grad(t: ThetaField, beta: float) -> np.ndarray:
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    op = _jump_operator(t.mesh, t.basis)
    return 2.0 * beta * (op.T @ (op @ t.coeffs))


def project_box(t: ThetaField, box: AdmissibleBox) -> ThetaField:
    return t.with_coeffs(np.clip(t.coeffs, box.theta_lo, box.theta_hi))
