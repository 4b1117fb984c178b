"""Uniform 1D partitions of Omega = (a, b) plus its interaction layer of width eps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    eps: float
    nodes: np.ndarray = field(repr=False)
    interior_elem_count: int
    constraint_elem_count_per_side: int

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        k, j = self.constraint_elem_count_per_side, self.interior_elem_count
        if nodes.size != j + 2 * k + 1 or np.any(np.diff(nodes) <= 0):
            raise MeshError("nodes must be strictly increasing with J + 2K + 1 entries")
        tol = 1e-12 * (self.b - self.a + 2 * self.eps)
        ends = [nodes[0] - (self.a - self.eps), nodes[-1] - (self.b + self.eps),
                nodes[k] - self.a, nodes[k + j] - self.b]
        if max(abs(e) for e in ends) > tol:
            raise MeshError("nodes must span [a - eps, b + eps] with a and b as nodes")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_elems(self) -> int:
        return self.nodes.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h(self) -> float:
        """Width of the elements inside Omega."""
        return (self.b - self.a) / self.interior_elem_count

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    @property
    def omega_elems(self) -> np.ndarray:
        """Indices of the elements inside Omega."""
        k = self.constraint_elem_count_per_side
        return np.arange(k, k + self.interior_elem_count)

    @property
    def interior_nodes(self) -> np.ndarray:
        """Nodes strictly inside Omega; these carry the unknowns."""
        k = self.constraint_elem_count_per_side
        return np.arange(k + 1, k + self.interior_elem_count)

    @property
    def constraint_nodes(self) -> np.ndarray:
        """Nodes in the closure of the interaction layer (including a and b)."""
        k = self.constraint_elem_count_per_side
        left = np.arange(0, k + 1)
        right = np.arange(k + self.interior_elem_count, self.n_nodes)
        return np.concatenate([left, right])

    def locate(self, x):
        """Element index containing x; shared nodes go to the left element."""
        xa = np.asarray(x, dtype=float)
        if np.any(xa < self.lo) or np.any(xa > self.hi):
            raise MeshError(f"point outside [{self.lo}, {self.hi}]")
        idx = np.searchsorted(self.nodes, xa, side="left") - 1
        idx = np.clip(idx, 0, self.n_elems - 1)
        return int(idx) if np.ndim(idx) == 0 else idx

    def describe(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "eps": self.eps,
            "n_interior": self.interior_elem_count,
        }


def build_uniform(a: float, b: float, eps: float, n_interior: int) -> Mesh1D:
    """Split (a, b) into ``n_interior`` equal elements and pad each side with eps.

    The padding uses elements of the interior width when eps is a whole
    multiple of it, and a single element of width eps otherwise.
    """
    if not b > a:
        raise MeshError(f"need b > a, got a={a}, b={b}")
    if eps < 0:
        raise MeshError(f"eps must be non-negative, got {eps}")
    if int(n_interior) != n_interior or n_interior < 2:
        raise MeshError(f"n_interior must be an integer >= 2, got {n_interior}")
    n_interior = int(n_interior)
    h = (b - a) / n_interior
    inner = a + h * np.arange(n_interior + 1)
    inner[-1] = b

    if eps == 0:
        k, left, right = 0, np.empty(0), np.empty(0)
    else:
        ratio = eps / h
        m = round(ratio)
        if m >= 1 and abs(ratio - m) <= 1e-12 * ratio:
            k = m
            steps = h * np.arange(k, 0, -1)
            left = a - steps
            right = b + steps[::-1]
            left[0], right[-1] = a - eps, b + eps
        else:
            k = 1
            left, right = np.array([a - eps]), np.array([b + eps])
    nodes = np.concatenate([left, inner, right])
    return Mesh1D(a, b, eps, nodes, n_interior, k)


def from_description(d: dict) -> Mesh1D:
    return build_uniform(d["a"], d["b"], d["eps"], d["n_interior"])
