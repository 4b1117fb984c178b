"""Truncated interaction kernels.

Two families are supported:

* ``fractional``: 1 / |x - y|^(1 + 2s) on the eps-ball
* ``integrable``: 1 / (eps^2 |x - y|) on the eps-ball

The diffusion parameter is never folded into the kernel; assembly multiplies
the two.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Family(str, Enum):
    FRACTIONAL = "fractional"
    INTEGRABLE = "integrable"


@dataclass(frozen=True)
class KernelSpec:
    family: Family
    eps: float
    s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.eps > 0:
            raise ValueError(f"kernel radius must be positive, got {self.eps}")
        if self.family is Family.FRACTIONAL:
            if self.s is None or not 0 < self.s < 1:
                raise ValueError(f"fractional kernel needs s in (0, 1), got {self.s}")
        elif self.s is not None:
            raise ValueError("s only applies to the fractional kernel")

    def describe(self) -> dict:
        return {"family": self.family.value, "eps": self.eps, "s": self.s}


def fractional(eps: float, s: float) -> KernelSpec:
    return KernelSpec(Family.FRACTIONAL, eps, s)


def integrable(eps: float) -> KernelSpec:
    return KernelSpec(Family.INTEGRABLE, eps)


def singularity_exponent(k: KernelSpec) -> float:
    """Power p with gamma(x, y) ~ |x - y|^(-p) near the diagonal."""
    if k.family is Family.FRACTIONAL:
        return 1.0 + 2.0 * k.s
    return 1.0


def eval_radial(k: KernelSpec, r):
    """Kernel as a function of r = |x - y| > 0 (vectorised)."""
    r = np.abs(np.asarray(r, dtype=float))
    inside = r <= k.eps
    rr = np.where(inside, r, 1.0)
    if k.family is Family.FRACTIONAL:
        val = rr ** -singularity_exponent(k)
    else:
        val = 1.0 / (k.eps**2 * rr)
    return np.where(inside, val, 0.0)


def eval(k: KernelSpec, x, y):
    """gamma(x, y). Raises on the diagonal, where the kernel is singular."""
    r = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if np.any(r == 0):
        raise ValueError("kernel evaluated at x == y")
    out = eval_radial(k, r)
    return float(out) if out.ndim == 0 else out
