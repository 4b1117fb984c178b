"""Data sets A-D, fine-grid surrogates, identification runs and convergence tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import kernel as kern
from .assembly import OmegaQuadrature, PairQuadrature, l2_error_on_omega, weighted_theta_error
from .inverse import Problem, StateField
from .mesh import Mesh1D, build_uniform
from .optimizer import BfgsConfig, OptRun, minimize
from .theta import Basis, ThetaField, constant

log = logging.getLogger(__name__)

CSV_HEADER = ["N", "M", "e_u2", "rate_u", "e_theta", "rate_theta"]

# the identification problems are badly conditioned; a loose gradient
# tolerance stops well before the discretisation error is reached
EXPERIMENT_CFG = BfgsConfig(grad_tol=1e-13, max_iters=3000)


# -- closed-form data ----------------------------------------------------------


def theta_a(z):
    """2 + 0.4 (x + y - 1)^2 written in the midpoint z = (x + y) / 2."""
    z = np.asarray(z, dtype=float)
    return 2.0 + 0.4 * (2.0 * z - 1.0) ** 2


def theta_c(z):
    z = np.asarray(z, dtype=float)
    return np.where(z < 0.625, 0.2 + (z - 0.625) ** 2,
                    np.where(z < 0.75, z + 1.25, 14.4 * (z - 0.75) + 2.0))


def theta_d(z):
    z = np.asarray(z, dtype=float)
    return np.where((z > 0.2) & (z < 0.6), 0.1, 1.0)


def u_hat_b(x):
    x = np.asarray(x, dtype=float)
    return 2.5 * x * (1.0 - x)


def f_b(eps):
    # source for which u_hat_b solves the state equation with theta_a
    return lambda x: eps**2 + 24.0 * np.asarray(x) ** 2 - 24.0 * np.asarray(x) + 16.0


def _const(c):
    return lambda x: np.full(np.shape(x), float(c))


THETA_TRUE = {"A": theta_a, "B": theta_a, "C": theta_c, "D": theta_d}
THETA_BREAKS = {"A": [], "B": [], "C": [0.625, 0.75], "D": [0.2, 0.6]}


@dataclass(frozen=True)
class ExperimentSpec:
    case_id: str
    a: float
    b: float
    family: str
    eps: float
    s: float | None
    basis: str
    beta: float
    n: int
    m: int
    surrogate_n: int | None  # None: closed-form target
    fine_n: int  # grid used for the theta error functional when the target is closed form

    @property
    def kernel(self) -> kern.KernelSpec:
        return kern.KernelSpec(kern.Family(self.family), self.eps, self.s)

    @property
    def theta_true(self):
        return THETA_TRUE[self.case_id]

    @property
    def f(self):
        return f_b(self.eps) if self.case_id == "B" else _const(1.0 if self.case_id == "A" else 5.0)

    @property
    def g(self):
        return u_hat_b if self.case_id == "B" else _const(0.0)

    def state_mesh(self, n=None):
        return build_uniform(self.a, self.b, self.eps, n or self.n)

    def param_mesh(self):
        if self.m == 1:
            # one parameter element: below the state-mesh minimum, built by hand
            a, b, e = self.a, self.b, self.eps
            return Mesh1D(a, b, e, np.array([a - e, a, b, b + e]), 1, 1)
        return build_uniform(self.a, self.b, self.eps, self.m)

    def to_record(self) -> dict:
        return asdict(self)


def case_spec(case_id: str, n: int = 16, m: int = 4, eps: float | None = None,
              beta: float | None = None, surrogate_n: int | None = None) -> ExperimentSpec:
    case_id = case_id.upper()
    if case_id == "A":
        spec = ExperimentSpec("A", -1.0, 1.0, "fractional", 2.0**-4, 0.7, "linear", 0.0, n, m,
                              2**11, 2**11)
    elif case_id == "B":
        spec = ExperimentSpec("B", 0.0, 1.0, "integrable", 2.0**-4, None, "linear", 0.0, n, m,
                              None, 2**10)
    elif case_id == "C":
        spec = ExperimentSpec("C", 0.0, 1.0, "integrable", 2.0**-9, None, "linear", 0.0, n, m,
                              2**12, 2**12)
    elif case_id == "D":
        spec = ExperimentSpec("D", 0.0, 1.0, "integrable", 2.0**-9, None, "constant", 5e-4, n, m,
                              2**12, 2**12)
    else:
        raise ValueError(f"unknown case {case_id!r}")
    if eps is not None:
        spec = replace(spec, eps=float(eps))
    if beta is not None:
        spec = replace(spec, beta=float(beta))
    if surrogate_n is not None and spec.surrogate_n is not None:
        spec = replace(spec, surrogate_n=int(surrogate_n), fine_n=int(surrogate_n))
    return spec


# -- surrogates ----------------------------------------------------------------


def make_surrogate(spec: ExperimentSpec, threads: int = 0) -> StateField:
    """Fine-grid state for theta_true, used as the target for cases A, C, D."""
    if spec.surrogate_n is None:
        raise ValueError(f"case {spec.case_id} has a closed-form target, no surrogate")
    mesh = spec.state_mesh(spec.surrogate_n)
    prob = Problem(mesh, spec.kernel, spec.f, spec.g, threads=threads,
                   theta_breaks=tuple(THETA_BREAKS[spec.case_id]))
    return prob.solve_state(spec.theta_true)


def save_surrogate(path, spec: ExperimentSpec, u: StateField) -> None:
    rec = {"case": spec.case_id, "kernel": spec.kernel.describe(), **u.to_record()}
    Path(path).write_text(json.dumps(rec))


def load_surrogate(path, spec: ExperimentSpec | None = None) -> StateField:
    rec = json.loads(Path(path).read_text())
    u = StateField.from_record(rec)
    if spec is not None:
        if rec["case"] != spec.case_id or not math.isclose(u.mesh.eps, spec.eps):
            raise ValueError(f"surrogate {path} is for case {rec['case']} eps={u.mesh.eps}, "
                             f"not case {spec.case_id} eps={spec.eps}")
    return u


def surrogate_cached(spec: ExperimentSpec, cache_dir, threads: int = 0) -> StateField:
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    path = cache / f"surrogate_{spec.case_id}_eps{spec.eps:.6g}_n{spec.surrogate_n}.json"
    if path.exists():
        return load_surrogate(path, spec)
    u = make_surrogate(spec, threads)
    save_surrogate(path, spec, u)
    return u


# -- identification ------------------------------------------------------------


@dataclass
class IdentificationResult:
    spec: ExperimentSpec
    theta: ThetaField
    state: StateField
    run: OptRun
    e_u2: float
    e_theta: float
    j_total: float

    def to_record(self) -> dict:
        return {
            "spec": self.spec.to_record(),
            "theta": self.theta.to_record(),
            "state": self.state.to_record(),
            "converged": bool(self.run.converged),
            "message": self.run.message,
            "iterates": [[s.f, s.gnorm, s.alpha] for s in self.run.iterates],
            "n_evals": self.run.n_evals,
            "e_u2": self.e_u2,
            "e_theta": self.e_theta,
            "j_total": self.j_total,
        }


def build_problem(spec: ExperimentSpec, target=None, threads: int = 0) -> Problem:
    if target is None:
        if spec.surrogate_n is not None:
            raise ValueError(f"case {spec.case_id} needs a surrogate target")
        target = u_hat_b
    # unconstrained in theta: only loss of coercivity makes a trial infeasible
    return Problem(spec.state_mesh(), spec.kernel, spec.f, spec.g, target, spec.beta, threads,
                   require_positive=False, theta_breaks=tuple(spec.param_mesh().nodes))


def reduced_objective(prob: Problem, template: ThetaField):
    """(value, gradient) of the coefficients; infeasible theta gives +inf."""

    def fg(c):
        th = template.with_coeffs(c)
        try:
            rep = prob.objective_and_gradient(th)
        except (ValueError, np.linalg.LinAlgError):
            return np.inf, np.full(c.size, np.nan)
        return rep.j_total, rep.grad

    return fg


def theta_error(spec: ExperimentSpec, theta: ThetaField, u_star: StateField,
                quad: PairQuadrature | None = None, region: str = "coupled") -> float:
    if quad is None:
        breaks = np.concatenate([THETA_BREAKS[spec.case_id], theta.mesh.nodes])
        quad = PairQuadrature(u_star.mesh, spec.kernel, z_breaks=breaks)
    return weighted_theta_error(spec.theta_true, theta, spec.kernel, u_star.mesh, u_star, quad,
                                region)


def fine_u_star(spec: ExperimentSpec, surrogate: StateField | None) -> StateField:
    if surrogate is not None:
        return surrogate
    mesh = spec.state_mesh(spec.fine_n)
    return StateField(mesh, u_hat_b(mesh.nodes))


def run_identification(spec: ExperimentSpec, cfg: BfgsConfig = EXPERIMENT_CFG,
                       surrogate: StateField | None = None, theta0: ThetaField | None = None,
                       threads: int = 0) -> IdentificationResult:
    target = surrogate if spec.surrogate_n is not None else None
    prob = build_problem(spec, target, threads)
    pmesh = spec.param_mesh()
    theta0 = theta0 or constant(cfg.init_value, pmesh, Basis(spec.basis))
    run = minimize(reduced_objective(prob, theta0), theta0.coeffs, cfg)
    theta = theta0.with_coeffs(run.x)
    u = prob.solve_state(theta)
    e_u2 = l2_error_on_omega(u, target if target is not None else u_hat_b)
    u_star = fine_u_star(spec, surrogate)
    e_th = theta_error(spec, theta, u_star)
    log.info("case %s N=%d M=%d: e_u2=%.3e e_theta=%.3e (%s, %d iters)", spec.case_id,
             spec.n, spec.m, e_u2, e_th, run.message, len(run.iterates) - 1)
    return IdentificationResult(spec, theta, u, run, e_u2, e_th, run.f)


def theta_l2_error(spec: ExperimentSpec, theta: ThetaField) -> float:
    """||theta_M - theta_true||_{L2(Omega)} on a partition resolving both."""
    fine = np.linspace(spec.a, spec.b, 4097)
    quad = OmegaQuadrature.on(spec.a, spec.b, theta.mesh.nodes, THETA_BREAKS[spec.case_id], fine)
    d = theta(quad.x) - spec.theta_true(quad.x)
    return float(np.sqrt(quad.integrate(d * d)))


# -- convergence tables ---------------------------------------------------------


@dataclass
class ConvergenceRow:
    n: int
    m: int
    e_u2: float
    rate_u: float | None
    e_theta_star: float
    rate_theta: float | None
    converged: bool = True


def rate(e_prev, e_cur):
    if e_prev is None or e_cur is None or not (e_prev > 0 and e_cur > 0):
        return None
    return float(np.log2(e_prev / e_cur))


def parse_levels(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        n, m = item.strip().split(":")
        out.append((int(n), int(m)))
    return out


def convergence_table(case_id: str, eps: float, levels, cfg: BfgsConfig = EXPERIMENT_CFG,
                      surrogate: StateField | None = None, beta: float | None = None,
                      threads: int = 0) -> list[ConvergenceRow]:
    """One row per (N, M) level; a level that raises is flagged and breaks the rate chain."""
    if case_spec(case_id).surrogate_n is not None and surrogate is None:
        raise ValueError(f"case {case_id} needs a surrogate target")
    rows: list[ConvergenceRow] = []
    prev = None
    for n, m in levels:
        spec = case_spec(case_id, n, m, eps=eps, beta=beta)
        try:
            res = run_identification(spec, cfg, surrogate, threads=threads)
        except Exception as exc:  # failed cell: flag it and break the rate chain
            log.error("level N=%d M=%d failed: %s", n, m, exc)
            rows.append(ConvergenceRow(n, m, np.nan, None, np.nan, None, False))
            prev = None
            continue
        row = ConvergenceRow(
            n, m, res.e_u2, rate(prev and prev.e_u2, res.e_u2), res.e_theta,
            rate(prev and prev.e_theta_star, res.e_theta), bool(res.run.converged))
        rows.append(row)
        prev = row
    return rows


def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return f"{v:.6e}" if isinstance(v, float) else str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.n, r.m, _fmt(r.e_u2), _fmt(r.rate_u), _fmt(r.e_theta_star),
                    _fmt(r.rate_theta)])
    return buf.getvalue()


# -- profiles ------------------------------------------------------------------


def emit_theta_profile(theta: ThetaField, n_samples: int):
    if n_samples < 2:
        raise ValueError("need at least two samples")
    z = np.linspace(theta.mesh.lo, theta.mesh.hi, n_samples)
    return z, theta(z)


def profile_to_csv(z, v) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z", "theta"])
    for zi, vi in zip(z, v):
        w.writerow([f"{zi:.12g}", f"{vi:.12g}"])
    return buf.getvalue()
