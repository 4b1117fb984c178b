"""Dense BFGS with a strong-Wolfe line search (bracketing + zoom)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BfgsConfig:
    max_iters: int = 500
    grad_tol: float = 1e-8
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    init_value: float = 1.0
    max_trials: int = 40

    def __post_init__(self):
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class Step:
    f: float
    gnorm: float
    alpha: float
    # line-search data of the accepted trial: f(0), f'(0), f'(alpha)
    f0: float = np.nan
    d0: float = np.nan
    d_alpha: float = np.nan
    # False when only sufficient decrease holds (feasibility boundary in the way)
    strong_wolfe: bool = True


@dataclass
class OptRun:
    x: np.ndarray
    f: float
    grad: np.ndarray
    converged: bool
    message: str
    iterates: list[Step] = field(default_factory=list)
    n_evals: int = 0


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic interpolant on [a, b], or None if degenerate."""
    d1 = da + db - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    den = db - da + 2 * d2
    if den == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / den


def wolfe_search(phi, f0, d0, alpha0, c1, c2, max_trials, alpha_max=1e10):
    """Return (alpha, f, g, trials, strong) for a step along the search direction.

    ``phi(alpha)`` returns (f, derivative along the direction, gradient).
    Non-finite values count as a failed sufficient-decrease test. When no
    strong-Wolfe point is found, typically because the objective is still
    decreasing where it stops being defined, the best trial with sufficient
    decrease is returned with ``strong=False``. Without any such trial a
    LineSearchError is raised.
    """
    trials = 0
    best = None

    def ok_armijo(a, fa):
        return np.isfinite(fa) and fa <= f0 + c1 * a * d0

    def note(a, fa, ga):
        nonlocal best
        if ok_armijo(a, fa) and fa < f0 and (best is None or fa < best[1]):
            best = (a, fa, ga)

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        nonlocal trials
        while trials < max_trials:
            a = None
            if np.isfinite(fhi) and np.isfinite(dhi):
                a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            span = hi_b - lo_b
            if a is None or not (lo_b + 0.1 * span <= a <= hi_b - 0.1 * span):
                a = 0.5 * (lo + hi)
            fa, da, ga = phi(a)
            trials += 1
            note(a, fa, ga)
            if not ok_armijo(a, fa) or fa >= flo:
                hi, fhi, dhi = a, fa, da
            else:
                if abs(da) <= -c2 * d0:
                    return a, fa, ga, True
                if da * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, fa, da
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return None

    def finish(out):
        if out is not None:
            return (*out[:3], trials, out[3])
        if best is not None:
            return (*best, trials, False)
        raise LineSearchError(f"no decrease found in {trials} trials")

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = alpha0
    while trials < max_trials:
        fa, da, ga = phi(a)
        trials += 1
        note(a, fa, ga)
        if not ok_armijo(a, fa) or (trials > 1 and fa >= f_prev):
            return finish(zoom(a_prev, f_prev, d_prev, a, fa, da))
        if abs(da) <= -c2 * d0:
            return a, fa, ga, trials, True
        if da >= 0:
            return finish(zoom(a, fa, da, a_prev, f_prev, d_prev))
        if a >= alpha_max:
            # still descending at the largest allowed step
            return a, fa, ga, trials, False
        a_prev, f_prev, d_prev = a, fa, da
        a = min(2.0 * a, alpha_max)
    return finish(None)


def minimize(f_and_g, x0, cfg: BfgsConfig = BfgsConfig(), debug: bool = False) -> OptRun:
    """Minimise with BFGS on the inverse Hessian.

    ``f_and_g(x)`` returns (value, gradient). A non-finite value marks x as
    infeasible; the line search backs off from it.
    """
    x = np.array(x0, dtype=float)
    f, g = f_and_g(x)
    g = np.asarray(g, dtype=float)
    n_evals = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the starting point")
    gtol = cfg.grad_tol * max(1.0, float(np.abs(g).max()))
    n = x.size
    H = np.eye(n)
    first = True
    run = OptRun(x, f, g, False, "max iterations reached")
    run.iterates.append(Step(f, float(np.abs(g).max()), 0.0))

    for it in range(cfg.max_iters):
        if np.abs(g).max() <= gtol:
            run.converged, run.message = True, "gradient tolerance reached"
            break
        p = -H @ g
        d0 = float(g @ p)
        if d0 >= 0:
            # lost descent; restart from steepest descent
            H = np.eye(n)
            first = True
            p = -g
            d0 = float(g @ p)
        alpha0 = min(1.0, 1.0 / float(np.abs(g).max())) if first else 1.0

        def phi(a):
            nonlocal n_evals
            fa, ga = f_and_g(x + a * p)
            n_evals += 1
            ga = np.asarray(ga, dtype=float)
            da = float(ga @ p) if np.all(np.isfinite(ga)) else np.nan
            return fa, da, ga

        try:
            alpha, f_new, g_new, _, strong = wolfe_search(phi, f, d0, alpha0, cfg.wolfe_c1,
                                                          cfg.wolfe_c2, cfg.max_trials)
        except LineSearchError as exc:
            run.message = f"line search failed at iteration {it}: {exc}"
            log.warning(run.message)
            break

        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        if first and sy > 0:
            H = (sy / float(y @ y)) * np.eye(n)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (y @ Hy) + rho) * np.outer(s, s)
            first = False
        if debug:
            np.linalg.cholesky(0.5 * (H + H.T))
        x, f, g = x + s, f_new, g_new
        run.iterates.append(Step(f, float(np.abs(g).max()), alpha, run.iterates[-1].f, d0,
                                 float(g @ p), strong))
        log.debug("iter %d f=%.6e |g|=%.3e alpha=%.3e", it, f, np.abs(g).max(), alpha)
    else:
        if np.abs(g).max() <= gtol:
            run.converged, run.message = True, "gradient tolerance reached"

    run.x, run.f, run.grad, run.n_evals = x, f, g, n_evals
    return run
