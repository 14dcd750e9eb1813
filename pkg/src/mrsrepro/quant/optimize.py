"""Box-constrained Levenberg-Marquardt for small dense least-squares problems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MU_INITIAL = 1e-3
MU_FLOOR = 1e-12
MU_CEILING = 1e16


@dataclass
class LsqOutcome:
    x: np.ndarray
    cost: float
    converged: bool
    n_iterations: int
    reason: str


def bounded_levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iterations: int = 200,
    gradient_tolerance: float = 1e-8,
    cost_tolerance: float = 1e-10,
) -> LsqOutcome:
    """Minimize ``||residual(x)||^2`` subject to ``lower <= x <= upper``.

    Marquardt-scaled damping on the free variables; variables sitting on a
    bound with the gradient pushing outward are frozen for that iteration,
    and every trial point is projected back into the box.

    Convergence is declared when the projected gradient norm drops below
    ``gradient_tolerance``, when an accepted step lowers the cost by less
    than ``cost_tolerance`` relative, or when no damping level yields a
    decrease (the cost is at a floating-point minimum). ``jacobian`` is only
    called at accepted points, after ``residual`` was evaluated there.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    r = residual(x)
    cost = float(r @ r)
    if max_iterations <= 0:
        return LsqOutcome(x, cost, False, 0, "max_iterations")
    jac = jacobian(x)
    mu = MU_INITIAL
    for it in range(1, max_iterations + 1):
        g = jac.T @ r
        jtj = jac.T @ jac
        pg = x - np.clip(x - g, lower, upper)
        if np.linalg.norm(pg) < gradient_tolerance:
            return LsqOutcome(x, cost, True, it - 1, "gradient")
        frozen = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        free = ~frozen
        a = jtj[np.ix_(free, free)]
        b = -g[free]
        d = np.diag(a).copy()
        d = np.maximum(d, 1e-12 * max(d.max(initial=0.0), 1e-300))
        while True:
            try:
                step = np.linalg.solve(a + mu * np.diag(d), b)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = x.copy()
                trial[free] += step
                trial = np.clip(trial, lower, upper)
                r_trial = residual(trial)
                c_trial = float(r_trial @ r_trial)
                if c_trial < cost:
                    break
            mu *= 4.0
            if mu > MU_CEILING:
                return LsqOutcome(x, cost, True, it, "stalled")
        rel = (cost - c_trial) / cost
        x, r, cost = trial, r_trial, c_trial
        mu = max(mu / 3.0, MU_FLOOR)
        if rel < cost_tolerance:
            return LsqOutcome(x, cost, True, it, "cost")
        jac = jacobian(x)
    return LsqOutcome(x, cost, False, max_iterations, "max_iterations")
