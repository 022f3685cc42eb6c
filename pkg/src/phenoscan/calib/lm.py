"""Small dense Levenberg-Marquardt solver with a forward-difference Jacobian.

Problems here have at most a few hundred parameters and tens of thousands of
residuals, so a dense normal-equation solve per trial step is cheap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    initial_cost: float
    n_iter: int
    n_accepted: int
    converged: bool
    message: str
    costs: list[float] = field(default_factory=list)
    jac: np.ndarray | None = None


def forward_jacobian(fun, x, r0, rel_step=1e-6):
    n = len(x)
    J = np.empty((len(r0), n))
    for i in range(n):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xp[i] += h
        J[:, i] = (fun(xp) - r0) / h
    return J


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    *,
    max_iter: int = 200,
    ftol: float = 1e-12,
    rel_step: float = 1e-6,
    cost_floor: float = 0.0,
    lam0: float = 1e-3,
) -> LMResult:
    """Minimize ``0.5 * ||fun(x)||^2``.

    Stops when an accepted step lowers the cost by less than ``ftol``
    (relative), when the cost drops to ``cost_floor``, when no damping level
    yields a decrease, or after ``max_iter`` Jacobian evaluations.  The cost
    sequence over accepted steps is strictly decreasing.
    """
    x = np.array(x0, dtype=float)
    r = fun(x)
    cost = 0.5 * float(r @ r)
    initial = cost
    costs = [cost]
    lam = lam0
    n_acc = 0
    J = None
    if cost <= cost_floor:
        return LMResult(x, cost, initial, 0, 0, True, "initial cost below floor", costs)

    for it in range(1, max_iter + 1):
        J = forward_jacobian(fun, x, r, rel_step)
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        d[d < 1e-12 * max(d.max(), 1e-300)] = max(d.max(), 1.0) * 1e-12
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            r_new = fun(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            return LMResult(x, cost, initial, it, n_acc, True, "no further decrease", costs, J)
        rel = (cost - cost_new) / cost
        x, r, cost = x_new, r_new, cost_new
        costs.append(cost)
        n_acc += 1
        lam = max(lam / 10.0, 1e-12)
        log.debug("lm iter %d cost %.6e lambda %.1e", it, cost, lam)
        if rel < ftol:
            return LMResult(x, cost, initial, it, n_acc, True, "relative cost change below ftol", costs, J)
        if cost <= cost_floor:
            return LMResult(x, cost, initial, it, n_acc, True, "cost below floor", costs, J)
    return LMResult(x, cost, initial, max_iter, n_acc, False, "iteration cap reached", costs, J)


def null_space_dim(J: np.ndarray, rtol: float = 1e-6) -> int:
    """Number of (column-scaled) singular values below ``rtol`` of the largest."""
    norms = np.linalg.norm(J, axis=0)
    norms[norms == 0] = 1.0
    s = np.linalg.svd(J / norms, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return J.shape[1]
    return int(np.sum(s < rtol * s[0])) + max(J.shape[1] - len(s), 0)
