"""Weighted Lasso by cyclic coordinate descent.

Solves::

    min_beta  1/(2n) ||y - X beta||^2 + lam * sum_i w_i |beta_i|

with exact soft-thresholding updates, so inactive coordinates are exact
zeros. The loop is compiled with numba; everything else is plain numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .data import ZERO_TOL, support
from .errors import ConvergenceError, ValidationError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class L1Problem:
    design: np.ndarray
    response: np.ndarray
    sample_scale: float
    lam: float
    coord_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.design, dtype=float)
        y = np.ascontiguousarray(self.response, dtype=float)
        w = np.ones(X.shape[1]) if self.coord_weights is None else np.asarray(self.coord_weights, float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValidationError(f"design {X.shape} and response {y.shape} disagree", field="design")
        if w.shape != (X.shape[1],):
            raise ValidationError("coord_weights must match design columns", field="coord_weights")
        for name, arr in (("design", X), ("response", y), ("coord_weights", w)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains NaN or Inf", field=name)
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValidationError(f"lambda must be positive, got {self.lam}", field="lambda")
        if not np.all(w > 0):
            raise ValidationError("coord_weights must be strictly positive", field="coord_weights")
        if not self.sample_scale > 0:
            raise ValidationError("sample_scale must be positive", field="sample_scale")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "coord_weights", w)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "sample_scale", float(self.sample_scale))

    def objective(self, beta):
        r = self.response - self.design @ beta
        return 0.5 * (r @ r) / self.sample_scale + self.lam * np.sum(self.coord_weights * np.abs(beta))

    def kill_level(self):
        """Smallest ``lam`` at which the solution is identically zero."""
        g = np.abs(self.design.T @ self.response) / self.sample_scale
        return float(np.max(g / self.coord_weights)) if g.size else 0.0


@dataclass(frozen=True, eq=False)
class L1Solution:
    coefficients: np.ndarray
    active: np.ndarray
    signs: np.ndarray
    iterations: int
    kkt_residual: float
    objective_history: Optional[np.ndarray] = None


@numba.njit(cache=True)
def _kkt_residual(XT, y, beta, n, lam, w):
    P = XT.shape[0]
    r = y.copy()
    for j in range(P):
        if beta[j] != 0.0:
            r -= XT[j] * beta[j]
    worst = 0.0
    for j in range(P):
        g = XT[j] @ r / n
        t = lam * w[j]
        if beta[j] > 0.0:
            v = abs(g - t)
        elif beta[j] < 0.0:
            v = abs(g + t)
        else:
            v = abs(g) - t
        if v > worst:
            worst = v
    return worst, r


@numba.njit(cache=True)
def _sweep(XT, r, beta, col_sq, n, lam, w, coords):
    for j in coords:
        if col_sq[j] == 0.0:
            beta[j] = 0.0
            continue
        bj = beta[j]
        rho = XT[j] @ r / n + col_sq[j] * bj
        t = lam * w[j]
        # |rho| == t lands on the kink: exact zero
        if rho > t:
            new = (rho - t) / col_sq[j]
        elif rho < -t:
            new = (rho + t) / col_sq[j]
        else:
            new = 0.0
        if new != bj:
            r -= XT[j] * (new - bj)
            beta[j] = new


@numba.njit(cache=True)
def _objective(r, beta, n, lam, w):
    return 0.5 * (r @ r) / n + lam * np.sum(w * np.abs(beta))


@numba.njit(cache=True)
def _coordinate_descent(XT, y, beta, n, lam, w, tol, max_iter, history):
    P = XT.shape[0]
    col_sq = np.empty(P)
    for j in range(P):
        col_sq[j] = XT[j] @ XT[j] / n
    all_coords = np.arange(P)
    resid, r = _kkt_residual(XT, y, beta, n, lam, w)
    it = 0
    n_hist = 0
    if history.shape[0] > 0:
        history[0] = _objective(r, beta, n, lam, w)
        n_hist = 1
    while resid > tol and it < max_iter:
        _sweep(XT, r, beta, col_sq, n, lam, w, all_coords)
        it += 1
        if n_hist < history.shape[0]:
            history[n_hist] = _objective(r, beta, n, lam, w)
            n_hist += 1
        # polish the current support before paying for another full sweep
        active = np.flatnonzero(beta)
        for _ in range(50):
            if active.shape[0] == 0 or it >= max_iter:
                break
            before = beta[active].copy()
            _sweep(XT, r, beta, col_sq, n, lam, w, active)
            it += 1
            if n_hist < history.shape[0]:
                history[n_hist] = _objective(r, beta, n, lam, w)
                n_hist += 1
            if np.max(np.abs(beta[active] - before)) * np.sqrt(np.max(col_sq)) < 0.1 * tol:
                break
        resid, r = _kkt_residual(XT, y, beta, n, lam, w)
    return it, resid, n_hist


def solve(problem: L1Problem, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, warm_start=None,
          record_objective=False) -> L1Solution:
    """Solve a weighted Lasso to a KKT residual of at most ``tol``.

    Parameters
    ----------
    problem : L1Problem
    tol : float
        Bound on the stationarity violation reported by :func:`kkt_check`.
    max_iter : int
        Maximum number of coordinate sweeps (full or active-set).
    warm_start : array, optional
        Initial coefficients.
    record_objective : bool
        Store the objective after every sweep in ``objective_history``.

    Raises
    ------
    ConvergenceError
        If the tolerance is not met within ``max_iter`` sweeps.
    """
    P = problem.design.shape[1]
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float)
        if warm_start.shape != (P,):
            raise ValidationError(f"warm_start must have length {P}", field="warm_start")
        if not np.all(np.isfinite(warm_start)):
            raise ValidationError("warm_start contains NaN or Inf", field="warm_start")
    return solve_prepared(
        np.ascontiguousarray(problem.design.T), problem.response, problem.sample_scale,
        problem.lam, problem.coord_weights, tol, max_iter, warm_start, record_objective,
    )


def solve_prepared(XT, y, n, lam, weights, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                   warm_start=None, record_objective=False) -> L1Solution:
    """:func:`solve` on pre-validated arrays; ``XT`` is the C-contiguous transposed design.

    Used inside the line sweep, where the same design is solved thousands
    of times and re-validating it would dominate the cost.
    """
    P = XT.shape[0]
    beta = np.zeros(P) if warm_start is None else np.array(warm_start, dtype=float)
    history = np.empty(max_iter + 1 if record_objective else 0)
    it, resid, n_hist = _coordinate_descent(
        XT, np.ascontiguousarray(y, dtype=float), beta, float(n), float(lam), weights,
        float(tol), int(max_iter), history,
    )
    if resid > tol:
        raise ConvergenceError(
            f"coordinate descent stopped after {it} sweeps with KKT residual {resid:.3e}",
            kkt_residual=float(resid), iterations=int(it),
        )
    # float dust below the zero threshold is not a selection
    beta[np.abs(beta) <= ZERO_TOL] = 0.0
    active, signs = support(beta)
    return L1Solution(
        coefficients=beta,
        active=active,
        signs=signs,
        iterations=int(it),
        kkt_residual=float(resid),
        objective_history=history[:n_hist].copy() if record_objective else None,
    )


def kkt_check(problem: L1Problem, coefficients) -> float:
    """Largest violation of the Lasso stationarity conditions at ``coefficients``.

    For a nonzero coordinate this is ``|g_i + lam w_i sign(beta_i)|``, for a
    zero coordinate ``max(0, |g_i| - lam w_i)``, where
    ``g = X^T (X beta - y) / n``. Zero means exact optimality.
    """
    beta = np.asarray(coefficients, dtype=float)
    if beta.shape != (problem.design.shape[1],):
        raise ValidationError("coefficients do not match the design", field="coefficients")
    g = problem.design.T @ (problem.design @ beta - problem.response) / problem.sample_scale
    t = problem.lam * problem.coord_weights
    nz = beta != 0
    viol = np.where(nz, np.abs(g + t * np.sign(beta)), np.maximum(np.abs(g) - t, 0.0))
    return float(np.max(viol)) if viol.size else 0.0


def active_set_solution(problem: L1Problem, active, signs):
    """Closed-form Lasso coefficients on a fixed (active set, signs) pair.

    ``beta_A = (X_A^T X_A)^{-1} (X_A^T y - n lam w_A * s_A)``, zero elsewhere.
    """
    from ._linalg import Gram

    active = np.asarray(active, dtype=int)
    XA = problem.design[:, active]
    rhs = XA.T @ problem.response - problem.sample_scale * problem.lam * problem.coord_weights[active] * signs
    beta = np.zeros(problem.design.shape[1])
    beta[active] = Gram(XA).solve(rhs)
    return beta
