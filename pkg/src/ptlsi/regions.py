"""Intervals of the line on which every stage keeps its active set and signs.

Along ``Y(z) = a + b z`` a Lasso solution with fixed (active set, signs) is
affine in ``z``; so is the subgradient of its inactive coordinates. The
conditions "signs unchanged" and "inactive subgradient inside [-1, 1]" are
therefore linear inequalities ``slope * z <= offset``, and their solution set
is one interval. Chaining the stages gives three intervals per query point:

* ``Z_u`` -- first-stage (co-training / pooled source) active set and signs,
* ``Z_v`` -- debiasing-Lasso active set and signs, given the first stage,
* ``Z_t`` -- support and signs of the final target estimate.

The sweep uses the affine route in :func:`segment_pieces`. The explicit
matrix forms (``phi_u``, ``iota_u``, ``xi_uv``, ``zeta_uv``) are assembled
separately by :func:`region_matrices` and consumed by :func:`region_t`; the
tests check the two routes against each other and against fresh solver runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from ._linalg import Gram
from .data import Interval, StackedProblem

SLOPE_RTOL = 1e-12
OFFSET_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinearSystem1D:
    """Constraints ``slopes * z <= offsets``, row-wise."""

    slopes: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.slopes, dtype=float))
        o = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if s.shape != o.shape:
            raise ValueError("slopes and offsets must have equal length")
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "offsets", o)

    def __len__(self):
        return self.slopes.shape[0]

    @classmethod
    def concat(cls, *systems):
        systems = [s for s in systems if s is not None]
        if not systems:
            return cls(np.zeros(0), np.zeros(0))
        return cls(np.concatenate([s.slopes for s in systems]),
                   np.concatenate([s.offsets for s in systems]))

    def satisfied(self, z, tol=1e-9):
        return bool(np.all(self.slopes * z <= self.offsets + tol))


@numba.njit(cache=True)
def _solve_rows(psi, gam, slope_rtol, offset_tol):
    cut = 0.0
    for v in psi:
        if abs(v) > cut:
            cut = abs(v)
    cut *= slope_rtol
    lo, hi = -np.inf, np.inf
    for i in range(psi.shape[0]):
        s = psi[i]
        if s > cut:
            hi = min(hi, gam[i] / s)
        elif s < -cut:
            lo = max(lo, gam[i] / s)
        elif gam[i] < -offset_tol:
            return False, lo, hi
    return lo <= hi, lo, hi


def interval_of(system: LinearSystem1D, slope_rtol=SLOPE_RTOL, offset_tol=OFFSET_TOL) -> Optional[Interval]:
    """Solve ``slopes * z <= offsets`` for ``z``; ``None`` means infeasible.

    Rows whose slope is at most ``slope_rtol * max|slopes|`` are constants:
    they are dropped when ``offset >= -offset_tol`` and make the system
    infeasible otherwise.
    """
    if system.slopes.size == 0:
        return Interval(-math.inf, math.inf)
    ok, lo, hi = _solve_rows(system.slopes, system.offsets, slope_rtol, offset_tol)
    return Interval(lo, hi) if ok else None


def intersect_all(*intervals):
    out = Interval(-math.inf, math.inf)
    for iv in intervals:
        if iv is None or out is None:
            return None
        out = out.intersect(iv)
    return out


# ---------------------------------------------------------------------------
# Affine Lasso pieces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LassoPiece:
    """Active-set solution ``coef_A(z) = intercept + slope * z`` and its constraints."""

    active: np.ndarray
    signs: np.ndarray
    intercept: np.ndarray
    slope: np.ndarray
    system: LinearSystem1D

    def full(self, size):
        """Dense ``(intercept, slope)`` vectors of length ``size``."""
        c0, c1 = np.zeros(size), np.zeros(size)
        c0[self.active] = self.intercept
        c1[self.active] = self.slope
        return c0, c1

    def at(self, z, size):
        c0, c1 = self.full(size)
        return c0 + c1 * z


def _gram(cache, X, active, tag):
    key = (tag, tuple(int(i) for i in active))
    if cache is not None and key in cache:
        return cache[key]
    g = Gram(X[:, active], what=f"{tag} active set")
    if cache is not None:
        cache[key] = g
    return g


def lasso_piece(X, r0, r1, n, lam, weights, active, signs, cache=None, tag="lasso") -> LassoPiece:
    """Constraints keeping ``(active, signs)`` optimal for a response ``r0 + r1 z``.

    On the active set ``coef_A = (X_A'X_A)^{-1}(X_A' r - n lam w_A s_A)``; the
    sign rows demand ``s_A * coef_A(z) >= 0`` and the inactive rows demand
    ``|X_I'(r - X_A coef_A) / (n lam w_I)| <= 1``.
    """
    active = np.asarray(active, dtype=int)
    signs = np.asarray(signs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    XA = X[:, active]
    gram = _gram(cache, X, active, tag)
    R = np.column_stack([r0, r1])
    C = gram.solve(XA.T @ R)
    C[:, 0] -= gram.solve(n * lam * weights[active] * signs)
    c0, c1 = C[:, 0], C[:, 1]

    inactive = np.ones(X.shape[1], dtype=bool)
    inactive[active] = False
    G = (X.T @ (R - XA @ C))[inactive] / (n * lam * weights[inactive])[:, None]
    g0, g1 = G[:, 0], G[:, 1]
    system = LinearSystem1D(np.concatenate([-signs * c1, g1, -g1]),
                            np.concatenate([signs * c0, 1.0 - g0, 1.0 + g0]))
    return LassoPiece(active, signs.astype(int), c0, c1, system)


def support_system(beta0, beta1, selected, signs):
    """Constraints keeping ``support(beta0 + beta1 z) == selected`` with ``signs``."""
    selected = np.asarray(selected, dtype=int)
    signs = np.asarray(signs, dtype=float)
    off = np.ones(beta0.shape[0], dtype=bool)
    off[selected] = False
    sign_sys = LinearSystem1D(-signs * beta1[selected], signs * beta0[selected])
    zero_sys = LinearSystem1D(
        np.concatenate([beta1[off], -beta1[off]]),
        np.concatenate([-beta0[off], beta0[off]]),
    )
    return LinearSystem1D.concat(sign_sys, zero_sys)


@dataclass(frozen=True, eq=False)
class SegmentPieces:
    """Everything the sweep needs about one (u, v, t) state."""

    first: LassoPiece
    second: LassoPiece
    w: tuple
    beta: tuple
    Z_u: Optional[Interval]
    Z_v: Optional[Interval]
    Z_t: Optional[Interval]
    system_t: LinearSystem1D

    @property
    def interval(self):
        return intersect_all(self.Z_u, self.Z_v, self.Z_t)

    def beta_at(self, z):
        return self.beta[0] + self.beta[1] * z


def segment_pieces(pipeline, line, trace, cache=None) -> SegmentPieces:
    """Intervals ``Z_u``, ``Z_v``, ``Z_t`` for the state recorded in ``trace``.

    Works for any :class:`~ptlsi.pipelines.TwoStagePipeline`; the pipeline
    supplies the first-stage design, row selector and aggregation map.
    """
    a, b = line.a, line.b
    rows = pipeline.first_rows
    X1 = pipeline.first_design
    first = lasso_piece(
        X1, a[rows], b[rows], pipeline.first_scale, pipeline.first_lambda,
        pipeline.first_weights, trace.co_active, trace.co_signs, cache, "first",
    )
    W = pipeline.aggregation
    WA = W[:, first.active]
    w0, w1 = WA @ first.intercept, WA @ first.slope

    X0 = pipeline.target_design
    t = pipeline.target_rows
    r0 = a[t] - X0 @ w0
    r1 = b[t] - X0 @ w1
    second = lasso_piece(
        X0, r0, r1, pipeline.n_target, pipeline.lambda_tilde, np.ones(pipeline.p),
        trace.debias_active, trace.debias_signs, cache, "second",
    )
    d0, d1 = second.full(pipeline.p)
    beta0, beta1 = w0 + d0, w1 + d1
    sys_t = support_system(beta0, beta1, trace.selected, trace.selected_signs)
    return SegmentPieces(
        first, second, (w0, w1), (beta0, beta1),
        interval_of(first.system), interval_of(second.system), interval_of(sys_t), sys_t,
    )


# ---------------------------------------------------------------------------
# Per-stage entry points
# ---------------------------------------------------------------------------


def _row_parts(line, rows):
    return line.a[rows], line.b[rows]


def region_u(line, stacked: StackedProblem, O_u, S_Ou, lambda0, cache=None):
    """``Z_u`` for the co-training weighted Lasso; returns ``(interval, system)``."""
    piece = lasso_piece(stacked.design, line.a, line.b, stacked.N, lambda0,
                        stacked.penalty_weights, O_u, S_Ou, cache, "first")
    return interval_of(piece.system), piece.system


def region_v(line, stacked: StackedProblem, target_design, O_u, S_Ou, L_v, S_Lv,
             lambda0, lambda_tilde, cache=None):
    """``Z_v`` for the debiasing Lasso given the co-training state ``(O_u, S_Ou)``."""
    first = lasso_piece(stacked.design, line.a, line.b, stacked.N, lambda0,
                        stacked.penalty_weights, O_u, S_Ou, cache, "first")
    WA = stacked.aggregation_matrix()[:, first.active] / stacked.N
    a_t, b_t = _row_parts(line, stacked.target_rows)
    X0 = np.asarray(target_design, dtype=float)
    piece = lasso_piece(X0, a_t - X0 @ (WA @ first.intercept), b_t - X0 @ (WA @ first.slope),
                        stacked.n_target, lambda_tilde, np.ones(stacked.p), L_v, S_Lv, cache, "second")
    return interval_of(piece.system), piece.system


def region_u_otl(line, source_design, n_informative, O_u, S_Ou, lambda_w, cache=None):
    """``Z_u`` for the pooled informative-source Lasso."""
    rows = slice(0, n_informative)
    a_I, b_I = _row_parts(line, rows)
    piece = lasso_piece(source_design, a_I, b_I, n_informative, lambda_w,
                        np.ones(source_design.shape[1]), O_u, S_Ou, cache, "first")
    return interval_of(piece.system), piece.system


def region_v_otl(line, source_design, target_design, n_informative, O_u, S_Ou, L_v, S_Lv,
                 lambda_w, lambda_delta, cache=None):
    """``Z_v`` for the Oracle Trans-Lasso debiasing step."""
    p = source_design.shape[1]
    a_I, b_I = _row_parts(line, slice(0, n_informative))
    first = lasso_piece(source_design, a_I, b_I, n_informative, lambda_w, np.ones(p),
                        O_u, S_Ou, cache, "first")
    w0, w1 = first.full(p)
    X0 = np.asarray(target_design, dtype=float)
    a_t, b_t = _row_parts(line, slice(n_informative, line.a.shape[0]))
    piece = lasso_piece(X0, a_t - X0 @ w0, b_t - X0 @ w1, X0.shape[0], lambda_delta,
                        np.ones(p), L_v, S_Lv, cache, "second")
    return interval_of(piece.system), piece.system


def region_t(line, matrices: "RegionMatrices", M_t, S_Mt):
    """``Z_t`` from the explicit affine map ``beta(z) = xi (a + b z) + zeta``."""
    beta0 = matrices.xi @ line.a + matrices.zeta
    beta1 = matrices.xi @ line.b
    system = support_system(beta0, beta1, M_t, S_Mt)
    return interval_of(system), system


region_t_otl = region_t


# ---------------------------------------------------------------------------
# Explicit matrix forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegionMatrices:
    """Selectors and affine maps for one ``(u, v)`` pair.

    ``phi @ Y + iota`` is the debiasing-stage response and
    ``xi @ Y + zeta`` the final target estimate, both valid while the
    first-stage state is ``(O_u, S_Ou)`` and the debiasing state ``(L_v, S_Lv)``.
    ``first_selector`` is ``P`` for Oracle Trans-Lasso and the identity for
    TransFusion; ``aggregation`` is ``B`` (TransFusion) or the identity.
    """

    aggregation: np.ndarray
    E_u: np.ndarray
    F_v: np.ndarray
    first_selector: np.ndarray
    Q: np.ndarray
    phi: np.ndarray
    iota: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray

    def selectors(self, M_t):
        """Row selectors ``D_t`` and ``D_t^c`` for the support ``M_t``."""
        p = self.xi.shape[0]
        eye = np.eye(p)
        M_t = np.asarray(M_t, dtype=int)
        rest = np.setdiff1d(np.arange(p), M_t)
        return eye[M_t], eye[rest]


def _embedding(size, idx):
    E = np.zeros((size, len(idx)))
    E[np.asarray(idx, dtype=int), np.arange(len(idx))] = 1.0
    return E


def region_matrices(pipeline, trace) -> RegionMatrices:
    """Assemble ``phi_u``, ``iota_u``, ``xi_uv``, ``zeta_uv`` for ``trace``'s (u, v).

    TransFusion::

        phi  = Q - (1/N) X0 B E_u G_u^{-1} X_O'
        iota = lam0 X0 B E_u G_u^{-1} (a_O * s_O)
        xi   = (1/N) B E_u G_u^{-1} X_O' + F_v H_v^{-1} X0_L' phi
        zeta = -lam0 B E_u G_u^{-1} (a_O * s_O) + F_v H_v^{-1} (X0_L' iota - n_T lam~ s_L)

    Oracle Trans-Lasso replaces ``B/N`` by the identity, ``X_O'`` by
    ``X^I_O' P`` and ``lam0 a_O`` by ``n_I lam_w``.
    """
    from .pipelines import TransFusion

    N = pipeline.n_stacked
    p = pipeline.p
    X1 = pipeline.first_design
    O, SO = np.asarray(trace.co_active, int), np.asarray(trace.co_signs, float)
    L, SL = np.asarray(trace.debias_active, int), np.asarray(trace.debias_signs, float)
    X0 = pipeline.target_design
    n_T = pipeline.n_target
    n1 = X1.shape[0]

    P_sel = np.zeros((n1, N))
    P_sel[np.arange(n1), np.arange(pipeline.first_rows.start, pipeline.first_rows.stop)] = 1.0
    Q = np.zeros((n_T, N))
    Q[np.arange(n_T), np.arange(pipeline.target_rows.start, pipeline.target_rows.stop)] = 1.0

    E_u = _embedding(X1.shape[1], O)
    F_v = _embedding(p, L)
    XO = X1[:, O]
    G_inv = np.linalg.inv(XO.T @ XO) if len(O) else np.zeros((0, 0))
    if isinstance(pipeline, TransFusion):
        agg = pipeline.stacked.aggregation_matrix()
        scale = 1.0 / pipeline.stacked.N
        penalty = pipeline.first_lambda * pipeline.first_weights[O] * SO
    else:
        agg = np.eye(p)
        scale = 1.0
        penalty = pipeline.first_scale * pipeline.first_lambda * SO
    # w_u(z) = w_lin @ Y(z) + w_const
    BEG = agg @ E_u @ G_inv
    w_lin = scale * BEG @ XO.T @ P_sel
    w_const = -(BEG @ penalty)
    phi = Q - X0 @ w_lin
    iota = -X0 @ w_const
    X0L = X0[:, L]
    H_inv = np.linalg.inv(X0L.T @ X0L) if len(L) else np.zeros((0, 0))
    xi = w_lin + F_v @ H_inv @ X0L.T @ phi
    zeta = w_const + F_v @ H_inv @ (X0L.T @ iota - n_T * pipeline.lambda_tilde * SL)
    return RegionMatrices(agg, E_u, F_v, P_sel, Q, phi, iota, xi, zeta)
