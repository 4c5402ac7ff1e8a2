"""Domain types shared across the pipeline.

Everything here is an immutable value object: arrays are copied on
construction and marked read-only, so instances can be passed freely between
worker processes and threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import block_diag

from ._linalg import Gram
from .errors import ValidationError

#: Coefficients with ``abs(c) <= ZERO_TOL`` count as exactly zero.
ZERO_TOL = 1e-10
SYMMETRY_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def support(coef, tol=ZERO_TOL):
    """Indices and signs of the entries of ``coef`` exceeding ``tol`` in magnitude."""
    coef = np.asarray(coef, dtype=float)
    idx = np.flatnonzero(np.abs(coef) > tol)
    return idx, np.sign(coef[idx]).astype(int)


# ---------------------------------------------------------------------------
# Task data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TaskData:
    """Design, response and known noise covariance of one regression task."""

    design: np.ndarray
    response: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float)
        S = np.asarray(self.covariance, dtype=float)
        if X.ndim != 2:
            raise ValidationError("design must be a 2-D matrix", field="design")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValidationError(
                f"response length {y.shape} does not match {X.shape[0]} design rows",
                field="response",
            )
        if S.shape != (X.shape[0], X.shape[0]):
            raise ValidationError(
                f"covariance must be {X.shape[0]}x{X.shape[0]}, got {S.shape}",
                field="covariance",
            )
        for name, arr in (("design", X), ("response", y), ("covariance", S)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains NaN or Inf", field=name)
        if S.size and np.max(np.abs(S - S.T)) > SYMMETRY_TOL:
            raise ValidationError("covariance is not symmetric", field="covariance")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise ValidationError(
                "covariance is not positive definite", field="covariance"
            ) from exc
        object.__setattr__(self, "design", _frozen(X))
        object.__setattr__(self, "response", _frozen(y))
        object.__setattr__(self, "covariance", _frozen(S))

    @classmethod
    def with_noise(cls, design, response, sigma2=1.0):
        """Build a task whose covariance is ``sigma2 * I``."""
        n = np.asarray(design).shape[0]
        return cls(design, response, sigma2 * np.eye(n))

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    def with_response(self, response):
        return TaskData(self.design, response, self.covariance)


@dataclass(frozen=True, eq=False)
class MultiTaskData:
    """One target task plus ``K >= 1`` source tasks over the same ``p`` features."""

    target: TaskData
    sources: tuple

    def __post_init__(self):
        sources = tuple(self.sources)
        if len(sources) < 1:
            raise ValidationError("at least one source task is required", field="sources")
        p = self.target.p
        n_s = sources[0].n
        for k, task in enumerate(sources, start=1):
            if task.p != p:
                raise ValidationError(
                    f"source task {k} has {task.p} columns, target has {p}",
                    field=f"sources[{k}]",
                )
            if task.n != n_s:
                raise ValidationError(
                    f"source task {k} has {task.n} rows, source task 1 has {n_s}",
                    field=f"sources[{k}]",
                )
        if self.target.n < 1:
            raise ValidationError("target task has no rows", field="target")
        object.__setattr__(self, "sources", sources)

    @property
    def feature_count(self):
        return self.target.p

    p = feature_count

    @property
    def K(self):
        return len(self.sources)

    @property
    def n_source(self):
        return self.sources[0].n

    @property
    def n_target(self):
        return self.target.n

    @property
    def n_total(self):
        return self.K * self.n_source + self.n_target

    def stacked_response(self, source_indices=None):
        """``(Y^(k) for k in source_indices..., Y^(0))``; all sources by default."""
        idx = range(self.K) if source_indices is None else source_indices
        return np.concatenate([self.sources[k].response for k in idx] + [self.target.response])

    def stacked_covariance(self, source_indices=None):
        idx = range(self.K) if source_indices is None else source_indices
        return block_diag(*[self.sources[k].covariance for k in idx], self.target.covariance)

    def with_target_response(self, y0):
        return MultiTaskData(self.target.with_response(y0), self.sources)


# ---------------------------------------------------------------------------
# Stacked co-training problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StackedProblem:
    """Block design, stacked response, block covariance and penalty weights.

    Row blocks are ordered ``(source 1, ..., source K, target)``; column blocks
    hold the per-source offsets followed by the shared target coefficients.
    """

    design: np.ndarray
    response: np.ndarray
    covariance: np.ndarray
    penalty_weights: np.ndarray
    K: int
    n_source: int
    n_target: int
    p: int

    @property
    def N(self):
        return self.K * self.n_source + self.n_target

    @property
    def target_rows(self):
        return slice(self.K * self.n_source, self.N)

    def block(self, row_block, col_block):
        """Sub-matrix for (row block, column block); block ``K`` is the target."""
        rs = slice(row_block * self.n_source, (row_block + 1) * self.n_source)
        if row_block == self.K:
            rs = self.target_rows
        cs = slice(col_block * self.p, (col_block + 1) * self.p)
        return self.design[rs, cs]

    def aggregation_matrix(self):
        """``B = (n_S I_p, ..., n_S I_p, (K n_S + n_T) I_p)``, so that ``w = B theta / N``."""
        eye = np.eye(self.p)
        return np.hstack([self.n_source * eye] * self.K + [self.N * eye])


def build_stacked(data: MultiTaskData, weights: Optional[Sequence[float]] = None) -> StackedProblem:
    """Lay out the co-training weighted Lasso over all tasks.

    Parameters
    ----------
    data : MultiTaskData
    weights : sequence of float, optional
        Per-source penalty weights ``a_1..a_K`` (default all ones). The target
        block always has weight one.
    """
    K, p = data.K, data.p
    if weights is None:
        weights = np.ones(K)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (K,):
        raise ValidationError(f"expected {K} source weights, got {weights.shape}", field="weights")
    if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
        raise ValidationError("source weights must be strictly positive", field="weights")

    n_s, n_t = data.n_source, data.n_target
    N = K * n_s + n_t
    X = np.zeros((N, (K + 1) * p))
    for k, task in enumerate(data.sources):
        rows = slice(k * n_s, (k + 1) * n_s)
        X[rows, k * p:(k + 1) * p] = task.design
        X[rows, K * p:] = task.design
    X[K * n_s:, K * p:] = data.target.design
    a_tilde = np.concatenate([np.full(p, w) for w in weights] + [np.ones(p)])
    return StackedProblem(
        design=_frozen(X),
        response=_frozen(data.stacked_response()),
        covariance=_frozen(data.stacked_covariance()),
        penalty_weights=_frozen(a_tilde),
        K=K,
        n_source=n_s,
        n_target=n_t,
        p=p,
    )


# ---------------------------------------------------------------------------
# Hypotheses and selection output
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """Test direction for one selected feature.

    ``eta @ Y`` is the least-squares coefficient of ``feature_index`` when the
    target response is regressed on the selected columns.
    """

    feature_index: int
    eta: np.ndarray
    sigma2: float
    observed_statistic: float

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)


def build_eta(target_design, selected, j, n_prefix):
    """Direction ``eta_j`` of the least-squares statistic for selected feature ``j``.

    Parameters
    ----------
    target_design : (n_T, p) array
    selected : sequence of int
        The selected feature set, in ascending order.
    j : int
        A member of ``selected`` (a feature index, not a position).
    n_prefix : int
        Number of stacked source rows preceding the target block; their
        entries in ``eta`` are zero.
    """
    selected = [int(s) for s in selected]
    if j not in selected:
        raise ValidationError(f"feature {j} is not in the selected set", field="j")
    XM = np.asarray(target_design, dtype=float)[:, selected]
    gram = Gram(XM, what=f"selected set {selected}")
    e = np.zeros(len(selected))
    e[selected.index(j)] = 1.0
    eta = np.zeros(n_prefix + XM.shape[0])
    eta[n_prefix:] = XM @ gram.solve(e)
    return eta


def make_hypothesis(j, eta, covariance, response):
    eta = np.asarray(eta, dtype=float)
    sigma2 = float(eta @ covariance @ eta)
    if not sigma2 > 0.0:
        raise ValidationError("test statistic has non-positive variance", field="eta")
    return Hypothesis(int(j), _frozen(eta), sigma2, float(eta @ response))


@dataclass(frozen=True, eq=False)
class SelectionTrace:
    """Active sets and signs of every stage of a two-stage transfer fit.

    ``co_active``/``co_signs`` index the first-stage coefficients (``(K+1)p``
    stacked coefficients for TransFusion, ``p`` for Oracle Trans-Lasso),
    ``debias_active`` the local debiasing Lasso and ``selected`` the final
    target estimate.
    """

    co_active: np.ndarray
    co_signs: np.ndarray
    debias_active: np.ndarray
    debias_signs: np.ndarray
    selected: np.ndarray
    selected_signs: np.ndarray
    estimates: dict = field(default_factory=dict)

    @classmethod
    def from_estimates(cls, first_stage, delta, beta, **extra):
        O, SO = support(first_stage)
        L, SL = support(delta)
        M, SM = support(beta)
        est = {"first_stage": _frozen(first_stage), "delta": _frozen(delta), "beta": _frozen(beta)}
        est.update({k: _frozen(v) for k, v in extra.items()})
        return cls(_frozen(O, int), _frozen(SO, int), _frozen(L, int), _frozen(SL, int),
                   _frozen(M, int), _frozen(SM, int), est)

    @property
    def beta(self):
        return self.estimates["beta"]

    def key(self):
        """Hashable summary of all three (active set, signs) pairs."""
        return (
            tuple(self.co_active), tuple(self.co_signs),
            tuple(self.debias_active), tuple(self.debias_signs),
            tuple(self.selected), tuple(self.selected_signs),
        )

    def same_state(self, other):
        return self.key() == other.key()


# ---------------------------------------------------------------------------
# Intervals on the line
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Interval:
    """Closed interval ``[lower, upper]``; either end may be infinite."""

    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ValidationError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def width(self):
        return self.upper - self.lower

    def __contains__(self, z):
        return self.lower <= z <= self.upper

    def intersect(self, other):
        """Intersection, or ``None`` if empty."""
        lo, hi = max(self.lower, other.lower), min(self.upper, other.upper)
        return Interval(lo, hi) if lo <= hi else None

    def midpoint(self):
        return 0.5 * (self.lower + self.upper)


class TruncationRegion:
    """Finite union of disjoint closed intervals, kept sorted.

    Intervals whose gap is at most ``merge_tol`` are merged on construction.
    """

    def __init__(self, intervals=(), merge_tol=0.0):
        items = sorted(
            (iv if isinstance(iv, Interval) else Interval(*iv) for iv in intervals),
            key=lambda iv: (iv.lower, iv.upper),
        )
        merged = []
        for iv in items:
            if merged and iv.lower <= merged[-1].upper + merge_tol:
                last = merged[-1]
                merged[-1] = Interval(last.lower, max(last.upper, iv.upper))
            else:
                merged.append(iv)
        self.intervals = tuple(merged)

    @classmethod
    def real_line(cls):
        return cls([Interval(-math.inf, math.inf)])

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __bool__(self):
        return bool(self.intervals)

    def __contains__(self, z):
        return any(z in iv for iv in self.intervals)

    def __repr__(self):
        body = ", ".join(f"[{iv.lower:.6g}, {iv.upper:.6g}]" for iv in self.intervals)
        return f"TruncationRegion({body})"

    @property
    def total_width(self):
        return sum(iv.width for iv in self.intervals)

    def contains_region(self, other, tol=0.0):
        """True if every interval of ``other`` lies inside one interval of ``self``."""
        return all(
            any(s.lower - tol <= o.lower and o.upper <= s.upper + tol for s in self.intervals)
            for o in other.intervals
        )

    def to_list(self):
        return [[iv.lower, iv.upper] for iv in self.intervals]
