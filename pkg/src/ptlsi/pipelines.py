"""Two-stage transfer-learning selection pipelines.

Both pipelines share one shape: a first-stage Lasso over (some of) the
stacked rows produces an aggregate estimate ``w = W @ theta``; a target-only
Lasso then debiases it on the residual ``Y0 - X0 w`` and the selected set is
the support of ``beta = w + delta``.

* :class:`TransFusion` -- co-training weighted Lasso over all tasks followed by
  local debiasing.
* :class:`OracleTransLasso` -- pooled Lasso over a known informative source set
  followed by the same debiasing step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import lasso
from .data import MultiTaskData, SelectionTrace, build_stacked
from .errors import ValidationError


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ValidationError(f"{name} must be positive, got {value}", field=name)


@dataclass(frozen=True)
class TransFusionConfig:
    lambda0: float
    lambda_tilde: float
    source_weights: Optional[tuple] = None

    def __post_init__(self):
        _positive("lambda0", self.lambda0)
        _positive("lambda_tilde", self.lambda_tilde)
        if self.source_weights is not None:
            w = tuple(float(a) for a in self.source_weights)
            for a in w:
                _positive("source_weights", a)
            object.__setattr__(self, "source_weights", w)

    @classmethod
    def default(cls, data: MultiTaskData, c=1.0, source_weights=None):
        """Rate-matched defaults ``c*sqrt(log p / N)`` and ``c*sqrt(log p / n_T)``."""
        logp = math.log(data.p)
        return cls(
            lambda0=c * math.sqrt(logp / data.n_total),
            lambda_tilde=c * math.sqrt(logp / data.n_target),
            source_weights=source_weights,
        )


@dataclass(frozen=True)
class OracleTransLassoConfig:
    lambda_w: float
    lambda_delta: float
    informative_set: tuple

    def __post_init__(self):
        _positive("lambda_w", self.lambda_w)
        _positive("lambda_delta", self.lambda_delta)
        I = tuple(int(k) for k in self.informative_set)
        if not I:
            raise ValidationError("informative_set must be nonempty", field="informative_set")
        if len(set(I)) != len(I):
            raise ValidationError("informative_set has duplicates", field="informative_set")
        object.__setattr__(self, "informative_set", I)

    @classmethod
    def default(cls, data: MultiTaskData, informative_set=None, c=1.0):
        I = tuple(range(data.K)) if informative_set is None else tuple(informative_set)
        logp = math.log(data.p)
        n_I = len(I) * data.n_source
        return cls(
            lambda_w=c * math.sqrt(logp / n_I),
            lambda_delta=c * math.sqrt(logp / data.n_target),
            informative_set=I,
        )


class TwoStagePipeline:
    """Shared machinery; subclasses set up the first-stage problem.

    Attributes (set by subclasses)
    ------------------------------
    response, covariance : stacked response and covariance used for inference
    first_design, first_rows, first_scale, first_lambda, first_weights :
        the first-stage Lasso acts on ``Y[first_rows]``
    aggregation : (p, P1) array, ``w = aggregation @ theta``
    target_design, target_rows, lambda_tilde : the debiasing Lasso
    """

    name = "two-stage"

    def __init__(self, data: MultiTaskData, tol=lasso.DEFAULT_TOL, max_iter=lasso.DEFAULT_MAX_ITER):
        self.data = data
        self.tol = tol
        self.max_iter = max_iter
        self.target_design = data.target.design
        self.n_target = data.n_target
        self.p = data.p

    @property
    def n_stacked(self):
        return self.response.shape[0]

    @property
    def n_prefix(self):
        """Stacked rows preceding the target block."""
        return self.target_rows.start

    def aggregate(self, theta):
        return self.aggregation @ theta

    def first_problem(self, y):
        return lasso.L1Problem(self.first_design, y[self.first_rows], self.first_scale,
                               self.first_lambda, self.first_weights)

    def second_problem(self, y, w):
        r = y[self.target_rows] - self.target_design @ w
        return lasso.L1Problem(self.target_design, r, self.n_target, self.lambda_tilde)

    def _prepare(self):
        # transposed designs and weights, reused by every fit along a sweep
        if getattr(self, "_prepared", None) is None:
            self._prepared = (
                np.ascontiguousarray(self.first_design.T),
                np.ascontiguousarray(self.target_design.T),
                np.asarray(self.first_weights, dtype=float),
                np.ones(self.p),
            )
        return self._prepared

    def fit(self, y=None, warm: Optional[SelectionTrace] = None) -> SelectionTrace:
        """Run both stages on stacked response ``y`` (observed data by default)."""
        if y is None:
            y = self.response
        else:
            y = np.asarray(y, dtype=float)
            if y.shape != self.response.shape or not np.all(np.isfinite(y)):
                raise ValidationError(f"response must be finite with shape {self.response.shape}",
                                      field="response")
        XT1, XT0, w_first, w_second = self._prepare()
        w1 = w2 = None
        if warm is not None:
            w1, w2 = warm.estimates["first_stage"], warm.estimates["delta"]
        s1 = lasso.solve_prepared(XT1, y[self.first_rows], self.first_scale, self.first_lambda,
                                  w_first, self.tol, self.max_iter, w1)
        theta = s1.coefficients
        w = self.aggregate(theta)
        r = y[self.target_rows] - self.target_design @ w
        s2 = lasso.solve_prepared(XT0, r, self.n_target, self.lambda_tilde, w_second,
                                  self.tol, self.max_iter, w2)
        delta = s2.coefficients
        return SelectionTrace.from_estimates(
            theta, delta, w + delta, w=w,
            kkt=np.array([s1.kkt_residual, s2.kkt_residual]),
        )

    def describe(self):
        raise NotImplementedError


class TransFusion(TwoStagePipeline):
    name = "transfusion"

    def __init__(self, data: MultiTaskData, config: TransFusionConfig, **kw):
        super().__init__(data, **kw)
        self.config = config
        self.stacked = build_stacked(data, config.source_weights)
        self.response = self.stacked.response
        self.covariance = self.stacked.covariance
        self.first_design = self.stacked.design
        self.first_rows = slice(0, self.stacked.N)
        self.first_scale = float(self.stacked.N)
        self.first_lambda = config.lambda0
        self.first_weights = self.stacked.penalty_weights
        self.aggregation = self.stacked.aggregation_matrix() / self.stacked.N
        self.target_rows = self.stacked.target_rows
        self.lambda_tilde = config.lambda_tilde

    def aggregate(self, theta):
        # w = n_S/N sum_k beta^(k) + n_T/N beta^(0), with beta^(k) = theta^(k) + theta^(0)
        K, p, n_s, n_t, N = self.data.K, self.p, self.data.n_source, self.n_target, self.stacked.N
        blocks = theta.reshape(K + 1, p)
        shared = blocks[K]
        betas = blocks[:K] + shared
        return (n_s / N) * betas.sum(axis=0) + (n_t / N) * shared

    def describe(self):
        return {
            "pipeline": self.name,
            "lambda0": self.config.lambda0,
            "lambda_tilde": self.config.lambda_tilde,
            "source_weights": list(self.config.source_weights or [1.0] * self.data.K),
        }


class OracleTransLasso(TwoStagePipeline):
    name = "oracle-translasso"

    def __init__(self, data: MultiTaskData, config: OracleTransLassoConfig, **kw):
        super().__init__(data, **kw)
        I = config.informative_set
        if min(I) < 0 or max(I) >= data.K:
            raise ValidationError(f"informative_set {I} out of range for K={data.K}",
                                  field="informative_set")
        self.config = config
        self.informative_set = I
        n_I = len(I) * data.n_source
        self.n_informative = n_I
        self.response = data.stacked_response(I)
        self.covariance = data.stacked_covariance(I)
        self.first_design = np.vstack([data.sources[k].design for k in I])
        self.first_rows = slice(0, n_I)
        self.first_scale = float(n_I)
        self.first_lambda = config.lambda_w
        self.first_weights = np.ones(self.p)
        self.aggregation = np.eye(self.p)
        self.target_rows = slice(n_I, n_I + data.n_target)
        self.lambda_tilde = config.lambda_delta

    def aggregate(self, theta):
        return np.array(theta, copy=True)

    def describe(self):
        return {
            "pipeline": self.name,
            "lambda_w": self.config.lambda_w,
            "lambda_delta": self.config.lambda_delta,
            "informative_set": list(self.informative_set),
        }


def make_pipeline(data, config, **kw):
    if isinstance(config, TransFusionConfig):
        return TransFusion(data, config, **kw)
    if isinstance(config, OracleTransLassoConfig):
        return OracleTransLasso(data, config, **kw)
    raise ValidationError(f"unknown pipeline config {type(config).__name__}", field="config")


def transfusion_fit(data: MultiTaskData, config: TransFusionConfig, **kw) -> SelectionTrace:
    """Fit TransFusion on observed data and return its selection trace."""
    return TransFusion(data, config, **kw).fit()


def oracle_translasso_fit(data: MultiTaskData, config: OracleTransLassoConfig, **kw) -> SelectionTrace:
    """Fit Oracle Trans-Lasso on observed data and return its selection trace."""
    return OracleTransLasso(data, config, **kw).fit()


def select(trace: SelectionTrace):
    """Selected feature indices and their signs."""
    return trace.selected, trace.selected_signs
