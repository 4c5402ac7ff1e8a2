"""Line decomposition and p-values.

The selective p-value is a two-sided truncated-normal tail probability::

    P(|Z| >= |z_obs|  |  Z in region),   Z ~ N(0, sigma^2)

evaluated with complementary-CDF differences in log space so that intervals
20 standard deviations out keep full relative precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erf, log_ndtr, logsumexp, ndtr

from .data import Interval, MultiTaskData, TruncationRegion, build_eta
from .errors import NumericDegeneracyError, SingularSelectionError, ValidationError

#: Default half-width of the search window, in standard deviations.
WINDOW_SIGMAS = 20.0
#: Regions whose probability mass falls below this are rejected.
MIN_REGION_MASS = 1e-300


@dataclass(frozen=True, eq=False)
class LineSlice:
    """The line ``Y(z) = a + b z`` through the observed response.

    ``a`` is the nuisance component held fixed by conditioning; ``z_obs`` is
    the observed test statistic and ``sigma`` its standard deviation.
    """

    a: np.ndarray
    b: np.ndarray
    z_window: tuple
    z_obs: float
    sigma: float

    def point(self, z):
        return self.a + self.b * z

    @property
    def z_min(self):
        return self.z_window[0]

    @property
    def z_max(self):
        return self.z_window[1]


def decompose(Y_obs, eta, Sigma, window_sigmas=WINDOW_SIGMAS) -> LineSlice:
    """Split ``Y_obs`` into the test direction and its nuisance complement.

    ``b = Sigma eta / (eta' Sigma eta)`` and ``a = (I - b eta') Y_obs``. The
    search window is ``[-window_sigmas*sigma, window_sigmas*sigma]``, widened
    when needed so that it contains ``z_obs`` with one sigma to spare.
    """
    Y_obs = np.asarray(Y_obs, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Sigma_eta = np.asarray(Sigma, dtype=float) @ eta
    var = float(eta @ Sigma_eta)
    if not (np.isfinite(var) and var > 0.0):
        raise NumericDegeneracyError(f"test statistic variance is {var}")
    b = Sigma_eta / var
    z_obs = float(eta @ Y_obs)
    a = Y_obs - b * z_obs
    sigma = math.sqrt(var)
    half = max(window_sigmas * sigma, abs(z_obs) + sigma)
    return LineSlice(a, b, (-half, half), z_obs, sigma)


# ---------------------------------------------------------------------------
# Tail-stable normal masses
# ---------------------------------------------------------------------------


def _log_diff(log_hi, log_lo):
    """``log(exp(log_hi) - exp(log_lo))`` for ``log_hi >= log_lo``."""
    if log_lo == -math.inf:
        return log_hi
    d = log_lo - log_hi
    if d >= 0.0:
        return -math.inf
    return log_hi + math.log(-math.expm1(d))


def log_normal_mass(lower, upper, sigma=1.0):
    """``log P(lower <= Z <= upper)`` for ``Z ~ N(0, sigma^2)``."""
    a, b = lower / sigma, upper / sigma
    if a >= b:
        return -math.inf
    if a >= 0.0:
        # upper tail: Phibar(a) - Phibar(b)
        return _log_diff(float(log_ndtr(-a)), float(log_ndtr(-b)))
    if b <= 0.0:
        return _log_diff(float(log_ndtr(b)), float(log_ndtr(a)))
    # straddles zero: both halves are measured from the origin
    s2 = math.sqrt(2.0)
    return math.log(0.5 * float(erf(b / s2)) + 0.5 * float(erf(-a / s2)))


def truncated_p(z_obs, sigma, region: TruncationRegion) -> float:
    """Two-sided selective p-value of ``z_obs`` truncated to ``region``.

    Raises
    ------
    NumericDegeneracyError
        If the region carries less than ``MIN_REGION_MASS`` probability.
    """
    if not sigma > 0:
        raise ValidationError("sigma must be positive", field="sigma")
    if not region:
        raise ValidationError("truncation region is empty", field="region")
    t = abs(z_obs)
    den, num = [], []
    for iv in region:
        den.append(log_normal_mass(iv.lower, iv.upper, sigma))
        for part in (iv.intersect(Interval(-math.inf, -t)), iv.intersect(Interval(t, math.inf))):
            if part is not None:
                num.append(log_normal_mass(part.lower, part.upper, sigma))
    log_den = logsumexp(den)
    if not log_den >= math.log(MIN_REGION_MASS):
        raise NumericDegeneracyError(
            f"truncation region mass exp({log_den:.1f}) is below {MIN_REGION_MASS:g}"
        )
    if not num:
        return 0.0
    p = math.exp(logsumexp(num) - log_den)
    return min(1.0, max(0.0, p))


def naive_p(z_obs, sigma) -> float:
    """Classical two-sided z-test p-value ``2 (1 - Phi(|z|/sigma))``."""
    if not sigma > 0:
        raise ValidationError("sigma must be positive", field="sigma")
    return float(min(1.0, 2.0 * ndtr(-abs(z_obs) / sigma)))


def bonferroni_p(p_naive, p) -> float:
    """``min(1, 2**p * p_naive)``: correction over all sign-selection outcomes."""
    if not 0.0 <= p_naive <= 1.0:
        raise ValidationError("p_naive must lie in [0, 1]", field="p_naive")
    if p_naive == 0.0:
        return 0.0
    log_adj = p * math.log(2.0) + math.log(p_naive)
    return 1.0 if log_adj >= 0.0 else math.exp(log_adj)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class PValueReport:
    feature_index: int
    z_obs: float
    sigma: float
    region: Optional[TruncationRegion]
    p_selective: Optional[float]
    p_naive: float
    p_bonferroni: Optional[float] = None
    p_datasplit: Optional[float] = None
    p_oc: Optional[float] = None
    region_oc: Optional[TruncationRegion] = None
    status: str = "ok"

    def to_dict(self):
        out = {
            "feature_index": self.feature_index,
            "z_obs": self.z_obs,
            "sigma": self.sigma,
            "p_selective": self.p_selective,
            "p_naive": self.p_naive,
            "region": self.region.to_list() if self.region is not None else None,
            "status": self.status,
        }
        for name in ("p_oc", "p_bonferroni", "p_datasplit"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        if self.region_oc is not None:
            out["region_oc"] = self.region_oc.to_list()
        return out


# ---------------------------------------------------------------------------
# Data splitting
# ---------------------------------------------------------------------------


@dataclass
class DataSplitResult:
    """Selection on one half of the target rows, z-tests on the other."""

    selected: np.ndarray
    pvalues: dict
    first_half: np.ndarray
    second_half: np.ndarray
    errors: dict = field(default_factory=dict)


def split_target(n_target, split_seed):
    """Seeded permutation split of ``range(n_target)`` into two sorted halves."""
    perm = np.random.default_rng(split_seed).permutation(n_target)
    half = n_target // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def datasplit_p(data: MultiTaskData, config, split_seed, pipeline_factory=None) -> DataSplitResult:
    """Data-splitting baseline.

    The pipeline selects features on all sources plus the first half of the
    target rows; each selected feature then gets a classical z-test on the
    least-squares fit of the second half, using the known target covariance
    restricted to those rows. ``config`` may be a pipeline config or a
    callable mapping the half-target data to one (e.g. ``TransFusionConfig.default``).
    """
    from .data import MultiTaskData as _MTD, TaskData
    from .pipelines import make_pipeline

    n_t = data.n_target
    if n_t < 4:
        raise ValidationError("data splitting needs at least 4 target rows", field="n_target")
    first, second = split_target(n_t, split_seed)
    tgt = data.target
    cov = tgt.covariance
    half_task = TaskData(tgt.design[first], tgt.response[first], cov[np.ix_(first, first)])
    fit_data = _MTD(half_task, data.sources)
    if callable(config):
        config = config(fit_data)
    factory = pipeline_factory or make_pipeline
    trace = factory(fit_data, config).fit()
    M = trace.selected
    result = DataSplitResult(M, {}, first, second)
    if M.size == 0:
        return result
    X2 = tgt.design[second]
    y2 = tgt.response[second]
    S2 = cov[np.ix_(second, second)]
    for j in M:
        try:
            eta = build_eta(X2, M, int(j), 0)
        except SingularSelectionError as exc:
            result.errors[int(j)] = str(exc)
            continue
        result.pvalues[int(j)] = naive_p(float(eta @ y2), math.sqrt(float(eta @ S2 @ eta)))
    return result
