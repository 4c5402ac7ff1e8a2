"""Independent reference computations used by the unit and acceptance tests.

Nothing here touches the region-building code: membership is decided by
re-fitting the pipeline on ``Y(z)`` and comparing selected sets directly.
"""

import numpy as np

from ptlsi.data import MultiTaskData, TaskData
from ptlsi.regions import region_matrices, segment_pieces


def small_instance(rng, p=None, K=None, n_source=None, n_target=None):
    """Random small multi-task problem: ``p <= 10``, ``K <= 2``, ``n <= 15``."""
    p = p or int(rng.integers(4, 11))
    K = K or int(rng.integers(1, 3))
    n_source = n_source or int(rng.integers(8, 16))
    n_target = n_target or int(rng.integers(8, 16))
    beta = np.zeros(p)
    beta[: int(rng.integers(0, 3))] = rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 1.0)

    def task(n, b):
        X = rng.standard_normal((n, p))
        return TaskData(X, X @ b + rng.standard_normal(n), np.eye(n))

    sources = [task(n_source, beta + 0.3 * rng.standard_normal(p)) for _ in range(K)]
    return MultiTaskData(task(n_target, beta), sources)


def grid_membership(pipeline, line, M_obs, step_sigmas=1e-3, half_width=20.0):
    """Grid ``z`` values and a flag per value: does a fresh fit at ``Y(z)`` select ``M_obs``?"""
    sigma = line.sigma
    n = int(round(2 * half_width / step_sigmas))
    zs = -half_width * sigma + step_sigmas * sigma * np.arange(n + 1)
    target = tuple(int(j) for j in M_obs)
    flags = np.empty(zs.size, dtype=bool)
    warm = None
    for i, z in enumerate(zs):
        # warm starts only speed the solver up; the answer is the same optimum
        tr = pipeline.fit(line.point(z), warm=warm)
        warm = tr
        flags[i] = tuple(int(j) for j in tr.selected) == target
    return zs, flags


def region_disagreements(region, zs, flags, step):
    """Grid points where region membership and the oracle differ.

    Points within one grid step of a reported endpoint sit in a cell that
    straddles the boundary and are excluded.
    """
    ends = np.array([e for iv in region.intervals for e in (iv.lower, iv.upper) if np.isfinite(e)])
    inside = np.zeros(zs.size, dtype=bool)
    for iv in region.intervals:
        inside |= (zs >= iv.lower) & (zs <= iv.upper)
    if ends.size:
        near = np.min(np.abs(zs[:, None] - ends[None, :]), axis=1) <= step
    else:
        near = np.zeros(zs.size, dtype=bool)
    bad = (inside != flags) & ~near
    return zs[bad]


def closed_form_errors(pipeline, line, segment, tight_tol=1e-12):
    """Max deviation of the affine forms from a fresh fit at the segment midpoint.

    Returns ``(first_stage, debias, final)``: the active-set closed form of the
    first stage, that of the debiasing Lasso, and ``xi (a + b z) + zeta`` for
    the final estimate, each compared with a cold fit at a tight tolerance.
    """
    iv = segment.interval
    z = 0.5 * (iv.lower + iv.upper)
    saved = pipeline.tol
    pipeline.tol = tight_tol
    try:
        fresh = pipeline.fit(line.point(z))
    finally:
        pipeline.tol = saved
    pieces = segment_pieces(pipeline, line, segment.trace)
    m = pipeline.first_design.shape[1]
    e1 = np.max(np.abs(pieces.first.at(z, m) - fresh.estimates["first_stage"]), initial=0.0)
    e2 = np.max(np.abs(pieces.second.at(z, pipeline.p) - fresh.estimates["delta"]), initial=0.0)
    mats = region_matrices(pipeline, segment.trace)
    beta = mats.xi @ line.point(z) + mats.zeta
    e3 = np.max(np.abs(beta - fresh.beta), initial=0.0)
    return e1, e2, e3
