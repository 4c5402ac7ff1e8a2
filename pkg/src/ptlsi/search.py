"""Left-to-right sweep of the line that recovers the truncation region.

At each query point the pipeline is re-fit on ``Y(z)``; the KKT intervals
of the resulting state give the maximal segment around ``z`` on which nothing
changes. The sweep then steps just past that segment's right end and
repeats. Segments whose selected set equals the observed one form the
truncation region.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Interval, SelectionTrace, TruncationRegion
from .errors import InconsistencyError, PTLSIError, StallError
from .regions import segment_pieces

#: Step past a segment's right end, in units of the statistic's sigma.
ADVANCE_EPS = 1e-6
#: Slack when checking that a query point lies inside its own interval.
MEMBERSHIP_RTOL = 1e-9
MAX_SEGMENTS = 200_000


@dataclass(frozen=True, eq=False)
class LineSegment:
    interval: Interval
    trace: SelectionTrace
    matches_observed: bool

    def to_record(self):
        return {
            "lower": self.interval.lower,
            "upper": self.interval.upper,
            "n_first": len(self.trace.co_active),
            "n_debias": len(self.trace.debias_active),
            "n_selected": len(self.trace.selected),
            "match": self.matches_observed,
        }


@dataclass
class SearchStats:
    segments_visited: int = 0
    matching_segments: int = 0
    solver_calls: int = 0
    wall_time: float = 0.0

    def to_dict(self, include_timing=True):
        out = {
            "segments_visited": self.segments_visited,
            "matching_segments": self.matching_segments,
            "solver_calls": self.solver_calls,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def advance(endpoint, sigma, eps=ADVANCE_EPS):
    """Next query point, ``eps * sigma`` past ``endpoint`` (always strictly larger)."""
    nxt = endpoint + eps * sigma
    if not nxt > endpoint:
        nxt = np.nextafter(endpoint, math.inf)
    return float(nxt)


def _locate(pipeline, line, z, warm, cache, stats):
    """Fit at ``z`` and return a state whose KKT interval contains ``z``.

    A warm-started fit that lands in a state whose interval misses ``z``
    is retried cold at a tighter solver tolerance before giving up.
    """
    slack = MEMBERSHIP_RTOL * line.sigma
    attempts = ((warm, None), (None, min(pipeline.tol, 1e-12)))
    last = None
    for warm_start, tol in attempts:
        saved = pipeline.tol
        if tol is not None:
            pipeline.tol = tol
        try:
            trace = pipeline.fit(line.point(z), warm=warm_start)
        finally:
            pipeline.tol = saved
        stats.solver_calls += 1
        pieces = segment_pieces(pipeline, line, trace, cache)
        iv = pieces.interval
        if iv is not None and iv.lower - slack <= z <= iv.upper + slack:
            return trace, pieces, iv
        last = (trace, pieces)
    trace, pieces = last
    raise InconsistencyError(
        f"KKT intervals at z={z:.9g} do not contain the query point "
        f"(Z_u={pieces.Z_u}, Z_v={pieces.Z_v}, Z_t={pieces.Z_t}; "
        f"|O|={len(trace.co_active)}, |L|={len(trace.debias_active)}, |M|={len(trace.selected)})"
    )


def divide_and_conquer(line, pipeline, M_obs, eps=ADVANCE_EPS, max_segments=MAX_SEGMENTS,
                       validate=False, segment_log=None):
    """Tile ``line.z_window`` into constant-state segments.

    Parameters
    ----------
    line : LineSlice
    pipeline : TwoStagePipeline
        Must be configured exactly as for the observed fit.
    M_obs : sequence of int
        Observed selected set.
    eps : float
        Advance step past each segment, in units of ``line.sigma``.
    validate : bool
        Re-fit at every segment midpoint and require the same state.
    segment_log : list, optional
        Receives one record per segment (see :meth:`LineSegment.to_record`).

    Returns
    -------
    region : TruncationRegion
    segments : list of LineSegment
    stats : SearchStats
    """
    t0 = time.perf_counter()
    M_obs = tuple(int(j) for j in M_obs)
    z_min, z_max = line.z_window
    stats = SearchStats()
    segments = []
    cache = {}
    z = z_min
    prev_right = z_min
    warm = None
    while z < z_max:
        if len(segments) >= max_segments:
            raise StallError(f"sweep exceeded {max_segments} segments at z={z:.9g}")
        trace, pieces, iv = _locate(pipeline, line, z, warm, cache, stats)
        lo = max(iv.lower, prev_right)
        hi = min(iv.upper, z_max)
        if hi < lo:
            # the interval was clipped away entirely: only possible when z sits within slack of it
            hi = lo = min(z, z_max)
        match = tuple(int(j) for j in trace.selected) == M_obs
        seg = LineSegment(Interval(lo, hi), trace, match)
        if validate and hi > lo:
            mid = 0.5 * (lo + hi)
            check = pipeline.fit(line.point(mid), warm=trace)
            stats.solver_calls += 1
            if not check.same_state(trace):
                raise InconsistencyError(
                    f"state at segment midpoint {mid:.9g} differs from the state at its query point"
                )
        segments.append(seg)
        if segment_log is not None:
            segment_log.append(seg.to_record())
        stats.segments_visited += 1
        stats.matching_segments += int(match)
        prev_right = hi
        nxt = advance(hi, line.sigma, eps)
        if not nxt > z:
            raise StallError(f"sweep did not advance past z={z:.9g}")
        z = nxt
        warm = trace
    region = TruncationRegion(
        [s.interval for s in segments if s.matches_observed], merge_tol=2 * eps * line.sigma
    )
    stats.wall_time = time.perf_counter() - t0
    return region, segments, stats


def single_segment(line, pipeline, trace: SelectionTrace, cache=None):
    """Over-conditioned region: the one segment holding the observed state.

    Returns the region (clipped to the search window) and the segment pieces.
    """
    pieces = segment_pieces(pipeline, line, trace, cache)
    iv = pieces.interval
    slack = MEMBERSHIP_RTOL * line.sigma
    if iv is None or not (iv.lower - slack <= line.z_obs <= iv.upper + slack):
        raise InconsistencyError(
            f"observed state's KKT interval {iv} does not contain z_obs={line.z_obs:.9g}"
        )
    lo = max(iv.lower, line.z_min)
    hi = min(iv.upper, line.z_max)
    return TruncationRegion([Interval(min(lo, line.z_obs), max(hi, line.z_obs))]), pieces
