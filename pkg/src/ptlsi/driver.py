"""End-to-end selective inference: fit, select, test every selected feature."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .data import MultiTaskData, build_eta, make_hypothesis
from .errors import NumericDegeneracyError, PTLSIError, SingularSelectionError
from .inference import (
    WINDOW_SIGMAS,
    PValueReport,
    bonferroni_p,
    datasplit_p,
    decompose,
    naive_p,
    truncated_p,
)
from .pipelines import make_pipeline
from .search import ADVANCE_EPS, divide_and_conquer, single_segment

CONDITIONING_MODES = ("full", "oc", "both")


@dataclass
class InferenceResult:
    selected: list
    signs: list
    reports: list
    stats: dict
    config: dict
    status: str = "ok"
    datasplit: Optional[dict] = None

    def report_for(self, j):
        for r in self.reports:
            if r.feature_index == j:
                return r
        raise KeyError(j)

    def pvalues(self, kind="p_selective"):
        """``{feature: p}`` for reports where ``kind`` was computed."""
        out = {}
        for r in self.reports:
            val = getattr(r, kind)
            if val is not None:
                out[r.feature_index] = val
        return out

    def to_dict(self, include_timing=False):
        return {
            "status": self.status,
            "selected": list(self.selected),
            "signs": list(self.signs),
            "reports": [r.to_dict() for r in self.reports],
            "search": {str(j): s.to_dict(include_timing) for j, s in self.stats.items()},
            "datasplit": self.datasplit,
            "config": self.config,
        }

    def to_json(self, include_timing=False):
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)


def run_ptlsi(data: MultiTaskData, config, baselines=("naive",), conditioning="full",
              window_sigmas=WINDOW_SIGMAS, eps=ADVANCE_EPS, split_seed=0, datasplit_config=None,
              pipeline=None, segment_logs=None, validate=False) -> InferenceResult:
    """Selective p-values for every feature the pipeline selects.

    Parameters
    ----------
    data : MultiTaskData
    config : TransFusionConfig or OracleTransLassoConfig
        Hyperparameters; fixed before looking at the response.
    baselines : iterable of {"naive", "bonferroni", "datasplit"}
        Extra p-values to attach. The naive p-value is always reported.
    conditioning : {"full", "oc", "both"}
        ``"full"`` sweeps the line for the union of all matching segments;
        ``"oc"`` conditions on the single observed segment; ``"both"`` does both.
    split_seed : int
        Seed of the target-row permutation for the data-splitting baseline.
    datasplit_config : config or callable, optional
        Pipeline config for the half-sample fit; defaults to ``config``.
    """
    if conditioning not in CONDITIONING_MODES:
        raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")
    baselines = set(baselines)
    pipe = pipeline or make_pipeline(data, config)
    echo = {
        **pipe.describe(),
        "conditioning": conditioning,
        "window_sigmas": window_sigmas,
        "advance_eps": eps,
        "baselines": sorted(baselines | {"naive"}),
        "split_seed": split_seed,
        "version": __version__,
    }
    trace = pipe.fit()
    M = [int(j) for j in trace.selected]
    result = InferenceResult(M, [int(s) for s in trace.selected_signs], [], {}, echo)

    if "datasplit" in baselines:
        try:
            ds = datasplit_p(data, datasplit_config or config, split_seed)
            result.datasplit = {
                "selected": [int(j) for j in ds.selected],
                "pvalues": {str(k): v for k, v in sorted(ds.pvalues.items())},
                "errors": {str(k): v for k, v in sorted(ds.errors.items())},
            }
        except PTLSIError as exc:
            result.datasplit = {"selected": [], "pvalues": {}, "errors": {"all": str(exc)}}

    if not M:
        result.status = "empty selection: no hypotheses to test"
        return result

    Y = pipe.response
    Sigma = pipe.covariance
    for j in M:
        try:
            eta = build_eta(pipe.target_design, M, j, pipe.n_prefix)
            hyp = make_hypothesis(j, eta, Sigma, Y)
            line = decompose(Y, eta, Sigma, window_sigmas)
        except (SingularSelectionError, NumericDegeneracyError) as exc:
            result.reports.append(PValueReport(j, math.nan, math.nan, None, None, math.nan,
                                               status=f"skipped: {exc}"))
            continue
        rep = PValueReport(j, hyp.observed_statistic, hyp.sigma, None, None,
                           naive_p(hyp.observed_statistic, hyp.sigma))
        try:
            if conditioning in ("full", "both"):
                log = [] if segment_logs is not None else None
                region, _, stats = divide_and_conquer(line, pipe, M, eps=eps, validate=validate,
                                                      segment_log=log)
                if segment_logs is not None:
                    segment_logs[j] = log
                result.stats[j] = stats
                rep.region = region
                rep.p_selective = truncated_p(line.z_obs, line.sigma, region)
            if conditioning in ("oc", "both"):
                region_oc, _ = single_segment(line, pipe, trace)
                rep.region_oc = region_oc
                rep.p_oc = truncated_p(line.z_obs, line.sigma, region_oc)
                if conditioning == "oc":
                    rep.region, rep.p_selective = region_oc, rep.p_oc
        except PTLSIError as exc:
            rep.status = f"failed: {type(exc).__name__}: {exc}"
        if "bonferroni" in baselines:
            rep.p_bonferroni = bonferroni_p(rep.p_naive, data.p)
        if result.datasplit is not None and str(j) in result.datasplit["pvalues"]:
            rep.p_datasplit = result.datasplit["pvalues"][str(j)]
        result.reports.append(rep)
    return result


def run_ptlsi_oc(data: MultiTaskData, config, **kw) -> InferenceResult:
    """Over-conditioned variant: only the segment containing the observed statistic."""
    return run_ptlsi(data, config, conditioning="oc", **kw)
