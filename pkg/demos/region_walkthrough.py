"""Walk the line Y(z) = a + b z for one selected feature.

Prints every constant-state segment the sweep visits, marks those that
reproduce the observed selection, and compares the resulting truncation
region with the single over-conditioned segment around the observed
statistic.

    python3 demos/region_walkthrough.py [seed]
"""

import sys

from ptlsi.data import build_eta
from ptlsi.experiments import SyntheticSpec, generate
from ptlsi.inference import decompose, truncated_p
from ptlsi.pipelines import TransFusion, TransFusionConfig
from ptlsi.search import divide_and_conquer, single_segment


def main(seed=0):
    data = generate(SyntheticSpec(p=12, n_target=15, n_source=20, seed=seed)).data
    pipe = TransFusion(data, TransFusionConfig.default(data))
    trace = pipe.fit()
    if not trace.selected.size:
        print("nothing selected; try another seed")
        return
    j = int(trace.selected[0])
    eta = build_eta(pipe.target_design, trace.selected, j, pipe.n_prefix)
    line = decompose(pipe.response, eta, pipe.covariance)
    print(f"feature {j}: z_obs={line.z_obs:.4f}, sigma={line.sigma:.4f}, M_obs={trace.selected.tolist()}")

    region, segments, stats = divide_and_conquer(line, pipe, trace.selected)
    for seg in segments:
        iv = seg.interval
        mark = "*" if seg.matches_observed else " "
        print(f" {mark} [{iv.lower:9.4f}, {iv.upper:9.4f}]  |O|={len(seg.trace.co_active):2d} "
              f"|L|={len(seg.trace.debias_active):2d}  M={seg.trace.selected.tolist()}")
    oc, _ = single_segment(line, pipe, trace)
    print(f"{stats.segments_visited} segments, {stats.solver_calls} solver calls")
    print(f"full region {region.to_list()}  p={truncated_p(line.z_obs, line.sigma, region):.4f}")
    print(f"oc region   {oc.to_list()}  p={truncated_p(line.z_obs, line.sigma, oc):.4f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
