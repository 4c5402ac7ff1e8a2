"""Small null experiment: selective versus naive false positive rates.

Runs a short Monte Carlo at desk scale with no target signal and reports
the fraction of selected (all truly null) features each method rejects at
alpha = 0.05, with Clopper-Pearson intervals. The acceptance suite runs the
same experiment with 500 trials.

    python3 demos/fpr_calibration.py [trials]
"""

import sys

from ptlsi.experiments import SyntheticSpec, rate, simulate


def main(trials=100):
    recs = simulate(SyntheticSpec.desk(seed=7), trials, ("selective", "oc", "naive"))
    for method in ("selective", "oc", "naive"):
        est = rate(recs, method, 0.05, True)
        print(f"{method:>9}: FPR {est.rate:.3f}  95% CI [{est.ci_low:.3f}, {est.ci_high:.3f}]  "
              f"({est.rejections}/{est.trials} selected nulls, {est.empty_trials} empty trials)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 100)
