"""Command-line interface.

Subcommands
-----------
infer         selective p-values for a data set given as CSV files
fpr, tpr      Monte Carlo rate estimates, optionally swept over one spec field
noise         FPR under every noise family across target sizes
bench         sweep cost (segments, solver calls, seconds) per p-value
ingest-check  parse a data set and print its shapes

Exit codes: 0 success, 1 invalid input, 2 numeric degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import platform
import sys
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .driver import CONDITIONING_MODES, run_ptlsi
from .errors import NumericDegeneracyError, PTLSIError, ValidationError
from .experiments import (
    METHODS,
    NOISE_FAMILIES,
    PIPELINES,
    THREADS_ENV,
    SyntheticSpec,
    ingest_csv,
    ingest_files,
    rate,
    search_log,
    simulate,
    sweep,
)
from .pipelines import OracleTransLassoConfig, TransFusionConfig

log = logging.getLogger("ptlsi")

SPEC_FIELDS = ("p", "n_target", "n_source", "informative_count", "uninformative_count",
               "gamma", "upsilon")
INT_FIELDS = {"p", "n_target", "n_source", "informative_count", "uninformative_count"}
RATE_COLUMNS = ("parameter", "value", "method", "metric", "rate", "ci_low", "ci_high",
                "rejections", "trials", "empty_trials")
PLOT_COLUMNS = ("x", "series", "value", "ci_lo", "ci_hi")


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _alpha(text):
    try:
        a = float(text)
    except ValueError:
        raise ValidationError(f"alpha must be a number, got {text!r}", field="alpha") from None
    if not 0.0 < a < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {a}", field="alpha")
    return a


def _int_list(text, field):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"{field} must be a comma-separated list of integers", field=field) from None


def _methods(text):
    if text == "all":
        return METHODS
    ms = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in ms if m not in METHODS]
    if bad or not ms:
        raise ValidationError(f"unknown method(s) {bad}; choose from {METHODS} or 'all'", field="method")
    return ms


def _values(param, text):
    conv = int if param in INT_FIELDS else float
    try:
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"--values must be a list of {conv.__name__}", field="values") from None


def _threads(args):
    if args.threads is not None:
        if args.threads < 1:
            raise ValidationError("threads must be at least 1", field="threads")
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be an integer", field=THREADS_ENV) from None
    return 1


def _base_spec(args, null):
    preset = SyntheticSpec.full if args.preset == "full" else SyntheticSpec.desk
    overrides = {f: getattr(args, f) for f in SPEC_FIELDS if getattr(args, f, None) is not None}
    return preset(null=null, noise=getattr(args, "noise", "gaussian") or "gaussian",
                  seed=args.seed, **overrides)


def versions():
    import numba
    import scipy

    return {"ptlsi": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_manifest(path, argv, config):
    doc = {"argv": list(argv), "config": config, "versions": versions()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_rows(rows, columns, out):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    text = buf.getvalue()
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def plot_rows(results):
    """Long-format rows ``(x, series, value, ci_lo, ci_hi)`` from rate rows."""
    return [{"x": r["value"], "series": r["method"], "value": r["rate"],
             "ci_lo": r["ci_low"], "ci_hi": r["ci_high"]} for r in results]


def emit_plot_data(results, out_dir, stem="figure", svg=False):
    """Write one long CSV per (parameter, metric) group, plus optional SVG charts.

    Returns the list of written paths. Empty ``results`` produce a single
    header-only CSV named ``<stem>.csv``.
    """
    os.makedirs(out_dir, exist_ok=True)
    groups = {}
    for r in results:
        groups.setdefault((r["parameter"], r["metric"]), []).append(r)
    written = []
    if not groups:
        path = os.path.join(out_dir, f"{stem}.csv")
        _write_rows([], PLOT_COLUMNS, path)
        return [path]
    for (param, metric), rows in sorted(groups.items()):
        base = os.path.join(out_dir, f"{stem}_{metric}_vs_{param}")
        _write_rows(plot_rows(rows), PLOT_COLUMNS, base + ".csv")
        written.append(base + ".csv")
        if svg:
            _svg_chart(plot_rows(rows), param, metric, base + ".svg")
            written.append(base + ".svg")
    return written


def _svg_chart(rows, xlabel, ylabel, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "ptlsi"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    series = sorted({r["series"] for r in rows})
    for s in series:
        pts = sorted((r["x"], r["value"], r["ci_lo"], r["ci_hi"]) for r in rows if r["series"] == s)
        x = [p[0] for p in pts]
        y = [p[1] for p in pts]
        ax.plot(x, y, marker="o", label=s)
        ax.fill_between(x, [p[2] for p in pts], [p[3] for p in pts], alpha=0.15)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel.upper())
    ax.set_ylim(0, 1)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _load(args):
    if args.domain_file:
        if not (args.domain_column and args.target_domain):
            raise ValidationError("--domain-file needs --domain-column and --target-domain",
                                  field="domain_column")
        return ingest_csv(args.domain_file, args.target_column, args.domain_column,
                          args.target_domain, args.n_target, args.n_source, args.standardize,
                          args.sigma2, args.seed)
    if not (args.data and args.sources):
        raise ValidationError("give --data and --sources, or --domain-file", field="data")
    sources = [s for s in args.sources.split(",") if s]
    return ingest_files(args.data, sources, args.target_column, args.n_target, args.n_source,
                        args.standardize, args.sigma2, args.seed)


def _infer_config(args, data):
    if args.pipeline == "transfusion":
        cfg = TransFusionConfig.default(data, c=args.c)
        lam0 = args.lambda0 if args.lambda0 is not None else cfg.lambda0
        lamt = args.lambda_tilde if args.lambda_tilde is not None else cfg.lambda_tilde
        weights = [float(w) for w in args.source_weights.split(",")] if args.source_weights else None
        return TransFusionConfig(lam0, lamt, weights)
    informative = _int_list(args.informative, "informative") if args.informative else None
    cfg = OracleTransLassoConfig.default(data, informative, c=args.c)
    lw = args.lambda_w if args.lambda_w is not None else cfg.lambda_w
    ld = args.lambda_delta if args.lambda_delta is not None else cfg.lambda_delta
    return OracleTransLassoConfig(lw, ld, cfg.informative_set)


def cmd_infer(args, argv):
    alpha = _alpha(args.alpha)
    ing = _load(args)
    cfg = _infer_config(args, ing.data)
    baselines = tuple(b for b in args.baselines.split(",") if b)
    bad = set(baselines) - {"naive", "bonferroni", "datasplit"}
    if bad:
        raise ValidationError(f"unknown baseline(s) {sorted(bad)}", field="baselines")
    seg_logs = {} if args.segment_log else None
    res = run_ptlsi(ing.data, cfg, baselines=baselines, conditioning=args.conditioning,
                    window_sigmas=args.window, eps=args.eps, split_seed=args.split_seed,
                    segment_logs=seg_logs)
    doc = res.to_dict()
    doc["alpha"] = alpha
    doc["rejected"] = [r.feature_index for r in res.reports
                       if r.p_selective is not None and r.p_selective <= alpha]
    doc["data"] = ing.summary()
    if ing.sigma2_estimated:
        doc["warnings"] = ["noise variance estimated from target residuals; validity is approximate"]
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
        write_manifest(args.out + ".manifest.json", argv, {"subcommand": "infer", **vars(args)})
    if seg_logs is not None:
        rows = [{"feature": j, **rec} for j, recs in sorted(seg_logs.items()) for rec in recs]
        _write_rows(rows, ("feature", "lower", "upper", "n_first", "n_debias", "n_selected", "match"),
                    args.segment_log)
    return 0


def _rate_command(args, argv, null):
    alpha = _alpha(args.alpha)
    methods = _methods(args.method)
    base = _base_spec(args, null)
    workers = _threads(args)
    if args.sweep:
        if args.sweep not in SPEC_FIELDS:
            raise ValidationError(f"--sweep must be one of {SPEC_FIELDS}", field="sweep")
        if not args.values:
            raise ValidationError("--sweep needs --values", field="values")
        param, values = args.sweep, _values(args.sweep, args.values)
    else:
        param, values = "n_target", [base.n_target]
    rows = sweep(base, param, values, methods, alpha, args.trials, args.pipeline, workers)
    _finish_rates(args, argv, rows, {"subcommand": args.command, "spec": asdict(base),
                                     "alpha": alpha, "methods": list(methods),
                                     "sweep": param, "values": values, "trials": args.trials,
                                     "pipeline": args.pipeline})
    return 0


def _finish_rates(args, argv, rows, config):
    _write_rows(rows, RATE_COLUMNS, args.out)
    if args.out not in (None, "-"):
        write_manifest(args.out + ".manifest.json", argv, config)
    if args.plot_dir:
        emit_plot_data(rows, args.plot_dir, stem=args.command, svg=args.svg)


def cmd_fpr(args, argv):
    return _rate_command(args, argv, null=True)


def cmd_tpr(args, argv):
    return _rate_command(args, argv, null=False)


def cmd_noise(args, argv):
    alpha = _alpha(args.alpha)
    methods = _methods(args.method)
    values = _values("n_target", args.values)
    base = _base_spec(args, True)
    workers = _threads(args)
    rows = []
    for fam in NOISE_FAMILIES:
        for r in sweep(replace(base, noise=fam), "n_target", values, methods, alpha, args.trials,
                       args.pipeline, workers):
            rows.append({**r, "method": f"{r['method']}:{fam}"})
    _finish_rates(args, argv, rows, {"subcommand": "noise", "spec": asdict(base), "alpha": alpha,
                                     "methods": list(methods), "values": values,
                                     "trials": args.trials, "pipeline": args.pipeline})
    return 0


def cmd_bench(args, argv):
    values = _values("n_target", args.values)
    base = _base_spec(args, True)
    workers = _threads(args)
    rows = []
    for v in values:
        recs = simulate(replace(base, n_target=v), args.trials, ("selective",), args.pipeline, workers)
        for trial, j, segs, calls, secs in search_log(recs):
            rows.append({"n_target": v, "trial": trial, "feature": j, "segments": segs,
                         "solver_calls": calls, "seconds": secs})
    _write_rows(rows, ("n_target", "trial", "feature", "segments", "solver_calls", "seconds"), args.out)
    if rows:
        segs = np.array([r["segments"] for r in rows], float)
        secs = np.array([r["seconds"] for r in rows], float)
        r2 = float(np.corrcoef(segs, secs)[0, 1] ** 2) if len(rows) > 2 and segs.std() > 0 else math.nan
        log.info("median segments %.0f, median seconds %.4f, R^2(seconds ~ segments) %.3f",
                 np.median(segs), np.median(secs), r2)
    if args.out not in (None, "-"):
        write_manifest(args.out + ".manifest.json", argv,
                       {"subcommand": "bench", "spec": asdict(base), "values": values,
                        "trials": args.trials, "pipeline": args.pipeline})
    return 0


def cmd_ingest_check(args, argv):
    ing = _load(args)
    sys.stdout.write(json.dumps(ing.summary(), indent=2, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_data_args(sp):
    sp.add_argument("--data", help="target CSV (header row; response in --target-column)")
    sp.add_argument("--sources", help="comma-separated source CSVs with the target's header")
    sp.add_argument("--domain-file", help="single CSV holding every task, split by --domain-column")
    sp.add_argument("--domain-column")
    sp.add_argument("--target-domain")
    sp.add_argument("--target-column", default="y")
    sp.add_argument("--n-target", type=int, help="subsample the target to this many rows")
    sp.add_argument("--n-source", type=int, help="subsample every source to this many rows")
    sp.add_argument("--standardize", action="store_true", help="z-score features over all tasks")
    sp.add_argument("--sigma2", type=float, help="noise variance (estimated when omitted)")
    sp.add_argument("--seed", type=int, default=0, help="subsampling seed")


def _add_sim_args(sp, default_trials=500):
    sp.add_argument("--preset", choices=("desk", "full"), default="desk")
    sp.add_argument("--method", default="all", help=f"'all' or a comma list of {METHODS}")
    sp.add_argument("--trials", type=int, default=default_trials)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--alpha", default="0.05")
    sp.add_argument("--pipeline", choices=PIPELINES, default="transfusion")
    sp.add_argument("--threads", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")
    sp.add_argument("--out", help="CSV output path (default stdout)")
    sp.add_argument("--plot-dir", help="write long-format plot CSVs here")
    sp.add_argument("--svg", action="store_true", help="also draw SVG charts (needs matplotlib)")
    for f in SPEC_FIELDS:
        sp.add_argument("--" + f.replace("_", "-"), dest=f, type=int if f in INT_FIELDS else float)


def build_parser():
    ap = argparse.ArgumentParser(prog="ptlsi", description="Selective inference after transfer-learning feature selection.")
    ap.add_argument("--version", action="version", version=f"ptlsi {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("infer", help="selective p-values for CSV data")
    _add_data_args(sp)
    sp.add_argument("--pipeline", choices=PIPELINES, default="transfusion")
    sp.add_argument("--alpha", default="0.05")
    sp.add_argument("--c", type=float, default=1.0, help="scale of the default penalty levels")
    sp.add_argument("--lambda0", type=float)
    sp.add_argument("--lambda-tilde", type=float)
    sp.add_argument("--source-weights", help="comma-separated a_k")
    sp.add_argument("--informative", help="comma-separated informative source indices (0-based)")
    sp.add_argument("--lambda-w", type=float)
    sp.add_argument("--lambda-delta", type=float)
    sp.add_argument("--conditioning", choices=CONDITIONING_MODES, default="full")
    sp.add_argument("--baselines", default="naive", help="comma list of naive,bonferroni,datasplit")
    sp.add_argument("--split-seed", type=int, default=0)
    sp.add_argument("--window", type=float, default=20.0, help="search half-width in sigmas")
    sp.add_argument("--eps", type=float, default=1e-6, help="sweep advance step in sigmas")
    sp.add_argument("--segment-log", help="CSV of every sweep segment")
    sp.add_argument("--out", help="JSON output path (default stdout)")
    sp.set_defaults(func=cmd_infer)

    for name, fn, helptext in (("fpr", cmd_fpr, "false positive rate under the null"),
                               ("tpr", cmd_tpr, "true positive rate with signal")):
        sp = sub.add_parser(name, help=helptext)
        _add_sim_args(sp)
        sp.add_argument("--sweep", help=f"spec field to vary: {SPEC_FIELDS}")
        sp.add_argument("--values", help="comma-separated values for --sweep")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("noise", help="FPR under each noise family")
    _add_sim_args(sp)
    sp.add_argument("--values", default="40,50,60,70", help="target sizes")
    sp.set_defaults(func=cmd_noise, sweep=None)

    sp = sub.add_parser("bench", help="sweep cost per p-value")
    _add_sim_args(sp, default_trials=20)
    sp.add_argument("--values", default="30,40,50", help="target sizes")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("ingest-check", help="parse a data set and print its shapes")
    _add_data_args(sp)
    sp.set_defaults(func=cmd_ingest_check)
    return ap


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, argv)
    except NumericDegeneracyError as exc:
        print(f"error: numeric degeneracy: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, PTLSIError) as exc:
        field = getattr(exc, "field", None)
        tag = f" [{field}]" if field else ""
        print(f"error{tag}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
