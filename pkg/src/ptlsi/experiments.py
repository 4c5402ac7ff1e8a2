"""Synthetic Monte Carlo harness, rate estimation and CSV ingestion.

Every trial draws fresh designs, noise and source perturbations from its own
generator, spawned from a master :class:`numpy.random.SeedSequence`; results
therefore do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .data import MultiTaskData, TaskData
from .driver import run_ptlsi
from .errors import PTLSIError, ValidationError
from .inference import datasplit_p
from .pipelines import OracleTransLassoConfig, TransFusionConfig

NOISE_FAMILIES = ("gaussian", "laplace", "skewnorm", "t20")
METHODS = ("selective", "oc", "naive", "bonferroni", "ds")
PIPELINES = ("transfusion", "oracle-translasso")
SKEWNORM_SHAPE = 10.0
T_DOF = 20
N_SIGNAL = 5
INFORMATIVE_SPAN = 25
UNINFORMATIVE_SPAN = 50
THREADS_ENV = "PTLSI_THREADS"


@dataclass(frozen=True)
class SyntheticSpec:
    """One simulation setting.

    ``null=True`` gives a target with no signal (FPR mode); otherwise the
    first five target coefficients equal ``gamma`` (TPR mode).
    """

    p: int = 50
    n_target: int = 30
    n_source: int = 40
    informative_count: int = 2
    uninformative_count: int = 1
    gamma: float = 0.5
    upsilon: float = 0.01
    null: bool = True
    noise: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        for name in ("p", "n_target", "n_source", "informative_count"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be positive", field=name)
        if self.uninformative_count < 0:
            raise ValidationError("uninformative_count must be non-negative", field="uninformative_count")
        if self.p < N_SIGNAL:
            raise ValidationError(f"p must be at least {N_SIGNAL}", field="p")
        if not (self.gamma >= 0 and self.upsilon >= 0):
            raise ValidationError("gamma and upsilon must be non-negative", field="gamma")
        if self.noise not in NOISE_FAMILIES:
            raise ValidationError(f"noise must be one of {NOISE_FAMILIES}", field="noise")

    @property
    def K(self):
        return self.informative_count + self.uninformative_count

    @classmethod
    def desk(cls, **kw):
        return cls(**kw)

    @classmethod
    def full(cls, **kw):
        base = dict(p=300, n_target=50, n_source=100, informative_count=3,
                    uninformative_count=2, gamma=0.5, upsilon=0.01)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True, eq=False)
class SyntheticData:
    data: MultiTaskData
    beta_target: np.ndarray
    beta_sources: np.ndarray
    informative_set: tuple

    @property
    def nonnull(self):
        return set(np.flatnonzero(self.beta_target).tolist())


def draw_noise(rng, family, size):
    """Zero-mean, unit-variance noise from one of :data:`NOISE_FAMILIES`."""
    if family == "gaussian":
        return rng.standard_normal(size)
    if family == "laplace":
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size)
    if family == "skewnorm":
        dist = stats.skewnorm(SKEWNORM_SHAPE)
        mean, var = dist.stats(moments="mv")
        return (dist.rvs(size=size, random_state=rng) - mean) / math.sqrt(var)
    if family == "t20":
        return rng.standard_t(T_DOF, size) * math.sqrt((T_DOF - 2) / T_DOF)
    raise ValidationError(f"unknown noise family {family!r}", field="noise")


def generate(spec: SyntheticSpec, rng=None) -> SyntheticData:
    """Draw one multi-task data set; ``rng`` defaults to one seeded by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    p = spec.p
    beta0 = np.zeros(p)
    if not spec.null:
        beta0[:N_SIGNAL] = spec.gamma
    base = np.zeros(p)
    base[0] = -spec.gamma
    base[1:N_SIGNAL] = spec.gamma
    betas = []
    for k in range(spec.K):
        b = base.copy()
        if k < spec.informative_count:
            span, var = INFORMATIVE_SPAN, spec.upsilon * 0.5
        else:
            span, var = UNINFORMATIVE_SPAN, spec.upsilon * 0.5 * 10
        span = min(span, p)
        if var > 0:
            b[:span] += rng.normal(0.0, math.sqrt(var), span)
        betas.append(b)

    def task(n, beta):
        X = rng.standard_normal((n, p))
        y = X @ beta + draw_noise(rng, spec.noise, n)
        return TaskData(X, y, np.eye(n))

    target = task(spec.n_target, beta0)
    sources = [task(spec.n_source, b) for b in betas]
    return SyntheticData(MultiTaskData(target, sources), beta0, np.array(betas),
                         tuple(range(spec.informative_count)))


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateEstimate:
    rejections: int
    trials: int
    rate: float
    ci_low: float
    ci_high: float
    empty_trials: int = 0

    @classmethod
    def from_counts(cls, rejections, tests, empty_trials=0):
        """Clopper-Pearson 95% interval; ``rate`` is NaN when nothing was tested."""
        if tests == 0:
            return cls(0, 0, math.nan, 0.0, 1.0, empty_trials)
        ci = stats.binomtest(int(rejections), int(tests)).proportion_ci(0.95, method="exact")
        return cls(int(rejections), int(tests), rejections / tests, float(ci.low), float(ci.high),
                   empty_trials)

    @property
    def se(self):
        if self.trials == 0:
            return math.nan
        return math.sqrt(self.rate * (1 - self.rate) / self.trials)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrialRecord:
    """Per-trial outcome: ``tests[method]`` lists ``(feature, is_null, p)``."""

    seed_index: int
    tests: dict
    search: list = field(default_factory=list)
    failures: int = 0


def _config_for(pipeline, data, informative_set):
    if pipeline == "transfusion":
        return TransFusionConfig.default(data)
    if pipeline == "oracle-translasso":
        return OracleTransLassoConfig.default(data, informative_set)
    raise ValidationError(f"pipeline must be one of {PIPELINES}", field="pipeline")


def run_trial(spec: SyntheticSpec, seed_seq, methods=METHODS, pipeline="transfusion",
              seed_index=0) -> TrialRecord:
    """Generate one data set and compute every requested p-value on it."""
    methods = tuple(methods)
    rng = np.random.default_rng(seed_seq)
    split_seed = int(seed_seq.generate_state(1)[0])
    syn = generate(spec, rng)
    data = syn.data
    nonnull = syn.nonnull
    cfg = _config_for(pipeline, data, syn.informative_set)
    rec = TrialRecord(seed_index, {m: [] for m in methods})

    want_full = "selective" in methods
    want_oc = "oc" in methods
    if want_full or want_oc or "naive" in methods or "bonferroni" in methods:
        # naive/Bonferroni alone only need the cheap single-segment pass
        conditioning = "both" if (want_full and want_oc) else ("full" if want_full else "oc")
        res = run_ptlsi(data, cfg, baselines=("naive", "bonferroni"), conditioning=conditioning)
        for r in res.reports:
            is_null = r.feature_index not in nonnull
            if r.status != "ok":
                rec.failures += 1
            if want_full and r.p_selective is not None and conditioning != "oc":
                rec.tests["selective"].append((r.feature_index, is_null, r.p_selective))
            if want_oc and r.p_oc is not None:
                rec.tests["oc"].append((r.feature_index, is_null, r.p_oc))
            if "naive" in methods and not math.isnan(r.p_naive):
                rec.tests["naive"].append((r.feature_index, is_null, r.p_naive))
            if "bonferroni" in methods and r.p_bonferroni is not None:
                rec.tests["bonferroni"].append((r.feature_index, is_null, r.p_bonferroni))
        for j, st in res.stats.items():
            rec.search.append((j, st.segments_visited, st.solver_calls, st.wall_time))
    if "ds" in methods:
        ds_cfg = lambda half: _config_for(pipeline, half, syn.informative_set)
        try:
            ds = datasplit_p(data, ds_cfg, split_seed)
            for j, pv in sorted(ds.pvalues.items()):
                rec.tests["ds"].append((j, j not in nonnull, pv))
        except PTLSIError:
            rec.failures += 1
    return rec


def _trial_job(args):
    spec, seed_seq, methods, pipeline, idx = args
    return run_trial(spec, seed_seq, methods, pipeline, idx)


def default_workers():
    val = os.environ.get(THREADS_ENV)
    if val:
        return max(1, int(val))
    return 1


def simulate(spec: SyntheticSpec, trials, methods=METHODS, pipeline="transfusion", workers=None):
    """Run ``trials`` independent trials; returns the list of :class:`TrialRecord`."""
    if trials < 0:
        raise ValidationError("trials must be non-negative", field="trials")
    workers = default_workers() if workers is None else max(1, int(workers))
    seeds = np.random.SeedSequence(spec.seed).spawn(trials)
    jobs = [(spec, s, tuple(methods), pipeline, i) for i, s in enumerate(seeds)]
    if workers == 1 or trials <= 1:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_job, jobs, chunksize=max(1, trials // (4 * workers))))


def rate(records, method, alpha, null):
    """FPR (``null=True``) or TPR over the selected features of one method."""
    if not 0 <= alpha <= 1:
        raise ValidationError("alpha must lie in [0, 1]", field="alpha")
    rej = tests = empty = 0
    for rec in records:
        chosen = [t for t in rec.tests.get(method, []) if t[1] == null]
        if not rec.tests.get(method):
            empty += 1
        tests += len(chosen)
        # a level-0 test never rejects, even a p-value that underflowed to 0
        rej += sum(1 for _, _, pv in chosen if alpha > 0 and pv <= alpha)
    return RateEstimate.from_counts(rej, tests, empty)


def estimate_fpr(spec: SyntheticSpec, method="selective", alpha=0.05, trials=500,
                 pipeline="transfusion", workers=None) -> RateEstimate:
    if not spec.null:
        raise ValidationError("FPR estimation needs a null spec", field="null")
    return rate(simulate(spec, trials, (method,), pipeline, workers), method, alpha, True)


def estimate_tpr(spec: SyntheticSpec, method="selective", alpha=0.05, trials=500,
                 pipeline="transfusion", workers=None) -> RateEstimate:
    if spec.null:
        raise ValidationError("TPR estimation needs a signal spec", field="null")
    return rate(simulate(spec, trials, (method,), pipeline, workers), method, alpha, False)


def pooled_pvalues(records, method, null=True):
    return np.array([pv for rec in records for _, is_null, pv in rec.tests.get(method, [])
                     if is_null == null])


def sweep(base: SyntheticSpec, parameter, values, methods=METHODS, alpha=0.05, trials=500,
          pipeline="transfusion", workers=None):
    """Rates per (value, method) for one swept spec field.

    Returns a list of dicts with keys ``parameter, value, method, metric`` and
    the :class:`RateEstimate` fields.
    """
    rows = []
    metric = "fpr" if base.null else "tpr"
    for v in values:
        spec = replace(base, **{parameter: v})
        recs = simulate(spec, trials, methods, pipeline, workers)
        for m in methods:
            est = rate(recs, m, alpha, base.null)
            rows.append({"parameter": parameter, "value": v, "method": m, "metric": metric,
                         **est.to_dict()})
    return rows


def search_log(records):
    """Flatten per-feature sweep statistics: ``(trial, feature, segments, calls, seconds)``."""
    return [(rec.seed_index, *row) for rec in records for row in rec.search]


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

MISSING = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True, eq=False)
class IngestResult:
    data: MultiTaskData
    feature_names: tuple
    sigma2: float
    sigma2_estimated: bool
    dropped_rows: int
    domains: tuple = ()

    def summary(self):
        return {
            "target_shape": list(self.data.target.design.shape),
            "source_shapes": [list(s.design.shape) for s in self.data.sources],
            "features": list(self.feature_names),
            "sigma2": self.sigma2,
            "sigma2_estimated": self.sigma2_estimated,
            "dropped_rows": self.dropped_rows,
            "domains": list(self.domains),
        }


def read_numeric_csv(path, keep_text=()):
    """Parse a header-first CSV into ``(header, rows, dropped)``.

    Cells in ``keep_text`` columns stay strings; every other cell must parse
    as a float. Rows with a missing value are dropped and counted.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file", field="path") from None
        if len(set(header)) != len(header):
            raise ValidationError(f"{path}: duplicate column names", field="header")
        rows, dropped = [], 0
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(raw)}",
                                      field="row")
            if any(c.strip().lower() in MISSING for c in raw):
                dropped += 1
                continue
            row = []
            for name, cell in zip(header, raw):
                if name in keep_text:
                    row.append(cell.strip())
                    continue
                try:
                    row.append(float(cell))
                except ValueError:
                    raise ValidationError(f"{path}:{lineno}: non-numeric value {cell!r} in column {name!r}",
                                          field=name) from None
            rows.append(row)
    return header, rows, dropped


def estimate_sigma2(X, y):
    """Residual variance of a preliminary fit (OLS when n > p + 1, else Lasso)."""
    from . import lasso

    n, p = X.shape
    Xc = np.column_stack([np.ones(n), X])
    if n > p + 1:
        coef, *_ = np.linalg.lstsq(Xc, y, rcond=None)
        dof = n - p - 1
        resid = y - Xc @ coef
    else:
        lam = math.sqrt(math.log(max(p, 2)) / n)
        yc = y - y.mean()
        sol = lasso.solve(lasso.L1Problem(X, yc, n, lam))
        resid = yc - X @ sol.coefficients
        dof = max(1, n - 1 - len(sol.active))
    return float(resid @ resid / dof)


def _subsample(rng, X, y, size, label):
    n = X.shape[0]
    if size is None:
        return X, y
    if size > n:
        raise ValidationError(f"domain {label!r} has {n} rows, {size} requested", field="size")
    idx = np.sort(rng.choice(n, size, replace=False))
    return X[idx], y[idx]


def _assemble(parts, target_key, source_keys, names, n_target, n_source, seed, standardize,
              sigma2, dropped):
    rng = np.random.default_rng(seed)
    if n_source is None:
        n_source = min(parts[k][0].shape[0] for k in source_keys)
    Xt, yt = _subsample(rng, *parts[target_key], n_target, target_key)
    src = [_subsample(rng, *parts[k], n_source, k) for k in source_keys]
    if standardize:
        allX = np.vstack([Xt] + [s[0] for s in src])
        mu, sd = allX.mean(axis=0), allX.std(axis=0)
        sd[sd == 0] = 1.0
        Xt = (Xt - mu) / sd
        src = [((Xs - mu) / sd, ys) for Xs, ys in src]
    estimated = sigma2 is None
    if estimated:
        sigma2 = estimate_sigma2(Xt, yt)
    if not sigma2 > 0:
        raise ValidationError("sigma2 must be positive", field="sigma2")
    target = TaskData(Xt, yt, sigma2 * np.eye(len(yt)))
    sources = [TaskData(Xs, ys, sigma2 * np.eye(len(ys))) for Xs, ys in src]
    return IngestResult(MultiTaskData(target, sources), tuple(names), float(sigma2), estimated,
                        dropped, (target_key, *source_keys))


def ingest_csv(path, target_column, domain_column, target_domain, n_target=None, n_source=None,
               standardize=False, sigma2=None, seed=0) -> IngestResult:
    """Load one CSV whose ``domain_column`` partitions rows into tasks.

    Rows labelled ``target_domain`` form the target; every other label becomes
    a source (in sorted label order). Each domain is subsampled without
    replacement by ``seed`` to the requested size; sources default to the
    smallest source domain size. When ``sigma2`` is omitted it is estimated
    from the target and ``sigma2_estimated`` is set.
    """
    header, rows, dropped = read_numeric_csv(path, keep_text=(domain_column,))
    for col in (target_column, domain_column):
        if col not in header:
            raise ValidationError(f"column {col!r} not in {path}", field=col)
    names = [h for h in header if h not in (target_column, domain_column)]
    fi = [header.index(h) for h in names]
    ti, di = header.index(target_column), header.index(domain_column)
    groups = {}
    for row in rows:
        groups.setdefault(row[di], []).append(row)
    if target_domain not in groups:
        raise ValidationError(f"target domain {target_domain!r} has no rows", field="target_domain")
    sources = sorted(k for k in groups if k != target_domain)
    if not sources:
        raise ValidationError("need at least one source domain", field=domain_column)
    parts = {k: (np.array([[r[i] for i in fi] for r in g], dtype=float),
                 np.array([r[ti] for r in g], dtype=float)) for k, g in groups.items()}
    return _assemble(parts, target_domain, sources, names, n_target, n_source, seed, standardize,
                     sigma2, dropped)


def ingest_files(target_path, source_paths, target_column, n_target=None, n_source=None,
                 standardize=False, sigma2=None, seed=0) -> IngestResult:
    """Load the target and each source from separate CSVs with identical headers."""
    parts, names, dropped = {}, None, 0
    keys = [str(target_path)] + [str(s) for s in source_paths]
    if not source_paths:
        raise ValidationError("need at least one source file", field="sources")
    for key in keys:
        header, rows, d = read_numeric_csv(key)
        dropped += d
        if target_column not in header:
            raise ValidationError(f"column {target_column!r} not in {key}", field=target_column)
        feats = [h for h in header if h != target_column]
        if names is None:
            names = feats
        elif feats != names:
            raise ValidationError(f"{key}: feature columns differ from {keys[0]}", field="header")
        arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
        ti = header.index(target_column)
        parts[key] = (np.delete(arr, ti, axis=1), arr[:, ti])
    return _assemble(parts, keys[0], keys[1:], names, n_target, n_source, seed, standardize,
                     sigma2, dropped)


def write_domain_csv(result: IngestResult, path, target_column="y", domain_column="domain"):
    """Re-emit an ingested data set in the single-file domain layout."""
    tasks = [result.data.target, *result.data.sources]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*result.feature_names, target_column, domain_column])
        for label, task in zip(result.domains, tasks):
            for x, y in zip(task.design, task.response):
                w.writerow([*(repr(float(v)) for v in x), repr(float(y)), label])
