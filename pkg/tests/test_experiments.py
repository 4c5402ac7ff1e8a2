import math

import numpy as np
import pytest

from ptlsi.errors import ValidationError
from ptlsi.experiments import (
    NOISE_FAMILIES,
    RateEstimate,
    SyntheticSpec,
    TrialRecord,
    draw_noise,
    estimate_fpr,
    generate,
    ingest_csv,
    ingest_files,
    rate,
    simulate,
    sweep,
    write_domain_csv,
)


def test_full_scale_defaults():
    s = SyntheticSpec.full()
    assert (s.p, s.n_source, s.n_target) == (300, 100, 50)
    assert (s.informative_count, s.uninformative_count) == (3, 2)
    assert (s.gamma, s.upsilon) == (0.5, 0.01)


def test_desk_defaults():
    s = SyntheticSpec.desk()
    assert (s.p, s.n_target, s.n_source, s.K) == (50, 30, 40, 3)


@pytest.mark.parametrize("kw", [dict(p=0), dict(informative_count=0), dict(gamma=-1.0),
                                dict(noise="cauchy"), dict(upsilon=-0.1)])
def test_spec_validation(kw):
    with pytest.raises(ValidationError):
        SyntheticSpec(**kw)


def test_generate_patterns():
    syn = generate(SyntheticSpec(upsilon=0.0, null=False, gamma=0.5, seed=3))
    assert syn.beta_target[:5].tolist() == [0.5] * 5 and not syn.beta_target[5:].any()
    for b in syn.beta_sources:
        assert b[0] == -0.5 and b[1:5].tolist() == [0.5] * 4 and not b[5:].any()
    null = generate(SyntheticSpec(seed=3))
    assert not null.beta_target.any()
    d = null.data
    assert d.target.design.shape == (30, 50) and d.K == 3
    np.testing.assert_array_equal(d.sources[0].covariance, np.eye(40))


def test_perturbation_spans():
    syn = generate(SyntheticSpec(upsilon=1.0, seed=1))
    base = np.zeros(50)
    base[0], base[1:5] = -0.5, 0.5
    for k, b in enumerate(syn.beta_sources):
        diff = b - base
        if k < 2:
            assert diff[:25].all() and not diff[25:].any()
        else:
            assert diff.all()


def test_generate_deterministic():
    a = generate(SyntheticSpec(seed=9))
    b = generate(SyntheticSpec(seed=9))
    np.testing.assert_array_equal(a.data.target.response, b.data.target.response)


@pytest.mark.parametrize("family", NOISE_FAMILIES)
def test_noise_moments(family):
    x = draw_noise(np.random.default_rng(0), family, 100_000)
    assert abs(x.mean()) <= 0.02
    assert abs(x.var() - 1.0) <= 0.05


def test_rate_estimate_ci():
    est = RateEstimate.from_counts(5, 100)
    assert est.rate == 0.05 and est.ci_low < 0.05 < est.ci_high
    assert math.isnan(RateEstimate.from_counts(0, 0).rate)


def test_rate_alpha_zero_and_empty_trials():
    recs = [TrialRecord(0, {"naive": [(1, True, 0.0), (2, True, 0.5)]}),
            TrialRecord(1, {"naive": []})]
    assert rate(recs, "naive", 0.0, True).rate == 0.0
    est = rate(recs, "naive", 0.05, True)
    assert est.rejections == 1 and est.trials == 2 and est.empty_trials == 1
    with pytest.raises(ValidationError):
        rate(recs, "naive", 1.5, True)


def test_simulate_seeded_and_worker_independent():
    spec = SyntheticSpec(p=10, n_target=15, n_source=15, seed=4)
    a = simulate(spec, 4, ("selective", "naive"), workers=1)
    b = simulate(spec, 4, ("selective", "naive"), workers=2)
    assert [r.tests for r in a] == [r.tests for r in b]


def test_estimate_fpr_requires_null():
    with pytest.raises(ValidationError):
        estimate_fpr(SyntheticSpec(null=False), trials=1)


def test_fpr_small_run_and_alpha_zero():
    spec = SyntheticSpec(p=10, n_target=15, n_source=15, seed=2)
    est = estimate_fpr(spec, "selective", 0.05, trials=5)
    assert 0 <= est.rejections <= est.trials
    assert estimate_fpr(spec, "naive", 0.0, trials=5).rejections == 0


def test_sweep_rows():
    base = SyntheticSpec(p=8, n_target=12, n_source=12, seed=0)
    rows = sweep(base, "n_target", [12, 14], methods=("naive", "bonferroni"), trials=2)
    assert len(rows) == 4
    assert {r["value"] for r in rows} == {12, 14}
    assert {r["metric"] for r in rows} == {"fpr"}


def test_gamma_zero_signal_mode_is_null_target():
    syn = generate(SyntheticSpec(null=False, gamma=0.0, seed=0))
    assert not syn.beta_target.any() and syn.nonnull == set()


def _fixture(tmp_path):
    path = tmp_path / "tasks.csv"
    rows = ["x1,x2,y,domain"]
    vals = np.random.default_rng(0).standard_normal((10, 3))
    for i, (a, b, c) in enumerate(vals.tolist()):
        rows.append(f"{a!r},{b!r},{c!r},{'T' if i < 4 else 'S'}")
    path.write_text("\n".join(rows) + "\n")
    return path


def test_ingest_shapes(tmp_path):
    res = ingest_csv(_fixture(tmp_path), "y", "domain", "T", n_target=4, n_source=6, sigma2=1.0)
    assert res.data.target.design.shape == (4, 2)
    assert res.data.sources[0].design.shape == (6, 2)
    assert not res.sigma2_estimated
    est = ingest_csv(_fixture(tmp_path), "y", "domain", "T")
    assert est.sigma2_estimated and est.sigma2 > 0


def test_ingest_too_many_rows(tmp_path):
    with pytest.raises(ValidationError):
        ingest_csv(_fixture(tmp_path), "y", "domain", "T", n_target=5, sigma2=1.0)


def test_ingest_round_trip(tmp_path):
    src = _fixture(tmp_path)
    res = ingest_csv(src, "y", "domain", "T", sigma2=1.0)
    out = tmp_path / "again.csv"
    write_domain_csv(res, out)
    again = ingest_csv(out, "y", "domain", "T", sigma2=1.0)
    np.testing.assert_array_equal(again.data.target.design, res.data.target.design)
    np.testing.assert_array_equal(again.data.sources[0].response, res.data.sources[0].response)
    orig = np.loadtxt(src, delimiter=",", skiprows=1, usecols=(0, 1, 2))
    back = np.vstack([np.column_stack([t.design, t.response])
                      for t in (again.data.target, *again.data.sources)])
    np.testing.assert_array_equal(np.sort(orig, axis=0), np.sort(back, axis=0))


def test_ingest_missing_and_non_numeric(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("x1,y,domain\n1,2,T\nNA,3,T\n4,5,S\n6,7,S\n8,9,T\n")
    res = ingest_csv(p, "y", "domain", "T", sigma2=1.0)
    assert res.dropped_rows == 1 and res.data.n_target == 2
    q = tmp_path / "bad.csv"
    q.write_text("x1,y,domain\n1,abc,T\n4,5,S\n")
    with pytest.raises(ValidationError):
        ingest_csv(q, "y", "domain", "T")


def test_ingest_separate_files(tmp_path):
    t = tmp_path / "t.csv"
    s = tmp_path / "s.csv"
    t.write_text("a,y\n1,2\n3,4\n5,7\n")
    s.write_text("a,y\n1,1\n2,2\n")
    res = ingest_files(t, [s], "y", sigma2=2.0)
    assert res.data.target.design.shape == (3, 1)
    np.testing.assert_array_equal(res.data.target.covariance, 2.0 * np.eye(3))
    bad = tmp_path / "b.csv"
    bad.write_text("b,y\n1,1\n")
    with pytest.raises(ValidationError):
        ingest_files(t, [bad], "y", sigma2=1.0)
