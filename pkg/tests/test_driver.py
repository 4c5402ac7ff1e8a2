import json

import numpy as np
import pytest

from ptlsi.data import MultiTaskData, TaskData
from ptlsi.driver import run_ptlsi, run_ptlsi_oc
from ptlsi.experiments import SyntheticSpec, generate
from ptlsi.pipelines import OracleTransLassoConfig, TransFusionConfig

from oracles import small_instance


def _null_instance(seed):
    return generate(SyntheticSpec(p=10, n_target=15, n_source=15, seed=seed)).data


def _first_selecting(start):
    for seed in range(start, start + 50):
        data = _null_instance(seed)
        res = run_ptlsi(data, TransFusionConfig.default(data))
        if res.selected:
            return data, res
    pytest.skip("no selection found")


def test_observed_statistic_inside_region():
    data, res = _first_selecting(0)
    for r in res.reports:
        assert r.status == "ok"
        assert any(iv.lower <= r.z_obs <= iv.upper for iv in r.region.intervals)
        assert 0 <= r.p_selective <= 1


def test_oc_region_never_larger():
    data, _ = _first_selecting(10)
    cfg = TransFusionConfig.default(data)
    both = run_ptlsi(data, cfg, conditioning="both")
    oc = run_ptlsi_oc(data, cfg)
    for r, r_oc in zip(both.reports, oc.reports):
        assert len(r_oc.region.intervals) == 1
        assert 0 <= r_oc.p_selective <= 1
        assert r_oc.p_selective == pytest.approx(r.p_oc)
        assert r.region.contains_region(r.region_oc, tol=1e-9)
        assert r.region.total_width >= r.region_oc.total_width - 1e-9


def test_byte_identical_documents():
    data, _ = _first_selecting(20)
    cfg = TransFusionConfig.default(data)
    kw = dict(baselines=("naive", "bonferroni", "datasplit"), split_seed=5)
    a = run_ptlsi(data, cfg, **kw).to_json()
    b = run_ptlsi(data, cfg, **kw).to_json()
    assert a == b
    doc = json.loads(a)
    assert doc["config"]["pipeline"] and doc["config"]["split_seed"] == 5
    assert "wall_time" not in json.dumps(doc["search"])


def test_empty_selection_status():
    data = _null_instance(0)
    res = run_ptlsi(data, TransFusionConfig(1e6, 1e6))
    assert res.selected == [] and res.reports == []
    assert res.status.startswith("empty selection")


def test_singular_feature_is_isolated():
    rng = np.random.default_rng(0)
    X0 = rng.standard_normal((6, 3))
    X0[:, 2] = X0[:, 1]
    target = TaskData(X0, X0 @ np.array([3.0, 3.0, 0.0]) + 0.1 * rng.standard_normal(6), np.eye(6))
    source = TaskData(rng.standard_normal((6, 3)), rng.standard_normal(6), np.eye(6))
    data = MultiTaskData(target, [source])
    res = run_ptlsi(data, TransFusionConfig(1e6, 1e-3))
    if {1, 2} <= set(res.selected):
        assert all(r.status.startswith("skipped") for r in res.reports)
        assert len(res.reports) == len(res.selected)


def test_baselines_attached():
    data, _ = _first_selecting(30)
    res = run_ptlsi(data, TransFusionConfig.default(data),
                    baselines=("bonferroni", "datasplit"))
    for r in res.reports:
        assert r.p_bonferroni == min(1.0, r.p_naive * 2 ** data.p) or r.p_bonferroni == 1.0
    assert res.datasplit is not None and "pvalues" in res.datasplit


def test_otl_driver_runs():
    rng = np.random.default_rng(2)
    for _ in range(20):
        data = small_instance(rng, K=2)
        res = run_ptlsi(data, OracleTransLassoConfig.default(data, (0,)))
        if res.selected:
            assert all(r.status == "ok" for r in res.reports)
            assert res.config["pipeline"] == "oracle-translasso"
            return
    pytest.skip("no selection found")


def test_bad_conditioning():
    data = _null_instance(0)
    with pytest.raises(ValueError):
        run_ptlsi(data, TransFusionConfig.default(data), conditioning="partial")
