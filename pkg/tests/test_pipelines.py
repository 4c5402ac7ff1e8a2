import numpy as np
import pytest

from ptlsi.data import MultiTaskData, TaskData, build_stacked
from ptlsi.errors import ValidationError
from ptlsi.lasso import L1Problem, kkt_check, solve
from ptlsi.pipelines import (
    OracleTransLasso,
    OracleTransLassoConfig,
    TransFusion,
    TransFusionConfig,
    oracle_translasso_fit,
    select,
    transfusion_fit,
)
from ptlsi.data import SelectionTrace

from conftest import make_tasks


def one_row(x, y):
    return TaskData(np.array([[x]]), np.array([y]), np.eye(1))


def test_aggregate_arithmetic():
    data = MultiTaskData(one_row(1.0, 0.0), [one_row(1.0, 0.0)])
    tf = TransFusion(data, TransFusionConfig(1.0, 1.0))
    # theta = (beta1 - beta0, beta0) = (-2, 4): beta1 = 2, beta0 = 4
    assert tf.aggregate(np.array([-2.0, 4.0]))[0] == pytest.approx(3.0)


def test_aggregation_two_forms_agree(rng):
    data = make_tasks(rng, p=6, K=3)
    tf = TransFusion(data, TransFusionConfig.default(data))
    for _ in range(10):
        theta = rng.standard_normal(tf.first_design.shape[1])
        np.testing.assert_allclose(tf.aggregate(theta), tf.aggregation @ theta, atol=1e-10)


def test_everything_killed(rng):
    data = make_tasks(rng)
    tr = transfusion_fit(data, TransFusionConfig(1e6, 1e6))
    assert tr.co_active.size == 0 and tr.debias_active.size == 0 and tr.selected.size == 0
    tr = oracle_translasso_fit(data, OracleTransLassoConfig(1e6, 1e6, (0,)))
    assert tr.selected.size == 0


def test_transfusion_equals_two_independent_solves(rng):
    data = make_tasks(rng, p=8, K=2, n_source=12, n_target=10)
    cfg = TransFusionConfig.default(data)
    tr = transfusion_fit(data, cfg)
    st = build_stacked(data)
    theta = solve(L1Problem(st.design, st.response, st.N, cfg.lambda0, st.penalty_weights)).coefficients
    w = st.aggregation_matrix() @ theta / st.N
    X0, y0 = data.target.design, data.target.response
    delta = solve(L1Problem(X0, y0 - X0 @ w, data.n_target, cfg.lambda_tilde)).coefficients
    np.testing.assert_allclose(tr.beta, w + delta, atol=1e-8)
    np.testing.assert_allclose(tr.estimates["w"], w, atol=1e-8)


def test_stage_kkt_residuals(rng):
    data = make_tasks(rng, p=10, K=2)
    tf = TransFusion(data, TransFusionConfig.default(data))
    tr = tf.fit()
    y = tf.response
    assert kkt_check(tf.first_problem(y), tr.estimates["first_stage"]) <= 1e-8
    assert kkt_check(tf.second_problem(y, tr.estimates["w"]), tr.estimates["delta"]) <= 1e-8


def test_noise_sources_at_kill_level_reduce_to_target_lasso(rng):
    p = 6
    X0 = rng.standard_normal((15, p))
    y0 = X0[:, 0] * 2 + rng.standard_normal(15)
    target = TaskData(X0, y0, np.eye(15))
    sources = [TaskData(rng.standard_normal((10, p)), rng.standard_normal(10), np.eye(10)) for _ in range(2)]
    data = MultiTaskData(target, sources)
    lam_t = 0.3
    tr = transfusion_fit(data, TransFusionConfig(1e6, lam_t))
    plain = solve(L1Problem(X0, y0, 15, lam_t)).coefficients
    np.testing.assert_allclose(tr.beta, plain, atol=1e-8)


def test_otl_stacking_and_independent_solve(rng):
    data = make_tasks(rng, p=8, K=3)
    cfg = OracleTransLassoConfig.default(data, informative_set=(0, 2))
    otl = OracleTransLasso(data, cfg)
    np.testing.assert_array_equal(otl.first_design,
                                  np.vstack([data.sources[0].design, data.sources[2].design]))
    assert otl.n_stacked == 2 * data.n_source + data.n_target
    tr = otl.fit()
    XI = otl.first_design
    yI = np.concatenate([data.sources[0].response, data.sources[2].response])
    w = solve(L1Problem(XI, yI, XI.shape[0], cfg.lambda_w)).coefficients
    np.testing.assert_allclose(tr.estimates["w"], w, atol=1e-8)
    X0, y0 = data.target.design, data.target.response
    delta = solve(L1Problem(X0, y0 - X0 @ w, data.n_target, cfg.lambda_delta)).coefficients
    np.testing.assert_allclose(tr.beta, w + delta, atol=1e-8)


def test_otl_all_sources_is_concatenation(rng):
    data = make_tasks(rng, K=2)
    otl = OracleTransLasso(data, OracleTransLassoConfig.default(data))
    np.testing.assert_array_equal(otl.first_design, np.vstack([s.design for s in data.sources]))


def test_select_examples():
    tr = SelectionTrace.from_estimates(np.zeros(1), np.zeros(4), np.array([0, 0.3, 0, -1.2]))
    M, S = select(tr)
    assert M.tolist() == [1, 3] and S.tolist() == [1, -1]
    assert select(SelectionTrace.from_estimates(np.zeros(1), np.zeros(2), np.zeros(2)))[0].size == 0
    M, _ = select(SelectionTrace.from_estimates(np.zeros(1), np.zeros(2), np.array([5e-11, 1.0])))
    assert M.tolist() == [1]


@pytest.mark.parametrize("kw", [dict(lambda0=0.0, lambda_tilde=1.0), dict(lambda0=1.0, lambda_tilde=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        TransFusionConfig(**kw)


def test_otl_config_validation(rng):
    with pytest.raises(ValidationError):
        OracleTransLassoConfig(1.0, 1.0, ())
    with pytest.raises(ValidationError):
        OracleTransLassoConfig(1.0, 1.0, (0, 0))
    data = make_tasks(rng, K=2)
    with pytest.raises(ValidationError):
        OracleTransLasso(data, OracleTransLassoConfig(1.0, 1.0, (5,)))


def test_default_rates(rng):
    data = make_tasks(rng, p=8, K=2, n_source=12, n_target=10)
    cfg = TransFusionConfig.default(data)
    assert cfg.lambda0 == pytest.approx(np.sqrt(np.log(8) / 34))
    assert cfg.lambda_tilde == pytest.approx(np.sqrt(np.log(8) / 10))
    ocfg = OracleTransLassoConfig.default(data, (1,))
    assert ocfg.lambda_w == pytest.approx(np.sqrt(np.log(8) / 12))
