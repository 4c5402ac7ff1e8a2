import math

import numpy as np
import pytest

from ptlsi.data import (
    Interval,
    MultiTaskData,
    SelectionTrace,
    TaskData,
    TruncationRegion,
    build_eta,
    build_stacked,
    make_hypothesis,
    support,
)
from ptlsi.errors import SingularSelectionError, ValidationError

from conftest import make_tasks


def one_row(x, y=0.0):
    return TaskData(np.array([[x]]), np.array([y]), np.eye(1))


def test_stacked_layout_scalar():
    data = MultiTaskData(one_row(3.0), [one_row(2.0)])
    st = build_stacked(data)
    np.testing.assert_array_equal(st.design, [[2.0, 2.0], [0.0, 3.0]])
    assert st.N == 2


def test_stacked_shapes_at_reference_size(rng):
    p, n_s, n_t = 300, 100, 50
    def task(n):
        return TaskData(rng.standard_normal((n, p)), rng.standard_normal(n), np.eye(n))
    st = build_stacked(MultiTaskData(task(n_t), [task(n_s), task(n_s)]))
    assert st.design.shape == (250, 900)
    assert st.response.shape == (250,)
    assert st.covariance.shape == (250, 250)


def test_source_column_mismatch_names_task(rng):
    good = TaskData(rng.standard_normal((4, 3)), np.zeros(4), np.eye(4))
    bad = TaskData(rng.standard_normal((4, 2)), np.zeros(4), np.eye(4))
    with pytest.raises(ValidationError, match="source task 2") as exc:
        MultiTaskData(good, [good, bad])
    assert exc.value.field == "sources[2]"


def test_source_row_mismatch_rejected(rng):
    a = TaskData(rng.standard_normal((4, 3)), np.zeros(4), np.eye(4))
    b = TaskData(rng.standard_normal((5, 3)), np.zeros(5), np.eye(5))
    with pytest.raises(ValidationError):
        MultiTaskData(a, [a, b])


def test_block_pattern_and_weights(rng):
    data = make_tasks(rng, p=4, K=3, n_source=5, n_target=6)
    st = build_stacked(data, weights=[0.5, 2.0, 3.0])
    K = data.K
    for k in range(K):
        np.testing.assert_array_equal(st.block(k, k), data.sources[k].design)
        np.testing.assert_array_equal(st.block(k, K), data.sources[k].design)
        for c in range(K):
            if c != k:
                assert not st.block(k, c).any()
    np.testing.assert_array_equal(st.block(K, K), data.target.design)
    for c in range(K):
        assert not st.block(K, c).any()
    np.testing.assert_array_equal(st.penalty_weights, np.repeat([0.5, 2.0, 3.0, 1.0], 4))


@pytest.mark.parametrize("weights", [[0.0, 1.0], [-1.0, 1.0], [1.0]])
def test_bad_weights(rng, weights):
    data = make_tasks(rng, K=2)
    with pytest.raises(ValidationError):
        build_stacked(data, weights)


def test_covariance_validation(rng):
    X = rng.standard_normal((3, 2))
    with pytest.raises(ValidationError):
        TaskData(X, np.zeros(3), np.array([[1, 0.1, 0], [0, 1, 0], [0, 0, 1.0]]))
    with pytest.raises(ValidationError):
        TaskData(X, np.zeros(3), -np.eye(3))
    with pytest.raises(ValidationError):
        TaskData(X, np.zeros(2), np.eye(3))
    with pytest.raises(ValidationError):
        TaskData(X, np.array([0, np.nan, 0]), np.eye(3))


def test_eta_identity_design():
    eta = build_eta(np.eye(2), [0, 1], 0, n_prefix=3)
    np.testing.assert_array_equal(eta, [0, 0, 0, 1, 0])


def test_eta_single_column():
    c = np.array([[1.0], [1.0], [1.0], [1.0]])
    eta = build_eta(c, [0], 0, n_prefix=2)
    np.testing.assert_allclose(eta[2:], c[:, 0] / 4)
    assert not eta[:2].any()


def test_eta_matches_least_squares(rng):
    X = rng.standard_normal((6, 5))
    M = [1, 3]
    for _ in range(20):
        y = rng.standard_normal(6)
        coef = np.linalg.solve(X[:, M].T @ X[:, M], X[:, M].T @ y)
        for pos, j in enumerate(M):
            eta = build_eta(X, M, j, 0)
            assert eta @ y == pytest.approx(coef[pos], abs=1e-12)


def test_eta_singular_selection():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularSelectionError):
        build_eta(X, [0, 1], 0, 0)


def test_eta_prefix_zero_and_variance_positive(rng):
    data = make_tasks(rng)
    st = build_stacked(data)
    eta = build_eta(data.target.design, [0, 2, 5], 2, st.target_rows.start)
    assert not eta[: st.target_rows.start].any()
    h = make_hypothesis(2, eta, st.covariance, st.response)
    assert h.sigma2 > 0
    assert h.observed_statistic == pytest.approx(eta @ st.response)


def test_support_threshold():
    idx, signs = support(np.array([0.0, 0.3, 5e-11, -1.2]))
    assert idx.tolist() == [1, 3]
    assert signs.tolist() == [1, -1]


def test_trace_signs_consistent():
    tr = SelectionTrace.from_estimates(np.array([0.0, -2.0]), np.array([0.1, 0.0, 0.0]),
                                       np.array([0.1, 0.0, -3.0]))
    assert tr.co_active.tolist() == [1] and tr.co_signs.tolist() == [-1]
    assert tr.selected.tolist() == [0, 2] and tr.selected_signs.tolist() == [1, -1]
    assert tr.same_state(tr)


def test_interval_and_region():
    with pytest.raises(ValidationError):
        Interval(1.0, 0.0)
    iv = Interval(-1.0, 2.0)
    assert 0.5 in iv and 3.0 not in iv
    assert iv.intersect(Interval(3.0, 4.0)) is None
    reg = TruncationRegion([Interval(2.0, 3.0), Interval(-1.0, 0.0), Interval(0.0 + 1e-9, 1.0)],
                           merge_tol=1e-8)
    assert reg.to_list() == [[-1.0, 1.0], [2.0, 3.0]]
    assert reg.total_width == pytest.approx(3.0)
    assert TruncationRegion.real_line().contains_region(reg)
    assert math.isinf(TruncationRegion.real_line().total_width)
