import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dalsolve.errors import ContractViolation
from dalsolve.prox import (ElasticNet, GroupLasso, L1, TraceNorm, WeightedL1,
                           make_regularizer, moreau_decomposition_check,
                           project_linf_ball)

from oracles import NumericProx, l2_ball_support, random_regularizers


def test_l1_prox_example(backend):
    x, act = L1(1.0).prox(np.array([2.0, -0.5, 0.0]))
    np.testing.assert_array_equal(x, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(act.active, [0])
    assert L1(1.0).envelope_star(np.array([2.0, -0.5, 0.0])) == 0.5


def test_group_prox_example(backend):
    y = np.array([3.0, 4.0])
    x, act = GroupLasso(2.0, [np.arange(2)]).prox(y)
    np.testing.assert_allclose(x, 0.6 * y)
    np.testing.assert_allclose(act.ratios, [0.4])
    assert 0 < act.ratios.min() <= 1


def test_envelope_at_zero_and_values():
    z = np.zeros(4)
    for reg in (L1(1.0), WeightedL1([1, 0, 2, 1]), GroupLasso(1.0, [[0, 1], [2, 3]]),
                ElasticNet(1.0, 0.3), TraceNorm(1.0, (2, 2))):
        assert reg.envelope_star(z) == 0.0
    assert L1(2.0).value(np.array([1.0, -1.0])) == 4.0
    assert WeightedL1([0.0, 1.0]).value(np.array([5.0, 0.0])) == 0.0


def test_group_value_direct_sum(rng):
    groups = [np.array([0, 3]), np.array([1]), np.array([2, 4, 5])]
    reg = GroupLasso(0.7, groups)
    w = rng.standard_normal(6)
    direct = 0.0
    for g in groups:
        direct += 0.7 * np.sqrt(sum(w[j] ** 2 for j in g))
    assert reg.value(w) == pytest.approx(direct, rel=1e-15)


def test_project_linf_ball():
    np.testing.assert_array_equal(project_linf_ball(np.array([2.0, -0.5]), 1.0), [1.0, -0.5])
    y = np.array([0.3, -0.2])
    np.testing.assert_array_equal(project_linf_ball(y, 1.0), y)


def test_moreau_check_examples(rng):
    z = rng.standard_normal(10) * 3
    assert moreau_decomposition_check(lambda v: L1(1.0).prox(v)[0],
                                      lambda v: project_linf_ball(v, 1.0), z)
    assert moreau_decomposition_check(lambda v: v / 2, lambda v: v / 2, z)
    reg = GroupLasso(1.0, [[0, 1, 2], [3, 4], list(range(5, 10))])
    assert moreau_decomposition_check(lambda v: reg.prox(v)[0], reg.conj_prox, z)
    assert not moreau_decomposition_check(lambda v: v, lambda v: v, z)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
@settings(max_examples=50, deadline=None)
def test_positive_homogeneity(seed, eta):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(6) * 2
    lam = rng.uniform(0.1, 2)
    groups = [[0, 1], [2, 3, 4], [5]]
    pairs = [(L1(lam), L1(lam * eta)),
             (WeightedL1(lam * np.arange(6)), WeightedL1(lam * eta * np.arange(6))),
             (GroupLasso(lam, groups), GroupLasso(lam * eta, groups)),
             (ElasticNet(lam, 0.4), ElasticNet(lam * eta, 0.4)),
             (TraceNorm(lam, (2, 3)), TraceNorm(lam * eta, (2, 3)))]
    for a, b in pairs:
        assert eta * a.value(y) == pytest.approx(b.value(y), rel=1e-12)
        np.testing.assert_allclose(a.prox(y, eta)[0], b.prox(y)[0], atol=1e-12)
        assert a.envelope_star(y, eta) == pytest.approx(b.envelope_star(y), rel=1e-12,
                                                         abs=1e-14)


def test_prox_matches_numeric_oracle(rng):
    for name, reg in random_regularizers(rng, 4).items():
        oracle = NumericProx(reg, 4)
        for _ in range(5):
            y = rng.standard_normal(4) * 2
            s = rng.uniform(0.3, 2.0)
            x_or, val = oracle(y, s)
            x, _ = reg.prox(y, s)
            np.testing.assert_allclose(x, x_or, atol=1e-6, err_msg=name)


def test_envelope_equals_half_prox_norm_for_support_types(rng):
    for reg in (L1(0.7), WeightedL1([0.0, 1.0, 0.5]), GroupLasso(0.8, [[0, 2], [1]])):
        y = rng.standard_normal(3) * 2
        x, _ = reg.prox(y, 1.3)
        assert reg.envelope_star(y, 1.3) == pytest.approx(0.5 * x @ x, rel=1e-14)


def test_elastic_net_envelope_is_not_half_prox_norm():
    reg = ElasticNet(1.0, 0.5)
    y = np.array([3.0])
    x, _ = reg.prox(y)
    assert reg.envelope_star(y) != pytest.approx(0.5 * x @ x)
    assert reg.envelope_star(y) == pytest.approx(1.5 / 2 * (2.5 / 1.5) ** 2)


def test_active_structure_weighted_zero_lambda(backend):
    reg = WeightedL1([0.0, 1.0, 1.0])
    x, act = reg.prox(np.array([0.0, 0.5, 2.0]))
    np.testing.assert_array_equal(act.active, [0, 2])
    np.testing.assert_array_equal(x, [0.0, 0.0, 1.0])


def test_active_structure_matches_jacobian_fd(rng, backend):
    regs = [L1(0.5), WeightedL1(rng.uniform(0, 1, 8)),
            GroupLasso(0.6, [[0, 5], [1, 2, 3], [4], [6, 7]]), ElasticNet(0.5, 0.3)]
    for reg in regs:
        y = rng.standard_normal(8) * 2
        x, act = reg.prox(y)
        J = np.zeros((8, 8))
        for i, e in enumerate(np.eye(8)):
            J[:, i] = (reg.prox(y + 1e-7 * e)[0] - reg.prox(y - 1e-7 * e)[0]) / 2e-7
        Jact = np.zeros((8, 8))
        idx = act.active
        Jact[np.ix_(idx, idx)] = np.column_stack(
            [act.jacobian_apply(e) for e in np.eye(idx.size)]) if idx.size else 0
        np.testing.assert_allclose(Jact, J, atol=1e-6)
        np.testing.assert_allclose(act.jacobian_diag(), np.diag(J)[idx], atol=1e-6)


def test_group_partition_required():
    with pytest.raises(ContractViolation):
        GroupLasso(1.0, [[0, 1], [1, 2]])
    with pytest.raises(ContractViolation):
        GroupLasso(1.0, [[0, 2]], n=3)
    reg = GroupLasso(1.0, np.array([0, 0, 1, 1, 1]))
    assert [g.tolist() for g in reg.groups] == [[0, 1], [2, 3, 4]]


def test_trace_norm_prox():
    reg = TraceNorm(1.0, (2, 2))
    y = np.diag([3.0, 0.5]).reshape(-1)
    x, _ = reg.prox(y)
    np.testing.assert_allclose(x, np.diag([2.0, 0.0]).reshape(-1), atol=1e-14)
    assert reg.envelope_star(y) == pytest.approx(2.0)
    assert reg.value(y) == pytest.approx(3.5)


def test_support_function_from_projection(rng):
    reg = l2_ball_support(1.0)
    y = np.array([3.0, 4.0])
    x, _ = reg.prox(y)
    np.testing.assert_allclose(x, 0.8 * y)
    assert reg.envelope_star(y) == pytest.approx(8.0)
    assert not reg.has_hessian


def test_gauges():
    assert L1(2.0).gauge(np.array([1.0, -3.0])) == 1.5
    assert WeightedL1([0.0, 2.0]).gauge(np.array([0.0, 1.0])) == 0.5
    assert WeightedL1([0.0, 2.0]).gauge(np.array([1e-3, 1.0])) == np.inf
    assert GroupLasso(2.0, [[0, 1]]).gauge(np.array([3.0, 4.0])) == 2.5
    assert TraceNorm(1.0, (2, 2)).gauge(np.diag([3.0, 1.0]).reshape(-1)) == pytest.approx(3.0)
    with pytest.raises(NotImplementedError):
        ElasticNet(1.0, 0.5).gauge(np.ones(2))
    assert ElasticNet(1.0, 0.0).gauge(np.array([0.5])) == 0.5


def test_elastic_net_conjugate_closed_form(rng):
    from scipy.optimize import minimize_scalar
    reg = ElasticNet(1.3, 0.4)
    for v in rng.standard_normal(10) * 3:
        r = minimize_scalar(lambda w: -(v * w - reg.value(np.array([w]))),
                            bracket=(-10, 10), tol=1e-12)
        assert reg.conj_value(np.array([v])) == pytest.approx(-r.fun, abs=1e-8)


def test_make_regularizer():
    assert isinstance(make_regularizer("l1", 1.0, 4), L1)
    assert isinstance(make_regularizer("group", 1.0, 4, group_size=2), GroupLasso)
    assert isinstance(make_regularizer("elastic-net", 1.0, 4), ElasticNet)
    assert isinstance(make_regularizer("weighted-l1", 1.0, 4), WeightedL1)
    with pytest.raises(ValueError):
        make_regularizer("group", 1.0, 4)
    with pytest.raises(ValueError):
        make_regularizer("tv", 1.0, 4)
