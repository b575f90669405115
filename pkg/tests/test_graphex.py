import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphex_cdegree import numerics
from graphex_cdegree.errors import BracketError, DomainError
from graphex_cdegree.graphex import (
    Family,
    GraphexSpec,
    MarginalEvaluator,
    MarginalMode,
    eval_lambda,
    eval_W,
    limit_functions,
    mu1,
    mu2,
    mu_d,
    scaling_b,
    validate,
)

SHIFTED3 = GraphexSpec.sum_power_shifted(3)
STABLE2 = GraphexSpec.sum_power_stable(2)
SEP2 = GraphexSpec.separable_shifted(2)
pos = st.floats(0.0, 50.0, allow_nan=False)


def test_eval_W_examples():
    assert eval_W(SHIFTED3, 0, 0) == 1.0
    assert math.isclose(eval_W(STABLE2, 1, 1), 1 / 3, rel_tol=1e-15)
    assert math.isclose(eval_W(SEP2, 1, 3), 0.015625, rel_tol=1e-15)


def test_eval_W_domain():
    with pytest.raises(DomainError):
        eval_W(SHIFTED3, -1, 0)
    with pytest.raises(DomainError):
        eval_W(SHIFTED3, math.nan, 0)


def test_alpha_constraints():
    with pytest.raises(DomainError):
        GraphexSpec.separable_shifted(1.0)
    with pytest.raises(DomainError):
        GraphexSpec.sum_power_shifted(0.5)
    with pytest.raises(DomainError):
        GraphexSpec.from_config({"family": "nope", "alpha": 2})


def test_config_round_trip(builtin_spec):
    assert GraphexSpec.from_config(builtin_spec.to_config()) == builtin_spec


@given(pos, pos)
@settings(max_examples=100, deadline=None)
def test_W_symmetric_and_bounded(x, y):
    for spec in (SHIFTED3, STABLE2, SEP2):
        w = eval_W(spec, x, y)
        assert 0.0 <= w <= 1.0
        assert w == eval_W(spec, y, x)


def test_graphex_mass_finite():
    r = numerics.integrate_2d(lambda x, y: SHIFTED3.W(x, y), (0, 0), tol=1e-9)
    assert r.converged and abs(r.value - 0.5) < 1e-8
    r = numerics.integrate_2d(lambda x, y: SEP2.W(x, y), (0, 0), tol=1e-9)
    assert r.converged and abs(r.value - 1.0) < 1e-8


def test_mu1_examples():
    assert math.isclose(mu1(MarginalEvaluator(SHIFTED3), 0), 0.5, rel_tol=1e-14)
    assert math.isclose(mu1(MarginalEvaluator(SEP2), 0), 1.0, rel_tol=1e-14)


def test_mu2_example_and_quadrature():
    assert math.isclose(mu2(MarginalEvaluator(SHIFTED3), 1, 1), 2.0**-5 / 5, rel_tol=1e-13)
    q = MarginalEvaluator(SHIFTED3, MarginalMode.QUADRATURE)
    assert abs(q.mu2(1, 1) - 1 / 160) < 1e-12


def test_mu_d_examples():
    assert math.isclose(mu_d(MarginalEvaluator(SHIFTED3), [0, 0, 0, 0]), 1 / 11, rel_tol=1e-12)
    assert math.isclose(mu_d(MarginalEvaluator(SEP2), [1, 2, 3]), 1 / 576 / 5, rel_tol=1e-12)
    with pytest.raises(DomainError):
        mu_d(MarginalEvaluator(SEP2), [1])


def test_mu_d_two_is_mu2(rng):
    for spec in (SHIFTED3, STABLE2, SEP2):
        ev = MarginalEvaluator(spec)
        for x, y in rng.uniform(0, 10, (5, 2)):
            assert math.isclose(ev.mu_d([x, y]), ev.mu2(x, y), rel_tol=1e-12)


def test_closed_forms_match_quadrature(builtin_spec, rng):
    closed = MarginalEvaluator(builtin_spec)
    quad = MarginalEvaluator(builtin_spec, MarginalMode.QUADRATURE, quadrature_tolerance=1e-11)
    x = 10 ** rng.uniform(-2, 2, 100)
    y = 10 ** rng.uniform(-2, 2, 100)
    np.testing.assert_allclose(closed.mu1_array(x), quad.mu1_array(x), atol=1e-8, rtol=1e-9)
    np.testing.assert_allclose(closed.mu2_array(x, y), quad.mu2_array(x, y), atol=1e-10, rtol=1e-8)
    xs = 10 ** rng.uniform(-2, 2, (20, 3))
    np.testing.assert_allclose(closed.mu_d_array(xs), quad.mu_d_array(xs), rtol=1e-8)


def test_mu2_properties(builtin_spec, rng):
    ev = MarginalEvaluator(builtin_spec)
    x, y = rng.uniform(0, 20, (2, 200))
    m = ev.mu2_array(x, y)
    np.testing.assert_array_equal(m, ev.mu2_array(y, x))
    assert np.all(m <= np.minimum(ev.mu1_array(x), ev.mu1_array(y)) * (1 + 1e-12))
    # nonincreasing in each argument
    assert np.all(ev.mu2_array(x + 0.5, y) <= m * (1 + 1e-12))


def test_mu2_equal_arguments_no_cancellation():
    ev = MarginalEvaluator(STABLE2)
    x = np.array([1.0, 1.0 + 1e-12, 1.0 + 1e-6])
    m = ev.mu2_array(x, np.ones(3))
    assert np.all(np.abs(np.diff(m)) < 1e-6)


def test_separable_factorization(rng):
    ev = MarginalEvaluator(SEP2)
    C = limit_functions(SEP2).lambda_const
    assert math.isclose(C, 1 / 3, rel_tol=1e-14)
    x, y = rng.uniform(0, 10, (2, 50))
    np.testing.assert_allclose(ev.mu2_array(x, y), C * SEP2.u(x) * SEP2.u(y), rtol=1e-9)


def test_custom_separable_matches_builtin(rng):
    spec = GraphexSpec.custom_separable(lambda x: (1 + x) ** -2.0, 2.0, monotone=True)
    ev_c, ev_b = MarginalEvaluator(spec), MarginalEvaluator(SEP2)
    x, y = rng.uniform(0, 10, (2, 20))
    np.testing.assert_allclose(ev_c.mu2_array(x, y), ev_b.mu2_array(x, y), rtol=1e-8)
    q = MarginalEvaluator(spec, MarginalMode.QUADRATURE)
    np.testing.assert_allclose(q.mu2_array(x, y), ev_b.mu2_array(x, y), rtol=1e-8)


def test_lambda_examples():
    assert math.isclose(eval_lambda(limit_functions(STABLE2), 1, 1), math.pi / 4, rel_tol=1e-12)
    lf = limit_functions(SEP2)
    assert math.isclose(eval_lambda(lf, 2, 3), (1 / 3) * 2.0**-2 * 3.0**-2, rel_tol=1e-14)
    with pytest.raises(DomainError):
        eval_lambda(lf, 0, 1)


@pytest.mark.parametrize("spec", [SHIFTED3, STABLE2, SEP2, GraphexSpec.separable_shifted(3)])
def test_limit_homogeneity(spec, rng):
    lf = limit_functions(spec)
    x, y = 10 ** rng.uniform(-1, 1, (2, 20))
    for c in (0.5, 2.0, 7.0):
        np.testing.assert_allclose(lf.omega(c * x, c * y), c**lf.omega_degree * lf.omega(x, y), rtol=1e-10)
        np.testing.assert_allclose(lf.lambda_fn(c * x, c * y), c**-lf.gamma * lf.lambda_fn(x, y), rtol=1e-10)
    np.testing.assert_allclose(lf.lambda_fn(x, y), lf.lambda_fn(y, x), rtol=1e-14)


@pytest.mark.parametrize("spec", [SHIFTED3, STABLE2, SEP2])
def test_lambda_closed_matches_quadrature(spec, rng):
    a, b = limit_functions(spec), limit_functions(spec, quadrature=True)
    x, y = 10 ** rng.uniform(-1, 1, (2, 20))
    np.testing.assert_allclose(a.lambda_fn(x, y), b.lambda_fn(x, y), rtol=1e-8)


def test_mu1_scaling_limit_stable():
    ev = MarginalEvaluator(STABLE2, MarginalMode.QUADRATURE)
    lf = limit_functions(STABLE2)
    t = 1e5
    for x in (0.5, 1.0, 2.0):
        ratio = ev.mu1(t * x) / (t * lf.scaling_h(t) * (math.pi / 2) / x)
        assert abs(ratio - 1) < 0.02
        assert math.isclose(lf.omega_bar(x), math.pi / 2 / x, rel_tol=1e-8)


def test_mu2_uniform_scaling_improves():
    ev = MarginalEvaluator(SHIFTED3)
    lf = limit_functions(SHIFTED3)
    g = np.linspace(0.25, 10, 25)
    X, Y = np.meshgrid(g, g)
    errs = []
    for t in (1e3, 1e4, 1e5):
        b = scaling_b(SHIFTED3, t)
        errs.append(np.max(np.abs(t * ev.mu2_array(b * X.ravel(), b * Y.ravel()) - lf.lambda_fn(X.ravel(), Y.ravel()))))
    assert errs[0] > errs[1] > errs[2]


def test_scaling_b_examples():
    assert math.isclose(scaling_b(SEP2, 16), 1.0, rel_tol=1e-14)
    ev = MarginalEvaluator(SHIFTED3)
    lam11 = eval_lambda(limit_functions(SHIFTED3), 1, 1)
    assert math.isclose(lam11, 1 / 5, rel_tol=1e-12)
    for t in (1e3, 1e4):
        b = scaling_b(SHIFTED3, t)
        assert abs(t * ev.mu2(b, b) - lam11) < 1e-8
        # (1+b)^(1-2a) t / (2a-1) = 1/(2a-1) on the diagonal
        assert math.isclose(b, t**0.2 - 1, rel_tol=1e-9)


def test_scaling_b_monotone():
    for spec in (SHIFTED3, STABLE2, SEP2):
        bs = [scaling_b(spec, t) for t in (1e2, 1e3, 1e4, 1e5)]
        assert all(b0 < b1 for b0, b1 in zip(bs, bs[1:]))


def test_scaling_b_small_t_has_no_root():
    with pytest.raises(BracketError):
        scaling_b(SHIFTED3, 0.5)


def test_validate_builtins_and_custom():
    for spec in (SHIFTED3, STABLE2, SEP2):
        assert validate(spec) == []
    asym = GraphexSpec.custom_symmetric(lambda x, y: (1 + x + 2 * y) ** -3.0, 3.0)
    with pytest.raises(DomainError):
        validate(asym)
    too_big = GraphexSpec.custom_symmetric(lambda x, y: 2.0 + 0 * x * y, 3.0)
    with pytest.raises(DomainError):
        validate(too_big)
    wrong = GraphexSpec.custom_symmetric(lambda x, y: (1 + x + y) ** -3.0, 5.0)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        assert validate(wrong)
    right = GraphexSpec.custom_symmetric(lambda x, y: (1 + x + y) ** -3.0, 3.0)
    assert validate(right) == []


def test_custom_symmetric_marginals_use_quadrature():
    spec = GraphexSpec.custom_symmetric(lambda x, y: (1 + x + y) ** -3.0, 3.0, monotone=True,
                                        omega=lambda x, y: (x + y) ** -3.0)
    ev = MarginalEvaluator(spec)
    assert abs(ev.mu2(1, 1) - 1 / 160) < 1e-11
    assert spec.family == Family.CUSTOM_SYMMETRIC
    assert math.isclose(eval_lambda(limit_functions(spec), 1, 1), 0.2, rel_tol=1e-8)
