import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphex_cdegree import numerics
from graphex_cdegree.errors import DomainError
from graphex_cdegree.graphex import GraphexSpec, MarginalEvaluator, limit_functions, scaling_b
from graphex_cdegree.theory import (
    BoundKind,
    bound_interval,
    coverage_pct,
    expected_nk_finite_t,
    limit_nk,
    mu4_condition_scan,
    mu4_ratio,
    upper_coverage_pct,
)

SHIFTED3 = GraphexSpec.sum_power_shifted(3)
SEP2 = GraphexSpec.separable_shifted(2)


@pytest.mark.parametrize("a", [1.5, 2, 3, 4, 5])
def test_separable_bounds(a):
    b = bound_interval(a, True)
    assert b.kind == BoundKind.SEPARABLE_TWO_SIDED
    assert abs(b.lower - (1 + 1 / a)) < 1e-12
    assert abs(b.upper - max(1.5 + 1 / a, 1 + 2 / a)) < 1e-12
    assert 1 < b.lower < b.upper


@pytest.mark.parametrize("a", [2.0001, 2.6, 3, 4, 5])
def test_non_separable_bounds(a):
    b = bound_interval(a, False)
    assert b.kind == BoundKind.NON_SEPARABLE_UPPER_RANGE
    assert abs(b.lower - (1 + 2 / (2 * a - 1))) < 1e-12
    assert abs(b.upper - (1 + 4 / a)) < 1e-12
    assert 1 < b.lower < b.upper


def test_bound_examples():
    assert bound_interval(2, True).as_list() == [1.5, 2.0]
    b = bound_interval(1.5, True)
    assert round(b.lower, 4) == 1.6667 and round(b.upper, 4) == 2.3333
    b = bound_interval(3, False)
    assert round(b.lower, 4) == 1.4 and round(b.upper, 4) == 2.3333
    assert str(bound_interval(2, True)) == "[1.5, 2.0]"


def test_bound_domain():
    with pytest.raises(DomainError):
        bound_interval(1.0, True)
    with pytest.raises(DomainError):
        bound_interval(2.0, False)


def test_coverage_closed_at_reported_precision():
    b = bound_interval(3, False)
    assert b.contains(1.4) and b.contains(2.3333) and b.contains(2.33334)
    assert not b.contains(2.334) and not b.contains(1.3994)
    assert coverage_pct([1.5, 2.0, 2.5, 1.0], b) == 50.0
    assert upper_coverage_pct([1.5, 2.0, 2.5, 1.0], b) == 75.0


def test_limit_nk_monotone_in_epsilon():
    lf = limit_functions(SHIFTED3)
    for k in (1, 2, 3):
        assert limit_nk(lf, 1.0, k).value <= limit_nk(lf, 0.5, k).value


def test_limit_nk_poisson_partition():
    # sum_k of the k-th integrand is 1 - exp(-lambda) on a truncated box
    lf = limit_functions(SHIFTED3)
    box = 5.0
    total = sum(limit_nk(lf, 0.5, k, upper=box).value for k in range(1, 60))
    direct = numerics.integrate_2d(lambda u, v: -np.expm1(-lf.lambda_fn(u, v)), (0.5, 0.5), tol=1e-9,
                                   upper=(box, box)).value
    assert abs(total - direct) < 1e-4 * direct


def test_limit_nk_separable_simpson_oracle():
    got = limit_nk(limit_functions(SEP2), 1.0, 1).value
    # plain composite Simpson on [1, 50]^2 in log coordinates plus an analytic tail bound
    n = 801
    s = np.linspace(0, math.log(50), n)
    u = np.exp(s)
    U, V = np.meshgrid(u, u)
    lam = U**-2.0 * V**-2.0 / 3
    f = lam * np.exp(-lam) * U * V
    w = np.ones(n)
    w[1:-1:2], w[2:-1:2] = 4, 2
    w *= (s[1] - s[0]) / 3
    box = float(w @ f @ w)
    # outside the box the integrand is below lambda, whose integral there is
    # 2 * (1/3) * (1/50) * 1 - (1/3)(1/50)^2
    tail = (2 / 150) - 1 / (3 * 2500)
    assert box <= got <= box + tail
    assert abs(got - box) < tail


def test_separable_limit_closed_vs_quadrature():
    for spec in (SEP2, GraphexSpec.separable_shifted(3)):
        a = limit_nk(limit_functions(spec), 0.5, 2).value
        b = limit_nk(limit_functions(spec, quadrature=True), 0.5, 2).value
        assert abs(a - b) <= 1e-5 * a


def test_expected_nk_vanishes_for_large_k():
    ev = MarginalEvaluator(SHIFTED3)
    b = scaling_b(SHIFTED3, 1000)
    vals = [expected_nk_finite_t(ev, 1000, 0.5, k, b).value for k in (1, 5, 20, 60)]
    assert vals[0] > vals[1] > vals[2] > vals[3] and vals[3] < 1e-10 * vals[0]


@pytest.mark.parametrize("k", [1, 2])
def test_finite_t_converges_to_limit(k):
    ev = MarginalEvaluator(SHIFTED3)
    L = limit_nk(limit_functions(SHIFTED3), 0.5, k).value
    errs = []
    for t in (1e3, 1e4, 1e5):
        b = scaling_b(SHIFTED3, t)
        errs.append(abs(expected_nk_finite_t(ev, t, 0.5, k, b).value / (t * b) ** 2 - L))
    assert errs[0] > errs[1] > errs[2]


def test_integral_domain_errors():
    lf = limit_functions(SHIFTED3)
    with pytest.raises(DomainError):
        limit_nk(lf, 0.0, 1)
    with pytest.raises(DomainError):
        limit_nk(lf, 0.5, 0)
    with pytest.raises(DomainError):
        expected_nk_finite_t(MarginalEvaluator(SHIFTED3), 10, 0.5, 1, 0.0)


def test_mu4_separable_ratio_constant():
    scan = mu4_condition_scan(MarginalEvaluator(SEP2), 1.0, 500, seed=3)
    assert abs(scan.sup_ratio - 9 / 7) < 1e-9
    quads = np.exp(np.random.default_rng(0).uniform(-3, 3, (50, 4)))
    np.testing.assert_allclose(mu4_ratio(MarginalEvaluator(SEP2), quads, 1.0), 9 / 7, rtol=1e-9)


@given(st.lists(st.floats(0.01, 50), min_size=4, max_size=4))
def test_mu4_ratio_swap_symmetry(x):
    ev = MarginalEvaluator(SHIFTED3)
    a = mu4_ratio(ev, [x], 0.75)[0]
    b = mu4_ratio(ev, [[x[2], x[3], x[0], x[1]]], 0.75)[0]
    assert math.isclose(a, b, rel_tol=1e-9)


def test_mu4_scan_stable_under_doubling():
    ev = MarginalEvaluator(SHIFTED3)
    a = mu4_condition_scan(ev, 0.75, 10_000, seed=1).sup_ratio
    b = mu4_condition_scan(ev, 0.75, 20_000, seed=2).sup_ratio
    assert math.isfinite(a) and abs(a - b) <= 0.05 * a


def test_mu4_scan_domain():
    with pytest.raises(DomainError):
        mu4_condition_scan(MarginalEvaluator(SEP2), 0.5, 10)
