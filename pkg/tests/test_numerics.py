import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from graphex_cdegree import numerics
from graphex_cdegree.errors import BracketError, DomainError


def test_kronrod_weights_sum_to_interval_length():
    assert math.isclose(numerics.KRONROD_WEIGHTS.sum(), 2.0, rel_tol=1e-14)
    assert math.isclose(numerics.GAUSS_WEIGHTS.sum(), 2.0, rel_tol=1e-14)


@pytest.mark.parametrize(
    "f, lower, exact",
    [
        (lambda z: (1 + z) ** -2, 0.0, 1.0),
        (lambda z: 1 / (1 + z * z), 0.0, math.pi / 2),
        (lambda z: z**-3.0, 1.0, 0.5),
        (lambda z: np.exp(-z), 0.0, 1.0),
    ],
)
def test_semi_infinite_battery(f, lower, exact):
    r = numerics.integrate_semi_infinite(f, lower, tol=1e-12)
    assert r.converged
    assert abs(r.value - exact) < 1e-10
    # the error estimate is not below the true error
    assert r.error_estimate >= abs(r.value - exact) * 0.999 or abs(r.value - exact) < 1e-15


def test_polynomials_integrated_exactly_on_one_panel():
    for deg in range(0, 30):
        r = numerics.integrate(lambda x, d=deg: x**d, 0.0, 1.0, tol=1e-14)
        assert abs(r.value - 1.0 / (deg + 1)) < 1e-14


def test_finite_interval_with_endpoint_singularity():
    r = numerics.integrate(lambda x: 1.0 / np.sqrt(x), 0.0, 1.0, tol=1e-10)
    assert r.converged and abs(r.value - 2.0) < 1e-8


def test_batch_shares_mesh():
    a = np.array([2.0, 3.0, 5.0])
    r = numerics.integrate_semi_infinite_batch(lambda z: (1 + z[None, :]) ** -a[:, None], 0.0, 1e-14, 1e-12)
    assert r.all_converged
    np.testing.assert_allclose(r.values, 1.0 / (a - 1.0), rtol=1e-11)


def test_nonconvergence_is_reported_honestly():
    r = numerics.integrate_semi_infinite(lambda z: 1.0 / (1.0 + z), 0.0, tol=1e-10, limit=20)
    assert not r.converged


def test_integrate_2d_product_forms():
    r = numerics.integrate_2d(lambda x, y: np.exp(-x - y), (0.0, 0.0), tol=1e-10)
    assert r.converged and abs(r.value - 1.0) < 1e-9
    r = numerics.integrate_2d(lambda x, y: x**-2.0 * y**-2.0, (1.0, 1.0), tol=1e-10)
    assert abs(r.value - 1.0) < 1e-9


def test_integrate_2d_sum_power_mean():
    # int int (1+x+y)^-3 = 1/2
    r = numerics.integrate_2d(lambda x, y: (1 + x + y) ** -3.0, (0.0, 0.0), tol=1e-10)
    assert abs(r.value - 0.5) < 1e-9


def test_integrate_2d_finite_box():
    r = numerics.integrate_2d(lambda x, y: x * y, (0.0, 0.0), tol=1e-12, upper=(1.0, 2.0))
    assert abs(r.value - 1.0) < 1e-12


def test_bisect_sqrt2():
    root = numerics.bisect_monotone(lambda b: b * b - 2, (1.0, 2.0), tol=1e-13, rtol=0)
    assert abs(root - math.sqrt(2)) < 1e-12


def test_bisect_needs_sign_change():
    with pytest.raises(BracketError):
        numerics.bisect_monotone(lambda b: b * b + 1, (0.0, 1.0))


@given(st.floats(0.1, 10.0), st.floats(1e-3, 1.0))
@settings(max_examples=50, deadline=None)
def test_bisect_within_tol(c, tol):
    root = numerics.bisect_monotone(lambda b: b - c, (0.0, 20.0), tol=tol, rtol=0)
    assert abs(root - c) <= tol


def test_ols_exact_power_law():
    slope, intercept, r2 = numerics.ols_loglog([(1, 1), (2, 0.25), (4, 1 / 16)])
    assert math.isclose(slope, -2.0, abs_tol=1e-14)
    assert math.isclose(r2, 1.0, abs_tol=1e-14)
    assert abs(intercept) < 1e-14


def test_ols_rejects_bad_input():
    with pytest.raises(DomainError):
        numerics.ols_loglog([(1, 1), (1, 2)])
    with pytest.raises(DomainError):
        numerics.ols_loglog([(1, 0), (2, 1)])


def test_ols_matches_scipy(rng):
    x = np.arange(1, 40, dtype=float)
    y = x**-1.7 * np.exp(rng.normal(0, 0.1, x.size))
    slope, intercept, r2 = numerics.ols_loglog(np.column_stack([x, y]))
    ref = stats.linregress(np.log(x), np.log(y))
    assert math.isclose(slope, ref.slope, rel_tol=1e-12)
    assert math.isclose(intercept, ref.intercept, rel_tol=1e-12, abs_tol=1e-12)
    assert math.isclose(r2, ref.rvalue**2, rel_tol=1e-12)


def test_dispersion_index_poisson(rng):
    d = numerics.dispersion_index(rng.poisson(3.0, 200_000))
    assert abs(d - 1.0) < 0.02


def test_chi_square_poisson_calibration():
    # reject rate at level 0.01 over 500 trials of 10^5 Poisson(0.625) draws
    rng = np.random.default_rng(2024)
    pmf = lambda k: stats.poisson.pmf(k, 0.625)  # noqa: E731
    pvals = np.array([numerics.chi_square_gof(rng.poisson(0.625, 100_000), pmf)[1] for _ in range(500)])
    rejects = int(np.sum(pvals < 0.01))
    # Binomial(500, 0.01): mean 5, P(X > 14) < 1e-3
    assert rejects <= 14
    # p-values roughly uniform
    assert stats.kstest(pvals, "uniform").pvalue > 1e-3


def test_chi_square_detects_wrong_rate(rng):
    _, p, _ = numerics.chi_square_gof(rng.poisson(0.7, 100_000), lambda k: stats.poisson.pmf(k, 0.625))
    assert p < 1e-6


def test_chi_square_degenerate_law():
    stat, p, dof = numerics.chi_square_gof(np.zeros(1000, dtype=int), lambda k: (k == 0).astype(float))
    assert (stat, p, dof) == (0.0, 1.0, 0)


def test_chi_square_accepts_histogram():
    rng = np.random.default_rng(5)
    s = rng.poisson(2.0, 5000)
    h = {int(k): int(c) for k, c in zip(*np.unique(s, return_counts=True))}
    pmf = lambda k: stats.poisson.pmf(k, 2.0)  # noqa: E731
    assert numerics.chi_square_gof(h, pmf) == numerics.chi_square_gof(s, pmf)


def test_two_sample_same_law(rng):
    _, p, dof = numerics.chi_square_two_sample(rng.poisson(4, 3000), rng.poisson(4, 3000))
    assert dof > 3 and p > 1e-4
    _, p, _ = numerics.chi_square_two_sample(rng.poisson(4, 3000), rng.poisson(5, 3000))
    assert p < 1e-6
