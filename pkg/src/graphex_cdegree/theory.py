"""Tail-index bound intervals, the common-connection limit integral, its
finite-t counterpart, and the fourth-marginal moment diagnostic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import numpy as np
from scipy.special import gammaln

from . import numerics
from .errors import DomainError, QuadratureError
from .graphex import LimitFunctions, MarginalEvaluator


class BoundKind(str, Enum):
    SEPARABLE_TWO_SIDED = "SeparableTwoSided"
    NON_SEPARABLE_UPPER_RANGE = "NonSeparableUpperRange"


@dataclass(frozen=True)
class BoundInterval:
    """Range of admissible tail indices for a given decay exponent.

    ``contains`` treats the interval as closed.  With ``decimals`` set the
    estimate and endpoints are first rounded, so a boundary hit at the
    reported precision counts as covered.
    """

    lower: float
    upper: float
    kind: BoundKind
    alpha: float

    def contains(self, value: float, decimals: Optional[int] = 3) -> bool:
        lo, hi, v = self.lower, self.upper, float(value)
        if decimals is not None:
            lo, hi, v = round(lo, decimals), round(hi, decimals), round(v, decimals)
        return lo <= v <= hi

    def below_upper(self, value: float, decimals: Optional[int] = 3) -> bool:
        hi, v = self.upper, float(value)
        if decimals is not None:
            hi, v = round(hi, decimals), round(v, decimals)
        return v <= hi

    def as_list(self) -> list[float]:
        return [self.lower, self.upper]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "alpha": self.alpha, "lower": self.lower, "upper": self.upper}

    def __str__(self) -> str:
        return f"[{self.lower!r}, {self.upper!r}]"


def bound_interval(alpha: float, separable: bool) -> BoundInterval:
    """Tail-index interval: [1+1/a, max(3/2+1/a, 1+2/a)] for separable
    graphexes (a > 1), (1+2/(2a-1), 1+4/a) otherwise (a > 2)."""
    a = float(alpha)
    if separable:
        if not a > 1:
            raise DomainError(f"separable bound needs alpha > 1, got {alpha}")
        return BoundInterval(1.0 + 1.0 / a, max(1.5 + 1.0 / a, 1.0 + 2.0 / a), BoundKind.SEPARABLE_TWO_SIDED, a)
    if not a > 2:
        raise DomainError(f"non-separable bound needs alpha > 2, got {alpha}")
    return BoundInterval(1.0 + 2.0 / (2.0 * a - 1.0), 1.0 + 4.0 / a, BoundKind.NON_SEPARABLE_UPPER_RANGE, a)


def coverage_pct(estimates: Iterable[float], bound: BoundInterval, decimals: Optional[int] = 3) -> float:
    est = list(estimates)
    if not est:
        return math.nan
    return 100.0 * sum(bound.contains(e, decimals) for e in est) / len(est)


def upper_coverage_pct(estimates: Iterable[float], bound: BoundInterval, decimals: Optional[int] = 3) -> float:
    est = list(estimates)
    if not est:
        return math.nan
    return 100.0 * sum(bound.below_upper(e, decimals) for e in est) / len(est)


# --- Poisson-weighted double integrals ---------------------------------------

@dataclass(frozen=True)
class IntegralValue:
    value: float
    tolerance_achieved: float
    evaluations: int

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {"value": self.value, "tolerance_achieved": self.tolerance_achieved}


def _poisson_pmf(lam: np.ndarray, k: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(k * np.log(lam) - lam - gammaln(k + 1))
    return np.where(lam > 0, out, 0.0)


def _checked(res: numerics.QuadratureResult, what: str) -> IntegralValue:
    rel = res.error_estimate / abs(res.value) if res.value else res.error_estimate
    if not res.converged:
        raise QuadratureError(f"{what} did not converge (relative error {rel:.2e})", res.value, res.error_estimate)
    return IntegralValue(res.value, rel, res.evaluations)


def _check_eps_k(epsilon: float, k: int) -> None:
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")


def limit_nk(lf: LimitFunctions, epsilon: float, k: int, rtol: float = 1e-6, upper: float = math.inf) -> IntegralValue:
    """(1/k!) int int_{[eps, upper)^2} lambda(u, v)^k exp(-lambda(u, v)) du dv.

    This is the limit of E N_t^eps(k) / (t b(t))^2 over ordered pairs.
    ``upper`` truncates the box, which is only used for checks.
    """
    _check_eps_k(epsilon, k)
    lam = lf.lambda_fn

    def f(u, v):
        u, v = np.broadcast_arrays(u, v)
        return _poisson_pmf(np.reshape(lam(u.ravel(), v.ravel()), u.shape), k)

    res = numerics.integrate_2d(f, (epsilon, epsilon), tol=rtol / 10, upper=(upper, upper), epsabs=1e-300)
    return _checked(res, "limit integral")


def expected_nk_finite_t(
    ev: MarginalEvaluator, t: float, epsilon: float, k: int, b_t: float, rtol: float = 1e-6
) -> IntegralValue:
    """Mean number of ordered pairs above b_t * eps with exactly k common
    neighbours at horizon t: t^2 int int P[Poisson(t mu_2(x, y)) = k] dx dy.

    Integrated in the rescaled coordinates x = b_t u, so dividing by
    (t b_t)^2 gives a quantity directly comparable with ``limit_nk``.
    """
    _check_eps_k(epsilon, k)
    if not (t > 0 and b_t > 0):
        raise DomainError("t and b_t must be positive")

    def f(u, v):
        u, v = np.broadcast_arrays(u, v)
        m = ev.mu2_array(b_t * u.ravel(), b_t * v.ravel())
        return _poisson_pmf(t * m, k).reshape(u.shape)

    res = numerics.integrate_2d(f, (epsilon, epsilon), tol=rtol / 10, epsabs=1e-300)
    scale = (t * b_t) ** 2
    out = _checked(res, "finite-t expected count")
    return IntegralValue(out.value * scale, out.tolerance_achieved, out.evaluations)


# --- fourth marginal diagnostic ---------------------------------------------

@dataclass(frozen=True)
class Mu4Scan:
    sup_ratio: float
    argmax: tuple[float, float, float, float]
    q: float
    n_probes: int
    box: tuple[float, float]

    def to_dict(self) -> dict:
        return {"sup_ratio": self.sup_ratio, "argmax": list(self.argmax), "q": self.q,
                "n_probes": self.n_probes, "box": list(self.box)}


def mu4_ratio(ev: MarginalEvaluator, quads, q: float) -> np.ndarray:
    """mu_4(x1..x4) / (mu_2(x1, x2) mu_2(x3, x4))^q for each row of ``quads``."""
    quads = np.atleast_2d(np.asarray(quads, dtype=float))
    num = ev.mu_d_array(quads)
    den = (ev.mu2_array(quads[:, 0], quads[:, 1]) * ev.mu2_array(quads[:, 2], quads[:, 3])) ** q
    return num / den


def mu4_condition_scan(
    ev: MarginalEvaluator,
    q: float,
    n_probes: int,
    box: tuple[float, float] = (1e-2, 1e2),
    seed: int = 0,
    chunk: int = 2000,
) -> Mu4Scan:
    """Largest ratio mu_4 / (mu_2 mu_2)^q over log-uniform probes in ``box``^4.

    The supremum over probes is only a lower bound for the constant in the
    moment condition.
    """
    if not 0.5 < q <= 1:
        raise DomainError("q must lie in (1/2, 1]")
    if n_probes < 1:
        raise DomainError("n_probes must be positive")
    lo, hi = box
    if not 0 < lo < hi:
        raise DomainError("box must satisfy 0 < lo < hi")
    rng = np.random.default_rng(seed)
    pts = np.exp(rng.uniform(math.log(lo), math.log(hi), size=(n_probes, 4)))
    best, arg = -math.inf, None
    for s in range(0, n_probes, chunk):
        r = mu4_ratio(ev, pts[s:s + chunk], q)
        i = int(np.argmax(r))
        if r[i] > best:
            best, arg = float(r[i]), tuple(float(v) for v in pts[s + i])
    return Mu4Scan(best, arg, q, n_probes, (lo, hi))
