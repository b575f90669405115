"""Graphex function families, their marginals and regular-variation limits.

Three parametric families are built in:

* ``sum_power_shifted``  W(x, y) = (1 + x + y)^-alpha
* ``sum_power_stable``   W(x, y) = 1 / (1 + x^alpha + y^alpha)
* ``separable_shifted``  W(x, y) = (1 + x)^-alpha (1 + y)^-alpha

plus user-supplied separable (``W = U(x) U(y)``) and general symmetric
functions.  Marginals mu_d(x_1..x_d) = int_0^inf prod_i W(x_i, z) dz are
available in closed form for the built-ins and by adaptive quadrature for
everything.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import numerics
from .errors import BracketError, DomainError, QuadratureError


class Family(str, Enum):
    SUM_POWER_SHIFTED = "sum_power_shifted"
    SUM_POWER_STABLE = "sum_power_stable"
    SEPARABLE_SHIFTED = "separable_shifted"
    CUSTOM_SEPARABLE = "custom_separable"
    CUSTOM_SYMMETRIC = "custom_symmetric"


BUILTIN_FAMILIES = (Family.SUM_POWER_SHIFTED, Family.SUM_POWER_STABLE, Family.SEPARABLE_SHIFTED)


@dataclass(frozen=True)
class GraphexSpec:
    """A graphex function W together with its tail exponent.

    Use the constructors (:meth:`sum_power_shifted`, ...) rather than the
    raw initializer.  ``monotone`` declares that W is nonincreasing in each
    argument; the blocked sampler relies on it to bound edge probabilities
    over a band of latent values.
    """

    family: Family
    alpha: float
    separable: bool
    monotone: bool = True
    U: Optional[Callable] = field(default=None, compare=False, repr=False)
    W_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    omega_fn: Optional[Callable] = field(default=None, compare=False, repr=False)
    name: str = ""

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DomainError(f"alpha must be positive and finite, got {self.alpha}")
        if self.family == Family.SEPARABLE_SHIFTED and self.alpha <= 1:
            raise DomainError("separable_shifted needs alpha > 1 for a finite graphex")
        if self.family in (Family.SUM_POWER_SHIFTED, Family.SUM_POWER_STABLE) and self.alpha <= 1:
            raise DomainError(f"{self.family.value} needs alpha > 1 for finite marginals")

    # -- constructors -----------------------------------------------------
    @classmethod
    def sum_power_shifted(cls, alpha: float) -> "GraphexSpec":
        return cls(Family.SUM_POWER_SHIFTED, float(alpha), separable=False)

    @classmethod
    def sum_power_stable(cls, alpha: float) -> "GraphexSpec":
        return cls(Family.SUM_POWER_STABLE, float(alpha), separable=False)

    @classmethod
    def separable_shifted(cls, alpha: float) -> "GraphexSpec":
        return cls(Family.SEPARABLE_SHIFTED, float(alpha), separable=True)

    @classmethod
    def custom_separable(cls, U: Callable, alpha: float, monotone: bool = False, name: str = "") -> "GraphexSpec":
        """W(x, y) = U(x) U(y) for a positive, vectorized U with U <= 1."""
        return cls(Family.CUSTOM_SEPARABLE, float(alpha), True, monotone, U=U, name=name)

    @classmethod
    def custom_symmetric(
        cls,
        W: Callable,
        alpha: float,
        separable: bool = False,
        monotone: bool = False,
        omega: Optional[Callable] = None,
        name: str = "",
    ) -> "GraphexSpec":
        """A black-box symmetric W into [0, 1].

        Regular variation cannot be read off a black box, so ``alpha`` and
        ``separable`` are taken on trust; :func:`validate` probes them.
        ``omega`` is the limit function, needed only for limit computations.
        """
        return cls(Family.CUSTOM_SYMMETRIC, float(alpha), separable, monotone, W_fn=W, omega_fn=omega, name=name)

    @classmethod
    def from_config(cls, cfg: dict) -> "GraphexSpec":
        """Build a built-in spec from ``{"family": ..., "alpha": ...}``."""
        try:
            family = Family(cfg["family"])
            alpha = float(cfg["alpha"])
        except (KeyError, ValueError, TypeError) as exc:
            raise DomainError(f"bad graphex spec {cfg!r}: {exc}") from None
        if family not in BUILTIN_FAMILIES:
            raise DomainError(f"family {family.value} cannot be built from a config file")
        return {
            Family.SUM_POWER_SHIFTED: cls.sum_power_shifted,
            Family.SUM_POWER_STABLE: cls.sum_power_stable,
            Family.SEPARABLE_SHIFTED: cls.separable_shifted,
        }[family](alpha)

    def to_config(self) -> dict:
        return {"family": self.family.value, "alpha": self.alpha}

    @property
    def is_builtin(self) -> bool:
        return self.family in BUILTIN_FAMILIES

    @property
    def label(self) -> str:
        return self.name or f"{self.family.value}(alpha={self.alpha:g})"

    # -- evaluation ---------------------------------------------------------
    def u(self, x):
        """The univariate factor of a separable W."""
        x = np.asarray(x, dtype=float)
        if self.family == Family.SEPARABLE_SHIFTED:
            return (1.0 + x) ** -self.alpha
        if self.family == Family.CUSTOM_SEPARABLE:
            return np.asarray(self.U(x), dtype=float)
        raise DomainError(f"{self.label} is not separable")

    def W(self, x, y):
        """Vectorized W without argument checks (callers ensure x, y >= 0)."""
        a = self.alpha
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        f = self.family
        if f == Family.SUM_POWER_SHIFTED:
            # grouped so that W(x, y) == W(y, x) bit for bit
            return (1.0 + (x + y)) ** -a
        if f == Family.SUM_POWER_STABLE:
            return 1.0 / (1.0 + (x**a + y**a))
        if f in (Family.SEPARABLE_SHIFTED, Family.CUSTOM_SEPARABLE):
            return self.u(x) * self.u(y)
        return np.asarray(self.W_fn(x, y), dtype=float)


def _check_nonneg(*vals):
    for v in vals:
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise DomainError(f"arguments must be finite and >= 0, got {v!r}")


def _check_positive(*vals):
    for v in vals:
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise DomainError(f"arguments must be finite and > 0, got {v!r}")


def eval_W(spec: GraphexSpec, x, y):
    """W(x, y), with domain checks.  Scalars in, float out."""
    _check_nonneg(x, y)
    out = spec.W(x, y)
    return float(out) if np.ndim(out) == 0 else out


def _stable_const(alpha: float) -> float:
    """int_0^inf dz / (1 + z^alpha) = (pi/alpha) cosec(pi/alpha)."""
    return (math.pi / alpha) / math.sin(math.pi / alpha)


def _diff_quotient_power(A, B, s):
    """(A^s - B^s) / (B - A) computed without cancellation; limit -s A^(s-1)."""
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    # symmetric in (A, B); order them so the result is too
    A, B = np.minimum(A, B), np.maximum(A, B)
    r = np.log(B) - np.log(A)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(r == 0.0, -s, -np.expm1(s * r) / np.where(r == 0.0, 1.0, np.expm1(r)))
    return A ** (s - 1.0) * q


def _shifted_pair_integral(p, q, alpha):
    """int_0^inf (p+z)^-a (q+z)^-a dz for p, q > 0 via a Gauss hypergeometric.

    With p <= q the argument 1 - p/q lies in [0, 1) and
    2F1(a, 1; 2a; .) stays bounded (its value at 1 is (2a-1)/(a-1)).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    lo = np.minimum(p, q)
    hi = np.maximum(p, q)
    a = alpha
    return lo ** (1 - a) * hi ** (-a) / (2 * a - 1) * special.hyp2f1(a, 1.0, 2 * a, 1.0 - lo / hi)


class MarginalMode(str, Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class MarginalEvaluator:
    """Computes mu_1, mu_2, mu_d for a spec.

    In ``CLOSED_FORM`` mode the built-in families use their analytic
    marginals and anything without one silently falls back to quadrature.
    ``QUADRATURE`` mode always integrates, which is how the closed forms
    are cross-checked.  The tolerance is relative (with a tiny absolute
    floor) because marginals far in the tail are many orders below 1.
    """

    spec: GraphexSpec
    mode: MarginalMode = MarginalMode.CLOSED_FORM
    quadrature_tolerance: float = 1e-9
    absolute_floor: float = 1e-300

    @property
    def closed(self) -> bool:
        return self.mode == MarginalMode.CLOSED_FORM and self.spec.is_builtin

    def _quad_batch(self, integrand, lower=0.0):
        r = numerics.integrate_semi_infinite_batch(
            integrand, lower, self.absolute_floor, self.quadrature_tolerance
        )
        if not r.all_converged:
            worst = int(np.argmax(r.error_estimates))
            raise QuadratureError(
                "marginal quadrature did not converge",
                value=float(r.values[worst]),
                error_estimate=float(r.error_estimates[worst]),
            )
        return r.values

    # mu_1 ------------------------------------------------------------------
    def mu1_array(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        spec, a = self.spec, self.spec.alpha
        if self.closed:
            if spec.family == Family.SUM_POWER_SHIFTED:
                return (1.0 + x) ** (1.0 - a) / (a - 1.0)
            if spec.family == Family.SUM_POWER_STABLE:
                return _stable_const(a) * (1.0 + x**a) ** (1.0 / a - 1.0)
            return spec.u(x) / (a - 1.0)
        if spec.separable and self.mode == MarginalMode.CLOSED_FORM:
            return spec.u(x) * self.u_moment(1)
        return self._quad_batch(lambda z: spec.W(x[:, None], z[None, :]))

    def mu1(self, x) -> float:
        _check_nonneg(x)
        return float(self.mu1_array(x)[0])

    # mu_2 ------------------------------------------------------------------
    def mu2_array(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float)))
        x, y = x.ravel(), y.ravel()
        spec, a = self.spec, self.spec.alpha
        if self.closed:
            if spec.family == Family.SUM_POWER_SHIFTED:
                return _shifted_pair_integral(1.0 + x, 1.0 + y, a)
            if spec.family == Family.SUM_POWER_STABLE:
                return _stable_const(a) * _diff_quotient_power(1.0 + x**a, 1.0 + y**a, 1.0 / a - 1.0)
            return spec.u(x) * spec.u(y) / (2 * a - 1.0)
        if spec.separable and self.mode == MarginalMode.CLOSED_FORM:
            return spec.u(x) * spec.u(y) * self.u_moment(2)
        return self._quad_batch(lambda z: spec.W(x[:, None], z[None, :]) * spec.W(y[:, None], z[None, :]))

    def mu2(self, x, y) -> float:
        _check_nonneg(x, y)
        return float(self.mu2_array(x, y)[0])

    # mu_d ------------------------------------------------------------------
    def mu_d_array(self, xs) -> np.ndarray:
        """mu_d for each row of ``xs`` (shape (n, d))."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        d = xs.shape[1]
        spec, a = self.spec, self.spec.alpha
        if d == 1:
            return self.mu1_array(xs[:, 0])
        if d == 2:
            return self.mu2_array(xs[:, 0], xs[:, 1])
        if self.closed and spec.family == Family.SEPARABLE_SHIFTED:
            return np.prod(spec.u(xs), axis=1) / (d * a - 1.0)
        if spec.separable and self.mode == MarginalMode.CLOSED_FORM:
            return np.prod(spec.u(xs), axis=1) * self.u_moment(d)

        def integrand(z):
            out = np.ones((xs.shape[0], z.size))
            for j in range(d):
                out *= spec.W(xs[:, j, None], z[None, :])
            return out

        return self._quad_batch(integrand)

    def mu_d(self, xs) -> float:
        """int_0^inf prod_i W(x_i, z) dz.

        The marginal is usually stated for pairwise distinct x_i; equal
        values are accepted since the integral is still well defined.
        """
        xs = list(xs)
        if len(xs) < 2:
            raise DomainError("mu_d needs d >= 2 arguments")
        _check_nonneg(xs)
        return float(self.mu_d_array([xs])[0])

    # moments of U ----------------------------------------------------------
    def u_moment(self, k: int) -> float:
        """int_0^inf U(z)^k dz for a separable spec."""
        spec = self.spec
        if spec.family == Family.SEPARABLE_SHIFTED and self.mode == MarginalMode.CLOSED_FORM:
            return 1.0 / (k * spec.alpha - 1.0)
        return float(self._quad_batch(lambda z: spec.u(z)[None, :] ** k)[0])

    def mu1_tail_integral(self, eta: float) -> float:
        """int_eta^inf mu_1(y) dy, the expected-degree mass above eta.

        Diverges for sum_power_shifted with alpha <= 2, in which case
        ``math.inf`` is returned.
        """
        spec, a = self.spec, self.spec.alpha
        if self.closed:
            if spec.family == Family.SUM_POWER_SHIFTED:
                if a <= 2:
                    return math.inf
                return (1.0 + eta) ** (2.0 - a) / ((a - 1.0) * (a - 2.0))
            if spec.family == Family.SEPARABLE_SHIFTED:
                return (1.0 + eta) ** (1.0 - a) / (a - 1.0) ** 2
        r = numerics.integrate_semi_infinite_batch(
            lambda y: self.mu1_array(y)[None, :], eta, self.absolute_floor, 1e-7
        )
        if not r.all_converged:
            raise QuadratureError(
                "tail integral of mu_1 did not converge", float(r.values[0]), float(r.error_estimates[0])
            )
        return float(r.values[0])


def mu1(ev: MarginalEvaluator, x) -> float:
    return ev.mu1(x)


def mu2(ev: MarginalEvaluator, x, y) -> float:
    return ev.mu2(x, y)


def mu_d(ev: MarginalEvaluator, xs) -> float:
    return ev.mu_d(xs)


@dataclass(frozen=True)
class LimitFunctions:
    """Regular-variation limits of W and mu_2.

    ``omega`` is the limit of W under scaling by ``scaling_h``; ``lambda_fn``
    is the limit of t mu_2(b(t) x, b(t) y); b is regularly varying with
    index 1/``gamma``.  ``lambda_const`` is int U^2 for separable specs.
    """

    spec: GraphexSpec
    omega: Callable
    lambda_fn: Callable
    scaling_h: Callable
    gamma: float
    omega_degree: float
    lambda_const: Optional[float] = None

    def omega_bar(self, x) -> float:
        """int_0^inf omega(x, y) dy (the mu_1 scaling limit, non-separable)."""
        r = numerics.integrate_semi_infinite(lambda y: self.omega(x, y), 0.0, tol=1e-10, epsabs=1e-300)
        return r.value


def _quadrature_lambda(omega):
    def lam(x, y):
        x, y = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float)))
        shape = x.shape
        xf, yf = x.ravel(), y.ravel()
        r = numerics.integrate_semi_infinite_batch(
            lambda z: omega(xf[:, None], z[None, :]) * omega(yf[:, None], z[None, :]), 0.0, 1e-300, 1e-10
        )
        if not r.all_converged:
            raise QuadratureError("lambda quadrature did not converge")
        return r.values.reshape(shape)

    return lam


def limit_functions(spec: GraphexSpec, ev: Optional[MarginalEvaluator] = None, quadrature: bool = False) -> LimitFunctions:
    """Limit functions omega, lambda and the scaling data for ``spec``.

    ``quadrature=True`` computes lambda by integrating omega even where a
    closed form is known (used to cross-check the closed forms).
    """
    a = spec.alpha
    ev = ev or MarginalEvaluator(spec)
    f = spec.family
    if spec.separable:
        if quadrature:
            C = MarginalEvaluator(spec, MarginalMode.QUADRATURE, ev.quadrature_tolerance).u_moment(2)
        else:
            C = ev.u_moment(2)

        def omega(x, y):
            return np.asarray(x, dtype=float) ** -a * np.asarray(y, dtype=float) ** -a

        def lam(x, y):
            return C * omega(x, y)

        def h(t):
            return float(spec.u(t)) ** 2

        return LimitFunctions(spec, omega, lam, h, 2 * a, -2 * a, C)

    if f == Family.SUM_POWER_SHIFTED:
        def omega(x, y):
            return (np.asarray(x, dtype=float) + np.asarray(y, dtype=float)) ** -a

        def lam_closed(x, y):
            return _shifted_pair_integral(x, y, a)
    elif f == Family.SUM_POWER_STABLE:
        K = _stable_const(a)

        def omega(x, y):
            return 1.0 / (np.asarray(x, dtype=float) ** a + np.asarray(y, dtype=float) ** a)

        def lam_closed(x, y):
            return K * _diff_quotient_power(np.asarray(x, dtype=float) ** a, np.asarray(y, dtype=float) ** a, 1.0 / a - 1.0)
    else:
        if spec.omega_fn is None:
            raise DomainError(f"{spec.label} has no limit function; pass omega= when building it")
        omega = spec.omega_fn
        lam_closed = None

    lam = _quadrature_lambda(omega) if (quadrature or lam_closed is None) else lam_closed

    def h(t):
        return float(t) ** -a

    return LimitFunctions(spec, omega, lam, h, 2 * a - 1, -a)


def limit_omega(spec: GraphexSpec) -> LimitFunctions:
    return limit_functions(spec)


def eval_lambda(lf: LimitFunctions, x, y) -> float:
    _check_positive(x, y)
    return float(np.asarray(lf.lambda_fn(x, y)).ravel()[0])


def scaling_b(spec: GraphexSpec, t: float, ev: Optional[MarginalEvaluator] = None, rtol: float = 1e-12) -> float:
    """Scaling function b(t).

    Separable: the generalized inverse of 1/U at sqrt(t).  Non-separable:
    the root of t mu_2(b, b) = lambda(1, 1), so the limit of
    t mu_2(b x, b y) holds exactly on the diagonal at every t.
    """
    _check_positive(t)
    ev = ev or MarginalEvaluator(spec)
    if spec.separable:
        if spec.family == Family.SEPARABLE_SHIFTED:
            return max(t ** (1.0 / (2 * spec.alpha)) - 1.0, 0.0)
        target = math.sqrt(t)

        def g(b):
            return 1.0 / float(spec.u(b)) - target

        if g(0.0) >= 0:
            return 0.0
        hi = 1.0
        while g(hi) < 0:
            hi *= 2.0
            if hi > 1e300:
                raise BracketError("1/U never reaches sqrt(t)")
        return numerics.bisect_monotone(g, (0.0, hi), tol=0.0, rtol=rtol)

    lf = limit_functions(spec, ev)
    target = eval_lambda(lf, 1.0, 1.0)

    def g(b):
        return t * float(ev.mu2_array(b, b)[0]) - target

    if g(0.0) <= 0:
        raise BracketError(f"t={t} too small: t*mu_2(0,0) <= lambda(1,1), no positive root")
    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise BracketError("could not bracket the root of t*mu_2(b,b) = lambda(1,1)")
    return numerics.bisect_monotone(g, (0.0, hi), tol=0.0, rtol=rtol)


def validate(spec: GraphexSpec, n_probes: int = 2000, seed: int = 0, rtol: float = 1e-6) -> list[str]:
    """Probe symmetry, range and (for custom specs) the declared tail index.

    Returns a list of warnings; raises :class:`DomainError` on a hard
    violation (asymmetry or a value outside [0, 1]).  A homogeneity
    mismatch only warns, since the declared alpha is taken on trust.
    """
    rng = np.random.default_rng(seed)
    x = 10 ** rng.uniform(-3, 3, n_probes)
    y = 10 ** rng.uniform(-3, 3, n_probes)
    w = spec.W(x, y)
    if np.any(~np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
        raise DomainError(f"{spec.label}: W leaves [0, 1] on probes")
    if not np.allclose(w, spec.W(y, x), rtol=rtol, atol=0):
        raise DomainError(f"{spec.label}: W is not symmetric")
    notes = []
    if not spec.is_builtin:
        deg = -2 * spec.alpha if spec.separable else -spec.alpha
        s = 1e4
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = spec.W(2 * s * x, 2 * s * y) / spec.W(s * x, s * y)
        ratio = ratio[np.isfinite(ratio) & (ratio > 0)]
        if ratio.size and not np.allclose(np.median(ratio), 2.0**deg, rtol=0.05):
            msg = f"{spec.label}: W(2sx,2sy)/W(sx,sy) ~ {np.median(ratio):.4g}, declared alpha implies {2.0**deg:.4g}"
            warnings.warn(msg)
            notes.append(msg)
    return notes
