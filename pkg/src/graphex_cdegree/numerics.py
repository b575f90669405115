"""Shared numeric engine.

Adaptive Gauss-Kronrod quadrature (finite, semi-infinite, batched and
iterated 2-D), monotone bisection, log-log OLS and the goodness-of-fit
helpers used by the Poisson checks.

All integrands are vectorized: they receive a 1-D array of abscissae.  The
batched routines integrate a whole family of integrands on a shared mesh,
which is what makes nested integrals affordable in numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import BracketError, DomainError

# 21-point Kronrod rule with embedded 10-point Gauss rule on [-1, 1].
_XK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525452218,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes (x_k[1], x_k[3], ...).
GAUSS_WEIGHTS = np.zeros(21)
_gauss_pos = [1, 3, 5, 7, 9]
for _i, _w in zip(_gauss_pos, _WG):
    GAUSS_WEIGHTS[_i] = _w
    GAUSS_WEIGHTS[20 - _i] = _w

DEFAULT_LIMIT = 2000


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    evaluations: int
    converged: bool

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class BatchQuadratureResult:
    """Results for a family of integrands sharing one adaptive mesh."""

    values: np.ndarray
    error_estimates: np.ndarray
    evaluations: int
    converged: np.ndarray

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def _gk_panels(f_batch, lo, hi):
    """Apply the GK21 pair on every panel [lo_i, hi_i]; returns (K, |K-G|, m)."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = (mid[:, None] + half[:, None] * NODES[None, :]).ravel()
    fx = np.asarray(f_batch(x), dtype=float)
    if fx.ndim == 1:
        fx = fx[None, :]
    fx = fx.reshape(fx.shape[0], lo.size, 21)
    kron = np.einsum("mpn,n->mp", fx, KRONROD_WEIGHTS) * half
    gauss = np.einsum("mpn,n->mp", fx, GAUSS_WEIGHTS) * half
    return kron, np.abs(kron - gauss), x.size


def integrate_batch(
    f_batch: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    epsabs: float = 1e-12,
    epsrel: float = 1e-10,
    limit: int = DEFAULT_LIMIT,
    initial_panels: int = 8,
) -> BatchQuadratureResult:
    """Integrate a family of integrands over the finite interval [a, b].

    ``f_batch(x)`` must return an array of shape ``(m, len(x))`` (or
    ``(len(x),)`` for a single integrand).  Panels whose error contribution
    is large for any member that has not yet converged are bisected; the
    loop stops once every member satisfies
    ``err <= max(epsabs, epsrel * |value|)`` or the panel count hits
    ``limit``.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
        raise DomainError(f"need finite a < b, got [{a}, {b}]")
    edges = np.linspace(a, b, initial_panels + 1)
    lo, hi = edges[:-1], edges[1:]
    kron, err, evals = _gk_panels(f_batch, lo, hi)
    while True:
        value = kron.sum(axis=1)
        total_err = err.sum(axis=1)
        target = np.maximum(epsabs, epsrel * np.abs(value))
        converged = total_err <= target
        if converged.all() or lo.size >= limit:
            break
        active = ~converged
        # score of a panel: its share of the budget for the worst member
        score = (err[active] / target[active, None]).max(axis=0)
        split = score > 0.5 / lo.size
        if not split.any():
            split = score == score.max()
        m = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], m])
        new_hi = np.concatenate([m, hi[split]])
        k_new, e_new, n_new = _gk_panels(f_batch, new_lo, new_hi)
        evals += n_new
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        kron = np.concatenate([kron[:, keep], k_new], axis=1)
        err = np.concatenate([err[:, keep], e_new], axis=1)
    return BatchQuadratureResult(value, total_err, evals, converged)


def integrate_semi_infinite_batch(
    f_batch: Callable[[np.ndarray], np.ndarray],
    lower: float,
    epsabs: float = 1e-12,
    epsrel: float = 1e-10,
    limit: int = DEFAULT_LIMIT,
) -> BatchQuadratureResult:
    """Batched integral over [lower, inf) via z = lower + u/(1-u)."""
    if not np.isfinite(lower):
        raise DomainError(f"lower limit must be finite, got {lower}")

    def g(u):
        one_minus = 1.0 - u
        z = lower + u / one_minus
        fz = np.asarray(f_batch(z), dtype=float)
        return fz / (one_minus * one_minus)

    return integrate_batch(g, 0.0, 1.0, epsabs, epsrel, limit)


def _scalar(res: BatchQuadratureResult) -> QuadratureResult:
    return QuadratureResult(
        float(res.values[0]),
        float(res.error_estimates[0]),
        res.evaluations,
        bool(res.converged[0]),
    )


def integrate(f, a, b, tol=1e-10, epsabs=None, limit=DEFAULT_LIMIT):
    """Adaptive GK21 integral of a vectorized scalar function on [a, b]."""
    epsabs = tol if epsabs is None else epsabs
    return _scalar(integrate_batch(f, a, b, epsabs, tol, limit))


def integrate_semi_infinite(f, lower=0.0, tol=1e-10, epsabs=None, limit=DEFAULT_LIMIT):
    """Adaptive integral of a vectorized function over [lower, inf).

    ``tol`` is both the relative target and (unless ``epsabs`` is given)
    the absolute one.  A result that runs out of panels comes back with
    ``converged=False``; callers decide whether that is fatal.
    """
    epsabs = tol if epsabs is None else epsabs
    return _scalar(integrate_semi_infinite_batch(f, lower, epsabs, tol, limit))


def integrate_2d(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lower: Sequence[float] = (0.0, 0.0),
    tol: float = 1e-8,
    upper: Sequence[float] = (math.inf, math.inf),
    epsabs: float | None = None,
    limit: int = DEFAULT_LIMIT,
) -> QuadratureResult:
    """Iterated integral of ``f(x, y)`` over [x0, x1] x [y0, y1].

    The inner integral over y is evaluated for all outer nodes at once on a
    shared mesh, with tolerance ``tol / 10``.  The reported error adds the
    outer estimate to the largest inner estimate times the outer length
    scale, which is conservative.
    """
    epsabs = tol if epsabs is None else epsabs
    (x0, y0), (x1, y1) = lower, upper
    inner_fail = [False]
    inner_err = [0.0]
    evals = [0]

    def inner(xs):
        xs = np.asarray(xs, dtype=float)

        def fy(ys):
            return f(xs[:, None], ys[None, :])

        if math.isinf(y1):
            r = integrate_semi_infinite_batch(fy, y0, epsabs / 10, tol / 10, limit)
        else:
            r = integrate_batch(fy, y0, y1, epsabs / 10, tol / 10, limit)
        evals[0] += r.evaluations * xs.size
        if not r.all_converged:
            inner_fail[0] = True
        inner_err[0] = max(inner_err[0], float(np.max(r.error_estimates, initial=0.0)))
        return r.values

    if math.isinf(x1):
        outer = integrate_semi_infinite_batch(inner, x0, epsabs, tol, limit)
    else:
        outer = integrate_batch(inner, x0, x1, epsabs, tol, limit)
    value = float(outer.values[0])
    err = float(outer.error_estimates[0])
    # inner errors weighted by the outer measure actually integrated over
    # are bounded by (sum of |inner errors| * weights); we use the relative form
    err += (tol / 10) * abs(value) + epsabs / 10
    converged = bool(outer.converged[0]) and not inner_fail[0]
    return QuadratureResult(value, err, evals[0], converged)


def bisect_monotone(
    g: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = 1e-12,
    rtol: float = 1e-12,
    max_iter: int = 400,
) -> float:
    """Root of ``g`` on ``bracket`` by bisection.

    The bracket must straddle a sign change.  Iteration stops once the
    bracket is narrower than ``max(tol, rtol * |midpoint|)``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo > hi:
        lo, hi = hi, lo
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if np.sign(g_lo) == np.sign(g_hi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: g={g_lo}, {g_hi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= max(tol, rtol * abs(mid)):
            return mid
        g_mid = g(mid)
        if g_mid == 0.0:
            return mid
        if np.sign(g_mid) == np.sign(g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ols_loglog(points) -> tuple[float, float, float]:
    """Least-squares line through (log x, log y); returns (slope, intercept, R^2).

    R^2 is ``1 - SS_res / SS_tot`` with SS_tot about the mean of log y.  A
    perfectly flat response (SS_tot == 0) that the line reproduces exactly
    gets R^2 = 1.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError("points must be a sequence of (x, y) pairs")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log regression needs strictly positive x and y")
    lx, ly = np.log(x), np.log(y)
    if np.unique(lx).size < 2:
        raise DomainError("OLS needs at least two distinct x values")
    mx, my = lx.mean(), ly.mean()
    dx, dy = lx - mx, ly - my
    slope = float(dx @ dy / (dx @ dx))
    intercept = float(my - slope * mx)
    ss_res = float(np.sum((ly - (intercept + slope * lx)) ** 2))
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def dispersion_index(samples) -> float:
    """Sample variance over sample mean (1 for a Poisson law)."""
    s = np.asarray(samples, dtype=float)
    if s.size < 2:
        raise DomainError("dispersion index needs at least two samples")
    m = s.mean()
    if m == 0.0:
        return math.nan
    return float(s.var(ddof=1) / m)


def chi_square_gof(observed, pmf: Callable[[np.ndarray], np.ndarray], min_expected: float = 5.0):
    """Chi-square goodness of fit of integer samples against a discrete law.

    ``observed`` may be raw integer samples or a ``{k: count}`` mapping.
    Bins run over k = 0, 1, ...; the upper tail beyond the last bin with
    expected count >= ``min_expected`` is pooled into one tail bin, and
    low-expectation bins are merged into their neighbours.  Returns
    ``(statistic, p_value, dof)``.  A law concentrated on a single value
    that the data also sits on returns p = 1 with dof = 0.
    """
    if isinstance(observed, dict):
        keys = np.array(sorted(observed), dtype=np.int64)
        vals = np.array([observed[k] for k in keys], dtype=float)
        if keys.size and keys.min() < 0:
            raise DomainError("counts must be for non-negative integers")
        top = int(keys.max()) if keys.size else 0
        counts = np.zeros(top + 1)
        counts[keys] = vals
    else:
        s = np.asarray(observed, dtype=np.int64)
        if s.size and s.min() < 0:
            raise DomainError("samples must be non-negative integers")
        counts = np.bincount(s).astype(float)
    n = counts.sum()
    if n == 0:
        raise DomainError("no observations")
    # extend the support until the remaining expected mass is tiny
    k_max = max(counts.size - 1, 0)
    probs = np.asarray(pmf(np.arange(k_max + 1)), dtype=float)
    while probs.sum() < 1 - 1e-12 and k_max < 10_000:
        k_max = 2 * k_max + 10
        probs = np.asarray(pmf(np.arange(k_max + 1)), dtype=float)
    if counts.size < k_max + 1:
        counts = np.concatenate([counts, np.zeros(k_max + 1 - counts.size)])
    expected = probs * n
    tail_expected = max(n - expected.sum(), 0.0)

    obs_bins, exp_bins = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = acc_e = 0.0
    acc_e += tail_expected
    if obs_bins:
        obs_bins[-1] += acc_o
        exp_bins[-1] += acc_e
    else:
        obs_bins, exp_bins = [acc_o], [acc_e]
    o = np.array(obs_bins)
    e = np.array(exp_bins)
    dof = o.size - 1
    if dof == 0:
        # degenerate law: everything expected in one bin
        return 0.0, 1.0, 0
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = float(np.sum(np.where(e > 0, (o - e) ** 2 / e, np.where(o > 0, np.inf, 0.0))))
    return stat, float(stats.chi2.sf(stat, dof)), dof


def chi_square_two_sample(a, b, min_expected: float = 5.0):
    """Homogeneity chi-square test for two samples of non-negative integers.

    Values are binned on their pooled support; adjacent bins are merged
    left to right until each pooled bin has at least ``min_expected``
    expected count in both samples.  Returns ``(statistic, p_value, dof)``.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    lo = int(min(a.min(), b.min()))
    hi = int(max(a.max(), b.max()))
    ca = np.bincount(a - lo, minlength=hi - lo + 1).astype(float)
    cb = np.bincount(b - lo, minlength=hi - lo + 1).astype(float)
    na, nb = ca.sum(), cb.sum()
    frac_a = na / (na + nb)
    rows_a, rows_b = [], []
    acc_a = acc_b = 0.0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        tot = acc_a + acc_b
        if tot * min(frac_a, 1 - frac_a) >= min_expected:
            rows_a.append(acc_a)
            rows_b.append(acc_b)
            acc_a = acc_b = 0.0
    if rows_a:
        rows_a[-1] += acc_a
        rows_b[-1] += acc_b
    else:
        rows_a, rows_b = [acc_a], [acc_b]
    if len(rows_a) < 2:
        return 0.0, 1.0, 0
    table = np.array([rows_a, rows_b])
    stat, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(stat), float(p), int(dof)
