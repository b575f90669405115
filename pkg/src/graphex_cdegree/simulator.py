"""Finite graphex graphs G_t.

Vertices are the points of a unit-rate Poisson process on
[0, t] x [0, eta_max]; vertices i, j are joined independently with
probability W(eta_i, eta_j).  The theta coordinate only selects which
points are in the graph and is kept for export.

Randomness comes from Philox streams keyed by ``(seed, *labels)`` so every
band pair (and every replication in the harness) draws from its own
stream, independent of execution order.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics
from .errors import CapacityError, DomainError
from .graphex import GraphexSpec, MarginalEvaluator

MAX_POINTS = 10**8
NAIVE_MAX_POINTS = 5 * 10**4
DEFAULT_HARD_CAP = 1e7
BAND_GROWTH = 1.25

_STREAM_POINTS = 0
_STREAM_BLOCKED = 1
_STREAM_NAIVE = 2
_STREAM_PLANTED = 3


def rng_stream(seed: int, *labels: int) -> np.random.Generator:
    """Counter-based generator for the stream ``labels`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(v) for v in labels))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class PointSample:
    """A realized Poisson process on [0, t] x (0, eta_max], sorted by eta."""

    t: float
    eta_max: float
    theta: np.ndarray
    eta: np.ndarray
    seed: int

    def __len__(self) -> int:
        return int(self.eta.size)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.theta.tolist(), self.eta.tolist()))

    @classmethod
    def from_eta(cls, eta, t: float = 1.0, eta_max: float | None = None, theta=None, seed: int = 0) -> "PointSample":
        """Wrap given latent values (sorted internally); used for pinned tests."""
        eta = np.asarray(eta, dtype=float)
        theta = np.zeros_like(eta) if theta is None else np.asarray(theta, dtype=float)
        order = np.argsort(eta, kind="stable")
        top = float(eta.max()) if eta.size else 1.0
        return cls(float(t), float(eta_max if eta_max is not None else max(top, 1e-300)), theta[order], eta[order], seed)


def sample_points(t: float, eta_max: float, seed: int, max_points: int = MAX_POINTS) -> PointSample:
    """Poisson(t * eta_max) points placed uniformly on the rectangle."""
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"t must be positive and finite, got {t}")
    if not (eta_max > 0 and math.isfinite(eta_max)):
        raise DomainError(f"eta_max must be positive and finite, got {eta_max}")
    mean = t * eta_max
    if mean > max_points:
        raise CapacityError(f"expected point count {mean:.3g} exceeds the limit {max_points:.3g}")
    rng = rng_stream(seed, _STREAM_POINTS)
    n = int(rng.poisson(mean))
    eta = eta_max * (1.0 - rng.random(n))  # (0, eta_max]
    theta = t * rng.random(n)
    order = np.argsort(eta, kind="stable")
    return PointSample(float(t), float(eta_max), theta[order], eta[order], int(seed))


def expected_missed_edges(ev: MarginalEvaluator, t: float, eta_max: float) -> float:
    """t^2 * int_{eta_max}^inf mu_1: expected edges with an endpoint above eta_max."""
    return t * t * ev.mu1_tail_integral(eta_max)


def choose_eta_max(
    ev: MarginalEvaluator,
    t: float,
    missed_edge_budget: float = 0.1,
    hard_cap: float = DEFAULT_HARD_CAP,
) -> float:
    """Smallest eta with at most ``missed_edge_budget`` expected edges above it.

    Solved by bisection on the (decreasing) tail mass.  Falls back to
    ``hard_cap`` with a warning when the tail of mu_1 is not integrable or
    the budget would need a larger cap; an infinite budget returns the cap.
    """
    if not missed_edge_budget > 0:
        raise DomainError("missed_edge_budget must be positive")
    if math.isinf(missed_edge_budget):
        return float(hard_cap)

    def excess(eta):
        return expected_missed_edges(ev, t, eta) - missed_edge_budget

    if math.isinf(expected_missed_edges(ev, t, 0.0)):
        warnings.warn(f"{ev.spec.label}: int mu_1 diverges; truncating at the hard cap {hard_cap:g}")
        return float(hard_cap)
    if excess(0.0) <= 0:
        return 0.0
    if excess(hard_cap) > 0:
        warnings.warn(
            f"{ev.spec.label}: budget {missed_edge_budget:g} needs eta_max beyond the hard cap {hard_cap:g}"
        )
        return float(hard_cap)
    return numerics.bisect_monotone(excess, (0.0, hard_cap), tol=0.0, rtol=1e-10)


def planted_eta_max(
    spec: GraphexSpec,
    t: float,
    x: float,
    y: float,
    missed_mass: float = 1e-4,
    hard_cap: float = DEFAULT_HARD_CAP,
) -> float:
    """Truncation for planted-pair draws.

    Smallest eta with t * int_eta^inf W(x, z) W(y, z) dz <= missed_mass,
    i.e. the expected number of common neighbours lost to truncation.
    Returns 0 when nothing would be lost at all.
    """
    if not missed_mass > 0:
        raise DomainError("missed_mass must be positive")

    def tail(eta):
        r = numerics.integrate_semi_infinite(lambda z: spec.W(x, z) * spec.W(y, z), eta, tol=1e-8, epsabs=1e-300)
        return t * r.value - missed_mass

    if tail(0.0) <= 0:
        return 0.0
    if tail(hard_cap) > 0:
        raise CapacityError(f"missed mass {missed_mass:g} needs eta_max beyond {hard_cap:g}")
    return numerics.bisect_monotone(tail, (0.0, hard_cap), tol=0.0, rtol=1e-8)


@dataclass(eq=False)
class SparseGraph:
    """Undirected simple graph in CSR form over the vertices of ``points``.

    ``indices[indptr[i]:indptr[i+1]]`` is the sorted neighbour list of
    vertex i, which corresponds to ``points.eta[i]``.
    """

    points: PointSample
    indptr: np.ndarray
    indices: np.ndarray
    edge_count: int
    truncation_report: float = math.nan
    meta: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return int(self.indptr.size - 1)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(i).tolist() for i in range(self.n_vertices)]

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def edges(self) -> np.ndarray:
        """Edge list as an (m, 2) array with i < j, sorted."""
        rows = np.repeat(np.arange(self.n_vertices, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return np.column_stack([rows[keep], self.indices[keep]])

    def check(self) -> None:
        """Assert symmetry, sortedness, no self-loops and the edge count."""
        n = self.n_vertices
        rows = np.repeat(np.arange(n, dtype=np.int64), self.degrees)
        cols = self.indices.astype(np.int64)
        assert self.indices.size == 2 * self.edge_count, "edge_count != half the adjacency size"
        assert not np.any(rows == cols), "self-loop"
        key = rows * n + cols
        assert np.all(np.diff(key) > 0), "neighbour lists not strictly sorted"
        assert np.array_equal(np.sort(cols * n + rows), key), "adjacency not symmetric"

    @classmethod
    def from_edges(cls, points: PointSample, i, j, truncation_report=math.nan, meta=None) -> "SparseGraph":
        n = len(points)
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if i.size and (np.any(i == j) or min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= n):
            raise DomainError("edges must join distinct existing vertices")
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        key = np.unique(rows * n + cols)
        rows, cols = key // n, key % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(points, indptr, cols.astype(np.int64), int(key.size // 2), truncation_report, dict(meta or {}))


def band_edges(eta_max: float, growth: float = BAND_GROWTH) -> np.ndarray:
    """Band boundaries 0 = e_0 < e_1 < ... with 1 + e_k = growth^k, last >= eta_max."""
    k_max = max(1, int(math.ceil(math.log1p(eta_max) / math.log(growth))))
    e = growth ** np.arange(k_max + 1, dtype=float) - 1.0
    e[0] = 0.0
    e[-1] = max(e[-1], eta_max)
    return e


def _triangle_decode(pos: np.ndarray, n: int):
    """Map linear indices over {(r, c): 0 <= r < c < n} (row-major) to (r, c)."""
    pos = pos.astype(np.int64)
    b = 2 * n - 1
    r = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * pos, 0.0))) / 2).astype(np.int64)
    r = np.clip(r, 0, n - 2)

    def offset(rr):
        return rr * (2 * n - rr - 1) // 2

    for _ in range(3):
        r = np.where(offset(r) > pos, r - 1, r)
        r = np.where(offset(r + 1) <= pos, r + 1, r)
    c = pos - offset(r) + r + 1
    return r, c


def _bernoulli_positions(rng: np.random.Generator, n_pairs: int, p: float) -> np.ndarray:
    """Sorted indices of successes among n_pairs Bernoulli(p) trials."""
    if p >= 1.0:
        return np.arange(n_pairs, dtype=np.int64)
    m = int(rng.binomial(n_pairs, p))
    if m == 0:
        return np.empty(0, dtype=np.int64)
    pos = rng.choice(n_pairs, size=m, replace=False, shuffle=False)
    return np.sort(pos.astype(np.int64))


def sample_graph_blocked(
    spec: GraphexSpec,
    pts: PointSample,
    seed: int,
    ev: MarginalEvaluator | None = None,
    growth: float = BAND_GROWTH,
) -> SparseGraph:
    """Bernoulli(W) edges by band-wise thinning.

    Vertices are grouped into eta bands with 1 + boundary growing
    geometrically.  For each band pair the edge probability is bounded by
    W at the lower corner (W is nonincreasing), candidate pairs are drawn as
    Bernoulli(p_bar) successes and each is kept with probability
    W / p_bar.  The result has exactly the law of independent
    Bernoulli(W(eta_i, eta_j)) edges.  Specs not declared monotone use
    p_bar = 1, i.e. plain Bernoulli sampling in every band pair.
    """
    eta = pts.eta
    n = eta.size
    edges = band_edges(max(pts.eta_max, float(eta[-1]) if n else 0.0), growth)
    starts = np.searchsorted(eta, edges[:-1], side="left")
    stops = np.append(starts[1:], n)
    nb = edges.size - 1
    out_i, out_j = [], []
    for a in range(nb):
        na = int(stops[a] - starts[a])
        if na == 0:
            continue
        for b in range(a, nb):
            nbb = int(stops[b] - starts[b])
            if nbb == 0:
                continue
            if a == b:
                n_pairs = na * (na - 1) // 2
            else:
                n_pairs = na * nbb
            if n_pairs == 0:
                continue
            p_bar = float(spec.W(edges[a], edges[b])) if spec.monotone else 1.0
            if p_bar <= 0.0:
                continue
            p_bar = min(p_bar, 1.0)
            rng = rng_stream(seed, _STREAM_BLOCKED, a, b)
            pos = _bernoulli_positions(rng, n_pairs, p_bar)
            if pos.size == 0:
                continue
            if a == b:
                i, j = _triangle_decode(pos, na)
            else:
                i, j = pos // nbb, pos % nbb
            i = i + starts[a]
            j = j + starts[b]
            w = spec.W(eta[i], eta[j])
            ratio = w / p_bar
            if spec.monotone and np.any(ratio > 1.0 + 1e-9):
                raise DomainError(f"{spec.label} declared monotone but W exceeds its band bound")
            keep = rng.random(pos.size) < ratio
            out_i.append(i[keep])
            out_j.append(j[keep])
    i = np.concatenate(out_i) if out_i else np.empty(0, dtype=np.int64)
    j = np.concatenate(out_j) if out_j else np.empty(0, dtype=np.int64)
    report = expected_missed_edges(ev, pts.t, pts.eta_max) if ev is not None else math.nan
    return SparseGraph.from_edges(pts, i, j, report, {"sampler": "blocked", "seed": int(seed)})


def sample_graph_naive(spec: GraphexSpec, pts: PointSample, seed: int, ev: MarginalEvaluator | None = None) -> SparseGraph:
    """Independent Bernoulli(W(eta_i, eta_j)) for every unordered pair (the oracle)."""
    n = len(pts)
    if n > NAIVE_MAX_POINTS:
        raise CapacityError(f"naive sampler is quadratic; {n} points exceeds {NAIVE_MAX_POINTS}")
    rng = rng_stream(seed, _STREAM_NAIVE)
    eta = pts.eta
    out_i, out_j = [], []
    block = max(1, 4_000_000 // max(n, 1))
    for r0 in range(0, n, block):
        r1 = min(n, r0 + block)
        rows = np.arange(r0, r1)
        w = spec.W(eta[rows, None], eta[None, :])
        u = rng.random(w.shape)
        hit = (u < w) & (np.arange(n)[None, :] > rows[:, None])
        ii, jj = np.nonzero(hit)
        out_i.append(ii + r0)
        out_j.append(jj)
    i = np.concatenate(out_i) if out_i else np.empty(0, dtype=np.int64)
    j = np.concatenate(out_j) if out_j else np.empty(0, dtype=np.int64)
    report = expected_missed_edges(ev, pts.t, pts.eta_max) if ev is not None else math.nan
    return SparseGraph.from_edges(pts, i, j, report, {"sampler": "naive", "seed": int(seed)})


def simulate(
    spec: GraphexSpec,
    t: float,
    seed: int,
    eta_max: float | None = None,
    missed_edge_budget: float = 0.1,
    max_points: int = 5 * 10**6,
    ev: MarginalEvaluator | None = None,
) -> SparseGraph:
    """Points plus blocked edges in one call.

    Without an explicit ``eta_max`` the truncation is chosen from the
    missed-edge budget, then clipped so the expected point count stays
    under ``max_points``; ``meta['truncation_capped']`` records a clip.
    """
    ev = ev or MarginalEvaluator(spec)
    capped = False
    if eta_max is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            eta_max = choose_eta_max(ev, t, missed_edge_budget)
        if t * eta_max > max_points:
            eta_max = max_points / t
            capped = True
        if eta_max <= 0:
            eta_max = 1.0 / t
    pts = sample_points(t, eta_max, seed, max_points=max(max_points, MAX_POINTS))
    g = sample_graph_blocked(spec, pts, seed, ev)
    g.meta.update({"truncation_capped": capped, "eta_max": float(eta_max)})
    return g


def planted_pair_draws(
    spec: GraphexSpec,
    t: float,
    eta_max: float,
    x: float,
    y: float,
    n_draws: int,
    seed: int,
    batch_points: int = 2_000_000,
) -> np.ndarray:
    """Common-neighbour counts of two planted vertices, ``n_draws`` times.

    Each draw realizes a fresh Poisson process of latent values on
    (0, eta_max] with rate t, adds the planted values x and y, samples the
    edges from x and from y to every process point, and counts the points
    joined to both.
    """
    if not (x > 0 and y > 0):
        raise DomainError("planted values must be positive")
    if x == y:
        raise DomainError("planted values must be distinct")
    if not (t > 0 and eta_max > 0):
        raise DomainError("t and eta_max must be positive")
    if t * eta_max > MAX_POINTS:
        raise CapacityError(f"expected point count {t * eta_max:.3g} exceeds the limit {MAX_POINTS:.3g}")
    rng = rng_stream(seed, _STREAM_PLANTED)
    sizes = rng.poisson(t * eta_max, size=n_draws)
    out = np.zeros(n_draws, dtype=np.int64)
    d0 = 0
    while d0 < n_draws:
        # group draws so each batch holds about batch_points points
        cum = np.cumsum(sizes[d0:])
        d1 = d0 + max(1, int(np.searchsorted(cum, batch_points, side="right")))
        d1 = min(d1, n_draws)
        counts = sizes[d0:d1]
        total = int(counts.sum())
        z = eta_max * (1.0 - rng.random(total))
        hit_x = rng.random(total) < spec.W(x, z)
        hit_y = rng.random(total) < spec.W(y, z)
        owner = np.repeat(np.arange(d1 - d0), counts)
        out[d0:d1] = np.bincount(owner[hit_x & hit_y], minlength=d1 - d0)
        d0 = d1
    return out


def sample_planted_pair(spec: GraphexSpec, t: float, eta_max: float, x: float, y: float, seed: int) -> int:
    """A single planted-pair common-neighbour count."""
    return int(planted_pair_draws(spec, t, eta_max, x, y, 1, seed)[0])


# -- export -----------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def export_graph(graph: SparseGraph, out_dir, spec: GraphexSpec | None = None) -> Path:
    """Write ``edges.txt``, ``vertices.txt`` and ``meta.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    e = graph.edges()
    _atomic_write(out / "edges.txt", "".join(f"{i} {j}\n" for i, j in e.tolist()))
    pts = graph.points
    lines = [f"{k} {th:.17g} {et:.17g}\n" for k, (th, et) in enumerate(zip(pts.theta.tolist(), pts.eta.tolist()))]
    _atomic_write(out / "vertices.txt", "".join(lines))
    meta = {
        "spec": spec.to_config() if spec is not None and spec.is_builtin else (spec.label if spec else None),
        "t": pts.t,
        "eta_max": pts.eta_max,
        "seed": pts.seed,
        "n_vertices": graph.n_vertices,
        "edge_count": graph.edge_count,
        "truncation_report": graph.truncation_report,
    }
    meta.update({k: v for k, v in graph.meta.items() if k not in meta})
    _atomic_write(out / "meta.json", json.dumps(meta, indent=2, sort_keys=True))
    return out


def load_graph(in_dir) -> SparseGraph:
    """Read a graph written by :func:`export_graph`."""
    d = Path(in_dir)
    meta = json.loads((d / "meta.json").read_text())
    v = np.loadtxt(d / "vertices.txt", ndmin=2)
    if v.size:
        order = v[:, 0].astype(np.int64)
        theta = np.empty(order.size)
        eta = np.empty(order.size)
        theta[order] = v[:, 1]
        eta[order] = v[:, 2]
    else:
        theta = eta = np.empty(0)
    pts = PointSample(float(meta["t"]), float(meta["eta_max"]), theta, eta, int(meta.get("seed", 0)))
    e = np.loadtxt(d / "edges.txt", dtype=np.int64, ndmin=2)
    if e.size == 0:
        e = np.empty((0, 2), dtype=np.int64)
    extra = {k: meta[k] for k in meta if k not in ("t", "eta_max", "seed", "edge_count", "truncation_report", "n_vertices")}
    return SparseGraph.from_edges(pts, e[:, 0], e[:, 1], float(meta.get("truncation_report", math.nan)), extra)
