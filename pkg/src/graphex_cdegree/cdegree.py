"""Common-connection counts and the power-law tail fit.

``count_common`` counts, for every unordered vertex pair, the neighbours
the two share.  It is the wedge enumeration sum_z 1{i~z} 1{z~j} carried
out as a sparse product A_R A_R^T over row blocks, so memory stays bounded
by the block size rather than by the number of co-witnessed pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from . import numerics
from .errors import CapacityError, DomainError, FitError
from .graphex import GraphexSpec, MarginalEvaluator, scaling_b
from .simulator import SparseGraph

MAX_WEDGE_WORK = 10**10
_BLOCK_WORK = 4 * 10**6


@dataclass
class CDegreeHistogram:
    """Number of unordered vertex pairs with exactly k >= 1 common neighbours."""

    counts: dict[int, int]
    t: float
    restriction: Optional[tuple[float, float]] = None  # (epsilon, b_t)

    @property
    def pairs_positive(self) -> int:
        return int(sum(self.counts.values()))

    def __getitem__(self, k: int) -> int:
        return self.counts.get(int(k), 0)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        ks = np.array(sorted(self.counts), dtype=np.int64)
        return ks, np.array([self.counts[k] for k in ks], dtype=np.int64)

    def to_csv(self) -> str:
        ks, cs = self.as_arrays()
        return "k,count\n" + "".join(f"{k},{c}\n" for k, c in zip(ks.tolist(), cs.tolist()))


def _adjacency(graph: SparseGraph) -> sparse.csr_matrix:
    n = graph.n_vertices
    data = np.ones(graph.indices.size, dtype=np.int32)
    return sparse.csr_matrix((data, graph.indices, graph.indptr), shape=(n, n))


def count_common(
    graph: SparseGraph,
    restriction: Optional[tuple[float, float]] = None,
    max_work: int = MAX_WEDGE_WORK,
) -> CDegreeHistogram:
    """Histogram of common-neighbour counts over unordered pairs.

    With ``restriction=(epsilon, b_t)`` only pairs whose latent values both
    exceed ``b_t * epsilon`` are counted; their common neighbours may be any
    vertex.  Pairs with no common neighbour are never stored.
    """
    deg = graph.degrees.astype(np.int64)
    work = int(np.dot(deg, deg))
    if work > max_work:
        raise CapacityError(f"wedge work sum(deg^2)={work:.3g} exceeds the limit {max_work:.3g}")
    A = _adjacency(graph)
    if restriction is not None:
        eps, b_t = restriction
        if not (eps > 0 and b_t >= 0):
            raise DomainError("restriction needs epsilon > 0 and b_t >= 0")
        keep = np.flatnonzero(graph.points.eta > b_t * eps)
    else:
        keep = np.arange(graph.n_vertices)
    # only vertices with degree >= 1 can have a common neighbour
    keep = keep[deg[keep] > 0]
    R = A[keep]
    RT = R.T.tocsr()
    # per-row wedge work: sum over neighbours z of deg(z)
    row_work = R @ deg
    cum = np.cumsum(row_work)
    total = np.zeros(16, dtype=np.int64)
    r0 = 0
    m = keep.size
    while r0 < m:
        base = cum[r0 - 1] if r0 else 0
        r1 = int(np.searchsorted(cum, base + _BLOCK_WORK, side="right"))
        r1 = min(max(r1, r0 + 1), m)
        P = (R[r0:r1] @ RT).tocoo()
        upper = P.col > (P.row + r0)
        vals = P.data[upper]
        if vals.size:
            bc = np.bincount(vals)
            if bc.size > total.size:
                total = np.concatenate([total, np.zeros(bc.size - total.size, dtype=np.int64)])
            total[: bc.size] += bc
        r0 = r1
    ks = np.flatnonzero(total)
    ks = ks[ks >= 1]
    return CDegreeHistogram({int(k): int(total[k]) for k in ks}, graph.points.t, restriction)


def count_common_bruteforce(graph: SparseGraph) -> CDegreeHistogram:
    """Triple loop over (i, j, z); the oracle for small graphs."""
    n = graph.n_vertices
    nbrs = [set(graph.neighbors(i).tolist()) for i in range(n)]
    counts: dict[int, int] = {}
    for i in range(n):
        for j in range(i + 1, n):
            c = 0
            for z in range(n):
                if z != i and z != j and z in nbrs[i] and z in nbrs[j]:
                    c += 1
            if c:
                counts[c] = counts.get(c, 0) + 1
    return CDegreeHistogram(counts, graph.points.t)


def n_t_epsilon(
    graph: SparseGraph,
    spec: GraphexSpec,
    epsilon: float,
    k: int,
    b_t: Optional[float] = None,
    ev: Optional[MarginalEvaluator] = None,
) -> int:
    """Unordered pairs above b(t) * epsilon with exactly k common neighbours.

    The expected-count integral runs over ordered pairs; multiply by 2
    before comparing with it.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if k < 1:
        raise DomainError("k must be >= 1")
    if b_t is None:
        b_t = scaling_b(spec, graph.points.t, ev)
    return count_common(graph, (epsilon, b_t))[k]


def empirical_distribution(hist: CDegreeHistogram) -> list[tuple[int, float]]:
    """(k, share of positive pairs with k common neighbours), sorted by k."""
    total = hist.pairs_positive
    if total <= 0:
        raise DomainError("empty histogram")
    return [(k, hist.counts[k] / total) for k in sorted(hist.counts)]


def log_binned(dist: Sequence[tuple[int, float]], bins_per_decade: int = 10) -> list[tuple[float, float]]:
    """Logarithmically binned version of a distribution (mass / bin width at the geometric centre)."""
    ks = np.array([k for k, _ in dist], dtype=float)
    ps = np.array([p for _, p in dist], dtype=float)
    edges = 10 ** np.arange(0, math.log10(ks.max()) + 1.0 / bins_per_decade + 1e-12, 1.0 / bins_per_decade)
    edges = np.unique(np.ceil(edges))
    idx = np.searchsorted(edges, ks, side="right") - 1
    out = []
    for b in np.unique(idx):
        lo, hi = edges[b], edges[b + 1] if b + 1 < edges.size else ks.max() + 1
        mass = ps[idx == b].sum()
        if mass > 0:
            out.append((math.sqrt(lo * (hi - 1)), mass / (hi - lo)))
    return out


@dataclass(frozen=True)
class TailFit:
    slope: float
    intercept: float
    r_squared: float
    k_min: float
    k_max: float
    n_points: int
    n_removed: int = 0

    @property
    def index_estimate(self) -> float:
        return abs(self.slope)

    @property
    def k_used(self) -> tuple[float, float]:
        return (self.k_min, self.k_max)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r_squared,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "n_points": self.n_points,
        }


def fit_tail_index(
    dist: Sequence[tuple[float, float]],
    r2_target: float = 0.995,
    min_points: int = 5,
    log_bins: bool = False,
) -> TailFit:
    """OLS of log p on log k, trimming the largest k until R^2 >= r2_target.

    Zero-probability points are dropped first.  Only the top of the support
    is ever trimmed; the first fit meeting the target is returned.
    """
    if not 0 < r2_target < 1:
        raise DomainError("r2_target must lie in (0, 1)")
    pts = [(float(k), float(p)) for k, p in dist if p > 0]
    if log_bins:
        pts = log_binned(pts)
    pts.sort()
    if len(pts) < min_points:
        raise FitError(f"only {len(pts)} support points, need {min_points}")
    arr = np.array(pts)
    best = -math.inf
    for end in range(arr.shape[0], min_points - 1, -1):
        slope, intercept, r2 = numerics.ols_loglog(arr[:end])
        best = max(best, r2)
        if r2 >= r2_target:
            return TailFit(slope, intercept, r2, arr[0, 0], arr[end - 1, 0], end, arr.shape[0] - end)
    raise FitError(f"R^2 target {r2_target} not reached with >= {min_points} points (best {best:.4f})", best)
