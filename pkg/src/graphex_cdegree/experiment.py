"""Replicated simulate -> count -> fit study with deterministic seeding."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .cdegree import count_common, empirical_distribution, fit_tail_index
from .errors import ConfigError, DomainError, FitError
from .graphex import GraphexSpec, MarginalEvaluator, scaling_b
from .simulator import _atomic_write, simulate
from .theory import BoundInterval, bound_interval, coverage_pct, upper_coverage_pct

MAX_FAILURE_FRACTION = 0.10
REPLICATION_HEADER = "rep,seed,edges,index,r2,kmin,kmax"


def replication_seed(master_seed: int, rep: int) -> int:
    """64-bit seed of replication ``rep``: blake2b-64 of (master_seed, rep) as little-endian uint64s."""
    raw = struct.pack("<QQ", int(master_seed) % 2**64, int(rep) % 2**64)
    return int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class ExperimentConfig:
    spec: GraphexSpec
    t: float = 1000.0
    replications: int = 500
    master_seed: int = 0
    missed_edge_budget: float = 0.1
    r2_target: float = 0.995
    min_points: int = 5
    log_bins: bool = False
    epsilon: Optional[float] = None
    max_points: int = 5 * 10**6
    workers: int = 1
    keep_dists: bool = False
    outputs: Optional[str] = None

    def __post_init__(self):
        if not self.replications >= 1 or int(self.replications) != self.replications:
            raise ConfigError("replications must be a positive integer")
        if not self.t > 0:
            raise ConfigError("t must be positive")
        if not 0 < self.r2_target < 1:
            raise ConfigError("fit.r2_target must lie in (0, 1)")
        if self.min_points < 2:
            raise ConfigError("fit.min_points must be at least 2")
        if not self.missed_edge_budget > 0:
            raise ConfigError("missed_edge_budget must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("restriction.epsilon must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.max_points < 1:
            raise ConfigError("max_points must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"spec", "t", "replications", "master_seed", "missed_edge_budget", "fit", "restriction",
                 "outputs", "workers", "max_points", "keep_dists"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "spec" not in d:
            raise ConfigError("config needs a 'spec' entry")
        try:
            spec = GraphexSpec.from_config(d["spec"])
        except (DomainError, KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad spec: {e}") from e
        fit = d.get("fit") or {}
        bad_fit = set(fit) - {"r2_target", "min_points", "log_bins"}
        if bad_fit:
            raise ConfigError(f"unknown fit keys: {sorted(bad_fit)}")
        restr = d.get("restriction") or {}
        try:
            return cls(
                spec=spec,
                t=float(d.get("t", 1000.0)),
                replications=int(d.get("replications", 500)),
                master_seed=int(d.get("master_seed", 0)),
                missed_edge_budget=float(d.get("missed_edge_budget", 0.1)),
                r2_target=float(fit.get("r2_target", 0.995)),
                min_points=int(fit.get("min_points", 5)),
                log_bins=bool(fit.get("log_bins", False)),
                epsilon=None if restr.get("epsilon") is None else float(restr["epsilon"]),
                max_points=int(d.get("max_points", 5 * 10**6)),
                workers=int(d.get("workers", 1)),
                keep_dists=bool(d.get("keep_dists", False)),
                outputs=d.get("outputs"),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"bad config value: {e}") from e

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        """Canonical form; ``workers`` and ``outputs`` are left out since they do not affect results."""
        if not self.spec.is_builtin:
            spec = {"family": self.spec.family.value, "alpha": self.spec.alpha, "name": self.spec.label}
        else:
            spec = self.spec.to_config()
        return {
            "spec": spec,
            "t": self.t,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "missed_edge_budget": self.missed_edge_budget,
            "fit": {"r2_target": self.r2_target, "min_points": self.min_points, "log_bins": self.log_bins},
            "restriction": None if self.epsilon is None else {"epsilon": self.epsilon},
            "max_points": self.max_points,
        }


@dataclass(frozen=True)
class ReplicationResult:
    rep: int
    seed: int
    edge_count: int
    index_estimate: Optional[float]
    r_squared: Optional[float]
    k_used: Optional[tuple[float, float]]
    n_points: Optional[int] = None
    eta_max: float = math.nan
    truncation_capped: bool = False
    error: Optional[str] = None
    distribution: Optional[list] = field(default=None, compare=False, repr=False)

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("distribution")
        d["k_used"] = None if self.k_used is None else [float(v) for v in self.k_used]
        if not math.isfinite(d["eta_max"]):
            d["eta_max"] = None
        return d

    def csv_row(self) -> str:
        if self.failed:
            return f"{self.rep},{self.seed},{self.edge_count},,,,\n"
        k0, k1 = self.k_used
        return f"{self.rep},{self.seed},{self.edge_count},{self.index_estimate!r},{self.r_squared!r},{k0:g},{k1:g}\n"


def run_replication(cfg: ExperimentConfig, rep: int) -> ReplicationResult:
    """One simulate -> count -> fit pass.  Fit failures are returned, not raised."""
    seed = replication_seed(cfg.master_seed, rep)
    ev = MarginalEvaluator(cfg.spec)
    g = simulate(cfg.spec, cfg.t, seed, missed_edge_budget=cfg.missed_edge_budget, max_points=cfg.max_points, ev=ev)
    restriction = None
    if cfg.epsilon is not None:
        restriction = (cfg.epsilon, scaling_b(cfg.spec, cfg.t, ev))
    hist = count_common(g, restriction)
    common = dict(rep=rep, seed=seed, edge_count=int(g.edge_count), eta_max=float(g.meta["eta_max"]),
                  truncation_capped=bool(g.meta["truncation_capped"]))
    try:
        dist = empirical_distribution(hist)
        fit = fit_tail_index(dist, cfg.r2_target, cfg.min_points, cfg.log_bins)
    except (FitError, DomainError) as e:
        return ReplicationResult(index_estimate=None, r_squared=None, k_used=None, error=str(e), **common)
    return ReplicationResult(
        index_estimate=float(fit.index_estimate),
        r_squared=float(fit.r_squared),
        k_used=(float(fit.k_min), float(fit.k_max)),
        n_points=int(fit.n_points),
        distribution=dist if cfg.keep_dists else None,
        **common,
    )


def _run_one(args) -> ReplicationResult:
    cfg, rep = args
    return run_replication(cfg, rep)


@dataclass
class ExperimentReport:
    config: dict
    per_replication: list[ReplicationResult]
    mean: Optional[float]
    std_dev: Optional[float]
    range: Optional[tuple[float, float]]
    bound: Optional[BoundInterval]
    coverage_pct: Optional[float]
    upper_coverage_pct: Optional[float]
    n_failed: int
    created: str = ""
    determinism_hash: str = ""

    @property
    def estimates(self) -> list[float]:
        return [r.index_estimate for r in self.per_replication if not r.failed]

    def _payload(self) -> dict:
        return {
            "config": self.config,
            "per_replication": [r.to_dict() for r in self.per_replication],
            "mean": self.mean,
            "std_dev": self.std_dev,
            "range": None if self.range is None else list(self.range),
            "bound": None if self.bound is None else self.bound.to_dict(),
            "coverage_pct": self.coverage_pct,
            "upper_coverage_pct": self.upper_coverage_pct,
            "n_failed": self.n_failed,
        }

    def compute_hash(self) -> str:
        canon = json.dumps(self._payload(), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(canon.encode()).hexdigest()

    def to_dict(self) -> dict:
        d = self._payload()
        d["created"] = self.created
        d["determinism_hash"] = self.determinism_hash
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    def replications_csv(self) -> str:
        return REPLICATION_HEADER + "\n" + "".join(r.csv_row() for r in self.per_replication)

    def summary(self) -> str:
        """Human-readable one-line table row at 3 decimals."""

        def f3(v):
            return "n/a" if v is None else f"{v:.3f}"

        rng = "n/a" if self.range is None else f"[{self.range[0]:.3f}, {self.range[1]:.3f}]"
        cov = "n/a" if self.coverage_pct is None else f"{self.coverage_pct:.1f}"
        spec = self.config["spec"]
        return (f"{spec['family']} alpha={spec['alpha']:g}  mean={f3(self.mean)}  sd={f3(self.std_dev)}  "
                f"range={rng}  coverage={cov}%  failed={self.n_failed}")

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "report.json", self.to_json())
        _atomic_write(out / "replications.csv", self.replications_csv())
        dists = [r for r in self.per_replication if r.distribution is not None]
        if dists:
            dd = out / "distributions"
            dd.mkdir(exist_ok=True)
            for r in dists:
                body = "k,prob\n" + "".join(f"{k},{p!r}\n" for k, p in r.distribution)
                _atomic_write(dd / f"distribution_{r.rep:04d}.csv", body)
        return out


def aggregate(cfg: ExperimentConfig, results: list[ReplicationResult]) -> ExperimentReport:
    """Order-independent fold of replication results into a report."""
    results = sorted(results, key=lambda r: r.rep)
    failed = sum(r.failed for r in results)
    if failed > MAX_FAILURE_FRACTION * len(results):
        raise FitError(f"{failed} of {len(results)} tail fits failed (limit {MAX_FAILURE_FRACTION:.0%})")
    est = [r.index_estimate for r in results if not r.failed]
    try:
        bound = bound_interval(cfg.spec.alpha, cfg.spec.separable)
    except DomainError:
        bound = None
    mean = std = rng = cov = up = None
    if est:
        arr = np.array(est)
        mean = float(arr.mean())
        std = float(arr.std(ddof=1)) if arr.size > 1 else None
        rng = (float(arr.min()), float(arr.max()))
        if bound is not None:
            cov = coverage_pct(est, bound)
            up = upper_coverage_pct(est, bound)
    report = ExperimentReport(cfg.to_dict(), results, mean, std, rng, bound, cov, up, failed)
    report.determinism_hash = report.compute_hash()
    report.created = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return report


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentReport:
    """Run all replications, serially or on a process pool, and aggregate.

    Replication r always uses ``replication_seed(master_seed, r)``, so the
    report does not depend on the schedule or on the pool width.
    """
    workers = cfg.workers if workers is None else workers
    reps = range(1, cfg.replications + 1)
    if workers <= 1:
        results = [run_replication(cfg, r) for r in reps]
    else:
        if not cfg.spec.is_builtin:
            raise ConfigError("parallel runs need a built-in family (custom callables do not pickle)")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, [(cfg, r) for r in reps]))
    report = aggregate(cfg, results)
    if cfg.outputs:
        report.write(cfg.outputs)
    return report


@dataclass
class MatchedComparison:
    """Separable vs non-separable runs whose mu_1 decay indices agree."""

    mu1_index: float
    separable: ExperimentReport
    non_separable: ExperimentReport

    @property
    def difference(self) -> Optional[float]:
        if self.separable.mean is None or self.non_separable.mean is None:
            return None
        return self.non_separable.mean - self.separable.mean

    @property
    def separable_heavier(self) -> Optional[bool]:
        """True when the separable mean index is smaller (heavier tail)."""
        d = self.difference
        return None if d is None else d > 0

    def to_dict(self) -> dict:
        return {
            "mu1_index": self.mu1_index,
            "separable": {"alpha": self.separable.config["spec"]["alpha"], "mean": self.separable.mean,
                          "range": self.separable.range},
            "non_separable": {"alpha": self.non_separable.config["spec"]["alpha"], "mean": self.non_separable.mean,
                              "range": self.non_separable.range},
            "difference": self.difference,
            "separable_heavier": self.separable_heavier,
        }


def compare_mu1_matched(cfg_sep: ExperimentConfig, cfg_nonsep: ExperimentConfig, runner=run_experiment) -> MatchedComparison:
    """Run a separable and a non-separable experiment with equal mu_1 index.

    mu_1 decays with index alpha in the separable case and alpha - 1
    otherwise, so the separable alpha must equal the other alpha minus 1.
    """
    if not cfg_sep.spec.separable or cfg_nonsep.spec.separable:
        raise ConfigError("first config must be separable and the second non-separable")
    if not math.isclose(cfg_sep.spec.alpha, cfg_nonsep.spec.alpha - 1.0, rel_tol=0, abs_tol=1e-12):
        raise ConfigError(
            f"mu_1 indices differ: separable {cfg_sep.spec.alpha} vs non-separable {cfg_nonsep.spec.alpha - 1.0}"
        )
    return MatchedComparison(cfg_sep.spec.alpha, runner(cfg_sep), runner(cfg_nonsep))
