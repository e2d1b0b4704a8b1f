"""Wald intervals from influence values and pair-level percentile bootstrap."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable

import numpy as np

from .data import PairedDataset, subset_by_zygosity
from .errors import REPLICATE_FAILURES, TooManyFailedReplicates
from .estimators import EffectEstimate

MAX_FAILURE_FRACTION = 0.05


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float = 0.95
    method: str = "wald_if"
    se: float | None = None
    num_bootstrap: int | None = None
    seed: int | None = None
    failures: int = 0

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError("confidence level must lie in (0, 1)")
        if self.lower > self.upper:
            raise ValueError("lower endpoint exceeds upper endpoint")

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("lower", "upper", "level", "method", "se",
                                               "num_bootstrap", "seed", "failures")}


@dataclass(frozen=True)
class BootstrapPlan:
    """``B`` pair-level resamples.

    Replicate ``k`` draws from ``SeedSequence(seed, spawn_key=(stream, k))``, so
    results do not depend on scheduling.  ``workers=0`` uses every CPU.
    """

    B: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("the bootstrap needs at least one replicate")

    def rng(self, k: int, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(stream, k)))


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    ci: ConfidenceInterval
    replicates: np.ndarray = field(repr=False)
    failures: int = 0

    @property
    def variance(self) -> float:
        return float(np.var(self.replicates, ddof=1)) if len(self.replicates) > 1 else 0.0


def z_quantile(level: float) -> float:
    return NormalDist().inv_cdf(1 - (1 - level) / 2)


def wald_ci(est: EffectEstimate, level: float = 0.95) -> ConfidenceInterval:
    """``point +/- z * sqrt(sum(if^2)) / n``."""
    se = est.se
    half = z_quantile(level) * se
    return ConfidenceInterval(est.point - half, est.point + half, level, "wald_if", se=se)


def percentile_interval(values, level: float = 0.95) -> tuple[float, float]:
    """Nearest-rank percentile interval: order statistics ``floor(a/2 B)`` and ``ceil((1-a/2) B)``.

    Ranks are 1-based and clamped to ``[1, B]``.
    """
    v = np.sort(np.asarray(values, float))
    B = len(v)
    if B == 0:
        raise ValueError("no replicate values")
    alpha = 1 - level
    lo = min(max(1, math.floor(alpha / 2 * B)), B)
    hi = min(max(1, math.ceil((1 - alpha / 2) * B)), B)
    return float(v[lo - 1]), float(v[hi - 1])


def resample_pairs(ds: PairedDataset, rng: np.random.Generator) -> PairedDataset:
    """``n`` pairs drawn with replacement; twins are never separated."""
    return ds.take(rng.integers(0, ds.n, size=ds.n))


def _one_replicate(args):
    pipeline, ds, plan, k = args
    try:
        return float(pipeline(resample_pairs(ds, plan.rng(k))))
    except REPLICATE_FAILURES:
        return None


def _subgroup_replicate(args):
    pipeline, mz, dz, plan, k = args
    try:
        a = float(pipeline(resample_pairs(mz, plan.rng(k, stream=1))))
        b = float(pipeline(resample_pairs(dz, plan.rng(k, stream=2))))
        return a - b
    except REPLICATE_FAILURES:
        return None


def _resolve_workers(workers: int) -> int:
    if workers == 0:
        return os.cpu_count() or 1
    return max(1, workers)


def _run(fn, tasks, workers):
    workers = _resolve_workers(workers)
    if workers == 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _collect(results, plan, level, method="percentile_bootstrap") -> BootstrapResult:
    ok = np.array([r for r in results if r is not None], float)
    failures = len(results) - len(ok)
    if failures > MAX_FAILURE_FRACTION * len(results) or len(ok) == 0:
        raise TooManyFailedReplicates(failures, len(results))
    lo, hi = percentile_interval(ok, level)
    ci = ConfidenceInterval(lo, hi, level, method, num_bootstrap=plan.B, seed=plan.seed,
                            failures=failures)
    return BootstrapResult(ci, ok, failures)


def bootstrap_ci(ds: PairedDataset, pipeline: Callable[[PairedDataset], float], plan: BootstrapPlan,
                 level: float = 0.95) -> BootstrapResult:
    """Percentile bootstrap of ``pipeline`` over pair-level resamples of ``ds``.

    ``pipeline`` must re-fit every nuisance model; it must be picklable when
    ``plan.workers != 1``.  Replicates raising a recoverable fitting error are
    dropped and counted; more than 5% failures raises TooManyFailedReplicates.
    Results do not depend on the number of workers.
    """
    tasks = [(pipeline, ds, plan, k) for k in range(plan.B)]
    return _collect(_run(_one_replicate, tasks, plan.workers), plan, level)


def subgroup_difference(ds: PairedDataset, pipeline: Callable[[PairedDataset], float],
                        plan: BootstrapPlan, level: float = 0.95) -> tuple[float, BootstrapResult]:
    """MZ minus DZ estimate, with MZ and DZ pairs resampled independently."""
    mz, dz = subset_by_zygosity(ds, "MZ"), subset_by_zygosity(ds, "DZ")
    point = float(pipeline(mz)) - float(pipeline(dz))
    tasks = [(pipeline, mz, dz, plan, k) for k in range(plan.B)]
    return point, _collect(_run(_subgroup_replicate, tasks, plan.workers), plan, level)
