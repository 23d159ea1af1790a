"""Paired bootstrap significance testing with the every-baseline rule.

Per iteration t, n item indices are drawn with replacement from a stream
keyed by (seed, t) and the mean paired score difference over those indices
is the statistic. The confidence interval takes nearest-rank percentiles of
the sorted statistics; a comparison is significant when the lower bound
exceeds zero. A system earns the overall mark only when it is significant
against every baseline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from xicl._rng import keyed_rng


class StatsError(ValueError):
    """Misaligned score vectors or invalid parameters."""


@dataclass(frozen=True)
class ScoreVector:
    system_id: str
    item_ids: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.item_ids) != len(self.scores):
            raise StatsError(f"{self.system_id}: {len(self.item_ids)} ids vs "
                             f"{len(self.scores)} scores")


@dataclass(frozen=True)
class BootstrapParams:
    iterations: int = 2000
    ci_level: float = 0.95
    seed: int = 42

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise StatsError("iterations must be >= 1")
        if not 0 < self.ci_level < 1:
            raise StatsError("ci_level must lie in (0, 1)")


@dataclass(frozen=True)
class BootstrapReport:
    mean_diff: float
    ci_lower: float
    ci_upper: float
    significant: bool
    iterations: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "mean_diff": self.mean_diff,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "significant": self.significant,
            "iterations": self.iterations,
            "seed": self.seed,
        }


def percentile(sorted_values, q: float) -> float:
    """Nearest-rank percentile of an ascending sequence."""
    n = len(sorted_values)
    if n == 0:
        raise StatsError("percentile of an empty sequence")
    if not 0 <= q <= 1:
        raise StatsError("q must lie in [0, 1]")
    index = min(max(math.ceil(q * n) - 1, 0), n - 1)
    return float(sorted_values[index])


def bootstrap_statistics(diffs: np.ndarray, params: BootstrapParams) -> np.ndarray:
    """Per-iteration mean paired differences, independent stream per iteration."""
    n = len(diffs)
    stats = np.empty(params.iterations, dtype=np.float64)
    for t in range(params.iterations):
        rng = keyed_rng(params.seed, "bootstrap", t)
        idx = rng.integers(0, n, size=n)
        stats[t] = diffs[idx].mean()
    return stats


def paired_bootstrap(a: ScoreVector, b: ScoreVector,
                     params: BootstrapParams = BootstrapParams()) -> BootstrapReport:
    """Percentile-CI bootstrap on the paired difference a - b."""
    if len(a.item_ids) == 0:
        raise StatsError("empty score vectors")
    if a.item_ids != b.item_ids:
        raise StatsError(
            f"score vectors are not aligned: {a.system_id} vs {b.system_id}"
        )
    diffs = np.asarray(a.scores, dtype=np.float64) - np.asarray(b.scores, dtype=np.float64)
    stats = np.sort(bootstrap_statistics(diffs, params))
    alpha = 1 - params.ci_level
    lower = percentile(stats, alpha / 2)
    upper = percentile(stats, 1 - alpha / 2)
    return BootstrapReport(
        mean_diff=float(diffs.mean()),
        ci_lower=lower,
        ci_upper=upper,
        significant=lower > 0,
        iterations=params.iterations,
        seed=params.seed,
    )


@dataclass(frozen=True)
class VsAllReport:
    per_baseline: dict[str, BootstrapReport]
    overall: bool
    vacuous: bool = False

    def to_dict(self) -> dict:
        return {
            "per_baseline": {k: v.to_dict() for k, v in self.per_baseline.items()},
            "overall": self.overall,
            "vacuous": self.vacuous,
        }


def significant_vs_all(target: ScoreVector, baselines: list[ScoreVector],
                       params: BootstrapParams = BootstrapParams()) -> VsAllReport:
    """Paired bootstrap against every baseline; overall = AND of the verdicts.

    Each comparison runs on its own seed derived from (seed, baseline id) so
    adding a baseline never perturbs the others.
    """
    if not baselines:
        warnings.warn("significant_vs_all with zero baselines is vacuously true",
                      stacklevel=2)
        return VsAllReport(per_baseline={}, overall=True, vacuous=True)
    reports: dict[str, BootstrapReport] = {}
    for baseline in baselines:
        sub_seed = int(keyed_rng(params.seed, "vs", baseline.system_id).integers(2 ** 31))
        sub_params = BootstrapParams(
            iterations=params.iterations, ci_level=params.ci_level, seed=sub_seed,
        )
        reports[baseline.system_id] = paired_bootstrap(target, baseline, sub_params)
    return VsAllReport(
        per_baseline=reports,
        overall=all(r.significant for r in reports.values()),
    )
