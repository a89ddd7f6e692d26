"""Multi-seed method comparisons at reduced scale.

:func:`run_trend` trains the proposed method and a baseline on the same
seeds; :func:`trend_checks` turns their final evaluations into the three
orderings (sum-rate margin, collision ratio, SINR) both pooled over seeds
and per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig, reduced_config
from .metrics import MetricRecord, aggregate
from .training import run_training

COLLISION_RATIO = 0.8


@dataclass(frozen=True)
class Ordering:
    """The three comparisons for one pair of records."""

    sum_rate_margin: float  # proposed minus baseline sum-rate
    ci: float  # wider of the two sum-rate half-widths
    collision_ratio: float  # proposed / baseline collision rate
    sinr_gap_db: float  # proposed minus baseline mean SINR (dB)

    @property
    def sum_rate_ok(self) -> bool:
        return self.sum_rate_margin > self.ci

    @property
    def collision_ok(self) -> bool:
        return self.collision_ratio < COLLISION_RATIO

    @property
    def sinr_ok(self) -> bool:
        return self.sinr_gap_db > 0.0

    @property
    def all_ok(self) -> bool:
        return self.sum_rate_ok and self.collision_ok and self.sinr_ok

    def describe(self) -> str:
        flag = {True: "ok", False: "no"}
        return (f"sum-rate margin {self.sum_rate_margin:+.3f} vs CI {self.ci:.3f} [{flag[self.sum_rate_ok]}], "
                f"collision ratio {self.collision_ratio:.3f} [{flag[self.collision_ok]}], "
                f"SINR gap {self.sinr_gap_db:+.2f} dB [{flag[self.sinr_ok]}]")


def compare(proposed: MetricRecord, baseline: MetricRecord) -> Ordering:
    ratio = proposed.collision_rate / baseline.collision_rate if baseline.collision_rate > 0 else (
        0.0 if proposed.collision_rate == 0 else np.inf)
    return Ordering(
        sum_rate_margin=proposed.sum_rate - baseline.sum_rate,
        ci=max(proposed.sum_rate_ci, baseline.sum_rate_ci),
        collision_ratio=float(ratio),
        sinr_gap_db=proposed.mean_sinr_db - baseline.mean_sinr_db,
    )


@dataclass
class TrendResult:
    seeds: tuple[int, ...]
    methods: tuple[str, str]  # (proposed, baseline)
    finals: dict[str, list[MetricRecord]] = field(default_factory=dict)  # per method, seed order

    def pooled(self) -> Ordering:
        """Compare seed-averaged finals; CIs come from the spread over training seeds.

        With a single training seed there is no spread, so the evaluation CI is used.
        """
        if len(self.seeds) < 2:
            return self.per_seed()[0]
        a, b = (aggregate(self.finals[m]) for m in self.methods)
        return compare(a, b)

    def per_seed(self) -> list[Ordering]:
        a, b = (self.finals[m] for m in self.methods)
        return [compare(x, y) for x, y in zip(a, b)]

    def seed_votes(self) -> dict[str, int]:
        per = self.per_seed()
        return {"sum_rate": sum(o.sum_rate_ok for o in per),
                "collision": sum(o.collision_ok for o in per),
                "sinr": sum(o.sinr_ok for o in per)}

    def accepted(self, min_seeds: int = 2) -> bool:
        """Pooled orderings all hold, or each ordering holds on at least ``min_seeds`` seeds."""
        if self.pooled().all_ok:
            return True
        return all(v >= min_seeds for v in self.seed_votes().values())

    def report(self) -> list[str]:
        p, b = self.methods
        lines = [f"pooled over seeds {list(self.seeds)}: {self.pooled().describe()}"]
        for s, o, fa, fb in zip(self.seeds, self.per_seed(), self.finals[p], self.finals[b]):
            lines.append(f"seed {s}: {p} sum-rate {fa.sum_rate:.3f} collisions {fa.collision_rate:.3f} "
                         f"SINR {fa.mean_sinr_db:.2f} dB | {b} sum-rate {fb.sum_rate:.3f} "
                         f"collisions {fb.collision_rate:.3f} SINR {fb.mean_sinr_db:.2f} dB | {o.describe()}")
        votes = self.seed_votes()
        lines.append(f"seeds with ordering: sum-rate {votes['sum_rate']}/{len(self.seeds)}, "
                     f"collision {votes['collision']}/{len(self.seeds)}, sinr {votes['sinr']}/{len(self.seeds)}")
        return lines


def run_trend(base: ExperimentConfig | None = None, seeds=(0, 1, 2), methods=("fedcritic", "ctde"),
              progress=None) -> TrendResult:
    """Train each method on each seed and keep the final evaluation records."""
    base = base or reduced_config()
    res = TrendResult(tuple(seeds), tuple(methods))
    for method in methods:
        res.finals[method] = []
        for s in seeds:
            cfg = base.with_overrides(method=method, seed=int(s), out_dir=None)
            final = run_training(cfg, keep_agents=False).final
            res.finals[method].append(final)
            if progress is not None:
                progress(method, s, final)
    return res
