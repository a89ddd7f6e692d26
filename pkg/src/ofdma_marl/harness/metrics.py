"""Slot traces and the summary metrics computed from them."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from ..env import InterferenceGraph, StepResult

Z_95 = 1.959963984540054


@dataclass
class SlotTraces:
    """Per-slot allocations and outcomes, appended in time order."""

    x: list = field(default_factory=list)  # (N, K, M)
    p: list = field(default_factory=list)  # (N, K)
    sinr: list = field(default_factory=list)  # (N, K, M)
    rates: list = field(default_factory=list)  # (N, M)
    link_rates: list = field(default_factory=list)  # (N, K)
    queues: list = field(default_factory=list)  # (N, M) at decision time

    def append(self, res: StepResult) -> None:
        self.x.append(np.asarray(res.alloc.x))
        self.p.append(np.asarray(res.alloc.p))
        self.sinr.append(np.asarray(res.sinr))
        self.rates.append(np.asarray(res.rates))
        self.link_rates.append(np.asarray(res.link_rates))
        self.queues.append(np.asarray(res.queues))

    def extend(self, other: "SlotTraces") -> None:
        for f in fields(self):
            getattr(self, f.name).extend(getattr(other, f.name))

    def __len__(self) -> int:
        return len(self.x)

    def stacked(self) -> dict[str, np.ndarray]:
        if not self.x:
            raise ValueError("empty trace")
        return {f.name: np.stack(getattr(self, f.name)) for f in fields(self)}


SCALARS = ("sum_rate", "mean_sinr", "mean_sinr_db", "collision_rate", "jain", "edge_rate",
           "critic_disagreement")
ARRAYS = ("per_ue_rates", "queue_levels", "activity")


@dataclass(frozen=True)
class MetricRecord:
    update: int
    sum_rate: float  # per-slot network sum-rate, units of delta_f
    mean_sinr: float  # linear mean over active links
    mean_sinr_db: float  # mean of per-link SINR in dB over active links
    collision_rate: float
    jain: float
    edge_rate: float  # 5th percentile of per-UE long-run rates
    per_ue_rates: tuple  # (N, M) nested
    queue_levels: tuple  # (N, M) nested, time-averaged
    activity: tuple  # (N, K) nested, time-averaged a_{n,k}
    critic_disagreement: float = 0.0
    n_seeds: int = 1
    sum_rate_ci: float = 0.0
    mean_sinr_db_ci: float = 0.0
    collision_rate_ci: float = 0.0
    jain_ci: float = 0.0

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def sum_rate_mbps(self, mbps_per_unit: float) -> float:
        return self.sum_rate * mbps_per_unit


def _nested(a: np.ndarray) -> tuple:
    return tuple(tuple(float(v) for v in row) for row in np.asarray(a, dtype=float))


def jain_index(rates: np.ndarray) -> float:
    """``(sum r)^2 / (n sum r^2)``; all-zero rates count as perfectly fair."""
    r = np.asarray(rates, dtype=float).ravel()
    sq = float(np.sum(r * r))
    if sq == 0.0:
        return 1.0
    return float(np.sum(r) ** 2 / (r.size * sq))


def collision_rate(activity: np.ndarray, graph: InterferenceGraph) -> float:
    """Fraction of active (slot, n, k) with some neighbor active on the same k.

    ``activity`` is (T, N, K) binary. 0 when nothing is active.
    """
    a = np.asarray(activity) > 0
    adj = graph.adjacency.astype(np.int64)
    busy_nbr = np.einsum("nj,tjk->tnk", adj, a.astype(np.int64)) > 0
    active = int(a.sum())
    if active == 0:
        return 0.0
    return float((a & busy_nbr).sum() / active)


def compute_metrics(traces: SlotTraces, graph: InterferenceGraph, update: int = 0,
                    critic_disagreement: float = 0.0) -> MetricRecord:
    """Summary metrics of a nonempty trace.

    SINR averages run over scheduled links only (``x = 1``) and are 0 when no
    link was ever scheduled.
    """
    s = traces.stacked()
    x = s["x"].astype(bool)
    act = x.any(axis=-1)
    sinr_active = s["sinr"][x]
    if sinr_active.size:
        mean_sinr = float(sinr_active.mean())
        mean_sinr_db = float(np.mean(10.0 * np.log10(sinr_active)))
    else:
        mean_sinr = mean_sinr_db = 0.0
    per_ue = s["rates"].mean(axis=0)
    return MetricRecord(
        update=int(update),
        sum_rate=float(s["link_rates"].sum(axis=(1, 2)).mean()),
        mean_sinr=mean_sinr,
        mean_sinr_db=mean_sinr_db,
        collision_rate=collision_rate(act, graph),
        jain=jain_index(per_ue),
        edge_rate=float(np.percentile(per_ue, 5)),
        per_ue_rates=_nested(per_ue),
        queue_levels=_nested(s["queues"].mean(axis=0)),
        activity=_nested(act.mean(axis=0)),
        critic_disagreement=float(critic_disagreement),
    )


def mean_ci(values) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width (0 for a single value)."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(Z_95 * v.std(ddof=1) / np.sqrt(v.size))


def aggregate(records: list[MetricRecord]) -> MetricRecord:
    """Average per-seed records; confidence intervals come from their spread."""
    if not records:
        raise ValueError("nothing to aggregate")
    out = {"update": records[0].update, "n_seeds": len(records)}
    for name in SCALARS:
        out[name], ci = mean_ci([getattr(r, name) for r in records])
        if f"{name}_ci" in {f.name for f in fields(MetricRecord)}:
            out[f"{name}_ci"] = ci
    for name in ARRAYS:
        out[name] = _nested(np.mean([r.array(name) for r in records], axis=0))
    return MetricRecord(**out)


def cdf_pairs(values) -> list[tuple[float, float]]:
    """Empirical CDF as sorted ``(value, i / n)`` pairs."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    n = v.size
    return [(float(val), (i + 1) / n) for i, val in enumerate(v)]


def cdf_data(traces: SlotTraces) -> dict[str, list[tuple[float, float]]]:
    """CDFs of active-link SINR (dB) and active-link rate."""
    s = traces.stacked()
    x = s["x"].astype(bool)
    sinr_db = 10.0 * np.log10(s["sinr"][x])
    link = s["link_rates"][x.any(axis=-1)]
    return {"sinr_db": cdf_pairs(sinr_db), "link_rate": cdf_pairs(link)}
