"""Exhaustive solver of the per-slot scheduling/power problem on tiny instances.

The objective is evaluated here with its own loop-based arithmetic, kept
separate from the vectorized environment code, so the two can cross-check
each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .actions import Allocation, PowerLevels, check_feasible, decode
from .channel import ChannelConfig, init_fading, init_large_scale, power_gains

MAX_JOINT_ACTIONS = 10 ** 6
MAX_DIMS = {"n_bs": 3, "n_sub": 3, "n_ue": 2, "n_levels": 2}


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class TinyInstance:
    gains: np.ndarray  # (tx, k, cell, ue)
    queues: np.ndarray  # (N, M)
    r_min: np.ndarray  # (N, M)
    levels: PowerLevels
    noise: float = 1e-3
    delta_f: float = 1.0

    @property
    def n_bs(self) -> int:
        return self.gains.shape[0]

    @property
    def n_sub(self) -> int:
        return self.gains.shape[1]

    @property
    def n_ue(self) -> int:
        return self.gains.shape[3]

    @property
    def n_choices(self) -> int:
        return 1 + self.n_ue * self.levels.n_levels

    @property
    def joint_count(self) -> int:
        return self.n_choices ** (self.n_bs * self.n_sub)

    def check_bounds(self) -> None:
        dims = {"n_bs": self.n_bs, "n_sub": self.n_sub, "n_ue": self.n_ue, "n_levels": self.levels.n_levels}
        over = {k: (v, MAX_DIMS[k]) for k, v in dims.items() if v > MAX_DIMS[k]}
        if over or self.joint_count > MAX_JOINT_ACTIONS:
            raise InstanceTooLarge(
                f"instance too large for enumeration: dims {dims} (limits {MAX_DIMS}), "
                f"{self.joint_count} joint actions (limit {MAX_JOINT_ACTIONS})")


def random_instance(rng: np.random.Generator, n_bs=2, n_sub=2, n_ue=2, levels=(0.35, 1.0),
                    budget=1.0, queue_scale=2.0, r_min=2.0, **channel_kw) -> TinyInstance:
    cfg = ChannelConfig(n_bs=n_bs, n_subcarriers=n_sub, ues_per_cell=n_ue, **channel_kw)
    gains = power_gains(init_large_scale(cfg, rng), init_fading(cfg, rng))
    q = rng.exponential(queue_scale, size=(n_bs, n_ue))
    return TinyInstance(np.array(gains), q, np.full((n_bs, n_ue), float(r_min)),
                        PowerLevels(tuple(levels), budget), cfg.noise_psd_times_df, cfg.delta_f)


def enumerate_decisions(inst: TinyInstance):
    """All joint decisions in lexicographic order; first (BS, subcarrier) varies slowest.

    Per-(n, k) code 0 mutes; code ``1 + m * L + l`` schedules UE ``m`` at level ``l``.
    Returns integer arrays ``(u, m, l)`` of shape (C, N, K).
    """
    N, K, L = inst.n_bs, inst.n_sub, inst.levels.n_levels
    C = inst.joint_count
    codes = np.empty((C, N * K), dtype=np.int64)
    rest = np.arange(C)
    for pos in reversed(range(N * K)):
        rest, codes[:, pos] = np.divmod(rest, inst.n_choices)
    codes = codes.reshape(C, N, K)
    u = (codes > 0).astype(np.int64)
    m = np.where(u == 1, (codes - 1) // L, 0)
    l = np.where(u == 1, (codes - 1) % L, 0)
    return u, m, l


def _objective_terms(inst: TinyInstance, x: np.ndarray, p: np.ndarray):
    """Loop-based sum-rate and QoS deficit terms for allocations with batch axis 0."""
    N, K, M = inst.n_bs, inst.n_sub, inst.n_ue
    g = inst.gains
    active = x.sum(axis=-1)
    sum_rate = np.zeros(x.shape[0])
    served = np.zeros((x.shape[0], N, M))
    for n in range(N):
        for k in range(K):
            for m in range(M):
                interf = np.zeros(x.shape[0])
                for j in range(N):
                    if j != n:
                        interf = interf + active[:, j, k] * p[:, j, k] * g[j, k, n, m]
                sinr = p[:, n, k] * g[n, k, n, m] / (interf + inst.noise)
                r = x[:, n, k, m] * inst.delta_f * np.log2(1.0 + sinr)
                sum_rate = sum_rate + r
                served[:, n, m] += r
    deficit = (inst.queues * (inst.r_min - served)).sum(axis=(1, 2))
    weighted = (inst.queues * served).sum(axis=(1, 2))
    return sum_rate, deficit, weighted


def objective_values(inst: TinyInstance, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Per-slot objective ``sum c - sum Q (r_min - R)`` for a batch of allocations."""
    sum_rate, deficit, _ = _objective_terms(inst, x, p)
    return sum_rate - deficit


def objective_value(inst: TinyInstance, alloc: Allocation) -> tuple[float, float]:
    """Objective of one feasible allocation in both algebraic forms.

    Returns ``(deficit_form, weighted_form)``: ``sum c - sum Q (r_min - R)``
    and ``sum c + sum Q R - sum Q r_min``. They are equal up to rounding.
    """
    check_feasible(alloc, inst.levels.budget)
    sum_rate, deficit, weighted = _objective_terms(inst, alloc.x[None], alloc.p[None])
    const = float((inst.queues * inst.r_min).sum())
    return float(sum_rate[0] - deficit[0]), float(sum_rate[0] + weighted[0] - const)


@dataclass
class OracleSolution:
    alloc: Allocation
    value: float
    index: int
    values: np.ndarray  # objective of every enumerated decision
    decisions: tuple  # (u, m, l) arrays of all enumerated decisions


def enumerate_and_solve(inst: TinyInstance) -> OracleSolution:
    """Exhaustive argmax; ties go to the first decision in enumeration order."""
    inst.check_bounds()
    u, m, l = enumerate_decisions(inst)
    alloc = decode(u, m, l, inst.levels, inst.n_ue)
    sum_rate, deficit, weighted = _objective_terms(inst, alloc.x, alloc.p)
    values = sum_rate - deficit
    best = int(np.argmax(values))
    # the weighted served-rate form drops a constant and must agree on the maximizer
    alt = int(np.argmax(sum_rate + weighted))
    if values[alt] < values[best] - 1e-9 * max(1.0, abs(values[best])):
        raise AssertionError("dropping the constant changed the maximizer")
    best_alloc = Allocation(alloc.x[best].copy(), alloc.p[best].copy())
    return OracleSolution(best_alloc, float(values[best]), best, values, (u, m, l))


def joint_action_bound(n_bs: int, n_sub: int, n_ue: int, n_levels: int) -> int:
    return int(math.pow(1 + n_ue * n_levels, n_bs * n_sub))
