"""Comparison methods: two stateless heuristics and the learning baselines.

The learning methods differ from the proposed one only in what their critic
sees, what gets gossiped and whether virtual queues enter the reward; the
environment and actors are shared. :class:`MethodSpec` records those switches
and the training loop in :mod:`ofdma_marl.harness.training` reads them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .actions import Allocation, PowerLevels, decode


class MethodKind(str, Enum):
    FEDCRITIC = "fedcritic"
    CTDE = "ctde"
    CTDE_VQ = "ctde_vq"
    FEDACTOR = "fedactor"
    GREEDY = "greedy"
    QOS = "qos"

    @classmethod
    def parse(cls, name: str) -> "MethodKind":
        key = name.strip().lower().replace("-", "_").replace("+", "_")
        aliases = {"b1": "ctde", "b2": "ctde_vq", "b3": "fedactor", "proposed": "fedcritic"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class MethodSpec:
    kind: MethodKind
    learning: bool
    central_critic: bool = False
    gossip: str | None = None  # "critic", "actor" or None
    use_queues: bool = True  # queues enter reward and observations


METHODS = {
    MethodKind.FEDCRITIC: MethodSpec(MethodKind.FEDCRITIC, True, gossip="critic"),
    MethodKind.CTDE: MethodSpec(MethodKind.CTDE, True, central_critic=True, use_queues=False),
    MethodKind.CTDE_VQ: MethodSpec(MethodKind.CTDE_VQ, True, central_critic=True),
    MethodKind.FEDACTOR: MethodSpec(MethodKind.FEDACTOR, True, gossip="actor"),
    MethodKind.GREEDY: MethodSpec(MethodKind.GREEDY, False),
    MethodKind.QOS: MethodSpec(MethodKind.QOS, False),
}


def method_spec(kind) -> MethodSpec:
    if not isinstance(kind, MethodKind):
        kind = MethodKind.parse(str(kind))
    return METHODS[kind]


def greedy_policy(own_gains: np.ndarray, levels: PowerLevels, level: int | None = None) -> Allocation:
    """Every subcarrier active, best-gain UE (lowest index on ties), top power level.

    ``own_gains`` is (N, K, M). Neighbors and queues are ignored. ``level``
    overrides the power level index.
    """
    N, K, M = own_gains.shape
    u = np.ones((N, K), dtype=np.int64)
    m = np.argmax(own_gains, axis=-1)
    l = np.full((N, K), levels.n_levels - 1 if level is None else level)
    return decode(u, m, l, levels, M)


def qos_policy(own_gains: np.ndarray, queues: np.ndarray, levels: PowerLevels,
               level: int | None = None) -> Allocation:
    """Serve only UEs with a positive deficit, at the median power level.

    UEs are ranked by deficit (largest first, lower index on ties) and take
    turns claiming their best remaining subcarrier until none is left. A BS
    whose deficits are all zero stays silent. ``level`` overrides the
    median power level index.
    """
    N, K, M = own_gains.shape
    u = np.zeros((N, K), dtype=np.int64)
    m = np.zeros((N, K), dtype=np.int64)
    level = (levels.n_levels - 1) // 2 if level is None else level
    l = np.full((N, K), level)
    for n in range(N):
        q = queues[n]
        order = [int(i) for i in np.argsort(-q, kind="stable") if q[i] > 0]
        if not order:
            continue
        free = np.ones(K, dtype=bool)
        turn = 0
        while free.any():
            ue = order[turn % len(order)]
            g = np.where(free, own_gains[n, :, ue], -np.inf)
            k = int(np.argmax(g))
            u[n, k], m[n, k] = 1, ue
            free[k] = False
            turn += 1
    return decode(u, m, l, levels, M)


def heuristic_allocation(kind: MethodKind, own_gains, queues, levels: PowerLevels,
                         level: int | None = None) -> Allocation:
    if kind is MethodKind.GREEDY:
        return greedy_policy(own_gains, levels, level)
    if kind is MethodKind.QOS:
        return qos_policy(own_gains, queues, levels, level)
    raise ValueError(f"{kind} is not a heuristic")


def ctde_trainer(cfg, variant: str = "B1", **kw):
    """Train CTDE (``B1``: no virtual queues) or CTDE+VQ (``B2``)."""
    from .harness.training import run_training

    kind = {"B1": MethodKind.CTDE, "B2": MethodKind.CTDE_VQ}[variant.upper()]
    return run_training(cfg.with_overrides(method=kind.value), **kw)


def fedactor_trainer(cfg, **kw):
    """Train with gossip applied to actors instead of critics."""
    from .harness.training import run_training

    return run_training(cfg.with_overrides(method=MethodKind.FEDACTOR.value), **kw)
