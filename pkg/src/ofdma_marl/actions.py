"""Per-subcarrier structured actions and their feasible decoding.

A BS action is three integer arrays over subcarriers: ``u`` (0 mute, 1 active),
``m`` (scheduled UE, 0-based) and ``l`` (power level, 0-based). ``m`` and ``l``
are ignored wherever ``u == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_POWER = 1e-8

DEFAULT_LEVELS = (0.05, 0.15, 0.35, 0.60, 1.0)


class EncodingError(ValueError):
    """Raised when an action tensor refers to a UE or power level that does not exist."""


class InfeasibleAllocation(RuntimeError):
    """Raised when an allocation violates the OFDMA or power constraints."""


@dataclass(frozen=True)
class PowerLevels:
    levels: tuple[float, ...] = DEFAULT_LEVELS
    budget: float = 1.0

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or lv.size == 0:
            raise ValueError("levels must be a nonempty sequence")
        if lv[0] <= 0 or np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be positive and strictly ascending")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        object.__setattr__(self, "levels", tuple(float(v) for v in lv))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)


@dataclass(frozen=True)
class Allocation:
    x: np.ndarray  # (..., n_bs, K, M) binary scheduling
    p: np.ndarray  # (..., n_bs, K) transmit power

    @property
    def activity(self) -> np.ndarray:
        return self.x.sum(axis=-1)

    @classmethod
    def mute(cls, n_bs: int, n_sub: int, n_ue: int) -> "Allocation":
        return cls(np.zeros((n_bs, n_sub, n_ue), dtype=np.int8), np.zeros((n_bs, n_sub)))


def normalize_power(p: np.ndarray, budget: float | np.ndarray, eps: float = EPS_POWER) -> np.ndarray:
    """Scale each BS's powers (last axis) down so they fit the sum budget.

    Over budget, powers are multiplied by ``budget / (sum + eps)``; within
    budget they are returned unchanged, which makes the map idempotent.
    """
    p = np.asarray(p, dtype=float)
    total = p.sum(axis=-1, keepdims=True)
    budget = np.asarray(budget, dtype=float)
    if budget.ndim:
        budget = budget[..., None]
    scale = np.where(total > budget, budget / (total + eps), 1.0)
    return p * scale


def decode(
    u: np.ndarray,
    m: np.ndarray,
    l: np.ndarray,
    levels: PowerLevels,
    n_ue: int,
) -> Allocation:
    """Map integer decisions of shape (..., n_bs, K) to a feasible Allocation."""
    u = np.asarray(u)
    m = np.asarray(m)
    l = np.asarray(l)
    if not (u.shape == m.shape == l.shape):
        raise EncodingError(f"decision shapes differ: {u.shape}, {m.shape}, {l.shape}")
    if np.any((u != 0) & (u != 1)):
        raise EncodingError("u must be 0 or 1")
    active = u == 1
    if np.any(active & ((m < 0) | (m >= n_ue))):
        raise EncodingError(f"UE index out of range [0, {n_ue})")
    if np.any(active & ((l < 0) | (l >= levels.n_levels))):
        raise EncodingError(f"power level index out of range [0, {levels.n_levels})")

    m_safe = np.where(active, m, 0)
    l_safe = np.where(active, l, 0)
    x = (np.arange(n_ue) == m_safe[..., None]) & active[..., None]
    p = np.where(active, levels.as_array()[l_safe], 0.0)
    return Allocation(x.astype(np.int8), normalize_power(p, levels.budget))


def validity_mask(u: np.ndarray, n_ue: int, n_levels: int, ue_valid: np.ndarray | None = None):
    """Per-head masks for decisions ``u`` of shape (..., K).

    Returns ``(ue_mask, level_mask)``: boolean arrays (..., K, M) and
    (..., K, L). Rows for muted subcarriers are all False so those heads add
    no log-probability. ``ue_valid`` optionally removes individual UEs.
    """
    active = (np.asarray(u) == 1)[..., None]
    ue = np.broadcast_to(active, active.shape[:-1] + (n_ue,))
    if ue_valid is not None:
        ue = ue & np.asarray(ue_valid, dtype=bool)
    lv = np.broadcast_to(active, active.shape[:-1] + (n_levels,))
    return ue.copy(), lv.copy()


def feasibility_violations(alloc: Allocation, budget: float, atol: float = 1e-12) -> list[str]:
    """List every violated constraint of the per-slot problem (empty if feasible)."""
    problems = []
    x, p = np.asarray(alloc.x), np.asarray(alloc.p)
    if np.any((x != 0) & (x != 1)):
        problems.append("x not binary")
    a = x.sum(axis=-1)
    if np.any(a > 1):
        problems.append("more than one UE on a subcarrier")
    if np.any(p < 0):
        problems.append("negative power")
    if np.any(p.sum(axis=-1) > budget + atol):
        problems.append("sum power above budget")
    if np.any(p > budget * a + atol):
        problems.append("power on an inactive subcarrier")
    return problems


def check_feasible(alloc: Allocation, budget: float) -> None:
    problems = feasibility_violations(alloc, budget)
    if problems:
        raise InfeasibleAllocation("; ".join(problems))
