"""Serverless parameter federation by gossip averaging over the interference graph.

Besides the mixing primitives used during training, this module carries two
numerical checks on synthetic problems where the consensus assumptions can
be verified: decentralized SGD on quadratic losses
(:func:`consensus_experiment`) and the advantage-disagreement bound for linear
critics (:func:`advantage_disagreement_check`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .env import InterferenceGraph
from .learner import ParamVector

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class MixingMatrix:
    w: np.ndarray
    graph: InterferenceGraph

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        n = self.graph.n_bs
        if w.shape != (n, n):
            raise ValueError(f"mixing matrix must be {n}x{n}")
        if np.any(w < 0):
            raise ValueError("mixing weights must be nonnegative")
        allowed = self.graph.adjacency | np.eye(n, dtype=bool)
        if np.any((w > 0) & ~allowed):
            raise ValueError("mixing matrix puts weight on a non-edge")
        if not (np.allclose(w.sum(axis=0), 1.0, atol=STOCHASTIC_TOL)
                and np.allclose(w.sum(axis=1), 1.0, atol=STOCHASTIC_TOL)):
            raise ValueError("mixing matrix must be doubly stochastic")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]


def metropolis_weights(graph: InterferenceGraph) -> MixingMatrix:
    """Metropolis-Hastings weights ``1 / (1 + max(deg_n, deg_j))`` on edges."""
    deg = graph.degrees
    n = graph.n_bs
    w = np.zeros((n, n))
    for i in range(n):
        for j in np.flatnonzero(graph.adjacency[i]):
            w[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
        w[i, i] = 1.0 - w[i].sum()
    return MixingMatrix(w, graph)


def identity_mixing(graph: InterferenceGraph) -> MixingMatrix:
    return MixingMatrix(np.eye(graph.n_bs), graph)


def contraction_factor(w: MixingMatrix | np.ndarray) -> float:
    """Spectral norm of ``W - 11^T / N``; below 1 for connected graphs."""
    w = w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    n = w.shape[0]
    return float(np.linalg.norm(w - np.full((n, n), 1.0 / n), 2))


@dataclass(frozen=True)
class GossipSchedule:
    period: int = 1

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("gossip period must be >= 1")

    def mixes_at(self, round_index: int) -> bool:
        """True on rounds that are multiples of the period."""
        return round_index % self.period == 0

    def matrix(self, w: MixingMatrix, round_index: int) -> np.ndarray:
        return w.w if self.mixes_at(round_index) else np.eye(w.n)


# exchange(n, vectors) -> {j: vector of neighbor j}; swapping this callable for a
# message-passing transport leaves the mixing arithmetic untouched
Exchange = Callable[[int, Sequence[np.ndarray]], dict]


def in_process_exchange(w: MixingMatrix) -> Exchange:
    def exchange(n: int, vectors: Sequence[np.ndarray]) -> dict:
        return {int(j): vectors[j] for j in np.flatnonzero(w.graph.adjacency[n])}
    return exchange


def mix_local(n: int, own: np.ndarray, neighbors: dict, w: MixingMatrix) -> np.ndarray:
    """One node's update ``psi_n <- sum_{j in N(n) + n} w_nj psi_j``."""
    out = w.w[n, n] * own
    for j in sorted(neighbors):
        out = out + w.w[n, j] * neighbors[j]
    return out


def gossip_mix(params: Sequence[ParamVector], w: MixingMatrix, exchange: Exchange | None = None) -> list[ParamVector]:
    """Synchronous gossip round over all nodes."""
    if len(params) != w.n:
        raise ValueError(f"expected {w.n} parameter vectors, got {len(params)}")
    layout = params[0].layout
    for p in params:
        if p.layout != layout:
            raise ValueError("parameter layouts differ across nodes")
    exchange = exchange or in_process_exchange(w)
    vectors = [p.data for p in params]
    return [ParamVector(mix_local(n, vectors[n], exchange(n, vectors), w), layout) for n in range(w.n)]


def mix_stacked(psi: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Mix an (N, d) stack of parameter rows."""
    return w @ psi


def _stack(params) -> np.ndarray:
    if isinstance(params, np.ndarray):
        return np.atleast_2d(params)
    return np.stack([p.data if isinstance(p, ParamVector) else np.asarray(p, dtype=float) for p in params])


def disagreement(params) -> float:
    """``sum_n ||psi_n - mean||^2`` over a list of vectors or an (N, d) array."""
    psi = _stack(params)
    return float(np.sum((psi - psi.mean(axis=0)) ** 2))


# ---------------------------------------------------------------------------
# consensus experiment on quadratic losses


@dataclass(frozen=True)
class ConsensusRecord:
    round: int
    disagreement: float
    grad_norm: float


@dataclass
class ConsensusResult:
    records: list[ConsensusRecord]
    sigma: float
    final_params: np.ndarray  # (N, d) from the last repeat
    targets: np.ndarray  # (N, d)

    def disagreements(self) -> np.ndarray:
        return np.array([r.disagreement for r in self.records])

    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    def rows(self) -> list[tuple[int, float, float]]:
        return [(r.round, r.disagreement, r.grad_norm) for r in self.records]


def harmonic_steps(a: float, b: float) -> Callable[[int], float]:
    """Step schedule ``a / (s + b)``: divergent sum, convergent sum of squares."""
    return lambda s: a / (s + b)


def consensus_experiment(
    graph: InterferenceGraph,
    rounds: int,
    period: int = 1,
    dim: int = 4,
    step: Callable[[int], float] = harmonic_steps(0.5, 10.0),
    noise: float = 0.01,
    scale: float = 1.0,
    repeats: int = 1,
    seed: int = 0,
    targets: np.ndarray | None = None,
    init: np.ndarray | None = None,
    gradients: bool = True,
    w: MixingMatrix | None = None,
) -> ConsensusResult:
    """Decentralized SGD on ``F_n(psi) = 0.5 ||psi - c_n||^2`` with periodic gossip.

    Each round applies a noisy local gradient step (noise uniform in
    ``[-noise, noise]`` per coordinate, hence bounded) and then mixes when the
    round index is a multiple of ``period``. Targets and initial parameters are
    drawn ``N(0, scale^2)`` independently unless given. Records hold the
    disagreement and ``||grad F(mean psi)||`` averaged over repeats; record
    ``s`` is taken before round ``s`` runs, so there are ``rounds + 1`` of them.
    ``gradients=False`` runs pure gossip.
    """
    n = graph.n_bs
    w = w if w is not None else metropolis_weights(graph)
    sched = GossipSchedule(period)
    rng = np.random.default_rng(seed)
    c = targets if targets is not None else rng.normal(0.0, scale, size=(n, dim))
    c = np.asarray(c, dtype=float)
    c_bar = c.mean(axis=0)
    dis = np.zeros(rounds + 1)
    gn = np.zeros(rounds + 1)
    psi = None
    for _ in range(repeats):
        psi = np.array(init if init is not None else rng.normal(0.0, scale, size=c.shape), dtype=float)
        for s in range(rounds + 1):
            dis[s] += disagreement(psi)
            gn[s] += np.linalg.norm(psi.mean(axis=0) - c_bar)
            if s == rounds:
                break
            if gradients:
                g = (psi - c) + rng.uniform(-noise, noise, size=psi.shape)
                psi = psi - step(s) * g
            if sched.mixes_at(s):
                psi = mix_stacked(psi, w.w)
    dis /= repeats
    gn /= repeats
    records = [ConsensusRecord(s, float(dis[s]), float(gn[s])) for s in range(rounds + 1)]
    return ConsensusResult(records, contraction_factor(w), psi, c)


# ---------------------------------------------------------------------------
# advantage disagreement for linear critics


@dataclass
class AdvantageReport:
    gaps: np.ndarray  # (N, H) |A_n - A_avg|
    bounds: np.ndarray  # (N,) (1 + beta) L_V ||psi_n - mean||
    lipschitz: float
    holds: bool

    @property
    def max_gap(self) -> float:
        return float(self.gaps.max()) if self.gaps.size else 0.0


def td_advantages(psi: np.ndarray, features: np.ndarray, rewards: np.ndarray, beta: float) -> np.ndarray:
    """One-step TD advantages of a linear critic over a rollout.

    ``features`` is (H + 1, d): feature vectors of o(0) .. o(H).
    """
    v = features @ psi
    return rewards + beta * v[1:] - v[:-1]


def advantage_disagreement_check(critics, features: np.ndarray, rewards: np.ndarray, beta: float,
                                 lipschitz: float | None = None, rtol: float = 1e-12) -> AdvantageReport:
    """Check ``|A_n(t) - A_avg(t)| <= (1 + beta) L_V ||psi_n - mean psi||`` at every slot.

    ``features`` is (N, H + 1, d): each critic evaluates on its own BS's
    observations. For ``V(o) = <psi, phi(o)>`` the Lipschitz constant in
    ``psi`` is ``max ||phi(o)||``, taken over the supplied features unless a
    bound over the full observation set is given.
    """
    psi = _stack(critics)
    features = np.asarray(features, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    if features.ndim == 2:
        features = np.broadcast_to(features, (psi.shape[0],) + features.shape)
    psi_bar = psi.mean(axis=0)
    L = float(np.max(np.linalg.norm(features, axis=-1))) if lipschitz is None else float(lipschitz)
    gaps = np.stack([
        np.abs(td_advantages(psi[n], features[n], rewards, beta) - td_advantages(psi_bar, features[n], rewards, beta))
        for n in range(psi.shape[0])
    ])
    bounds = (1.0 + beta) * L * np.linalg.norm(psi - psi_bar, axis=1)
    holds = bool(np.all(gaps <= bounds[:, None] * (1 + rtol) + 1e-15))
    return AdvantageReport(gaps, bounds, L, holds)
